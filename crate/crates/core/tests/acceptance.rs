//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so every line is shown.

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use m2df::dataset::{
    build_scored_dataset, write_manifest, write_scores, InstanceRecord, NoiseScores, ScoredDataset,
    Split,
};
use m2df::metrics::coarse_noise;
use m2df::pacing::{count_within, eligible, expected_counts, pace, PacingSchedule};
use m2df::scheduler::{
    run_multiple, run_single, Curriculum, Learner, LearnerError, RunConfig, RunTrace, Strategy,
    ValidationReport,
};
use m2df::simulator::{
    generate, run_experiment, ExperimentConfig, ExperimentReport, SyntheticConfig,
};
use m2df::stats::{spearman, spearman_p_negative};
use m2df::Metric;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, Option<Duration>, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dataset(d_c: &[f64], d_f: &[f64]) -> ScoredDataset {
    let records: Vec<InstanceRecord> = (0..d_c.len())
        .map(|i| InstanceRecord {
            id: format!("x{i:04}"),
            text: String::new(),
            image_ref: None,
            split: Split::Train,
        })
        .collect();
    let scores: Vec<NoiseScores> = d_c
        .iter()
        .zip(d_f)
        .enumerate()
        .map(|(i, (&c, &f))| NoiseScores {
            id: format!("x{i:04}"),
            d_c: c,
            d_f: f,
            d_f_fallback: false,
        })
        .collect();
    build_scored_dataset(&records, &scores).expect("valid dataset")
}

/// Replays a fixed F1 sequence, one value per validation call.
struct Scripted {
    f1: Vec<f64>,
    next: usize,
}

impl Learner for Scripted {
    fn train_on(&mut self, _batch: &[usize]) -> Result<(), LearnerError> {
        Ok(())
    }

    fn validate(&mut self) -> Result<ValidationReport, LearnerError> {
        let f = *self.f1.get(self.next).ok_or("F1 script exhausted")?;
        self.next += 1;
        Ok(ValidationReport::new(f, f)?)
    }
}

/// Validation F1 drawn from a seeded generator, with occasional zeros.
struct RandomF1(ChaCha8Rng);

impl Learner for RandomF1 {
    fn train_on(&mut self, _batch: &[usize]) -> Result<(), LearnerError> {
        Ok(())
    }

    fn validate(&mut self) -> Result<ValidationReport, LearnerError> {
        let f = if self.0.random_bool(0.1) {
            0.0
        } else {
            self.0.random::<f64>()
        };
        Ok(ValidationReport::new(f, f)?)
    }
}

struct NoOp;

impl Learner for NoOp {
    fn train_on(&mut self, _batch: &[usize]) -> Result<(), LearnerError> {
        Ok(())
    }

    fn validate(&mut self) -> Result<ValidationReport, LearnerError> {
        Ok(ValidationReport::new(0.5, 0.5)?)
    }
}

fn pacing_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let p0 = rng.random_range(0.001..=1.0);
        let duration = rng.random_range(1..=5000u64);
        let s = PacingSchedule::new(p0, duration).map_err(|e| e.to_string())?;
        let t = rng.random_range(0..=2 * duration);
        ensure((pace(0, &s) - p0).abs() <= 1e-12, || {
            format!("pace(0) != p0 for {s:?}")
        })?;
        ensure((pace(duration, &s) - 1.0).abs() <= 1e-12, || {
            format!("pace(T) != 1 for {s:?}")
        })?;
        if t >= duration {
            ensure((pace(t, &s) - 1.0).abs() <= 1e-12, || {
                format!("pace({t}) != 1 for {s:?}")
            })?;
        }
        ensure(pace(t, &s) <= pace(t + 1, &s), || {
            format!("pace decreases at t={t} for {s:?}")
        })?;
        let u = rng.random_range(0..=2 * duration);
        let (lo, hi) = (t.min(u), t.max(u));
        ensure(pace(lo, &s) <= pace(hi, &s), || {
            format!("pace({lo}) > pace({hi}) for {s:?}")
        })?;
    }
    Ok("1000 random (p0, T, t) triples".into())
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut negative_lists = 0;
    for case in 0..1000 {
        let n = rng.random_range(1..=50);
        let all_negative = case % 4 == 0;
        let sims: Vec<f64> = (0..n)
            .map(|_| {
                if all_negative {
                    rng.random_range(-1.0..0.0)
                } else {
                    rng.random_range(-1.0..=1.0)
                }
            })
            .collect();
        let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        negative_lists += usize::from(max <= 0.0);
        let d = coarse_noise(&sims).map_err(|e| e.to_string())?;
        ensure(d.iter().all(|v| (0.0..=1.0).contains(v)), || {
            format!("d outside [0,1] for {sims:?}")
        })?;
        if max > 0.0 {
            let arg = sims.iter().position(|&s| s == max).unwrap();
            ensure(d[arg] == 0.0, || {
                format!("max-similarity instance has d = {}", d[arg])
            })?;
            let k = rng.random_range(0.01..=1.0);
            let scaled: Vec<f64> = sims.iter().map(|s| s * k).collect();
            let ds = coarse_noise(&scaled).map_err(|e| e.to_string())?;
            for (a, b) in d.iter().zip(&ds) {
                ensure((a - b).abs() <= 1e-12, || {
                    format!("scale {k} changed d: {a} vs {b}")
                })?;
            }
        }
    }
    Ok(format!(
        "1000 lists, {negative_lists} with non-positive maximum"
    ))
}

fn eligibility_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..1000 {
        let n = rng.random_range(1..=60);
        let d: Vec<f64> = (0..n)
            .map(|_| {
                // coarse grid so ties and exact-threshold hits occur
                if rng.random_bool(0.5) {
                    f64::from(rng.random_range(0..=10u32)) / 10.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let ds = dataset(&d, &d);
        let a = rng.random::<f64>();
        let b = rng.random::<f64>();
        let (lo, hi) = (a.min(b), a.max(b));
        let (clo, chi) = (
            count_within(&ds, Metric::Coarse, lo),
            count_within(&ds, Metric::Coarse, hi),
        );
        ensure(clo <= chi, || {
            format!("prefix {clo} at {lo} > {chi} at {hi}")
        })?;
        let (elo, ehi) = (
            eligible(&ds, Metric::Coarse, lo, 1).prefix_len,
            eligible(&ds, Metric::Coarse, hi, 1).prefix_len,
        );
        ensure(elo <= ehi, || {
            format!("eligible {elo} at {lo} > {ehi} at {hi}")
        })?;
        let brute = d.iter().filter(|&&v| v <= lo).count();
        ensure(clo == brute, || {
            format!("prefix {clo} but {brute} instances have d <= {lo}")
        })?;
    }
    Ok("1000 random (dataset, threshold pair) cases".into())
}

fn expected_weight_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n = 200;
    let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ds = dataset(&d, &d);
    let schedule = PacingSchedule::new(0.1, 10_000).map_err(|e| e.to_string())?;
    let (batch, steps) = (8usize, 10_000u64);

    // Direct sum over steps: each eligible instance is drawn with
    // probability min(b, L_t) / L_t at step t.
    let mut oracle = vec![0.0; n];
    for t in 0..steps {
        let p = pace(t, &schedule);
        let members: Vec<usize> = (0..n).filter(|&i| d[i] <= p).collect();
        let members = if members.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
            order.truncate(batch);
            order
        } else {
            members
        };
        let w = batch.min(members.len()) as f64 / members.len() as f64;
        for i in members {
            oracle[i] += w;
        }
    }
    let fast = expected_counts(&ds, Metric::Coarse, &schedule, batch, batch, steps);
    for i in 0..n {
        ensure(
            (fast[i] - oracle[i]).abs() <= 1e-6 * oracle[i].max(1.0),
            || {
                format!(
                    "expected count {} vs oracle {} for instance {i}",
                    fast[i], oracle[i]
                )
            },
        )?;
    }
    let mut by_d: Vec<usize> = (0..n).collect();
    by_d.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    for w in by_d.windows(2) {
        ensure(oracle[w[0]] >= oracle[w[1]], || {
            format!("expected count rises from d={} to d={}", d[w[0]], d[w[1]])
        })?;
    }

    let config = RunConfig {
        batch_size: batch,
        max_steps: steps as usize,
        validate_every: 1000,
        strategy: Strategy::SingleCoarse,
        schedule,
        patience: None,
        ..RunConfig::default()
    };
    let trace = run_single(
        &ds,
        Metric::Coarse,
        NoOp,
        &config,
        &mut ChaCha8Rng::seed_from_u64(405),
    )
    .map_err(|e| e.to_string())?;
    let index: HashMap<&str, usize> = (0..n).map(|i| (ds.id(i), i)).collect();
    let mut counts = vec![0.0; n];
    for step in &trace.steps {
        for id in &step.batch {
            counts[index[id.as_str()]] += 1.0;
        }
    }
    let dvals: Vec<f64> = (0..n).map(|i| ds.d(Metric::Coarse, i)).collect();
    let rho = spearman(&dvals, &counts);
    let p = spearman_p_negative(rho, n);
    ensure(rho < 0.0 && p < 0.01, || {
        format!("spearman {rho:.4}, p = {p:.3e}")
    })?;
    Ok(format!(
        "oracle nonincreasing in d; Monte Carlo spearman {rho:.4}, p = {p:.2e}"
    ))
}

/// Expected (curriculum, warmup, t, pace, prefix length) per step, worked out
/// by hand for the 4-instance fixture below.
fn algorithm_oracle() -> Outcome {
    // ids x0000..x0003 = a, b, c, d
    let ds = dataset(&[0.0, 0.2, 0.5, 0.9], &[0.6, 0.0, 0.3, 0.1]);
    let schedule = PacingSchedule::new(0.3, 4).map_err(|e| e.to_string())?;
    let config = RunConfig {
        batch_size: 4,
        max_steps: 6,
        validate_every: 1,
        warmup_steps_per_curriculum: 2,
        strategy: Strategy::MultipleDynamic,
        schedule,
        patience: None,
        ..RunConfig::default()
    };
    // before warmup, after coarse warmup, after fine warmup, after each main step
    let learner = Scripted {
        f1: vec![0.4, 0.5, 0.55, 0.5, 0.6],
        next: 0,
    };
    let trace = run_multiple(&ds, learner, &config, &mut ChaCha8Rng::seed_from_u64(7))
        .map_err(|e| e.to_string())?;

    // pace(t) = sqrt(0.2275 t + 0.09) for t < 4, then 1
    let p = [0.3, 0.563_471_383_5, 0.738_241_153_0, 0.878_919_791_6];
    let expected: [(Curriculum, bool, u64, f64, &[&str]); 6] = [
        (Curriculum::Coarse, true, 0, p[0], &["x0000", "x0001"]),
        (
            Curriculum::Coarse,
            true,
            1,
            p[1],
            &["x0000", "x0001", "x0002"],
        ),
        (
            Curriculum::Fine,
            true,
            0,
            p[0],
            &["x0001", "x0003", "x0002"],
        ),
        (
            Curriculum::Fine,
            true,
            1,
            p[1],
            &["x0001", "x0003", "x0002"],
        ),
        // s_c = 0.5/0.4 = 1.25 beats s_f = 0.55/0.5 = 1.1; t_c: 2 -> 3
        (
            Curriculum::Coarse,
            false,
            3,
            p[3],
            &["x0000", "x0001", "x0002"],
        ),
        // s_c = 0.5/0.55 = 0.909 now trails s_f = 1.1; t_f: 2 -> 3
        (
            Curriculum::Fine,
            false,
            3,
            p[3],
            &["x0001", "x0003", "x0002", "x0000"],
        ),
    ];
    ensure(trace.steps.len() == expected.len(), || {
        format!("{} steps", trace.steps.len())
    })?;
    for (got, (cur, warm, t, pace_t, ids)) in trace.steps.iter().zip(expected) {
        let mut batch = got.batch.clone();
        batch.sort();
        let mut want: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        want.sort();
        ensure(
            got.curriculum == cur
                && got.warmup == warm
                && got.t == t
                && (got.pace - pace_t).abs() < 1e-9
                && got.prefix_len == ids.len()
                && batch == want,
            || {
                format!(
                    "step {}: got ({}, warmup={}, t={}, p={:.10}, prefix={}, {:?}) expected ({cur}, \
                     warmup={warm}, t={t}, p={pace_t:.10}, prefix={}, {want:?})",
                    got.step, got.curriculum, got.warmup, got.t, got.pace, got.prefix_len, batch,
                    ids.len()
                )
            },
        )?;
    }
    let ratios: Vec<(Option<f64>, Option<f64>)> = trace
        .validations
        .iter()
        .map(|v| (v.s_coarse, v.s_fine))
        .collect();
    let want = [
        (None, None),
        (Some(1.25), None),
        (Some(1.25), Some(1.1)),
        (Some(0.5 / 0.55), Some(1.1)),
        (Some(0.5 / 0.55), Some(1.2)),
    ];
    ensure(ratios.len() == want.len(), || {
        format!("{} validations", ratios.len())
    })?;
    let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    };
    for (k, (g, w)) in ratios.iter().zip(want).enumerate() {
        ensure(close(g.0, w.0) && close(g.1, w.1), || {
            format!("validation {k}: {g:?} vs {w:?}")
        })?;
    }
    Ok("6 steps match the desk simulation".into())
}

/// Checks counter conservation and selection consistency on one trace.
fn check_multiple_trace(
    trace: &RunTrace,
    ds: &ScoredDataset,
    config: &RunConfig,
) -> Result<(), String> {
    let warm = config.warmup_steps_per_curriculum;
    let mut counters = [0u64; 2];
    let mut last_validation = 0usize;
    for st in &trace.steps {
        let k = match st.curriculum {
            Curriculum::Coarse => 0,
            Curriculum::Fine => 1,
            other => return Err(format!("step {}: unexpected curriculum {other}", st.step)),
        };
        let metric = if k == 0 { Metric::Coarse } else { Metric::Fine };
        if st.warmup {
            ensure(st.t == counters[k], || {
                format!("step {}: warmup t {} != {}", st.step, st.t, counters[k])
            })?;
            counters[k] += 1;
        } else {
            ensure(counters.iter().all(|&c| c >= warm), || {
                format!("step {}: main before warmup", st.step)
            })?;
            counters[k] += 1;
            ensure(st.t == counters[k], || {
                format!("step {}: t {} != counter {}", st.step, st.t, counters[k])
            })?;
            // ratios at selection are those of the latest validation before the step
            while trace
                .validations
                .get(last_validation + 1)
                .is_some_and(|v| v.step <= st.step)
            {
                last_validation += 1;
            }
            let v = &trace.validations[last_validation];
            ensure((st.s_coarse, st.s_fine) == (v.s_coarse, v.s_fine), || {
                format!(
                    "step {}: ratios at selection differ from latest validation",
                    st.step
                )
            })?;
            let (Some(sc), Some(sf)) = (st.s_coarse, st.s_fine) else {
                return Err(format!("step {}: selection with unset ratio", st.step));
            };
            let choice = if sc >= sf { 0 } else { 1 };
            ensure(choice == k, || {
                format!(
                    "step {}: chose {} with s = ({sc}, {sf})",
                    st.step, st.curriculum
                )
            })?;
        }
        let p = pace(st.t, &config.schedule_for(metric));
        ensure(st.pace == p, || {
            format!("step {}: pace {} != {p}", st.step, st.pace)
        })?;
        let view = eligible(ds, metric, p, config.min_eligible());
        ensure(st.prefix_len == view.prefix_len, || {
            format!("step {}: prefix mismatch", st.step)
        })?;
        ensure(
            st.batch.len() == st.prefix_len.min(config.batch_size),
            || format!("step {}: batch size {}", st.step, st.batch.len()),
        )?;
        let prefix: Vec<&str> = ds.sorted(metric)[..st.prefix_len]
            .iter()
            .map(|&i| ds.id(i))
            .collect();
        let mut seen = std::collections::HashSet::new();
        ensure(
            st.batch
                .iter()
                .all(|id| prefix.contains(&id.as_str()) && seen.insert(id)),
            || {
                format!(
                    "step {}: batch outside the eligible prefix or repeated",
                    st.step
                )
            },
        )?;
    }
    let total = trace.steps.len() as u64;
    ensure(counters[0] + counters[1] == total, || {
        format!("counters {counters:?} vs {total} steps")
    })?;
    ensure(
        trace.steps_for(Curriculum::Coarse) as u64 + trace.steps_for(Curriculum::Fine) as u64
            == total,
        || "per-curriculum step counts do not add up".into(),
    )?;
    Ok(())
}

fn fuzz_run_multiple() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut total_steps = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=40);
        let d_c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let d_f: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ds = dataset(&d_c, &d_f);
        let warm = rng.random_range(1..=3u64);
        let config = RunConfig {
            batch_size: rng.random_range(1..=8),
            max_steps: rng.random_range((2 * warm as usize)..=200),
            validate_every: rng.random_range(1..=5),
            warmup_steps_per_curriculum: warm,
            strategy: Strategy::MultipleDynamic,
            seed: case,
            schedule: PacingSchedule::new(rng.random_range(0.01..=0.5), rng.random_range(1..=150))
                .map_err(|e| e.to_string())?,
            fine_schedule: if rng.random_bool(0.5) {
                Some(
                    PacingSchedule::new(rng.random_range(0.01..=0.5), rng.random_range(1..=150))
                        .map_err(|e| e.to_string())?,
                )
            } else {
                None
            },
            min_eligible: if rng.random_bool(0.5) {
                Some(rng.random_range(1..=5))
            } else {
                None
            },
            patience: if rng.random_bool(0.3) {
                Some(rng.random_range(1..=6))
            } else {
                None
            },
        };
        let learner = RandomF1(ChaCha8Rng::seed_from_u64(1000 + case));
        let trace = run_multiple(&ds, learner, &config, &mut ChaCha8Rng::seed_from_u64(case))
            .map_err(|e| format!("case {case}: {e}"))?;
        check_multiple_trace(&trace, &ds, &config).map_err(|e| format!("case {case}: {e}"))?;
        total_steps += trace.steps.len();
    }
    Ok(format!("100 randomized runs, {total_steps} steps checked"))
}

fn default_report() -> Result<ExperimentReport, String> {
    let config = ExperimentConfig::default();
    run_experiment(
        &config,
        &[
            Strategy::Baseline,
            Strategy::MultipleDynamic,
            Strategy::SingleCoarse,
            Strategy::SingleFine,
        ],
    )
    .map_err(|e| e.to_string())
}

fn denoising_direction(report: &ExperimentReport) -> Outcome {
    let delta = report
        .delta(Strategy::MultipleDynamic)
        .ok_or("no multiple_dynamic delta")?;
    let mean = |s| report.summary(s).map(|x| x.dev_f1_mean).unwrap_or(f64::NAN);
    let (m, c, f, b) = (
        mean(Strategy::MultipleDynamic),
        mean(Strategy::SingleCoarse),
        mean(Strategy::SingleFine),
        mean(Strategy::Baseline),
    );
    let detail = format!(
        "wins {}/{}, dev F1 means: multiple {m:.4}, single_coarse {c:.4}, single_fine {f:.4}, baseline {b:.4}",
        delta.dev_wins, delta.pairs
    );
    ensure(
        delta.pairs == 10 && delta.dev_wins >= 8 && m >= c.max(f),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn noise_stratified_direction(report: &ExperimentReport) -> Outcome {
    let delta = report
        .delta(Strategy::MultipleDynamic)
        .ok_or("no multiple_dynamic delta")?;
    let [l1, l2, l3] = delta.bin_delta_mean;
    let detail =
        format!("mean test F1 gain by d_c bin: level1 {l1:+.4}, level2 {l2:+.4}, level3 {l3:+.4}");
    ensure(l1 <= l2 && l2 <= l3, || detail.clone())?;
    Ok(detail)
}

fn zero_noise_neutrality() -> Outcome {
    let mut config = ExperimentConfig::default();
    config.synthetic.noise_strength = 0.0;
    let report = run_experiment(&config, &Strategy::ALL).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, "");
    for d in &report.deltas {
        let z = d.dev_delta_mean.abs() / d.dev_delta_se;
        ensure(d.dev_delta_mean.abs() <= 2.0 * d.dev_delta_se, || {
            format!(
                "{}: dev delta {:+.4} with se {:.4}",
                d.strategy, d.dev_delta_mean, d.dev_delta_se
            )
        })?;
        if z > worst.0 {
            worst = (z, d.strategy.name());
        }
    }
    Ok(format!(
        "{} strategies within 2 se of baseline (largest |delta|/se {:.2}, {})",
        report.deltas.len(),
        worst.0,
        worst.1
    ))
}

fn run_cli(args: &[&str], dir: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_m2df"))
        .args(args)
        .current_dir(dir)
        .env_remove("M2DF_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "m2df {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })?;
    Ok(out.stdout)
}

fn bit_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let inputs = tmp.path();
    let data = generate(&SyntheticConfig {
        n_train: 300,
        n_dev: 50,
        n_test: 50,
        seed: 11,
        ..SyntheticConfig::default()
    })
    .map_err(|e| e.to_string())?;
    write_manifest(inputs.join("manifest.jsonl"), &data.manifest).map_err(|e| e.to_string())?;
    write_scores(inputs.join("scores.jsonl"), &data.scores).map_err(|e| e.to_string())?;

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        std::fs::create_dir(&dir).map_err(|e| e.to_string())?;
        for file in ["manifest.jsonl", "scores.jsonl"] {
            std::fs::copy(inputs.join(file), dir.join(file)).map_err(|e| e.to_string())?;
        }
        let mut bytes = vec![run_cli(
            &[
                "--seed",
                "5",
                "normalize",
                "--manifest",
                "manifest.jsonl",
                "--scores",
                "scores.jsonl",
                "--out",
                "noise.jsonl",
            ],
            &dir,
        )?];
        bytes.push(std::fs::read(dir.join("noise.jsonl")).map_err(|e| e.to_string())?);
        bytes.push(run_cli(
            &[
                "--seed",
                "5",
                "preview",
                "--noise",
                "noise.jsonl",
                "--p0",
                "0.05",
                "-T",
                "40",
                "--steps",
                "50",
            ],
            &dir,
        )?);
        bytes.push(run_cli(
            &[
                "--seed",
                "5",
                "simulate",
                "--replicates",
                "2",
                "--strategies",
                "baseline,multiple_dynamic",
                "--out",
                "sim",
            ],
            &dir,
        )?);
        for file in ["report.txt", "table.csv"] {
            bytes.push(std::fs::read(dir.join("sim").join(file)).map_err(|e| e.to_string())?);
        }
        outputs.push(bytes);
    }
    let names = [
        "normalize stdout",
        "noise file",
        "preview stdout",
        "simulate stdout",
        "report.txt",
        "table.csv",
    ];
    for (k, name) in names.iter().enumerate() {
        ensure(outputs[0][k] == outputs[1][k], || {
            format!("{name} differs between runs")
        })?;
        ensure(!outputs[0][k].is_empty(), || format!("{name} is empty"))?;
    }
    Ok("normalize, preview and simulate outputs byte-identical across two runs".into())
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report_line = |c: Criterion, start: Instant, outcome: Outcome| {
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(msg), Some(limit)) if elapsed > limit => {
                Err(format!("{msg}; took {elapsed:.2?}, limit {limit:?}"))
            }
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS  {:<32} {msg} [{elapsed:.2?}]", c.name),
            Err(msg) => {
                failures += 1;
                println!("FAIL  {:<32} {msg} [{elapsed:.2?}]", c.name);
            }
        }
    };
    let secs = |s| Some(Duration::from_secs(s));

    let timed: [Check; 6] = [
        ("pacing exactness", secs(1), pacing_exactness),
        ("normalization", secs(1), normalization),
        (
            "eligibility monotonicity",
            secs(1),
            eligibility_monotonicity,
        ),
        (
            "expected-weight monotonicity",
            secs(10),
            expected_weight_monotonicity,
        ),
        ("algorithm oracle equivalence", secs(1), algorithm_oracle),
        ("counter and selection fuzz", secs(30), fuzz_run_multiple),
    ];
    for (name, limit, f) in timed {
        let start = Instant::now();
        report_line(Criterion { name, limit }, start, f());
    }

    let start = Instant::now();
    let report = default_report();
    let shared = start.elapsed();
    match report {
        Ok(report) => {
            let start = Instant::now() - shared;
            report_line(
                Criterion {
                    name: "simulator denoising direction",
                    limit: secs(60),
                },
                start,
                denoising_direction(&report),
            );
            report_line(
                Criterion {
                    name: "noise-stratified direction",
                    limit: secs(60),
                },
                start,
                noise_stratified_direction(&report),
            );
        }
        Err(e) => {
            for name in [
                "simulator denoising direction",
                "noise-stratified direction",
            ] {
                report_line(Criterion { name, limit: None }, start, Err(e.clone()));
            }
        }
    }

    let start = Instant::now();
    report_line(
        Criterion {
            name: "zero-noise neutrality",
            limit: secs(60),
        },
        start,
        zero_noise_neutrality(),
    );
    let start = Instant::now();
    report_line(
        Criterion {
            name: "bit-reproducibility",
            limit: None,
        },
        start,
        bit_reproducibility(),
    );

    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
