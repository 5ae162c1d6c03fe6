//! Synthetic noisy corpora, a logistic toy learner and the strategy
//! comparison harness.
//!
//! Each instance carries a latent feature vector whose first half plays the
//! role of the sentence and second half the image. A noisy instance has
//! `true_noise_level > 0`. With `c = min(1, noise_strength * true_noise_level)`
//! its image half is blended, by weight `c`, towards a distractor image drawn
//! around a shared mean (irrelevant images look alike), and its train label
//! is flipped with probability `c`. Its emitted similarities drop to roughly
//! `1 - true_noise_level` whatever the strength, so `noise_strength = 0` gives
//! a clean corpus whose noise scores are still informative-looking. Dev and
//! test labels are never flipped.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_scored_dataset, FineInput, InstanceRecord, NoiseScores, RawScoreRecord, ScoredDataset,
    Split,
};
use crate::error::{Error, Result};
use crate::metrics::{coarse_noise, score_train_set, FallbackRule};
use crate::scheduler::{
    self, Learner, LearnerError, RunConfig, RunTrace, Strategy, ValidationReport,
};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub feature_dim: usize,
    pub noise_fraction: f64,
    /// Corruption per unit of noise level: label-flip probability (train
    /// split only) and image blending weight (all splits).
    pub noise_strength: f64,
    /// Half-width of the uniform jitter added to emitted similarities.
    pub jitter: f64,
    /// Offset added to the latent score; negative values make positives rare.
    pub label_offset: f64,
    /// Length of the mean of the distractor images that replace the image
    /// half of noisy instances. Irrelevant images share this common style.
    pub distractor_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_train: 3179,
            n_dev: 1122,
            n_test: 1037,
            feature_dim: 16,
            noise_fraction: 0.3,
            noise_strength: 1.0,
            jitter: 0.05,
            label_offset: -0.8,
            distractor_shift: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return Err(Error::Config("split sizes must be at least 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::Config(format!(
                "noise_fraction = {} must lie in [0, 1]",
                self.noise_fraction
            )));
        }
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;
        if !non_negative(self.noise_strength)
            || !non_negative(self.jitter)
            || !self.label_offset.is_finite()
            || !self.distractor_shift.is_finite()
        {
            return Err(Error::Config(
                "noise_strength and jitter must be non-negative, offsets finite".into(),
            ));
        }
        Ok(())
    }
}

/// Known ground truth for one generated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub id: String,
    pub split: Split,
    pub features: Vec<f64>,
    /// Label seen by training; equals `clean_label` outside the train split.
    pub label: bool,
    pub clean_label: bool,
    pub true_noise_level: f64,
    pub coarse_sim: f64,
    pub fine_sim: f64,
}

impl SyntheticInstance {
    pub fn flipped(&self) -> bool {
        self.label != self.clean_label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub manifest: Vec<InstanceRecord>,
    pub scores: Vec<RawScoreRecord>,
    pub ground_truth: Vec<SyntheticInstance>,
}

impl SyntheticData {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SyntheticInstance> {
        self.ground_truth.iter().filter(move |g| g.split == split)
    }
}

fn unit_normal(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Draws a corpus; fully determined by `config.seed`.
pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.feature_dim;
    let text_dim = dim.div_ceil(2);
    let direction = unit_normal(&mut rng, dim);
    let image_dim = dim - text_dim;
    let distractor_mean: Vec<f64> = if image_dim > 0 {
        unit_normal(&mut rng, image_dim)
            .into_iter()
            .map(|x| x * config.distractor_shift)
            .collect()
    } else {
        Vec::new()
    };

    let mut data = SyntheticData {
        manifest: Vec::new(),
        scores: Vec::new(),
        ground_truth: Vec::new(),
    };
    for (split, n, prefix) in [
        (Split::Train, config.n_train, "train"),
        (Split::Dev, config.n_dev, "dev"),
        (Split::Test, config.n_test, "test"),
    ] {
        let n_noisy = ((config.noise_fraction * n as f64).round() as usize).min(n);
        let mut noisy = vec![false; n];
        for i in index::sample(&mut rng, n, n_noisy) {
            noisy[i] = true;
        }
        for (i, &is_noisy) in noisy.iter().enumerate() {
            let level = if is_noisy {
                1.0 - rng.random::<f64>()
            } else {
                0.0
            };
            let latent: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let score: f64 = latent
                .iter()
                .zip(&direction)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                + config.label_offset;
            let clean_label = score > 0.0;
            let corruption = (config.noise_strength * level).min(1.0);
            let features: Vec<f64> = latent
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    if k < text_dim {
                        x
                    } else {
                        let distractor: f64 =
                            distractor_mean[k - text_dim] + rng.sample::<f64, _>(StandardNormal);
                        (1.0 - corruption) * x + corruption * distractor
                    }
                })
                .collect();
            let flip_draw = rng.random::<f64>();
            let label = if split == Split::Train && flip_draw < corruption {
                !clean_label
            } else {
                clean_label
            };
            let emit = |rng: &mut ChaCha8Rng| {
                let j = if config.jitter > 0.0 {
                    rng.random_range(-config.jitter..=config.jitter)
                } else {
                    0.0
                };
                (1.0 - level + j).clamp(-1.0, 1.0)
            };
            let coarse_sim = emit(&mut rng);
            let fine_sim = emit(&mut rng);

            let id = format!("{prefix}-{i:05}");
            data.manifest.push(InstanceRecord {
                id: id.clone(),
                text: String::new(),
                image_ref: None,
                split,
            });
            data.scores.push(RawScoreRecord {
                id: id.clone(),
                coarse_sim,
                fine: FineInput::Precomputed(fine_sim),
            });
            data.ground_truth.push(SyntheticInstance {
                id,
                split,
                features,
                label,
                clean_label,
                true_noise_level: level,
                coarse_sim,
                fine_sim,
            });
        }
    }
    Ok(data)
}

/// Logistic regression trained by mini-batch gradient steps.
#[derive(Debug, Clone)]
pub struct ToyLearner {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub learning_rate: f64,
    train: Vec<(Vec<f64>, bool)>,
    dev: Vec<(Vec<f64>, bool)>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ToyLearner {
    /// `train` is indexed like the scheduled dataset's records.
    pub fn new(
        feature_dim: usize,
        learning_rate: f64,
        train: Vec<(Vec<f64>, bool)>,
        dev: Vec<(Vec<f64>, bool)>,
    ) -> Self {
        ToyLearner {
            weights: vec![0.0; feature_dim],
            bias: 0.0,
            learning_rate,
            train,
            dev,
        }
    }

    /// Learner over `dataset`'s train records with clean dev labels.
    pub fn for_dataset(
        data: &SyntheticData,
        dataset: &ScoredDataset,
        learning_rate: f64,
    ) -> Result<Self> {
        let by_id: HashMap<&str, &SyntheticInstance> = data
            .ground_truth
            .iter()
            .map(|g| (g.id.as_str(), g))
            .collect();
        let train = dataset
            .records()
            .iter()
            .map(|(rec, _)| {
                by_id
                    .get(rec.id.as_str())
                    .map(|g| (g.features.clone(), g.label))
                    .ok_or_else(|| Error::MissingScore(rec.id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let dev = data
            .split(Split::Dev)
            .map(|g| (g.features.clone(), g.clean_label))
            .collect();
        let dim = data.ground_truth.first().map_or(0, |g| g.features.len());
        Ok(ToyLearner::new(dim, learning_rate, train, dev))
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.logit(x) > 0.0
    }

    fn logit(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Positive-class precision, recall and F1 on `examples`.
    pub fn evaluate<'a>(
        &self,
        examples: impl IntoIterator<Item = (&'a [f64], bool)>,
    ) -> ValidationReport {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (x, y) in examples {
            match (self.predict(x), y) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let ratio = |a: usize, b: usize| {
            if a + b == 0 {
                0.0
            } else {
                a as f64 / (a + b) as f64
            }
        };
        let (precision, recall) = (ratio(tp, fp), ratio(tp, fn_));
        ValidationReport::new(precision, recall).expect("ratios lie in [0, 1]")
    }
}

impl Learner for ToyLearner {
    fn train_on(&mut self, batch: &[usize]) -> Result<(), LearnerError> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = 0.0;
        for &i in batch {
            let (x, y) = self
                .train
                .get(i)
                .ok_or_else(|| format!("record index {i} out of range"))?;
            let err = sigmoid(self.logit(x)) - if *y { 1.0 } else { 0.0 };
            for (g, v) in grad_w.iter_mut().zip(x) {
                *g += err * v;
            }
            grad_b += err;
        }
        let step = self.learning_rate / batch.len() as f64;
        for (w, g) in self.weights.iter_mut().zip(&grad_w) {
            *w -= step * g;
        }
        self.bias -= step * grad_b;
        Ok(())
    }

    fn validate(&mut self) -> Result<ValidationReport, LearnerError> {
        Ok(self.evaluate(self.dev.iter().map(|(x, y)| (x.as_slice(), *y))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticConfig,
    /// Scheduler settings shared by every strategy; `strategy` and `seed`
    /// are overwritten per run.
    pub run: RunConfig,
    pub learning_rate: f64,
    pub replicates: usize,
    pub fallback: FallbackRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synthetic: SyntheticConfig::default(),
            run: RunConfig {
                batch_size: 32,
                max_steps: 1500,
                validate_every: 25,
                schedule: crate::pacing::PacingSchedule {
                    p0: 0.01,
                    duration: 2000,
                },
                patience: None,
                ..RunConfig::default()
            },
            learning_rate: 0.5,
            replicates: 10,
            fallback: FallbackRule::Dc,
        }
    }
}

/// Outcome of one (strategy, replicate) run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub strategy: Strategy,
    pub replicate: usize,
    pub seed: u64,
    pub steps: usize,
    pub final_dev_f1: f64,
    pub test_f1: f64,
    /// Test F1 on thirds of the test set ordered by `d_c`, cleanest first.
    pub bin_f1: [f64; 3],
    /// Same, ordered by the fine metric.
    pub bin_f1_fine: [f64; 3],
    /// (steps completed, dev F1) at each validation turn.
    pub curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub runs: usize,
    pub dev_f1_mean: f64,
    pub dev_f1_sd: f64,
    pub test_f1_mean: f64,
    pub test_f1_sd: f64,
    pub bin_f1_mean: [f64; 3],
}

/// Paired comparison of one strategy against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedDelta {
    pub strategy: Strategy,
    pub pairs: usize,
    pub dev_delta_mean: f64,
    pub dev_delta_se: f64,
    pub test_delta_mean: f64,
    pub test_delta_se: f64,
    /// Replicates where the strategy's final dev F1 beat the baseline's.
    pub dev_wins: usize,
    pub bin_delta_mean: [f64; 3],
    pub bin_delta_fine_mean: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub strategies: Vec<Strategy>,
    pub runs: Vec<RunResult>,
    pub summaries: Vec<StrategySummary>,
    pub deltas: Vec<PairedDelta>,
}

impl ExperimentReport {
    pub fn runs_for(&self, strategy: Strategy) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.strategy == strategy)
    }

    pub fn summary(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    pub fn delta(&self, strategy: Strategy) -> Option<&PairedDelta> {
        self.deltas.iter().find(|d| d.strategy == strategy)
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "experiment: {} replicates, n_train={} n_dev={} n_test={} dim={} noise_fraction={} \
             noise_strength={} seed={}",
            c.replicates,
            c.synthetic.n_train,
            c.synthetic.n_dev,
            c.synthetic.n_test,
            c.synthetic.feature_dim,
            c.synthetic.noise_fraction,
            c.synthetic.noise_strength,
            c.synthetic.seed
        );
        let _ = writeln!(
            out,
            "schedule: p0={} T={} batch={} max_steps={} validate_every={} lr={}",
            c.run.schedule.p0,
            c.run.schedule.duration,
            c.run.batch_size,
            c.run.max_steps,
            c.run.validate_every,
            c.learning_rate
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<18} {:>5} {:>9} {:>8} {:>9} {:>8} {:>8} {:>8} {:>8}",
            "strategy", "runs", "dev_f1", "sd", "test_f1", "sd", "level1", "level2", "level3"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<18} {:>5} {:>9.4} {:>8.4} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                s.strategy.name(),
                s.runs,
                s.dev_f1_mean,
                s.dev_f1_sd,
                s.test_f1_mean,
                s.test_f1_sd,
                s.bin_f1_mean[0],
                s.bin_f1_mean[1],
                s.bin_f1_mean[2]
            );
        }
        if !self.deltas.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "paired deltas vs baseline");
            let _ = writeln!(
                out,
                "{:<18} {:>5} {:>9} {:>8} {:>9} {:>8} {:>6} {:>8} {:>8} {:>8}",
                "strategy",
                "pairs",
                "dev_d",
                "se",
                "test_d",
                "se",
                "wins",
                "level1",
                "level2",
                "level3"
            );
            for d in &self.deltas {
                let _ = writeln!(
                    out,
                    "{:<18} {:>5} {:>+9.4} {:>8.4} {:>+9.4} {:>8.4} {:>6} {:>+8.4} {:>+8.4} {:>+8.4}",
                    d.strategy.name(),
                    d.pairs,
                    d.dev_delta_mean,
                    d.dev_delta_se,
                    d.test_delta_mean,
                    d.test_delta_se,
                    d.dev_wins,
                    d.bin_delta_mean[0],
                    d.bin_delta_mean[1],
                    d.bin_delta_mean[2]
                );
            }
        }
        out
    }

    /// One CSV row per strategy, replicate, metric axis and noise bin.
    pub fn write_table<W: std::io::Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            strategy: &'a str,
            replicate: usize,
            seed: u64,
            axis: &'a str,
            bin: usize,
            bin_f1: f64,
            test_f1: f64,
            final_dev_f1: f64,
        }
        let csv_err = |e: csv::Error| Error::domain(format!("writing table: {e}"));
        let mut writer = csv::Writer::from_writer(w);
        for r in &self.runs {
            for (axis, bins) in [("d_c", &r.bin_f1), ("d_f", &r.bin_f1_fine)] {
                for (bin, &f) in bins.iter().enumerate() {
                    writer
                        .serialize(Row {
                            strategy: r.strategy.name(),
                            replicate: r.replicate,
                            seed: r.seed,
                            axis,
                            bin: bin + 1,
                            bin_f1: f,
                            test_f1: r.test_f1,
                            final_dev_f1: r.final_dev_f1,
                        })
                        .map_err(csv_err)?;
                }
            }
        }
        writer
            .flush()
            .map_err(|e| Error::domain(format!("writing table: {e}")))
    }
}

/// Test instances split into thirds by ascending noise score (ties by id).
fn noise_bins(test: &[&SyntheticInstance], d: &[f64]) -> [Vec<usize>; 3] {
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.sort_by(|&a, &b| {
        d[a].total_cmp(&d[b])
            .then_with(|| test[a].id.cmp(&test[b].id))
    });
    let n = order.len();
    let cut = |k: usize| (k * n) / 3;
    [
        order[cut(0)..cut(1)].to_vec(),
        order[cut(1)..cut(2)].to_vec(),
        order[cut(2)..cut(3)].to_vec(),
    ]
}

struct Replicate {
    data: SyntheticData,
    dataset: ScoredDataset,
    bins: [Vec<usize>; 3],
    bins_fine: [Vec<usize>; 3],
}

fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Replicate> {
    let synthetic = SyntheticConfig {
        seed,
        ..config.synthetic.clone()
    };
    let data = generate(&synthetic)?;
    let noise = score_train_set(&data.manifest, &data.scores, config.fallback)?;
    let dataset = build_scored_dataset(&data.manifest, &noise)?;
    let test: Vec<&SyntheticInstance> = data.split(Split::Test).collect();
    let d_c = coarse_noise(&test.iter().map(|g| g.coarse_sim).collect::<Vec<_>>())?;
    let d_f = coarse_noise(&test.iter().map(|g| g.fine_sim).collect::<Vec<_>>())?;
    let bins = noise_bins(&test, &d_c);
    let bins_fine = noise_bins(&test, &d_f);
    Ok(Replicate {
        data,
        dataset,
        bins,
        bins_fine,
    })
}

fn run_one(
    config: &ExperimentConfig,
    rep: &Replicate,
    strategy: Strategy,
    replicate: usize,
    seed: u64,
) -> Result<RunResult> {
    let run_config = RunConfig {
        strategy,
        seed,
        ..config.run.clone()
    };
    let mut learner = ToyLearner::for_dataset(&rep.data, &rep.dataset, config.learning_rate)?;
    let trace = scheduler::run(&rep.dataset, &mut learner, &run_config)?;
    let test: Vec<&SyntheticInstance> = rep.data.split(Split::Test).collect();
    let eval = |idx: &[usize]| {
        learner
            .evaluate(
                idx.iter()
                    .map(|&i| (test[i].features.as_slice(), test[i].clean_label)),
            )
            .f1
    };
    let all: Vec<usize> = (0..test.len()).collect();
    Ok(RunResult {
        strategy,
        replicate,
        seed,
        steps: trace.steps.len(),
        final_dev_f1: trace.final_f1().unwrap_or(0.0),
        test_f1: eval(&all),
        bin_f1: [eval(&rep.bins[0]), eval(&rep.bins[1]), eval(&rep.bins[2])],
        bin_f1_fine: [
            eval(&rep.bins_fine[0]),
            eval(&rep.bins_fine[1]),
            eval(&rep.bins_fine[2]),
        ],
        curve: trace.validations.iter().map(|v| (v.step, v.f1)).collect(),
    })
}

/// Re-runs one (strategy, replicate) cell of [`run_experiment`] and returns
/// its train-set noise scores and full scheduler trace.
pub fn replicate_trace(
    config: &ExperimentConfig,
    strategy: Strategy,
    replicate: usize,
) -> Result<(Vec<NoiseScores>, RunTrace)> {
    let seed = config.synthetic.seed.wrapping_add(replicate as u64);
    let rep = prepare(config, seed)?;
    let run_config = RunConfig {
        strategy,
        seed,
        ..config.run.clone()
    };
    let mut learner = ToyLearner::for_dataset(&rep.data, &rep.dataset, config.learning_rate)?;
    let trace = scheduler::run(&rep.dataset, &mut learner, &run_config)?;
    let noise = rep
        .dataset
        .records()
        .iter()
        .map(|(_, s)| s.clone())
        .collect();
    Ok((noise, trace))
}

/// Runs every strategy on `config.replicates` generated corpora.
///
/// Replicate `r` uses seed `config.synthetic.seed + r` for both data
/// generation and batch sampling, so strategies are compared on identical
/// data. Replicates run in parallel; results are ordered by strategy name,
/// then replicate.
pub fn run_experiment(
    config: &ExperimentConfig,
    strategies: &[Strategy],
) -> Result<ExperimentReport> {
    if config.replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    if strategies.is_empty() {
        return Err(Error::Config("no strategies to run".into()));
    }
    let mut strategies = strategies.to_vec();
    strategies.sort_by_key(|s| s.name());
    strategies.dedup();

    let per_replicate: Vec<Vec<RunResult>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = config.synthetic.seed.wrapping_add(r as u64);
            let rep = prepare(config, seed)?;
            strategies
                .iter()
                .map(|&s| {
                    run_one(config, &rep, s, r, seed)
                        .map_err(|e| Error::Config(format!("strategy {s}, replicate {r}: {e}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut runs: Vec<RunResult> = per_replicate.into_iter().flatten().collect();
    runs.sort_by(|a, b| {
        a.strategy
            .name()
            .cmp(b.strategy.name())
            .then(a.replicate.cmp(&b.replicate))
    });

    let summaries = strategies
        .iter()
        .map(|&s| {
            let rs: Vec<&RunResult> = runs.iter().filter(|r| r.strategy == s).collect();
            let dev: Vec<f64> = rs.iter().map(|r| r.final_dev_f1).collect();
            let test: Vec<f64> = rs.iter().map(|r| r.test_f1).collect();
            let bin = |k: usize| stats::mean(&rs.iter().map(|r| r.bin_f1[k]).collect::<Vec<_>>());
            StrategySummary {
                strategy: s,
                runs: rs.len(),
                dev_f1_mean: stats::mean(&dev),
                dev_f1_sd: stats::std_dev(&dev),
                test_f1_mean: stats::mean(&test),
                test_f1_sd: stats::std_dev(&test),
                bin_f1_mean: [bin(0), bin(1), bin(2)],
            }
        })
        .collect();

    let deltas = if strategies.contains(&Strategy::Baseline) {
        let base: HashMap<usize, &RunResult> = runs
            .iter()
            .filter(|r| r.strategy == Strategy::Baseline)
            .map(|r| (r.replicate, r))
            .collect();
        strategies
            .iter()
            .filter(|&&s| s != Strategy::Baseline)
            .map(|&s| {
                let pairs: Vec<(&RunResult, &RunResult)> = runs
                    .iter()
                    .filter(|r| r.strategy == s)
                    .map(|r| (r, base[&r.replicate]))
                    .collect();
                let diff = |f: &dyn Fn(&RunResult) -> f64| -> Vec<f64> {
                    pairs.iter().map(|(a, b)| f(a) - f(b)).collect()
                };
                let dev = diff(&|r| r.final_dev_f1);
                let test = diff(&|r| r.test_f1);
                let bin = |k: usize| stats::mean(&diff(&|r| r.bin_f1[k]));
                let bin_fine = |k: usize| stats::mean(&diff(&|r| r.bin_f1_fine[k]));
                PairedDelta {
                    strategy: s,
                    pairs: pairs.len(),
                    dev_delta_mean: stats::mean(&dev),
                    dev_delta_se: stats::std_err(&dev),
                    test_delta_mean: stats::mean(&test),
                    test_delta_se: stats::std_err(&test),
                    dev_wins: dev.iter().filter(|&&d| d > 0.0).count(),
                    bin_delta_mean: [bin(0), bin(1), bin(2)],
                    bin_delta_fine_mean: [bin_fine(0), bin_fine(1), bin_fine(2)],
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(ExperimentReport {
        config: config.clone(),
        strategies,
        runs,
        summaries,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_train: 300,
            n_dev: 100,
            n_test: 90,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn zero_noise_fraction_is_clean() {
        let data = generate(&SyntheticConfig {
            noise_fraction: 0.0,
            ..small()
        })
        .unwrap();
        assert!(data
            .ground_truth
            .iter()
            .all(|g| g.true_noise_level == 0.0 && !g.flipped()));
    }

    #[test]
    fn zero_strength_never_flips() {
        let data = generate(&SyntheticConfig {
            noise_fraction: 1.0,
            noise_strength: 0.0,
            ..small()
        })
        .unwrap();
        assert!(data
            .ground_truth
            .iter()
            .all(|g| g.true_noise_level > 0.0 && g.true_noise_level <= 1.0));
        assert!(data.ground_truth.iter().all(|g| !g.flipped()));
    }

    #[test]
    fn flips_only_in_train_and_track_strength() {
        let data = generate(&SyntheticConfig {
            noise_fraction: 1.0,
            noise_strength: 0.8,
            n_train: 4000,
            ..small()
        })
        .unwrap();
        assert!(data
            .ground_truth
            .iter()
            .filter(|g| g.split != Split::Train)
            .all(|g| !g.flipped()));
        let train: Vec<_> = data.split(Split::Train).collect();
        let expected: f64 = train.iter().map(|g| 0.8 * g.true_noise_level).sum();
        let observed = train.iter().filter(|g| g.flipped()).count() as f64;
        // binomial sum, sd about sqrt(4000 * 0.25)
        assert!(
            (observed - expected).abs() < 4.0 * 32.0,
            "{observed} vs {expected}"
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SyntheticConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.scores, c.scores);
    }

    #[test]
    fn similarities_in_range_and_sizes() {
        let data = generate(&small()).unwrap();
        assert_eq!(data.manifest.len(), 490);
        assert!(data
            .ground_truth
            .iter()
            .all(|g| (-1.0..=1.0).contains(&g.coarse_sim) && (-1.0..=1.0).contains(&g.fine_sim)));
        let noisy = data
            .split(Split::Train)
            .filter(|g| g.true_noise_level > 0.0)
            .count();
        assert_eq!(noisy, 90);
    }

    #[test]
    fn learner_is_deterministic() {
        let data = generate(&small()).unwrap();
        let noise = score_train_set(&data.manifest, &data.scores, FallbackRule::Dc).unwrap();
        let ds = build_scored_dataset(&data.manifest, &noise).unwrap();
        let batches: Vec<Vec<usize>> = (0..50)
            .map(|k| (0..8).map(|j| (k * 13 + j * 7) % ds.len()).collect())
            .collect();
        let train = |batches: &[Vec<usize>]| {
            let mut l = ToyLearner::for_dataset(&data, &ds, 0.3).unwrap();
            for b in batches {
                l.train_on(b).unwrap();
            }
            l
        };
        let (a, b) = (train(&batches), train(&batches));
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn learner_learns_clean_task() {
        let data = generate(&SyntheticConfig {
            noise_fraction: 0.0,
            ..small()
        })
        .unwrap();
        let noise = score_train_set(&data.manifest, &data.scores, FallbackRule::Dc).unwrap();
        let ds = build_scored_dataset(&data.manifest, &noise).unwrap();
        let mut l = ToyLearner::for_dataset(&data, &ds, 0.5).unwrap();
        let before = l.validate().unwrap().f1;
        for k in 0..300 {
            let batch: Vec<usize> = (0..16).map(|j| (k * 16 + j) % ds.len()).collect();
            l.train_on(&batch).unwrap();
        }
        let after = l.validate().unwrap().f1;
        assert!(after > 0.8 && after > before, "{before} -> {after}");
    }

    #[test]
    fn bins_are_equal_thirds_ordered_by_noise() {
        let data = generate(&small()).unwrap();
        let test: Vec<_> = data.split(Split::Test).collect();
        let d: Vec<f64> = test.iter().map(|g| 1.0 - g.coarse_sim).collect();
        let bins = noise_bins(&test, &d);
        assert_eq!(bins.iter().map(Vec::len).collect::<Vec<_>>(), [30, 30, 30]);
        let max0 = bins[0].iter().map(|&i| d[i]).fold(f64::MIN, f64::max);
        let min2 = bins[2].iter().map(|&i| d[i]).fold(f64::MAX, f64::min);
        assert!(max0 <= min2);
    }

    #[test]
    fn baseline_only_experiment_has_no_deltas() {
        let config = ExperimentConfig {
            synthetic: small(),
            replicates: 3,
            run: RunConfig {
                max_steps: 60,
                validate_every: 10,
                ..ExperimentConfig::default().run
            },
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&config, &[Strategy::Baseline]).unwrap();
        assert_eq!(report.runs.len(), 3);
        assert!(report.deltas.is_empty());
        assert_eq!(report.summaries.len(), 1);
    }
}
