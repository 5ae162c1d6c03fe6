//! Command-line front end: `normalize`, `preview`, `simulate` and `analyze`.
//!
//! Settings resolve as command-line flag, then the `--config` TOML file, then
//! built-in defaults. `M2DF_SEED` stands in for `--seed` when the flag is
//! absent. Every command echoes its resolved settings to stderr before
//! doing any work; results go to stdout and the requested files only.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{
    build_scored_dataset, load_manifest, load_noise, load_scores, write_noise, InstanceRecord,
    NoiseScores, ScoredDataset, Split,
};
use crate::metrics::{score_train_set, FallbackRule};
use crate::pacing::{count_within, expected_counts_from_prefixes, pace, PacingSchedule};
use crate::scheduler::{Curriculum, RunTrace, Strategy};
use crate::simulator::{replicate_trace, run_experiment, ExperimentConfig};
use crate::{stats, Metric};

#[derive(Debug, Parser)]
#[command(
    name = "m2df",
    version,
    about = "Curriculum denoising scheduler for noisy multimodal data"
)]
pub struct Cli {
    /// Seed for data generation and batch sampling.
    #[arg(long, global = true, env = "M2DF_SEED")]
    pub seed: Option<u64>,

    /// TOML configuration file (an experiment configuration; see README).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw similarities into normalized noise scores for the train split.
    Normalize {
        /// Instance manifest (JSON lines).
        #[arg(long)]
        manifest: PathBuf,
        /// Raw similarity records (JSON lines).
        #[arg(long)]
        scores: PathBuf,
        /// Output noise file (JSON lines).
        #[arg(long)]
        out: PathBuf,
        /// Substitute for the fine score when aspects or objects are missing.
        #[arg(long, value_enum)]
        fallback: Option<FallbackRule>,
    },
    /// Tabulate the competence schedule and eligible counts per metric.
    Preview {
        /// Noise file written by `normalize`.
        #[arg(long)]
        noise: PathBuf,
        /// Initial competence.
        #[arg(long)]
        p0: Option<f64>,
        /// Curriculum duration T in steps.
        #[arg(long, short = 'T')]
        duration: Option<u64>,
        /// Number of rows (t = 0 .. steps-1); defaults to T + 1.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Compare strategies on synthetic noisy corpora.
    Simulate {
        /// Comma-separated strategies; defaults to all of them.
        #[arg(long, value_enum, value_delimiter = ',')]
        strategies: Vec<Strategy>,
        /// Number of paired replicates.
        #[arg(long)]
        replicates: Option<usize>,
        /// Fraction of noisy train instances.
        #[arg(long)]
        noise_fraction: Option<f64>,
        /// Corruption per unit of noise level.
        #[arg(long)]
        noise_strength: Option<f64>,
        /// Directory for report.txt and table.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-run traces and per-replicate noise files.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Summarize a scheduler trace.
    Analyze {
        /// Trace file (JSON lines).
        #[arg(long)]
        trace: PathBuf,
        /// Noise file of the traced run, for sampling-weight correlations.
        #[arg(long)]
        noise: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct NormalizeSettings<'a> {
    manifest: &'a Path,
    scores: &'a Path,
    out: &'a Path,
    fallback: FallbackRule,
}

#[derive(Serialize)]
struct PreviewSettings<'a> {
    noise: &'a Path,
    p0: f64,
    duration: u64,
    steps: u64,
}

#[derive(Serialize)]
struct SimulateSettings<'a> {
    strategies: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    traces: Option<&'a Path>,
    experiment: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct AnalyzeSettings<'a> {
    trace: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise: Option<&'a Path>,
}

/// Reads an experiment configuration; absent fields take their defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn echo<T: Serialize>(err: &mut dyn Write, command: &str, settings: &T) -> Result<()> {
    let body = toml::to_string(settings).context("serializing resolved configuration")?;
    writeln!(err, "# m2df {command}: resolved configuration")?;
    err.write_all(body.as_bytes())?;
    writeln!(err)?;
    Ok(())
}

/// Executes one parsed invocation.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.synthetic.seed = seed;
    }
    match cli.command {
        Command::Normalize {
            manifest,
            scores,
            out: out_path,
            fallback,
        } => {
            let settings = NormalizeSettings {
                manifest: &manifest,
                scores: &scores,
                out: &out_path,
                fallback: fallback.unwrap_or(config.fallback),
            };
            echo(err, "normalize", &settings)?;
            cmd_normalize(&settings, out)
        }
        Command::Preview {
            noise,
            p0,
            duration,
            steps,
        } => {
            let schedule = PacingSchedule {
                p0: p0.unwrap_or(config.run.schedule.p0),
                duration: duration.unwrap_or(config.run.schedule.duration),
            };
            schedule.validate()?;
            let settings = PreviewSettings {
                noise: &noise,
                p0: schedule.p0,
                duration: schedule.duration,
                steps: steps.unwrap_or(schedule.duration + 1),
            };
            echo(err, "preview", &settings)?;
            cmd_preview(&settings, out)
        }
        Command::Simulate {
            strategies,
            replicates,
            noise_fraction,
            noise_strength,
            out: out_dir,
            traces,
        } => {
            if let Some(r) = replicates {
                config.replicates = r;
            }
            if let Some(f) = noise_fraction {
                config.synthetic.noise_fraction = f;
            }
            if let Some(s) = noise_strength {
                config.synthetic.noise_strength = s;
            }
            config.synthetic.validate()?;
            config.run.validate()?;
            let mut strategies = if strategies.is_empty() {
                Strategy::ALL.to_vec()
            } else {
                strategies
            };
            strategies.sort_by_key(|s| s.name());
            strategies.dedup();
            let settings = SimulateSettings {
                strategies: strategies.iter().map(|s| s.name()).collect(),
                out: out_dir.as_deref(),
                traces: traces.as_deref(),
                experiment: &config,
            };
            echo(err, "simulate", &settings)?;
            cmd_simulate(
                &config,
                &strategies,
                out_dir.as_deref(),
                traces.as_deref(),
                out,
            )
        }
        Command::Analyze { trace, noise } => {
            let settings = AnalyzeSettings {
                trace: &trace,
                noise: noise.as_deref(),
            };
            echo(err, "analyze", &settings)?;
            cmd_analyze(&trace, noise.as_deref(), out)
        }
    }
}

fn min_mean_max(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64) {
    let v: Vec<f64> = xs.collect();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, stats::mean(&v), max)
}

fn cmd_normalize(s: &NormalizeSettings<'_>, out: &mut dyn Write) -> Result<()> {
    let manifest = load_manifest(s.manifest)?;
    let raw = load_scores(s.scores, &manifest)?;
    let noise = score_train_set(&manifest, &raw, s.fallback)?;
    write_noise(s.out, &noise)?;

    let mut text = String::new();
    writeln!(text, "train instances: {}", noise.len())?;
    if !noise.is_empty() {
        for (name, (min, mean, max)) in [
            ("d_c", min_mean_max(noise.iter().map(|n| n.d_c))),
            ("d_f", min_mean_max(noise.iter().map(|n| n.d_f))),
        ] {
            writeln!(text, "{name}: min {min:.6} mean {mean:.6} max {max:.6}")?;
        }
    }
    writeln!(
        text,
        "fine fallbacks: {}",
        noise.iter().filter(|n| n.d_f_fallback).count()
    )?;
    writeln!(text, "wrote {}", s.out.display())?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Builds a train-only dataset from a noise file.
fn dataset_from_noise(noise: &[NoiseScores]) -> crate::Result<ScoredDataset> {
    let records: Vec<InstanceRecord> = noise
        .iter()
        .map(|n| InstanceRecord {
            id: n.id.clone(),
            text: String::new(),
            image_ref: None,
            split: Split::Train,
        })
        .collect();
    build_scored_dataset(&records, noise)
}

fn cmd_preview(s: &PreviewSettings<'_>, out: &mut dyn Write) -> Result<()> {
    let noise = load_noise(s.noise)?;
    let ds = dataset_from_noise(&noise)?;
    let schedule = PacingSchedule::new(s.p0, s.duration)?;
    let mut text = String::new();
    writeln!(text, "t\tpace\tcoarse\tfine\tmerged")?;
    for t in 0..s.steps {
        let p = pace(t, &schedule);
        writeln!(
            text,
            "{t}\t{p:.9}\t{}\t{}\t{}",
            count_within(&ds, Metric::Coarse, p),
            count_within(&ds, Metric::Fine, p),
            count_within(&ds, Metric::Merged, p)
        )?;
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn trace_file_name(strategy: Strategy, replicate: usize) -> String {
    format!("{}-r{replicate:02}.trace.jsonl", strategy.name())
}

fn cmd_simulate(
    config: &ExperimentConfig,
    strategies: &[Strategy],
    out_dir: Option<&Path>,
    traces: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let report = run_experiment(config, strategies)?;
    let text = report.to_text();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("report.txt"), &text)
            .with_context(|| format!("writing {}", dir.join("report.txt").display()))?;
        let table = dir.join("table.csv");
        let file =
            fs::File::create(&table).with_context(|| format!("writing {}", table.display()))?;
        report.write_table(std::io::BufWriter::new(file))?;
    }
    if let Some(dir) = traces {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in 0..config.replicates {
            for (k, &s) in strategies.iter().enumerate() {
                let (noise, trace) = replicate_trace(config, s, r)?;
                if k == 0 {
                    write_noise(dir.join(format!("noise-r{r:02}.jsonl")), &noise)?;
                }
                trace.save(dir.join(trace_file_name(s, r)))?;
            }
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn fmt_ratio(s: Option<f64>) -> String {
    match s {
        None => "-".into(),
        Some(v) if v.is_infinite() => "inf".into(),
        Some(v) => format!("{v:.6}"),
    }
}

fn curriculum_metric(c: Curriculum) -> Option<Metric> {
    match c {
        Curriculum::Coarse => Some(Metric::Coarse),
        Curriculum::Fine => Some(Metric::Fine),
        Curriculum::Merged => Some(Metric::Merged),
        Curriculum::Uniform => None,
    }
}

fn cmd_analyze(trace_path: &Path, noise_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let trace = RunTrace::load(trace_path)
        .with_context(|| format!("reading trace {}", trace_path.display()))?;
    if trace.steps.is_empty() {
        bail!("trace {} contains no steps", trace_path.display());
    }
    let noise = noise_path.map(load_noise).transpose()?;
    let h = &trace.header;
    let total = trace.steps.len();

    let mut text = String::new();
    writeln!(
        text,
        "trace: strategy={} seed={} n_train={} batch={} steps={} validations={} stopped_early={}",
        h.strategy,
        h.seed,
        h.n_train,
        h.batch_size,
        total,
        trace.validations.len(),
        trace.stopped_early
    )?;
    writeln!(text)?;
    writeln!(
        text,
        "{:<10} {:>8} {:>8} {:>8} {:>8}",
        "curriculum", "warmup", "main", "total", "last_t"
    )?;
    let curricula = [
        Curriculum::Coarse,
        Curriculum::Fine,
        Curriculum::Merged,
        Curriculum::Uniform,
    ];
    for c in curricula {
        let steps: Vec<_> = trace.steps.iter().filter(|s| s.curriculum == c).collect();
        let warmup = steps.iter().filter(|s| s.warmup).count();
        let last_t = steps
            .last()
            .map_or_else(|| "-".to_string(), |s| s.t.to_string());
        writeln!(
            text,
            "{:<10} {:>8} {:>8} {:>8} {:>8}",
            c.to_string(),
            warmup,
            steps.len() - warmup,
            steps.len(),
            last_t
        )?;
    }
    let (n_c, n_f) = (
        trace.steps_for(Curriculum::Coarse),
        trace.steps_for(Curriculum::Fine),
    );
    if n_c + n_f > 0 {
        writeln!(
            text,
            "t_coarse + t_fine = {n_c} + {n_f} = {} (total steps {total})",
            n_c + n_f
        )?;
    }

    writeln!(text)?;
    writeln!(text, "validation history")?;
    writeln!(
        text,
        "{:>8} {:>10} {:>12} {:>12}",
        "step", "f1", "s_coarse", "s_fine"
    )?;
    for v in &trace.validations {
        writeln!(
            text,
            "{:>8} {:>10.6} {:>12} {:>12}",
            v.step,
            v.f1,
            fmt_ratio(v.s_coarse),
            fmt_ratio(v.s_fine)
        )?;
    }

    if let Some(noise) = noise {
        if noise.len() != h.n_train {
            bail!(
                "noise file has {} instances but the trace was run on {}",
                noise.len(),
                h.n_train
            );
        }
        let ds = dataset_from_noise(&noise)?;
        let index: HashMap<&str, usize> = (0..ds.len()).map(|i| (ds.id(i), i)).collect();
        writeln!(text)?;
        writeln!(text, "sampling weight vs noise")?;
        writeln!(
            text,
            "{:<10} {:>8} {:>16} {:>18}",
            "curriculum", "steps", "spearman(d,n)", "pearson(exp,n)"
        )?;
        for c in curricula {
            let steps: Vec<_> = trace.steps.iter().filter(|s| s.curriculum == c).collect();
            if steps.is_empty() {
                continue;
            }
            let mut counts = vec![0.0; ds.len()];
            for s in &steps {
                for id in &s.batch {
                    let &i = index
                        .get(id.as_str())
                        .with_context(|| format!("trace id {id:?} not in noise file"))?;
                    counts[i] += 1.0;
                }
            }
            let metric = curriculum_metric(c).unwrap_or(Metric::Coarse);
            let d: Vec<f64> = (0..ds.len()).map(|i| ds.d(metric, i)).collect();
            let expected = match curriculum_metric(c) {
                Some(m) => format!(
                    "{:.6}",
                    stats::pearson(
                        &expected_counts_from_prefixes(
                            &ds,
                            m,
                            h.batch_size,
                            steps.iter().map(|s| s.prefix_len)
                        ),
                        &counts
                    )
                ),
                None => "-".into(),
            };
            writeln!(
                text,
                "{:<10} {:>8} {:>16.6} {:>18}",
                c.to_string(),
                steps.len(),
                stats::spearman(&d, &counts),
                expected
            )?;
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}
