//! Single and multiple denoising curricula plus the ablation strategies.
//!
//! Every strategy drives a [`Learner`] one batch at a time and records a
//! [`RunTrace`]: one [`StepRecord`] per batch and one [`ValidationRecord`]
//! per validation turn.
//!
//! The multiple curriculum first warms up each curriculum in turn (coarse,
//! then fine) to obtain a progress ratio `s` for each, then repeatedly trains
//! on the curriculum with the largest `s`, refreshing the `s` of whichever
//! curriculum trained since the previous validation turn.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoredDataset;
use crate::error::{Error, Result};
use crate::pacing::{eligible, pace, sample_batch, EligibleView, PacingSchedule};
use crate::Metric;

pub type LearnerError = Box<dyn std::error::Error + Send + Sync>;

/// Precision, recall and F1 from one validation turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ValidationReport {
    pub fn new(precision: f64, recall: f64) -> Result<Self> {
        Ok(ValidationReport {
            precision,
            recall,
            f1: f1(precision, recall)?,
        })
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> Result<f64> {
    for (name, v) in [("precision", precision), ("recall", recall)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} lies outside [0, 1]")));
        }
    }
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Ratio of the current to the previous validation F1.
///
/// A zero previous F1 gives `+inf` if the current one is positive and 1
/// otherwise.
pub fn progress_ratio(current_f1: f64, previous_f1: f64) -> Result<f64> {
    if current_f1 < 0.0 || previous_f1 < 0.0 || current_f1.is_nan() || previous_f1.is_nan() {
        return Err(Error::domain(format!(
            "progress ratio of negative F1 ({current_f1} / {previous_f1})"
        )));
    }
    if previous_f1 == 0.0 {
        return Ok(if current_f1 > 0.0 { f64::INFINITY } else { 1.0 });
    }
    Ok(current_f1 / previous_f1)
}

/// Anything that can be trained batch by batch and scored on held-out data.
pub trait Learner {
    /// Trains on the given record indices of the scheduled dataset.
    fn train_on(&mut self, batch: &[usize]) -> Result<(), LearnerError>;

    /// Scores the current model. Must not alter training state.
    fn validate(&mut self) -> Result<ValidationReport, LearnerError>;
}

impl<L: Learner + ?Sized> Learner for &mut L {
    fn train_on(&mut self, batch: &[usize]) -> Result<(), LearnerError> {
        (**self).train_on(batch)
    }

    fn validate(&mut self) -> Result<ValidationReport, LearnerError> {
        (**self).validate()
    }
}

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Strategy {
    SingleCoarse,
    SingleFine,
    MultipleDynamic,
    Merge,
    Random,
    Sequential,
    /// Uniform sampling from the whole training set at every step.
    Baseline,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Baseline,
        Strategy::Merge,
        Strategy::MultipleDynamic,
        Strategy::Random,
        Strategy::Sequential,
        Strategy::SingleCoarse,
        Strategy::SingleFine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SingleCoarse => "single_coarse",
            Strategy::SingleFine => "single_fine",
            Strategy::MultipleDynamic => "multiple_dynamic",
            Strategy::Merge => "merge",
            Strategy::Random => "random",
            Strategy::Sequential => "sequential",
            Strategy::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub batch_size: usize,
    /// Total steps, warmup included.
    pub max_steps: usize,
    pub validate_every: usize,
    pub warmup_steps_per_curriculum: u64,
    pub strategy: Strategy,
    pub seed: u64,
    /// Pacing of the coarse (and merged) curriculum.
    pub schedule: PacingSchedule,
    /// Pacing of the fine curriculum; same as `schedule` when unset.
    pub fine_schedule: Option<PacingSchedule>,
    /// Size of the substitute set when no instance meets the threshold;
    /// defaults to the batch size.
    pub min_eligible: Option<usize>,
    /// Stop after this many validation turns without an F1 improvement;
    /// `0` in configuration files disables early stopping.
    #[serde(with = "patience_serde")]
    pub patience: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            batch_size: 32,
            max_steps: 1000,
            validate_every: 10,
            warmup_steps_per_curriculum: 2,
            strategy: Strategy::MultipleDynamic,
            seed: 0,
            schedule: PacingSchedule::default(),
            fine_schedule: None,
            min_eligible: None,
            patience: Some(10),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if self.validate_every == 0 || self.validate_every > self.max_steps {
            return Err(Error::Config(format!(
                "validate_every = {} must lie in [1, max_steps = {}]",
                self.validate_every, self.max_steps
            )));
        }
        if self.warmup_steps_per_curriculum == 0 {
            return Err(Error::Config(
                "warmup_steps_per_curriculum must be positive".into(),
            ));
        }
        if self.strategy == Strategy::MultipleDynamic
            && (self.max_steps as u64) < 2 * self.warmup_steps_per_curriculum
        {
            return Err(Error::Config(format!(
                "max_steps = {} leaves no room for {} warmup steps per curriculum",
                self.max_steps, self.warmup_steps_per_curriculum
            )));
        }
        if self.patience == Some(0) {
            return Err(Error::Config(
                "patience must be positive when set; use None to disable".into(),
            ));
        }
        self.schedule.validate()?;
        if let Some(s) = &self.fine_schedule {
            s.validate()?;
        }
        Ok(())
    }

    pub fn schedule_for(&self, metric: Metric) -> PacingSchedule {
        match metric {
            Metric::Fine => self.fine_schedule.unwrap_or(self.schedule),
            _ => self.schedule,
        }
    }

    pub fn min_eligible(&self) -> usize {
        self.min_eligible.unwrap_or(self.batch_size).max(1)
    }
}

/// Per-curriculum pacing counter and progress ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub metric: Metric,
    pub schedule: PacingSchedule,
    pub t: u64,
    pub s: Option<f64>,
    pub last_f1: Option<f64>,
}

impl CurriculumState {
    pub fn new(metric: Metric, schedule: PacingSchedule) -> Self {
        CurriculumState {
            metric,
            schedule,
            t: 0,
            s: None,
            last_f1: None,
        }
    }
}

/// Index of the state with the largest `s`; earlier states win ties.
pub fn select_curriculum(states: &[CurriculumState]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, st) in states.iter().enumerate() {
        let s = st.s.ok_or_else(|| {
            Error::State(format!(
                "{} curriculum has no progress ratio yet; run warmup first",
                st.metric
            ))
        })?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::State("no curricula to select from".into()))
}

/// Data source of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curriculum {
    Coarse,
    Fine,
    Merged,
    /// Whole training set, no curriculum.
    Uniform,
}

impl From<Metric> for Curriculum {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Coarse => Curriculum::Coarse,
            Metric::Fine => Curriculum::Fine,
            Metric::Merged => Curriculum::Merged,
        }
    }
}

impl fmt::Display for Curriculum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Curriculum::Coarse => "coarse",
            Curriculum::Fine => "fine",
            Curriculum::Merged => "merged",
            Curriculum::Uniform => "uniform",
        })
    }
}

/// Disabled patience is written as `0` so configuration files can express it.
mod patience_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(v.unwrap_or(0) as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        Ok(Some(usize::deserialize(d)?).filter(|&n| n > 0))
    }
}

/// Progress ratios may be `+inf`; JSON has no infinity, so it is written as
/// the string `"inf"`.
mod ratio_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_some("inf"),
            Some(x) => s.serialize_some(x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Wire>::deserialize(d)? {
            None => Ok(None),
            Some(Wire::Num(x)) => Ok(Some(x)),
            Some(Wire::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Wire::Text(t)) => Err(serde::de::Error::custom(format!("bad ratio {t:?}"))),
        }
    }
}

/// Run parameters echoed at the top of a serialized trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub strategy: Strategy,
    pub seed: u64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub validate_every: usize,
    pub warmup_steps_per_curriculum: u64,
    pub min_eligible: usize,
    pub coarse_schedule: PacingSchedule,
    pub fine_schedule: PacingSchedule,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Global step index, from 0.
    pub step: usize,
    pub curriculum: Curriculum,
    pub warmup: bool,
    /// The curriculum's own counter value used for pacing.
    pub t: u64,
    pub pace: f64,
    pub prefix_len: usize,
    pub fallback: bool,
    pub batch: Vec<String>,
    /// Progress ratios at selection time.
    #[serde(with = "ratio_serde")]
    pub s_coarse: Option<f64>,
    #[serde(with = "ratio_serde")]
    pub s_fine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    /// Number of steps completed before this turn.
    pub step: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Progress ratios after this turn's update.
    #[serde(with = "ratio_serde")]
    pub s_coarse: Option<f64>,
    #[serde(with = "ratio_serde")]
    pub s_fine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub validations: Vec<ValidationRecord>,
    /// True when the patience rule ended the run before `max_steps`.
    pub stopped_early: bool,
}

impl RunTrace {
    pub fn final_f1(&self) -> Option<f64> {
        self.validations.last().map(|v| v.f1)
    }

    pub fn steps_for(&self, curriculum: Curriculum) -> usize {
        self.steps
            .iter()
            .filter(|s| s.curriculum == curriculum)
            .count()
    }

    /// Serializes as line-delimited JSON: a header line, then step and
    /// validation lines interleaved in execution order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &TraceLine::Header(self.header.clone()))?;
        w.write_all(b"\n")?;
        let mut vals = self.validations.iter().peekable();
        for st in &self.steps {
            while let Some(v) = vals.next_if(|v| v.step <= st.step) {
                serde_json::to_writer(&mut w, &TraceLine::Validation(v.clone()))?;
                w.write_all(b"\n")?;
            }
            serde_json::to_writer(&mut w, &TraceLine::Step(st.clone()))?;
            w.write_all(b"\n")?;
        }
        for v in vals {
            serde_json::to_writer(&mut w, &TraceLine::Validation(v.clone()))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &TraceLine::End {
                stopped_early: self.stopped_early,
            },
        )?;
        w.write_all(b"\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = None;
        let mut steps = Vec::new();
        let mut validations = Vec::new();
        let mut stopped_early = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let rec: TraceLine =
                serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            match rec {
                TraceLine::Header(h) if header.is_none() && i == 0 => header = Some(h),
                TraceLine::Header(_) => return Err(parse_err("unexpected header line".into())),
                _ if header.is_none() => {
                    return Err(parse_err("trace must start with a header".into()))
                }
                TraceLine::Step(s) => steps.push(s),
                TraceLine::Validation(v) => validations.push(v),
                TraceLine::End { stopped_early: e } => stopped_early = Some(e),
            }
        }
        let header = header.ok_or_else(|| Error::Parse {
            line: 0,
            message: "empty trace".into(),
        })?;
        Ok(RunTrace {
            header,
            steps,
            validations,
            stopped_early: stopped_early.unwrap_or(false),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TraceLine {
    Header(TraceHeader),
    Step(StepRecord),
    Validation(ValidationRecord),
    End { stopped_early: bool },
}

/// Shared stepping machinery for all strategies.
struct Runner<'a, L, R: ?Sized> {
    dataset: &'a ScoredDataset,
    learner: L,
    rng: &'a mut R,
    config: &'a RunConfig,
    trace: RunTrace,
    best_f1: f64,
    stale_turns: usize,
}

impl<'a, L: Learner, R: Rng + ?Sized> Runner<'a, L, R> {
    fn new(
        dataset: &'a ScoredDataset,
        learner: L,
        config: &'a RunConfig,
        rng: &'a mut R,
    ) -> Result<Self> {
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::Config(
                "cannot schedule an empty training set".into(),
            ));
        }
        let header = TraceHeader {
            strategy: config.strategy,
            seed: config.seed,
            batch_size: config.batch_size,
            max_steps: config.max_steps,
            validate_every: config.validate_every,
            warmup_steps_per_curriculum: config.warmup_steps_per_curriculum,
            min_eligible: config.min_eligible(),
            coarse_schedule: config.schedule_for(Metric::Coarse),
            fine_schedule: config.schedule_for(Metric::Fine),
            n_train: dataset.len(),
        };
        Ok(Runner {
            dataset,
            learner,
            rng,
            config,
            trace: RunTrace {
                header,
                steps: Vec::with_capacity(config.max_steps),
                validations: Vec::new(),
                stopped_early: false,
            },
            best_f1: f64::NEG_INFINITY,
            stale_turns: 0,
        })
    }

    fn steps_taken(&self) -> usize {
        self.trace.steps.len()
    }

    fn train_view(&mut self, view: EligibleView, record: StepRecordParts) -> Result<()> {
        let step = self.steps_taken();
        let batch = sample_batch(self.dataset, &view, self.config.batch_size, self.rng)?;
        self.learner
            .train_on(&batch)
            .map_err(|source| Error::Learner { step, source })?;
        self.trace.steps.push(StepRecord {
            step,
            curriculum: record.curriculum,
            warmup: record.warmup,
            t: record.t,
            pace: record.pace,
            prefix_len: view.prefix_len,
            fallback: view.fallback,
            batch: batch
                .iter()
                .map(|&i| self.dataset.id(i).to_owned())
                .collect(),
            s_coarse: record.s.0,
            s_fine: record.s.1,
        });
        Ok(())
    }

    /// One step on `metric` at counter value `t`.
    fn curriculum_step(
        &mut self,
        metric: Metric,
        t: u64,
        warmup: bool,
        s: (Option<f64>, Option<f64>),
    ) -> Result<()> {
        let p = pace(t, &self.config.schedule_for(metric));
        let view = eligible(self.dataset, metric, p, self.config.min_eligible());
        self.train_view(
            view,
            StepRecordParts {
                curriculum: metric.into(),
                warmup,
                t,
                pace: p,
                s,
            },
        )
    }

    fn uniform_step(&mut self) -> Result<()> {
        let t = self.steps_taken() as u64;
        let view = EligibleView {
            metric: Metric::Coarse,
            threshold: 1.0,
            prefix_len: self.dataset.len(),
            fallback: false,
        };
        self.train_view(
            view,
            StepRecordParts {
                curriculum: Curriculum::Uniform,
                warmup: false,
                t,
                pace: 1.0,
                s: (None, None),
            },
        )
    }

    fn validate(&mut self, s: (Option<f64>, Option<f64>)) -> Result<ValidationReport> {
        let step = self.steps_taken();
        let report = self
            .learner
            .validate()
            .map_err(|source| Error::Learner { step, source })?;
        self.trace.validations.push(ValidationRecord {
            step,
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
            s_coarse: s.0,
            s_fine: s.1,
        });
        Ok(report)
    }

    fn is_validation_turn(&self, steps_in_phase: usize) -> bool {
        steps_in_phase.is_multiple_of(self.config.validate_every)
    }

    /// Updates the patience counter; true when the run should stop.
    fn converged(&mut self, f1: f64) -> bool {
        if f1 > self.best_f1 {
            self.best_f1 = f1;
            self.stale_turns = 0;
        } else {
            self.stale_turns += 1;
        }
        match self.config.patience {
            Some(p) if self.stale_turns >= p => {
                self.trace.stopped_early = true;
                true
            }
            _ => false,
        }
    }

    /// Guarantees the trace ends with a validation of the final model.
    fn finish(mut self, s: (Option<f64>, Option<f64>)) -> Result<RunTrace> {
        let needs_final = self
            .trace
            .validations
            .last()
            .is_none_or(|v| v.step != self.steps_taken());
        if needs_final {
            self.validate(s)?;
        }
        Ok(self.trace)
    }
}

struct StepRecordParts {
    curriculum: Curriculum,
    warmup: bool,
    t: u64,
    pace: f64,
    s: (Option<f64>, Option<f64>),
}

fn require_strategy(config: &RunConfig, allowed: &[Strategy]) -> Result<()> {
    if allowed.contains(&config.strategy) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "strategy {} cannot be run here (expected one of {:?})",
            config.strategy,
            allowed.iter().map(|s| s.name()).collect::<Vec<_>>()
        )))
    }
}

/// One curriculum on `metric` for `max_steps` steps, pacing counter = step.
fn single_loop<L: Learner, R: Rng + ?Sized>(
    dataset: &ScoredDataset,
    metric: Metric,
    learner: L,
    config: &RunConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    let mut run = Runner::new(dataset, learner, config, rng)?;
    for step in 0..config.max_steps {
        run.curriculum_step(metric, step as u64, false, (None, None))?;
        if run.is_validation_turn(step + 1) {
            let rep = run.validate((None, None))?;
            if run.converged(rep.f1) {
                break;
            }
        }
    }
    run.finish((None, None))
}

/// Single denoising curriculum on the coarse or fine metric.
pub fn run_single<L: Learner, R: Rng + ?Sized>(
    dataset: &ScoredDataset,
    metric: Metric,
    learner: L,
    config: &RunConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    require_strategy(config, &[Strategy::SingleCoarse, Strategy::SingleFine])?;
    if metric == Metric::Merged {
        return Err(Error::Config(
            "the merged metric is run by the merge strategy".into(),
        ));
    }
    single_loop(dataset, metric, learner, config, rng)
}

/// Multiple denoising curriculum with dynamic selection.
pub fn run_multiple<L: Learner, R: Rng + ?Sized>(
    dataset: &ScoredDataset,
    learner: L,
    config: &RunConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    require_strategy(config, &[Strategy::MultipleDynamic])?;
    let mut run = Runner::new(dataset, learner, config, rng)?;
    let mut states = [
        CurriculumState::new(Metric::Coarse, config.schedule_for(Metric::Coarse)),
        CurriculumState::new(Metric::Fine, config.schedule_for(Metric::Fine)),
    ];
    let ratios = |states: &[CurriculumState; 2]| (states[0].s, states[1].s);

    let mut prev_f1 = run.validate((None, None))?.f1;
    for i in 0..states.len() {
        while states[i].t < config.warmup_steps_per_curriculum {
            run.curriculum_step(states[i].metric, states[i].t, true, ratios(&states))?;
            states[i].t += 1;
        }
        let f1 = {
            // s is only known after this turn, so record the update with it
            let report = run.learner.validate().map_err(|source| Error::Learner {
                step: run.steps_taken(),
                source,
            })?;
            states[i].s = Some(progress_ratio(report.f1, prev_f1)?);
            states[i].last_f1 = Some(report.f1);
            run.trace.validations.push(ValidationRecord {
                step: run.steps_taken(),
                precision: report.precision,
                recall: report.recall,
                f1: report.f1,
                s_coarse: states[0].s,
                s_fine: states[1].s,
            });
            report.f1
        };
        prev_f1 = f1;
    }

    let mut trained = [false; 2];
    let mut main_steps = 0;
    while run.steps_taken() < config.max_steps {
        let j = select_curriculum(&states)?;
        let s_at_selection = ratios(&states);
        states[j].t += 1;
        run.curriculum_step(states[j].metric, states[j].t, false, s_at_selection)?;
        trained[j] = true;
        main_steps += 1;

        if run.is_validation_turn(main_steps) {
            let report = run.learner.validate().map_err(|source| Error::Learner {
                step: run.steps_taken(),
                source,
            })?;
            let ratio = progress_ratio(report.f1, prev_f1)?;
            for (st, did_train) in states.iter_mut().zip(trained.iter_mut()) {
                if std::mem::take(did_train) {
                    st.s = Some(ratio);
                    st.last_f1 = Some(report.f1);
                }
            }
            prev_f1 = report.f1;
            run.trace.validations.push(ValidationRecord {
                step: run.steps_taken(),
                precision: report.precision,
                recall: report.recall,
                f1: report.f1,
                s_coarse: states[0].s,
                s_fine: states[1].s,
            });
            if run.converged(report.f1) {
                break;
            }
        }
    }
    run.finish(ratios(&states))
}

/// Merge, random and sequential combinations of the two curricula.
pub fn run_ablation<L: Learner, R: Rng + ?Sized>(
    dataset: &ScoredDataset,
    learner: L,
    config: &RunConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    require_strategy(
        config,
        &[Strategy::Merge, Strategy::Random, Strategy::Sequential],
    )?;
    if config.strategy == Strategy::Merge {
        return single_loop(dataset, Metric::Merged, learner, config, rng);
    }
    let mut run = Runner::new(dataset, learner, config, rng)?;
    let metrics = [Metric::Coarse, Metric::Fine];
    let mut counters = [0u64; 2];
    for step in 0..config.max_steps {
        let j = match config.strategy {
            Strategy::Sequential => step % 2,
            _ => run.rng.random_range(0..2),
        };
        run.curriculum_step(metrics[j], counters[j], false, (None, None))?;
        counters[j] += 1;
        if run.is_validation_turn(step + 1) {
            let rep = run.validate((None, None))?;
            if run.converged(rep.f1) {
                break;
            }
        }
    }
    run.finish((None, None))
}

/// Uniform random order over the whole training set.
pub fn run_baseline<L: Learner, R: Rng + ?Sized>(
    dataset: &ScoredDataset,
    learner: L,
    config: &RunConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    require_strategy(config, &[Strategy::Baseline])?;
    let mut run = Runner::new(dataset, learner, config, rng)?;
    for step in 0..config.max_steps {
        run.uniform_step()?;
        if run.is_validation_turn(step + 1) {
            let rep = run.validate((None, None))?;
            if run.converged(rep.f1) {
                break;
            }
        }
    }
    run.finish((None, None))
}

/// Dispatches on `config.strategy` using the given generator.
pub fn run_with_rng<L: Learner, R: Rng + ?Sized>(
    dataset: &ScoredDataset,
    learner: L,
    config: &RunConfig,
    rng: &mut R,
) -> Result<RunTrace> {
    match config.strategy {
        Strategy::SingleCoarse => run_single(dataset, Metric::Coarse, learner, config, rng),
        Strategy::SingleFine => run_single(dataset, Metric::Fine, learner, config, rng),
        Strategy::MultipleDynamic => run_multiple(dataset, learner, config, rng),
        Strategy::Merge | Strategy::Random | Strategy::Sequential => {
            run_ablation(dataset, learner, config, rng)
        }
        Strategy::Baseline => run_baseline(dataset, learner, config, rng),
    }
}

/// Dispatches on `config.strategy` with a generator seeded from `config.seed`.
pub fn run<L: Learner>(
    dataset: &ScoredDataset,
    learner: L,
    config: &RunConfig,
) -> Result<RunTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_with_rng(dataset, learner, config, &mut rng)
}
