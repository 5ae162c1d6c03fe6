//! Curriculum denoising for noisy multimodal training data.
//!
//! Instances are scored by two noise metrics (sentence/image similarity and
//! aspect/object similarity), sorted, and exposed to a learner from clean to
//! noisy under a square-root competence schedule. The multiple-curriculum
//! scheduler picks, at every step, the metric whose recent validation F1
//! progress is largest.

use serde::{Deserialize, Serialize};

pub mod cli;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod pacing;
pub mod scheduler;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};

/// Which noise metric orders the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Sentence/image similarity, `d_c`.
    Coarse,
    /// Aspect/object similarity, `d_f`.
    Fine,
    /// `(d_c + d_f) / 2`.
    Merged,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Coarse => "coarse",
            Metric::Fine => "fine",
            Metric::Merged => "merged",
        })
    }
}
