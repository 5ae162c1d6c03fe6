//! Square-root competence function and threshold eligibility.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoredDataset;
use crate::error::{Error, Result};
use crate::Metric;

/// Initial competence `p0` and curriculum duration `T` in scheduler steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacingSchedule {
    pub p0: f64,
    pub duration: u64,
}

impl PacingSchedule {
    pub fn new(p0: f64, duration: u64) -> Result<Self> {
        let s = PacingSchedule { p0, duration };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(Error::Config(format!(
                "p0 = {} must lie in (0, 1]",
                self.p0
            )));
        }
        if self.duration == 0 {
            return Err(Error::Config(
                "curriculum duration T must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for PacingSchedule {
    fn default() -> Self {
        PacingSchedule {
            p0: 0.01,
            duration: 1000,
        }
    }
}

/// Competence at step `t`: `sqrt(t (1 - p0^2) / T + p0^2)` up to `T`, then 1.
pub fn pace(t: u64, schedule: &PacingSchedule) -> f64 {
    if t >= schedule.duration {
        return 1.0;
    }
    let p0_sq = schedule.p0 * schedule.p0;
    let frac = t as f64 / schedule.duration as f64;
    (frac * (1.0 - p0_sq) + p0_sq).sqrt().min(1.0)
}

/// Eligible instances: a prefix of the dataset's sort order for `metric`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EligibleView {
    pub metric: Metric,
    pub threshold: f64,
    pub prefix_len: usize,
    /// No instance met the threshold and the cleanest ones were substituted.
    pub fallback: bool,
}

/// Number of instances with `d <= threshold`, by binary search.
pub fn count_within(dataset: &ScoredDataset, metric: Metric, threshold: f64) -> usize {
    dataset
        .sorted(metric)
        .partition_point(|&i| dataset.d(metric, i) <= threshold)
}

/// Eligible prefix for `threshold`. An empty prefix is replaced by the
/// `min_eligible` lowest-noise instances.
pub fn eligible(
    dataset: &ScoredDataset,
    metric: Metric,
    threshold: f64,
    min_eligible: usize,
) -> EligibleView {
    let prefix_len = count_within(dataset, metric, threshold);
    if prefix_len == 0 && !dataset.is_empty() {
        EligibleView {
            metric,
            threshold,
            prefix_len: min_eligible.clamp(1, dataset.len()),
            fallback: true,
        }
    } else {
        EligibleView {
            metric,
            threshold,
            prefix_len,
            fallback: false,
        }
    }
}

/// Draws up to `batch_size` distinct record indices uniformly from the
/// eligible prefix. A prefix shorter than the batch is returned whole.
pub fn sample_batch<R: Rng + ?Sized>(
    dataset: &ScoredDataset,
    view: &EligibleView,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if batch_size == 0 {
        return Err(Error::domain("batch size must be positive"));
    }
    if view.prefix_len == 0 {
        return Err(Error::domain("cannot sample from an empty eligible set"));
    }
    let prefix = &dataset.sorted(view.metric)[..view.prefix_len];
    if prefix.len() <= batch_size {
        return Ok(prefix.to_vec());
    }
    Ok(rand::seq::index::sample(rng, prefix.len(), batch_size)
        .into_iter()
        .map(|pos| prefix[pos])
        .collect())
}

/// Expected number of times each record is drawn over `steps` single
/// curriculum steps, indexed by record. Step `t` draws `min(b, L_t)` of the
/// `L_t` eligible instances, so each member gains `min(b, L_t) / L_t`.
pub fn expected_counts(
    dataset: &ScoredDataset,
    metric: Metric,
    schedule: &PacingSchedule,
    batch_size: usize,
    min_eligible: usize,
    steps: u64,
) -> Vec<f64> {
    let prefix_lens =
        (0..steps).map(|t| eligible(dataset, metric, pace(t, schedule), min_eligible).prefix_len);
    expected_counts_from_prefixes(dataset, metric, batch_size, prefix_lens)
}

/// Same as [`expected_counts`] but from an observed sequence of prefix lengths.
pub fn expected_counts_from_prefixes(
    dataset: &ScoredDataset,
    metric: Metric,
    batch_size: usize,
    prefix_lens: impl IntoIterator<Item = usize>,
) -> Vec<f64> {
    let n = dataset.len();
    // diff[k] accumulates weight for sorted positions >= k
    let mut diff = vec![0.0; n + 1];
    for len in prefix_lens {
        if len == 0 {
            continue;
        }
        let w = batch_size.min(len) as f64 / len as f64;
        diff[0] += w;
        diff[len.min(n)] -= w;
    }
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for (pos, &idx) in dataset.sorted(metric).iter().enumerate() {
        acc += diff[pos];
        out[idx] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_scored_dataset, InstanceRecord, NoiseScores, Split};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(d: &[f64]) -> ScoredDataset {
        let recs: Vec<_> = (0..d.len())
            .map(|i| InstanceRecord {
                id: format!("i{i:04}"),
                text: String::new(),
                image_ref: None,
                split: Split::Train,
            })
            .collect();
        let scores: Vec<_> = d
            .iter()
            .enumerate()
            .map(|(i, &v)| NoiseScores {
                id: format!("i{i:04}"),
                d_c: v,
                d_f: v,
                d_f_fallback: false,
            })
            .collect();
        build_scored_dataset(&recs, &scores).unwrap()
    }

    #[test]
    fn pace_endpoints() {
        let s = PacingSchedule::new(0.01, 100).unwrap();
        assert!((pace(0, &s) - 0.01).abs() < 1e-12);
        assert_eq!(pace(100, &s), 1.0);
        assert_eq!(pace(1_000_000, &s), 1.0);
        // sqrt(0.5 * (1 - 0.0001) + 0.0001)
        assert!((pace(50, &s) - 0.7071421356).abs() < 1e-8);
        let odd = PacingSchedule::new(0.01, 7).unwrap();
        let half = (0.5f64 * (1.0 - 0.0001) + 0.0001).sqrt();
        assert!(pace(3, &odd) < half && pace(4, &odd) > half);
    }

    #[test]
    fn schedule_validation() {
        assert!(PacingSchedule::new(0.0, 10).is_err());
        assert!(PacingSchedule::new(1.5, 10).is_err());
        assert!(PacingSchedule::new(0.5, 0).is_err());
        assert!(PacingSchedule::new(1.0, 1).is_ok());
    }

    #[test]
    fn eligible_examples() {
        let ds = dataset(&[0.0, 0.3, 0.9]);
        assert_eq!(eligible(&ds, Metric::Coarse, 0.3, 1).prefix_len, 2);
        assert_eq!(eligible(&ds, Metric::Coarse, 1.0, 1).prefix_len, 3);

        let ds = dataset(&[0.5, 0.6]);
        let view = eligible(&ds, Metric::Coarse, 0.01, 1);
        assert_eq!((view.prefix_len, view.fallback), (1, true));
        let view = eligible(&ds, Metric::Coarse, 0.01, 8);
        assert_eq!(view.prefix_len, 2);
    }

    #[test]
    fn sample_examples() {
        let ds = dataset(&[0.1, 0.2, 0.3, 0.9]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let view = eligible(&ds, Metric::Coarse, 0.3, 1);
        let mut batch = sample_batch(&ds, &view, 3, &mut rng).unwrap();
        batch.sort_unstable();
        assert_eq!(batch, [0, 1, 2]);

        let view = eligible(&ds, Metric::Coarse, 0.1, 1);
        assert_eq!(sample_batch(&ds, &view, 4, &mut rng).unwrap(), [0]);
        assert!(sample_batch(&ds, &view, 0, &mut rng).is_err());

        let big = dataset(&(0..100).map(|i| i as f64 / 100.0).collect::<Vec<_>>());
        let view = eligible(&big, Metric::Coarse, 1.0, 1);
        let a = sample_batch(&big, &view, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_batch(&big, &view, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let mut uniq = a.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 10);
    }

    #[test]
    fn uniform_over_prefix() {
        let ds = dataset(&(0..20).map(|i| i as f64 / 20.0).collect::<Vec<_>>());
        let view = EligibleView {
            metric: Metric::Coarse,
            threshold: 0.45,
            prefix_len: 10,
            fallback: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000;
        let mut counts = [0usize; 20];
        for _ in 0..draws {
            counts[sample_batch(&ds, &view, 1, &mut rng).unwrap()[0]] += 1;
        }
        let se = (0.1f64 * 0.9 / draws as f64).sqrt();
        for &c in &counts[..10] {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.1).abs() <= 3.0 * se, "freq {freq}");
        }
        assert!(counts[10..].iter().all(|&c| c == 0));
    }

    proptest! {
        #[test]
        fn pace_monotone(p0 in 0.001..=1.0f64, duration in 1u64..5000, a in 0u64..10_000, b in 0u64..10_000) {
            let s = PacingSchedule::new(p0, duration).unwrap();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(pace(lo, &s) <= pace(hi, &s));
            prop_assert!(pace(lo, &s) >= p0 - 1e-15);
            prop_assert_eq!(pace(duration + lo, &s), 1.0);
        }

        #[test]
        fn eligibility_monotone(d in prop::collection::vec(0.0..=1.0f64, 1..80), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let ds = dataset(&d);
            let (lo, hi) = (a.min(b), a.max(b));
            let vlo = eligible(&ds, Metric::Coarse, lo, 1);
            let vhi = eligible(&ds, Metric::Coarse, hi, 1);
            prop_assert!(vlo.prefix_len <= vhi.prefix_len);
            let sorted = ds.sorted(Metric::Coarse);
            if !vlo.fallback {
                prop_assert!(sorted[..vlo.prefix_len].iter().all(|&i| ds.d(Metric::Coarse, i) <= lo));
                if let Some(&next) = sorted.get(vlo.prefix_len) {
                    prop_assert!(ds.d(Metric::Coarse, next) > lo);
                }
            }
        }
    }
}
