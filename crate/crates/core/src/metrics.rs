//! Coarse- and fine-grained noise metrics.
//!
//! Both metrics turn a similarity into a noise score by dividing by the
//! largest similarity over the training set and subtracting from one, so the
//! best-aligned instance scores 0 and unrelated pairs approach 1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{FineInput, InstanceRecord, NoiseScores, RawScoreRecord, Split};
use crate::error::{Error, Result};

/// Substitute for `d_f` when an instance has no aspects or no objects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FallbackRule {
    /// Reuse the instance's coarse score.
    #[default]
    Dc,
    /// Treat the instance as maximally noisy.
    One,
}

/// How to handle a set whose largest similarity is not positive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Shift every similarity by `1 - max` so the maximum becomes 1.
    #[default]
    ShiftNonPositive,
    /// Plain ratio; a maximum of exactly 0 is an error.
    Strict,
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::domain(format!(
            "cosine of vectors with different dimensions ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::domain("cosine of zero-dimensional vectors"));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    for (name, sq) in [("first", uu), ("second", vv)] {
        if !sq.is_finite() {
            return Err(Error::domain(format!(
                "cosine: {name} argument is not finite"
            )));
        }
        if sq == 0.0 {
            return Err(Error::domain(format!(
                "cosine: {name} argument has zero norm"
            )));
        }
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Componentwise mean of equally sized vectors.
pub fn aggregate_mean(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::domain("mean of an empty vector set"))?;
    let mut sum = vec![0.0; first.len()];
    for v in vectors {
        if v.len() != sum.len() {
            return Err(Error::domain(format!(
                "mean of vectors with different dimensions ({} vs {})",
                v.len(),
                sum.len()
            )));
        }
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// `1 - sim / max(sims)`, clamped to [0, 1].
pub fn normalize(sims: &[f64], mode: Normalization) -> Result<Vec<f64>> {
    if sims.is_empty() {
        return Err(Error::domain("cannot normalize an empty similarity list"));
    }
    if let Some(bad) = sims.iter().find(|s| !s.is_finite()) {
        return Err(Error::domain(format!("similarity {bad} is not finite")));
    }
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (shift, denom) = if max > 0.0 {
        (0.0, max)
    } else {
        match mode {
            Normalization::ShiftNonPositive => (1.0 - max, 1.0),
            Normalization::Strict if max == 0.0 => return Err(Error::DegenerateNormalization),
            Normalization::Strict => (0.0, max),
        }
    };
    Ok(sims
        .iter()
        .map(|&s| (1.0 - (s + shift) / denom).clamp(0.0, 1.0))
        .collect())
}

/// Coarse-grained noise `d_c` for every training similarity.
pub fn coarse_noise(sims: &[f64]) -> Result<Vec<f64>> {
    normalize(sims, Normalization::ShiftNonPositive)
}

fn fine_similarity(fine: &FineInput) -> Option<f64> {
    match fine {
        FineInput::Precomputed(sim) => Some(*sim),
        FineInput::Vectors { aspects, objects } if !aspects.is_empty() && !objects.is_empty() => {
            let a = aggregate_mean(aspects).ok()?;
            let o = aggregate_mean(objects).ok()?;
            // zero-norm means fall back
            cosine(&a, &o).ok()
        }
        _ => None,
    }
}

/// Fine-grained noise `d_f` with a per-record fallback flag.
///
/// Records without a usable fine similarity take `fallback_dc[i]` (or 1.0
/// under [`FallbackRule::One`]) and are excluded from the normalizing max.
pub fn fine_noise(
    records: &[RawScoreRecord],
    fallback_dc: &[f64],
    rule: FallbackRule,
) -> Result<Vec<(f64, bool)>> {
    if records.len() != fallback_dc.len() {
        return Err(Error::domain(format!(
            "{} records but {} fallback scores",
            records.len(),
            fallback_dc.len()
        )));
    }
    let sims: Vec<Option<f64>> = records.iter().map(|r| fine_similarity(&r.fine)).collect();
    let present: Vec<f64> = sims.iter().flatten().copied().collect();
    let normalized = if present.is_empty() {
        Vec::new()
    } else {
        normalize(&present, Normalization::ShiftNonPositive)?
    };
    let mut normalized = normalized.into_iter();
    Ok(sims
        .iter()
        .zip(fallback_dc)
        .map(|(sim, &dc)| match sim {
            Some(_) => (normalized.next().expect("one value per present sim"), false),
            None => match rule {
                FallbackRule::Dc => (dc, true),
                FallbackRule::One => (1.0, true),
            },
        })
        .collect())
}

/// Scores every train instance of `manifest`, in manifest order.
///
/// Both normalizing maxima range over train instances only; score records
/// for dev/test instances are ignored.
pub fn score_train_set(
    manifest: &[InstanceRecord],
    raw: &[RawScoreRecord],
    rule: FallbackRule,
) -> Result<Vec<NoiseScores>> {
    let by_id: HashMap<&str, &RawScoreRecord> = raw.iter().map(|r| (r.id.as_str(), r)).collect();
    let train: Vec<&RawScoreRecord> = manifest
        .iter()
        .filter(|r| r.split == Split::Train)
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .copied()
                .ok_or_else(|| Error::MissingScore(r.id.clone()))
        })
        .collect::<Result<_>>()?;
    if train.is_empty() {
        return Ok(Vec::new());
    }
    let coarse: Vec<f64> = train.iter().map(|r| r.coarse_sim).collect();
    let d_c = coarse_noise(&coarse)?;
    let owned: Vec<RawScoreRecord> = train.iter().map(|r| (*r).clone()).collect();
    let d_f = fine_noise(&owned, &d_c, rule)?;
    Ok(train
        .iter()
        .zip(d_c)
        .zip(d_f)
        .map(|((r, d_c), (d_f, fallback))| NoiseScores {
            id: r.id.clone(),
            d_c,
            d_f,
            d_f_fallback: fallback,
        })
        .collect())
}
