//! Instance manifests, raw similarity records and normalized noise scores.
//!
//! All three file kinds are line-delimited JSON, one object per line:
//!
//! * `manifest.jsonl`: `id`, `text`, `image_ref`, `split`
//! * `scores.jsonl`: `id`, `coarse_sim`, and either `fine_sim`, the pair
//!   `aspect_vectors`/`object_vectors`, or neither
//! * `noise.jsonl`: `id`, `d_c`, `d_f`, `d_f_fallback`

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Metric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// One (sentence, image) pair as listed in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub image_ref: Option<String>,
    pub split: Split,
}

/// Where the fine-grained similarity of an instance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FineInput {
    /// Similarity computed upstream.
    Precomputed(f64),
    /// Aspect-term and visual-object embeddings, averaged before comparison.
    Vectors {
        aspects: Vec<Vec<f64>>,
        objects: Vec<Vec<f64>>,
    },
    /// No aspects or objects were extracted; the fallback rule applies.
    Missing,
}

/// Raw similarity inputs for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoreLine", into = "ScoreLine")]
pub struct RawScoreRecord {
    pub id: String,
    pub coarse_sim: f64,
    pub fine: FineInput,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreLine {
    id: String,
    coarse_sim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fine_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aspect_vectors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object_vectors: Option<Vec<Vec<f64>>>,
}

impl TryFrom<ScoreLine> for RawScoreRecord {
    type Error = String;

    fn try_from(line: ScoreLine) -> std::result::Result<Self, String> {
        let fine = match (line.fine_sim, line.aspect_vectors, line.object_vectors) {
            (Some(sim), None, None) => FineInput::Precomputed(sim),
            (None, Some(aspects), Some(objects)) => FineInput::Vectors { aspects, objects },
            (None, None, None) => FineInput::Missing,
            (Some(_), _, _) => {
                return Err("fine_sim cannot be combined with embedding vectors".into())
            }
            _ => return Err("aspect_vectors and object_vectors must be given together".into()),
        };
        Ok(RawScoreRecord {
            id: line.id,
            coarse_sim: line.coarse_sim,
            fine,
        })
    }
}

impl From<RawScoreRecord> for ScoreLine {
    fn from(rec: RawScoreRecord) -> Self {
        let (fine_sim, aspect_vectors, object_vectors) = match rec.fine {
            FineInput::Precomputed(sim) => (Some(sim), None, None),
            FineInput::Vectors { aspects, objects } => (None, Some(aspects), Some(objects)),
            FineInput::Missing => (None, None, None),
        };
        ScoreLine {
            id: rec.id,
            coarse_sim: rec.coarse_sim,
            fine_sim,
            aspect_vectors,
            object_vectors,
        }
    }
}

impl RawScoreRecord {
    fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidRecord {
            id: self.id.clone(),
            message,
        };
        check_similarity(self.coarse_sim).map_err(|m| invalid(format!("coarse_sim {m}")))?;
        match &self.fine {
            FineInput::Precomputed(sim) => {
                check_similarity(*sim).map_err(|m| invalid(format!("fine_sim {m}")))?
            }
            FineInput::Vectors { aspects, objects } => {
                let mut dim = None;
                for (kind, v) in aspects
                    .iter()
                    .map(|v| ("aspect", v))
                    .chain(objects.iter().map(|v| ("object", v)))
                {
                    if v.is_empty() {
                        return Err(invalid(format!("{kind} vector has dimension 0")));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(invalid(format!("{kind} vector has non-finite component")));
                    }
                    match dim {
                        None => dim = Some(v.len()),
                        Some(d) if d != v.len() => {
                            return Err(invalid(format!(
                                "mixed vector dimensions: {kind} vector has dimension {} but \
                                 expected {d}",
                                v.len()
                            )))
                        }
                        Some(_) => {}
                    }
                }
            }
            FineInput::Missing => {}
        }
        Ok(())
    }
}

fn check_similarity(sim: f64) -> std::result::Result<(), String> {
    if !sim.is_finite() {
        Err(format!("{sim} is not finite"))
    } else if !(-1.0..=1.0).contains(&sim) {
        Err(format!("{sim} lies outside [-1, 1]"))
    } else {
        Ok(())
    }
}

/// Normalized noise metrics for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseScores {
    pub id: String,
    pub d_c: f64,
    pub d_f: f64,
    pub d_f_fallback: bool,
}

impl NoiseScores {
    /// Metric value used by the given curriculum.
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Coarse => self.d_c,
            Metric::Fine => self.d_f,
            Metric::Merged => ((self.d_c + self.d_f) / 2.0).clamp(0.0, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, d) in [("d_c", self.d_c), ("d_f", self.d_f)] {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidRecord {
                    id: self.id.clone(),
                    message: format!("{name} = {d} lies outside [0, 1]"),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<'a, T, I>(path: &Path, items: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a manifest, rejecting malformed lines and duplicate ids.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<InstanceRecord>> {
    let records: Vec<InstanceRecord> = read_jsonl(path.as_ref())?;
    let mut seen = HashSet::with_capacity(records.len());
    for rec in &records {
        if !seen.insert(rec.id.as_str()) {
            return Err(Error::DuplicateId(rec.id.clone()));
        }
    }
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[InstanceRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), records)
}

/// Reads raw similarity records and checks them against `manifest`.
pub fn load_scores(
    path: impl AsRef<Path>,
    manifest: &[InstanceRecord],
) -> Result<Vec<RawScoreRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let known: HashSet<&str> = manifest.iter().map(|r| r.id.as_str()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawScoreRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !known.contains(rec.id.as_str()) {
            return Err(Error::DanglingId(rec.id));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_scores(path: impl AsRef<Path>, records: &[RawScoreRecord]) -> Result<()> {
    write_jsonl(path.as_ref(), records)
}

pub fn load_noise(path: impl AsRef<Path>) -> Result<Vec<NoiseScores>> {
    let scores: Vec<NoiseScores> = read_jsonl(path.as_ref())?;
    let mut seen = HashSet::with_capacity(scores.len());
    for s in &scores {
        s.validate()?;
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
    }
    Ok(scores)
}

pub fn write_noise(path: impl AsRef<Path>, scores: &[NoiseScores]) -> Result<()> {
    write_jsonl(path.as_ref(), scores)
}

/// Train-split instances with their noise scores and one ascending sort
/// order per metric. Immutable once built.
#[derive(Debug, Clone)]
pub struct ScoredDataset {
    records: Vec<(InstanceRecord, NoiseScores)>,
    sorted_by_dc: Vec<usize>,
    sorted_by_df: Vec<usize>,
    sorted_by_merged: Vec<usize>,
}

impl ScoredDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[(InstanceRecord, NoiseScores)] {
        &self.records
    }

    pub fn id(&self, index: usize) -> &str {
        &self.records[index].0.id
    }

    pub fn scores(&self, index: usize) -> &NoiseScores {
        &self.records[index].1
    }

    pub fn d(&self, metric: Metric, index: usize) -> f64 {
        self.records[index].1.get(metric)
    }

    /// Record indices ordered by ascending metric value, ties by ascending id.
    pub fn sorted(&self, metric: Metric) -> &[usize] {
        match metric {
            Metric::Coarse => &self.sorted_by_dc,
            Metric::Fine => &self.sorted_by_df,
            Metric::Merged => &self.sorted_by_merged,
        }
    }
}

/// Pairs every train record with its scores and sorts by each metric.
///
/// Dev and test records are dropped; their scores are optional.
pub fn build_scored_dataset(
    records: &[InstanceRecord],
    scores: &[NoiseScores],
) -> Result<ScoredDataset> {
    let by_id: HashMap<&str, &NoiseScores> = scores.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut paired = Vec::new();
    for rec in records.iter().filter(|r| r.split == Split::Train) {
        let score = by_id
            .get(rec.id.as_str())
            .ok_or_else(|| Error::MissingScore(rec.id.clone()))?;
        score.validate()?;
        paired.push((rec.clone(), (*score).clone()));
    }

    let order = |metric: Metric| {
        let mut idx: Vec<usize> = (0..paired.len()).collect();
        idx.sort_by(|&a, &b| {
            let (ra, sa) = &paired[a];
            let (rb, sb) = &paired[b];
            sa.get(metric)
                .partial_cmp(&sb.get(metric))
                .unwrap_or(Ordering::Equal)
                .then_with(|| ra.id.cmp(&rb.id))
        });
        idx
    };

    Ok(ScoredDataset {
        sorted_by_dc: order(Metric::Coarse),
        sorted_by_df: order(Metric::Fine),
        sorted_by_merged: order(Metric::Merged),
        records: paired,
    })
}
