//! Prototypes, nearest-prototype cosine classification, frame accuracy and
//! the support/query split of one user.
//!
//! The personalization and recognition stages themselves live in
//! [`crate::pipeline`] and are re-exported here.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::ClipEmbedding;
use crate::jsonio::{read_json, write_pretty};
use crate::media_io::{DatasetManifest, VideoKind, VideoRecord};
use crate::numerics::{cosine_similarity, mean_rows, Matrix};
use crate::{Error, Result};

pub use crate::pipeline::{personalize, recognize_video};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    pub user_id: String,
    pub labels: Vec<String>,
    pub dim: usize,
    /// Class means before adaptation, one row per label.
    pub raw: Matrix,
    /// Rows after the adapter; equal to `raw` when no adapter is configured.
    pub adapted: Matrix,
    pub config_digest: String,
}

impl Prototypes {
    pub fn new(
        user_id: impl Into<String>,
        labels: Vec<String>,
        raw: Matrix,
        adapted: Matrix,
        config_digest: impl Into<String>,
    ) -> Result<Self> {
        let protos = Self {
            user_id: user_id.into(),
            dim: raw.cols(),
            labels,
            raw,
            adapted,
            config_digest: config_digest.into(),
        };
        protos.validate()?;
        Ok(protos)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if n < 2 {
            return Err(Error::InvariantViolation(format!(
                "{n} prototype(s); at least 2 classes are needed"
            )));
        }
        let distinct: HashSet<&str> = self.labels.iter().map(String::as_str).collect();
        if distinct.len() != n {
            return Err(Error::InvariantViolation(
                "prototype labels are not distinct".into(),
            ));
        }
        for (name, m) in [("raw", &self.raw), ("adapted", &self.adapted)] {
            if m.shape() != (n, self.dim) {
                return Err(Error::ShapeMismatch(name.into()));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn matrix(&self, use_adapted: bool) -> &Matrix {
        if use_adapted {
            &self.adapted
        } else {
            &self.raw
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let protos: Prototypes = read_json(path)?;
        protos.validate()?;
        Ok(protos)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_pretty(path, self)
    }
}

/// Row `k` is the mean of the vectors of class `k`.
pub fn compute_prototypes(per_class: &[(String, Vec<ClipEmbedding>)]) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(per_class.len());
    for (label, clips) in per_class {
        if clips.is_empty() {
            return Err(Error::EmptyClass(label.clone()));
        }
        let stacked = Matrix::from_rows(&clips.iter().map(|c| &c.vector[..]).collect::<Vec<_>>())?;
        rows.push(mean_rows(&stacked)?.into_inner());
    }
    Matrix::from_rows(&rows)
}

/// Cosine score of `q` against every prototype row and the winning class
/// index. Ties go to the lowest index.
pub fn classify_clip(
    q: &[f64],
    protos: &Prototypes,
    use_adapted: bool,
) -> Result<(usize, Vec<f64>)> {
    let m = protos.matrix(use_adapted);
    if q.len() != m.cols() {
        return Err(Error::DimensionMismatch(format!(
            "query embedding has {} dimensions, prototypes have {}",
            q.len(),
            m.cols()
        )));
    }
    let scores = m
        .row_iter()
        .map(|row| cosine_similarity(q, row))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    Ok((best, scores))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub pred: String,
    pub scores: Vec<f64>,
}

/// Per-frame output for one query video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub video_id: String,
    pub labels: Vec<String>,
    pub per_frame: Vec<FramePrediction>,
}

impl Predictions {
    pub fn predicted_labels(&self) -> Vec<&str> {
        self.per_frame.iter().map(|p| p.pred.as_str()).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_pretty(path, self)
    }
}

/// Fraction of positions where the labels agree.
pub fn frame_accuracy<A: AsRef<str>, B: AsRef<str>>(predicted: &[A], truth: &[B]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            predicted: predicted.len(),
            expected: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("no frames to score"));
    }
    let hits = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| p.as_ref() == t.as_ref())
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Scored query video: every frame shares the video's ground-truth label.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoResult {
    pub user_id: String,
    pub video_id: String,
    pub truth: String,
    pub predicted: Vec<String>,
}

impl VideoResult {
    pub fn hits(&self) -> usize {
        self.predicted.iter().filter(|p| **p == self.truth).count()
    }
}

/// Frame accuracy per user, pooling all of that user's query frames.
pub fn per_user_accuracy(results: &[VideoResult]) -> Result<BTreeMap<String, f64>> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in results {
        let entry = tally.entry(r.user_id.clone()).or_default();
        entry.0 += r.hits();
        entry.1 += r.predicted.len();
    }
    tally
        .into_iter()
        .map(|(user, (hits, frames))| {
            if frames == 0 {
                return Err(Error::EmptyInput("user without query frames"));
            }
            Ok((user, hits as f64 / frames as f64))
        })
        .collect()
}

/// Unweighted mean over users.
pub fn macro_accuracy(per_user: &BTreeMap<String, f64>) -> Result<f64> {
    if per_user.is_empty() {
        return Err(Error::EmptyInput("no users to average"));
    }
    Ok(per_user.values().sum::<f64>() / per_user.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportClass<'a> {
    pub label: &'a str,
    pub videos: Vec<&'a VideoRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryVideo<'a> {
    pub label: &'a str,
    pub video: &'a VideoRecord,
}

/// One user's support (clean) and query (clutter) videos.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode<'a> {
    pub user_id: &'a str,
    pub support: Vec<SupportClass<'a>>,
    pub query: Vec<QueryVideo<'a>>,
}

impl<'a> Episode<'a> {
    pub fn from_manifest(manifest: &'a DatasetManifest, user_id: &str) -> Result<Self> {
        let user = manifest.user(user_id)?;
        let support = user
            .objects
            .iter()
            .map(|o| SupportClass {
                label: &o.label,
                videos: o.videos_of(VideoKind::Clean).collect(),
            })
            .collect();
        let query = user
            .objects
            .iter()
            .flat_map(|o| {
                o.videos_of(VideoKind::Clutter)
                    .map(move |video| QueryVideo {
                        label: &o.label,
                        video,
                    })
            })
            .collect();
        Ok(Self {
            user_id: &user.user_id,
            support,
            query,
        })
    }

    pub fn labels(&self) -> Vec<String> {
        self.support.iter().map(|c| c.label.to_string()).collect()
    }
}
