//! Frame and clip embedders.
//!
//! [`PatchProjection`] box-averages a frame down to a `G x G` grid per
//! channel, scales samples to `[0, 1]`, flattens channel-major and multiplies
//! by a fixed projection matrix. [`PrecomputedEmbeddings`] serves vectors
//! exported from any external backbone. A clip embedding is the mean of its
//! frame embeddings.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::jsonio::read_json;
use crate::media_io::{DatasetManifest, Frame};
use crate::numerics::{matmul, mean_rows, Matrix, Vector};
use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PatchProjection {
    grid: usize,
    channels: usize,
    projection: Matrix,
}

#[derive(Serialize, Deserialize)]
struct ProjectionFile {
    grid: usize,
    channels: usize,
    dim: usize,
    projection: Matrix,
}

impl PatchProjection {
    /// `projection` must be `(grid² · channels) x dim` with `dim >= 2`.
    pub fn new(grid: usize, channels: usize, projection: Matrix) -> Result<Self> {
        if grid == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::Config(format!(
                "invalid grid {grid} / channels {channels}"
            )));
        }
        if projection.rows() != grid * grid * channels {
            return Err(Error::DimensionMismatch(format!(
                "projection has {} rows, grid {grid} with {channels} channel(s) needs {}",
                projection.rows(),
                grid * grid * channels
            )));
        }
        if projection.cols() < 2 {
            return Err(Error::Config(
                "embedding dimension must be at least 2".into(),
            ));
        }
        Ok(Self {
            grid,
            channels,
            projection,
        })
    }

    /// Identity projection: the embedding is the normalized downsample.
    pub fn identity(grid: usize, channels: usize) -> Result<Self> {
        Self::new(grid, channels, Matrix::identity(grid * grid * channels))
    }

    /// Gaussian matrix with Gram-Schmidt orthonormalized columns.
    pub fn seeded(grid: usize, channels: usize, dim: usize, seed: u64) -> Result<Self> {
        let n = grid * grid * channels;
        if dim > n {
            return Err(Error::Config(format!(
                "cannot orthonormalize {dim} columns in {n} dimensions"
            )));
        }
        let mut rng = seeded(seed);
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dim);
        while columns.len() < dim {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            for q in &columns {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|a| *a /= norm);
                columns.push(v);
            }
        }
        let projection = Matrix::from_rows(&columns)?.transpose();
        Self::new(grid, channels, projection)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ProjectionFile = read_json(path)?;
        if file.projection.cols() != file.dim {
            return Err(Error::ShapeMismatch("projection".into()));
        }
        Self::new(file.grid, file.channels, file.projection)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ProjectionFile {
            grid: self.grid,
            channels: self.channels,
            dim: self.dim(),
            projection: self.projection.clone(),
        })
        .expect("projection serializes")
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    /// Box-average of a `width x height x channels` raster onto the grid,
    /// flattened channel-major. Samples are used as given.
    pub fn downsample(&self, width: usize, height: usize, samples: &[f64]) -> Result<Vec<f64>> {
        let (g, c) = (self.grid, self.channels);
        if width < g || height < g || samples.len() != width * height * c {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{} raster on a {g}x{g} grid with {c} channel(s)",
                samples.len() / (width * height).max(1)
            )));
        }
        let mut out = vec![0.0; g * g * c];
        for gy in 0..g {
            let (y0, y1) = (gy * height / g, (gy + 1) * height / g);
            for gx in 0..g {
                let (x0, x1) = (gx * width / g, (gx + 1) * width / g);
                let area = ((y1 - y0) * (x1 - x0)) as f64;
                for ch in 0..c {
                    let mut sum = 0.0;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            sum += samples[(y * width + x) * c + ch];
                        }
                    }
                    out[ch * g * g + gy * g + gx] = sum / area;
                }
            }
        }
        Ok(out)
    }

    pub fn project(&self, features: &[f64]) -> Result<Vector> {
        let row = Matrix::new(1, features.len(), features.to_vec())?;
        Vector::new(matmul(&row, &self.projection)?.values().to_vec())
    }

    pub fn embed_frame(&self, frame: &Frame) -> Result<Vector> {
        if frame.channels() != self.channels {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} channel(s), embedder expects {}",
                frame.channels(),
                self.channels
            )));
        }
        let samples: Vec<f64> = frame
            .pixels()
            .iter()
            .map(|&p| f64::from(p) / 255.0)
            .collect();
        self.project(&self.downsample(frame.width(), frame.height(), &samples)?)
    }
}

pub fn embed_frame(frame: &Frame, spec: &PatchProjection) -> Result<Vector> {
    spec.embed_frame(frame)
}

/// Mean of the per-frame embeddings.
pub fn embed_clip(frames: &[Frame], spec: &PatchProjection) -> Result<Vector> {
    let vectors = frames
        .iter()
        .map(|f| spec.embed_frame(f))
        .collect::<Result<Vec<_>>>()?;
    mean_of(&vectors)
}

/// Mean of equally long vectors; [`Error::EmptyClip`] for none.
pub fn mean_of<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vector> {
    if vectors.is_empty() {
        return Err(Error::EmptyClip);
    }
    mean_rows(&Matrix::from_rows(vectors)?)
}

/// A clip vector and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipEmbedding {
    pub vector: Vector,
    pub video_id: String,
    pub clip_start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedEmbeddings {
    dim: usize,
    videos: BTreeMap<String, Vec<Vector>>,
}

#[derive(Deserialize)]
struct PrecomputedFile {
    dim: usize,
    videos: BTreeMap<String, Vec<Option<Vec<f64>>>>,
}

#[derive(Serialize)]
struct PrecomputedFileOut<'a> {
    dim: usize,
    videos: &'a BTreeMap<String, Vec<Vector>>,
}

impl PrecomputedEmbeddings {
    pub fn new(dim: usize, videos: BTreeMap<String, Vec<Vector>>) -> Result<Self> {
        for (id, frames) in &videos {
            for v in frames {
                if v.len() != dim {
                    return Err(Error::InconsistentDim {
                        context: id.clone(),
                        expected: dim,
                        found: v.len(),
                    });
                }
            }
        }
        Ok(Self { dim, videos })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, video_id: &str, index: usize) -> Result<&Vector> {
        self.videos
            .get(video_id)
            .and_then(|v| v.get(index))
            .ok_or_else(|| Error::MissingFrameEmbedding {
                video_id: video_id.to_string(),
                index,
            })
    }

    /// Checks that every frame of every manifest video has a vector.
    pub fn check_covers(&self, manifest: &DatasetManifest) -> Result<()> {
        for video in manifest.videos() {
            let have = self.videos.get(&video.video_id).map_or(0, Vec::len);
            if have < video.num_frames() {
                return Err(Error::MissingFrameEmbedding {
                    video_id: video.video_id.clone(),
                    index: have,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PrecomputedFileOut {
            dim: self.dim,
            videos: &self.videos,
        })
        .expect("embeddings serialize")
    }
}

/// Reads `{"dim": d, "videos": {"<id>": [[...], ...]}}`. A `null` row is a
/// missing frame.
pub fn load_precomputed(path: &Path) -> Result<PrecomputedEmbeddings> {
    let file: PrecomputedFile = read_json(path)?;
    let mut videos = BTreeMap::new();
    for (id, rows) in file.videos {
        let mut vectors = Vec::with_capacity(rows.len());
        for (index, row) in rows.into_iter().enumerate() {
            let row = row.ok_or_else(|| Error::MissingFrameEmbedding {
                video_id: id.clone(),
                index,
            })?;
            if row.len() != file.dim {
                return Err(Error::InconsistentDim {
                    context: format!("{id}[{index}]"),
                    expected: file.dim,
                    found: row.len(),
                });
            }
            vectors.push(Vector::new(row)?);
        }
        videos.insert(id, vectors);
    }
    PrecomputedEmbeddings::new(file.dim, videos)
}

/// Either embedder, as used by the pipeline.
#[derive(Clone, Debug, PartialEq)]
pub enum Embedder {
    PatchProjection(PatchProjection),
    Precomputed(PrecomputedEmbeddings),
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::PatchProjection(p) => p.dim(),
            Embedder::Precomputed(p) => p.dim(),
        }
    }

    pub fn needs_pixels(&self) -> bool {
        matches!(self, Embedder::PatchProjection(_))
    }

    /// Embedding of frame `index` of `video_id`; `frame` is required for the
    /// patch projection and ignored otherwise.
    pub fn embed(&self, video_id: &str, index: usize, frame: Option<&Frame>) -> Result<Vector> {
        match self {
            Embedder::PatchProjection(p) => {
                p.embed_frame(frame.expect("patch projection needs decoded frames"))
            }
            Embedder::Precomputed(p) => p.get(video_id, index).cloned(),
        }
    }
}
