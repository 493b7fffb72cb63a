//! Pipeline configuration file.
//!
//! ```json
//! {
//!   "sampler": {"clip_length": 8, "clips_per_video": 4, "policy": "uniform", "within_chunk": "middle"},
//!   "edge_filter": {"tau_mag": 32, "tau_density": 0.01, "enabled": true},
//!   "embedder": {"kind": "patch_projection", "grid": 4, "channels": 3, "dim": 32, "projection_seed": 0},
//!   "adapter": "none",
//!   "seed": 0,
//!   "loader": {"num_threads": 4}
//! }
//! ```
//!
//! Every section is optional. Relative paths resolve against the directory
//! of the config file. The sampler's own `seed` is ignored: each video gets a
//! seed derived from the top-level `seed` and its id.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptation::{load_transformer_weights, TransformerWeights};
use crate::clip_sampling::SamplerConfig;
use crate::embedding::{load_precomputed, Embedder, PatchProjection};
use crate::frame_validity::EdgeFilterConfig;
use crate::jsonio::read_json;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    PatchProjection {
        #[serde(default = "default_grid")]
        grid: usize,
        #[serde(default = "default_channels")]
        channels: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        projection_seed: u64,
        /// Projection weights file; overrides grid, channels, dim and seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights_path: Option<PathBuf>,
    },
    Precomputed {
        embeddings_path: PathBuf,
    },
}

fn default_grid() -> usize {
    4
}

fn default_channels() -> usize {
    3
}

fn default_dim() -> usize {
    32
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::PatchProjection {
            grid: default_grid(),
            channels: default_channels(),
            dim: default_dim(),
            projection_seed: 0,
            weights_path: None,
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> Result<Embedder> {
        match self {
            EmbedderConfig::PatchProjection {
                weights_path: Some(path),
                ..
            } => Ok(Embedder::PatchProjection(PatchProjection::load(path)?)),
            EmbedderConfig::PatchProjection {
                grid,
                channels,
                dim,
                projection_seed,
                weights_path: None,
            } => Ok(Embedder::PatchProjection(PatchProjection::seeded(
                *grid,
                *channels,
                *dim,
                *projection_seed,
            )?)),
            EmbedderConfig::Precomputed { embeddings_path } => {
                Ok(Embedder::Precomputed(load_precomputed(embeddings_path)?))
            }
        }
    }

    fn paths_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            EmbedderConfig::PatchProjection { weights_path, .. } => weights_path.as_mut(),
            EmbedderConfig::Precomputed { embeddings_path } => Some(embeddings_path),
        }
    }
}

/// The prototype adapter. In JSON: `"none"`, a weights file path, or an
/// object tagged by `kind`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdapterRepr", into = "AdapterRepr")]
pub enum AdapterConfig {
    #[default]
    None,
    File(PathBuf),
    /// All-zero block with identity layer norms.
    Zero {
        heads: usize,
        d_ff: Option<usize>,
    },
    Seeded {
        heads: usize,
        d_ff: Option<usize>,
        seed: u64,
        scale: f64,
    },
    /// See [`TransformerWeights::mean_repulsion`].
    MeanRepulsion {
        alpha: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AdapterRepr {
    Name(String),
    Spec(AdapterSpec),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum AdapterSpec {
    File {
        path: PathBuf,
    },
    Zero {
        #[serde(default = "one")]
        heads: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_ff: Option<usize>,
    },
    Seeded {
        #[serde(default = "one")]
        heads: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_ff: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default = "unit")]
        scale: f64,
    },
    MeanRepulsion {
        alpha: f64,
    },
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl TryFrom<AdapterRepr> for AdapterConfig {
    type Error = String;

    fn try_from(repr: AdapterRepr) -> std::result::Result<Self, String> {
        Ok(match repr {
            AdapterRepr::Name(name) if name == "none" => AdapterConfig::None,
            AdapterRepr::Name(name) if name.is_empty() => return Err("empty adapter path".into()),
            AdapterRepr::Name(path) => AdapterConfig::File(path.into()),
            AdapterRepr::Spec(AdapterSpec::File { path }) => AdapterConfig::File(path),
            AdapterRepr::Spec(AdapterSpec::Zero { heads, d_ff }) => {
                AdapterConfig::Zero { heads, d_ff }
            }
            AdapterRepr::Spec(AdapterSpec::Seeded {
                heads,
                d_ff,
                seed,
                scale,
            }) => AdapterConfig::Seeded {
                heads,
                d_ff,
                seed,
                scale,
            },
            AdapterRepr::Spec(AdapterSpec::MeanRepulsion { alpha }) => {
                AdapterConfig::MeanRepulsion { alpha }
            }
        })
    }
}

impl From<AdapterConfig> for AdapterRepr {
    fn from(cfg: AdapterConfig) -> Self {
        match cfg {
            AdapterConfig::None => AdapterRepr::Name("none".into()),
            AdapterConfig::File(path) => AdapterRepr::Spec(AdapterSpec::File { path }),
            AdapterConfig::Zero { heads, d_ff } => {
                AdapterRepr::Spec(AdapterSpec::Zero { heads, d_ff })
            }
            AdapterConfig::Seeded {
                heads,
                d_ff,
                seed,
                scale,
            } => AdapterRepr::Spec(AdapterSpec::Seeded {
                heads,
                d_ff,
                seed,
                scale,
            }),
            AdapterConfig::MeanRepulsion { alpha } => {
                AdapterRepr::Spec(AdapterSpec::MeanRepulsion { alpha })
            }
        }
    }
}

impl AdapterConfig {
    pub fn is_none(&self) -> bool {
        matches!(self, AdapterConfig::None)
    }

    /// Weights for an embedding dimension `d`; `None` for no adapter.
    pub fn build(&self, d: usize) -> Result<Option<TransformerWeights>> {
        let weights = match self {
            AdapterConfig::None => return Ok(None),
            AdapterConfig::File(path) => {
                let w = load_transformer_weights(path)?;
                if w.d != d {
                    return Err(Error::DimensionMismatch(format!(
                        "adapter weights have d = {}, embeddings have {d}",
                        w.d
                    )));
                }
                w
            }
            AdapterConfig::Zero { heads, d_ff } => {
                TransformerWeights::zeros(d, *heads, d_ff.unwrap_or(2 * d))?
            }
            AdapterConfig::Seeded {
                heads,
                d_ff,
                seed,
                scale,
            } => TransformerWeights::seeded(d, *heads, d_ff.unwrap_or(2 * d), *seed, *scale)?,
            AdapterConfig::MeanRepulsion { alpha } => {
                TransformerWeights::mean_repulsion(d, *alpha)?
            }
        };
        Ok(Some(weights))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoaderSettings {
    pub num_threads: usize,
}

impl Default for LoaderSettings {
    fn default() -> Self {
        Self { num_threads: 4 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sampler: SamplerConfig,
    pub edge_filter: EdgeFilterConfig,
    pub embedder: EmbedderConfig,
    pub adapter: AdapterConfig,
    pub seed: u64,
    pub loader: LoaderSettings,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.edge_filter.validate()?;
        if self.loader.num_threads == 0 {
            return Err(Error::Config(
                "loader.num_threads must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the config serialized with sorted keys.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_value(self)
            .expect("config serializes")
            .to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Rewrites relative file references against `base` and checks that they
    /// exist.
    pub fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        let mut paths: Vec<&mut PathBuf> = Vec::new();
        paths.extend(self.embedder.paths_mut());
        if let AdapterConfig::File(path) = &mut self.adapter {
            paths.push(path);
        }
        for path in paths {
            if path.is_relative() {
                *path = base.join(&*path);
            }
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "referenced file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        crate::jsonio::to_pretty(self)
    }
}

/// Reads, resolves and validates a config file. A missing or malformed
/// file is a configuration error.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = read_json(path).map_err(|e| match e {
        Error::Parse { .. } | Error::SchemaViolation { .. } | Error::FileNotFound(_) => {
            Error::Config(e.to_string())
        }
        other => other,
    })?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")))?;
    cfg.validate()?;
    Ok(cfg)
}
