//! Temporal sampling of fixed-length clips.
//!
//! The uniform sampler cuts a video into non-overlapping candidate clips,
//! groups the candidates into `K` equally sized consecutive chunks and takes
//! one clip per chunk. The random sampler draws `K` start frames
//! independently. Queries use a causal sliding window that yields one clip
//! per frame, made of that frame and the `L - 1` frames before it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::{Error, Result};

/// A clip of `length` consecutive frames starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClipIndex {
    pub start: usize,
    pub length: usize,
}

impl ClipIndex {
    pub fn new(start: usize, length: usize) -> Self {
        Self { start, length }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }

    pub fn overlaps(&self, other: &ClipIndex) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    #[default]
    Uniform,
    Random,
}

/// Which candidate a uniform chunk contributes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinChunk {
    SeededRandom,
    First,
    #[default]
    Middle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub clip_length: usize,
    pub clips_per_video: usize,
    pub policy: SamplingPolicy,
    pub within_chunk: WithinChunk,
    pub seed: u64,
    /// Query frames per causal clip; frame `t` reuses the clip ending at
    /// `t - t % query_stride`.
    pub query_stride: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            clip_length: 8,
            clips_per_video: 4,
            policy: SamplingPolicy::Uniform,
            within_chunk: WithinChunk::Middle,
            seed: 0,
            query_stride: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_length == 0 || self.clips_per_video == 0 || self.query_stride == 0 {
            return Err(Error::Config(
                "clip_length, clips_per_video and query_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Non-overlapping candidates `[0, L), [L, 2L), ...`; trailing frames that do
/// not fill a clip are dropped.
pub fn enumerate_candidates(num_frames: usize, clip_length: usize) -> Vec<ClipIndex> {
    assert!(clip_length >= 1, "clip length must be positive");
    (0..num_frames / clip_length)
        .map(|i| ClipIndex::new(i * clip_length, clip_length))
        .collect()
}

/// The chunk decomposition used by [`uniform_sample_clips`]: `K` consecutive
/// runs of `floor(C / K)` candidates each, or one candidate per chunk when
/// `C <= K`. Candidates past the last chunk are dropped.
pub fn uniform_chunks(
    num_frames: usize,
    clip_length: usize,
    clips_per_video: usize,
) -> Vec<Vec<ClipIndex>> {
    let candidates = enumerate_candidates(num_frames, clip_length);
    let c = candidates.len();
    let k = clips_per_video;
    if c <= k {
        return candidates.into_iter().map(|cand| vec![cand]).collect();
    }
    let per_chunk = c / k;
    candidates[..k * per_chunk]
        .chunks(per_chunk)
        .map(<[ClipIndex]>::to_vec)
        .collect()
}

pub fn uniform_sample_clips(num_frames: usize, cfg: &SamplerConfig) -> Result<Vec<ClipIndex>> {
    cfg.validate()?;
    let chunks = uniform_chunks(num_frames, cfg.clip_length, cfg.clips_per_video);
    if chunks.is_empty() {
        return Err(Error::InsufficientFrames {
            num_frames,
            clip_length: cfg.clip_length,
        });
    }
    let mut rng = seeded(cfg.seed);
    let clips = chunks
        .iter()
        .map(|chunk| match cfg.within_chunk {
            WithinChunk::First => chunk[0],
            WithinChunk::Middle => chunk[chunk.len() / 2],
            WithinChunk::SeededRandom => chunk[rng.random_range(0..chunk.len())],
        })
        .collect();
    // Chunks are consecutive, so the picks are already sorted by start.
    Ok(clips)
}

/// `K` starts drawn independently and uniformly from `[0, F - L]`, sorted.
pub fn random_sample_clips(num_frames: usize, cfg: &SamplerConfig) -> Result<Vec<ClipIndex>> {
    cfg.validate()?;
    if num_frames < cfg.clip_length {
        return Err(Error::InsufficientFrames {
            num_frames,
            clip_length: cfg.clip_length,
        });
    }
    let mut rng = seeded(cfg.seed);
    let last_start = num_frames - cfg.clip_length;
    let mut starts: Vec<usize> = (0..cfg.clips_per_video)
        .map(|_| rng.random_range(0..=last_start))
        .collect();
    starts.sort_unstable();
    Ok(starts
        .into_iter()
        .map(|s| ClipIndex::new(s, cfg.clip_length))
        .collect())
}

/// Dispatches on `cfg.policy`.
pub fn sample_clips(num_frames: usize, cfg: &SamplerConfig) -> Result<Vec<ClipIndex>> {
    match cfg.policy {
        SamplingPolicy::Uniform => uniform_sample_clips(num_frames, cfg),
        SamplingPolicy::Random => random_sample_clips(num_frames, cfg),
    }
}

/// One clip per frame: clip `t` holds frames `t - L + 1 ..= t`, with indices
/// below zero replaced by frame 0.
pub fn causal_sliding_window(num_frames: usize, clip_length: usize) -> Vec<Vec<usize>> {
    (0..num_frames)
        .map(|t| {
            (0..clip_length)
                .map(|j| (t + j + 1).saturating_sub(clip_length))
                .collect()
        })
        .collect()
}
