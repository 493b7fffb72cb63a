//! Personalization, recognition and the ablation evaluation loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt_prototypes, TransformerWeights};
use crate::clip_sampling::{
    causal_sliding_window, sample_clips, ClipIndex, SamplerConfig, SamplingPolicy,
};
use crate::config::{AdapterConfig, PipelineConfig};
use crate::embedding::{mean_of, ClipEmbedding, Embedder};
use crate::frame_validity::{filter_clips, CandidateClip, ClipAudit, EdgeFilterConfig};
use crate::media_io::{
    load_frames_parallel, load_frames_sequential, DatasetManifest, Frame, LoaderConfig, VideoRecord,
};
use crate::numerics::Vector;
use crate::protonet::{
    classify_clip, compute_prototypes, macro_accuracy, per_user_accuracy, Episode, FramePrediction,
    Predictions, Prototypes, VideoResult,
};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Everything built once from a config: the embedder, the adapter weights
/// and the config digest.
pub struct PipelineContext<'m> {
    pub manifest: &'m DatasetManifest,
    pub config: PipelineConfig,
    pub embedder: Embedder,
    pub adapter: Option<TransformerWeights>,
    pub digest: String,
}

impl<'m> PipelineContext<'m> {
    pub fn new(manifest: &'m DatasetManifest, config: PipelineConfig) -> Result<Self> {
        let embedder = config.embedder.build()?;
        Self::with_embedder(manifest, config, embedder)
    }

    /// Reuses an already built embedder; the embedder section of `config` is
    /// not consulted.
    pub fn with_embedder(
        manifest: &'m DatasetManifest,
        config: PipelineConfig,
        embedder: Embedder,
    ) -> Result<Self> {
        config.validate()?;
        if let Embedder::Precomputed(table) = &embedder {
            table.check_covers(manifest)?;
        }
        let adapter = config.adapter.build(embedder.dim())?;
        let digest = config.digest();
        Ok(Self {
            manifest,
            config,
            embedder,
            adapter,
            digest,
        })
    }

    fn loader(&self) -> LoaderConfig {
        LoaderConfig::with_threads(self.config.loader.num_threads)
    }

    /// Frames at `indices` keyed by index; empty when neither the embedder
    /// nor the edge filter needs pixels.
    fn load_frames(
        &self,
        video: &VideoRecord,
        indices: &BTreeSet<usize>,
        need_pixels: bool,
        parallel: bool,
    ) -> Result<BTreeMap<usize, Frame>> {
        if !need_pixels {
            return Ok(BTreeMap::new());
        }
        let paths: Vec<_> = indices
            .iter()
            .map(|&i| self.manifest.frame_path(video, i))
            .collect();
        let frames = if parallel {
            load_frames_parallel(&paths, &self.loader())?
        } else {
            load_frames_sequential(&paths, &self.loader())?
        };
        Ok(indices.iter().copied().zip(frames).collect())
    }

    fn embed_frames(
        &self,
        video: &VideoRecord,
        indices: &BTreeSet<usize>,
        frames: &BTreeMap<usize, Frame>,
    ) -> Result<BTreeMap<usize, Vector>> {
        indices
            .iter()
            .map(|&i| Ok((i, self.embedder.embed(&video.video_id, i, frames.get(&i))?)))
            .collect()
    }
}

/// Runs `f` over `items` on up to `threads` scoped workers; results keep the
/// input order and the first error in input order wins.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

struct SupportVideo<'a> {
    video: &'a VideoRecord,
    clips: Vec<ClipIndex>,
    frames: BTreeMap<usize, Frame>,
    embeddings: BTreeMap<usize, Vector>,
}

/// Prototypes of one user together with the edge-filter audit.
#[derive(Clone, Debug, PartialEq)]
pub struct Personalization {
    pub prototypes: Prototypes,
    pub audit: Vec<ClipAudit>,
}

/// Support stage: sample clips from every clean video, drop mostly-empty
/// clips, average clip embeddings per class and run the adapter.
pub fn personalize(ctx: &PipelineContext<'_>, episode: &Episode<'_>) -> Result<Personalization> {
    let cfg = &ctx.config;
    let jobs: Vec<(usize, &VideoRecord)> = episode
        .support
        .iter()
        .enumerate()
        .flat_map(|(k, class)| class.videos.iter().map(move |&v| (k, v)))
        .collect();
    let need_pixels = ctx.embedder.needs_pixels() || cfg.edge_filter.enabled;

    let prepared = parallel_map(&jobs, cfg.loader.num_threads, |&(_, video)| {
        let sampler = SamplerConfig {
            seed: derive_seed(cfg.seed, &video.video_id),
            ..cfg.sampler.clone()
        };
        let clips = sample_clips(video.num_frames(), &sampler)?;
        let indices: BTreeSet<usize> = clips.iter().flat_map(ClipIndex::frames).collect();
        let frames = ctx.load_frames(video, &indices, need_pixels, false)?;
        let embeddings = ctx.embed_frames(video, &indices, &frames)?;
        Ok(SupportVideo {
            video,
            clips,
            frames,
            embeddings,
        })
    })?;

    let mut per_class: Vec<(String, Vec<ClipEmbedding>)> = episode
        .support
        .iter()
        .map(|c| (c.label.to_string(), Vec::new()))
        .collect();
    let mut audit = Vec::new();
    for (k, class) in per_class.iter_mut().enumerate() {
        let videos: Vec<&SupportVideo<'_>> = jobs
            .iter()
            .zip(&prepared)
            .filter(|((j, _), _)| *j == k)
            .map(|(_, s)| s)
            .collect();
        let candidates: Vec<(&SupportVideo<'_>, ClipIndex)> = videos
            .iter()
            .flat_map(|s| s.clips.iter().map(move |&c| (*s, c)))
            .collect();
        let retained: Vec<usize> = if cfg.edge_filter.enabled {
            let clips: Vec<CandidateClip<'_>> = candidates
                .iter()
                .map(|(s, clip)| CandidateClip {
                    video_id: &s.video.video_id,
                    clip: *clip,
                    frames: clip.frames().map(|i| &s.frames[&i]).collect(),
                })
                .collect();
            let outcome = filter_clips(&clips, &cfg.edge_filter)?;
            audit.extend(outcome.audit);
            outcome.retained
        } else {
            (0..candidates.len()).collect()
        };
        for i in retained {
            let (s, clip) = candidates[i];
            let vectors: Vec<&Vector> = clip.frames().map(|f| &s.embeddings[&f]).collect();
            class.1.push(ClipEmbedding {
                vector: mean_of(&vectors)?,
                video_id: s.video.video_id.clone(),
                clip_start: clip.start,
            });
        }
    }

    let raw = compute_prototypes(&per_class)?;
    let adapted = match &ctx.adapter {
        Some(w) => adapt_prototypes(&raw, w)?,
        None => raw.clone(),
    };
    let prototypes = Prototypes::new(
        episode.user_id,
        episode.labels(),
        raw,
        adapted,
        ctx.digest.clone(),
    )?;
    Ok(Personalization { prototypes, audit })
}

/// Query stage: one causal clip per frame, each classified against the
/// adapted prototypes.
pub fn recognize_video(
    ctx: &PipelineContext<'_>,
    video: &VideoRecord,
    protos: &Prototypes,
) -> Result<Predictions> {
    if protos.dim != ctx.embedder.dim() {
        return Err(Error::DimensionMismatch(format!(
            "prototypes have dimension {}, the embedder produces {}",
            protos.dim,
            ctx.embedder.dim()
        )));
    }
    let n = video.num_frames();
    let indices: BTreeSet<usize> = (0..n).collect();
    let frames = ctx.load_frames(video, &indices, ctx.embedder.needs_pixels(), true)?;
    let embeddings = ctx.embed_frames(video, &indices, &frames)?;
    let windows = causal_sliding_window(n, ctx.config.sampler.clip_length);
    let stride = ctx.config.sampler.query_stride;
    let mut per_frame: Vec<FramePrediction> = Vec::with_capacity(n);
    for t in 0..n {
        let anchor = t - t % stride;
        if anchor < t {
            per_frame.push(per_frame[anchor].clone());
            continue;
        }
        let vectors: Vec<&Vector> = windows[t].iter().map(|i| &embeddings[i]).collect();
        let q = mean_of(&vectors)?;
        let (k, scores) = classify_clip(&q, protos, true)?;
        per_frame.push(FramePrediction {
            pred: protos.labels[k].clone(),
            scores,
        });
    }
    Ok(Predictions {
        video_id: video.video_id.clone(),
        labels: protos.labels.clone(),
        per_frame,
    })
}

/// Cumulative ablation arms, each adding one component to the previous one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Random clip sampler, no adapter, no edge filter.
    Baseline,
    /// Adds the configured adapter.
    Adapt,
    /// Switches to the uniform sampler.
    Uniform,
    /// Adds the edge filter.
    Filter,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Baseline, Arm::Adapt, Arm::Uniform, Arm::Filter];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Adapt => "adapt",
            Arm::Uniform => "uniform",
            Arm::Filter => "filter",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Arm::Baseline => "random sampler",
            Arm::Adapt => "random sampler + adapter",
            Arm::Uniform => "uniform sampler + adapter",
            Arm::Filter => "uniform sampler + adapter + edge filter",
        }
    }

    /// `base` with the components this arm lacks switched off.
    pub fn configure(self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        if self < Arm::Adapt {
            cfg.adapter = AdapterConfig::None;
        }
        cfg.sampler.policy = if self < Arm::Uniform {
            SamplingPolicy::Random
        } else {
            SamplingPolicy::Uniform
        };
        cfg.edge_filter = EdgeFilterConfig {
            enabled: self >= Arm::Filter,
            ..base.edge_filter.clone()
        };
        cfg
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown ablation arm {s:?}; expected baseline, adapt, uniform or filter"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub arm: Arm,
    pub description: String,
    pub config_digest: String,
    /// Mean of the per-user accuracies.
    pub aggregate: f64,
    /// Aligned with [`EvalReport::users`].
    pub per_user: Vec<f64>,
    pub query_frames: usize,
    /// Change of `aggregate` against the previous arm in the report.
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub users: Vec<String>,
    pub arms: Vec<ArmReport>,
}

impl EvalReport {
    pub fn arm(&self, arm: Arm) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    /// Plain-text table: one row per arm, one column per user.
    pub fn table(&self) -> String {
        let mut out = format!("{:<10} {:>9} {:>8}", "arm", "aggregate", "margin");
        for u in &self.users {
            out.push_str(&format!(" {u:>8}"));
        }
        out.push('\n');
        for a in &self.arms {
            let margin = a
                .margin
                .map_or("-".to_string(), |m| format!("{:+.2}", 100.0 * m));
            out.push_str(&format!(
                "{:<10} {:>9.2} {:>8}",
                a.arm.name(),
                100.0 * a.aggregate,
                margin
            ));
            for acc in &a.per_user {
                out.push_str(&format!(" {:>8.2}", 100.0 * acc));
            }
            out.push('\n');
        }
        out
    }
}

/// Personalizes and recognizes every user once per arm.
pub fn evaluate(
    manifest: &DatasetManifest,
    base: &PipelineConfig,
    arms: &[Arm],
) -> Result<EvalReport> {
    if arms.is_empty() {
        return Err(Error::Config("no ablation arms requested".into()));
    }
    let embedder = base.embedder.build()?;
    let users: Vec<String> = manifest.users.iter().map(|u| u.user_id.clone()).collect();
    let mut reports: Vec<ArmReport> = Vec::with_capacity(arms.len());
    for &arm in arms {
        let ctx = PipelineContext::with_embedder(manifest, arm.configure(base), embedder.clone())?;
        let mut results = Vec::new();
        for user in &users {
            let episode = Episode::from_manifest(manifest, user)?;
            let protos = personalize(&ctx, &episode)?.prototypes;
            for q in &episode.query {
                let predictions = recognize_video(&ctx, q.video, &protos)?;
                results.push(VideoResult {
                    user_id: user.clone(),
                    video_id: q.video.video_id.clone(),
                    truth: q.label.to_string(),
                    predicted: predictions.per_frame.into_iter().map(|p| p.pred).collect(),
                });
            }
        }
        let per_user = per_user_accuracy(&results)?;
        let aggregate = macro_accuracy(&per_user)?;
        let margin = reports.last().map(|prev| aggregate - prev.aggregate);
        log::info!(
            "arm {arm}: aggregate {:.4}{}",
            aggregate,
            margin.map_or(String::new(), |m| format!(" (margin {m:+.4})"))
        );
        reports.push(ArmReport {
            arm,
            description: arm.description().to_string(),
            config_digest: ctx.digest.clone(),
            aggregate,
            per_user: users.iter().map(|u| per_user[u]).collect(),
            query_frames: results.iter().map(|r| r.predicted.len()).sum(),
            margin,
        });
    }
    Ok(EvalReport {
        users,
        arms: reports,
    })
}
