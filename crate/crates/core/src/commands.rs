//! The command implementations behind the `protopipe` binary. Each reads its
//! inputs, runs the pipeline and writes one JSON output file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{load_config, AdapterConfig, PipelineConfig};
use crate::jsonio::write_pretty;
use crate::media_io::synthetic::{plan_ablation_scenario, plan_synthetic, write_dataset};
use crate::media_io::{
    bench_loader, load_manifest, BenchReport, DatasetManifest, LoaderConfig, SyntheticSpec,
    MANIFEST_FILE,
};
use crate::pipeline::{evaluate, personalize, recognize_video, Arm, EvalReport, PipelineContext};
use crate::protonet::{Episode, Predictions, Prototypes};
use crate::{Error, Result};

/// Config written next to the ablation scenario dataset.
pub const SCENARIO_CONFIG_FILE: &str = "pipeline_config.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Standard,
    Ablation,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Scenario::Standard),
            "ablation" => Ok(Scenario::Ablation),
            _ => Err(Error::Config(format!(
                "unknown scenario {s:?}; expected standard or ablation"
            ))),
        }
    }
}

/// Adapter used by the ablation scenario config.
pub fn scenario_config() -> PipelineConfig {
    PipelineConfig {
        adapter: AdapterConfig::MeanRepulsion { alpha: 0.5 },
        ..Default::default()
    }
}

/// Writes a synthetic dataset under `out`. The ablation scenario also gets a
/// pipeline config file.
pub fn gen_synthetic(
    out: &Path,
    spec: &SyntheticSpec,
    scenario: Scenario,
) -> Result<DatasetManifest> {
    let plan = match scenario {
        Scenario::Standard => plan_synthetic(spec)?,
        Scenario::Ablation => plan_ablation_scenario(spec)?,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest = write_dataset(&plan, out)?;
    if scenario == Scenario::Ablation {
        write_pretty(&out.join(SCENARIO_CONFIG_FILE), &scenario_config())?;
    }
    Ok(manifest)
}

/// Accepts a manifest file or a directory holding `manifest.json`.
pub fn open_dataset(path: &Path) -> Result<DatasetManifest> {
    if path.is_dir() {
        load_manifest(&path.join(MANIFEST_FILE))
    } else {
        load_manifest(path)
    }
}

/// The config at `path` (defaults when absent) with an optional seed
/// override.
pub fn pipeline_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

#[derive(Clone, Debug)]
pub struct PersonalizeArgs {
    pub dataset: PathBuf,
    pub user: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Edge-filter audit as JSON lines.
    pub audit: Option<PathBuf>,
}

pub fn cmd_personalize(args: &PersonalizeArgs) -> Result<Prototypes> {
    let cfg = pipeline_config(args.config.as_deref(), args.seed)?;
    let manifest = open_dataset(&args.dataset)?;
    let episode = Episode::from_manifest(&manifest, &args.user)?;
    let ctx = PipelineContext::new(&manifest, cfg)?;
    let result = personalize(&ctx, &episode)?;
    for entry in result.audit.iter().filter(|a| a.removed || a.overridden) {
        log::info!("{}", entry.to_json_line());
    }
    if let Some(path) = &args.audit {
        let lines: String = result
            .audit
            .iter()
            .map(|a| a.to_json_line() + "\n")
            .collect();
        std::fs::write(path, lines).map_err(|e| Error::io(path, e))?;
    }
    result.prototypes.save(&args.out)?;
    Ok(result.prototypes)
}

#[derive(Clone, Debug)]
pub struct RecognizeArgs {
    pub prototypes: PathBuf,
    pub dataset: PathBuf,
    pub video: String,
    /// Must describe the embedder the prototypes were built with.
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_recognize(args: &RecognizeArgs) -> Result<Predictions> {
    let cfg = pipeline_config(args.config.as_deref(), args.seed)?;
    let protos = Prototypes::load(&args.prototypes)?;
    let manifest = open_dataset(&args.dataset)?;
    let (user, _, video) = manifest.find_video(&args.video)?;
    if user.user_id != protos.user_id {
        log::warn!(
            "video {} belongs to {}, prototypes to {}",
            args.video,
            user.user_id,
            protos.user_id
        );
    }
    let ctx = PipelineContext::new(&manifest, cfg)?;
    if ctx.digest != protos.config_digest {
        log::warn!("prototypes were built with a different pipeline config");
    }
    let predictions = recognize_video(&ctx, video, &protos)?;
    predictions.save(&args.out)?;
    Ok(predictions)
}

#[derive(Clone, Debug)]
pub struct EvaluateArgs {
    pub dataset: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub arms: Vec<Arm>,
    pub out: PathBuf,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvalReport> {
    let cfg = pipeline_config(args.config.as_deref(), args.seed)?;
    let manifest = open_dataset(&args.dataset)?;
    let report = evaluate(&manifest, &cfg, &args.arms)?;
    write_pretty(&args.out, &report)?;
    Ok(report)
}

/// Parses `"baseline,uniform"` style lists.
pub fn parse_arms(list: &str) -> Result<Vec<Arm>> {
    let arms = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Arm>>>()?;
    if arms.is_empty() {
        return Err(Error::Config("empty ablation list".into()));
    }
    Ok(arms)
}

#[derive(Clone, Debug)]
pub struct BenchArgs {
    pub dataset: PathBuf,
    pub threads: Vec<usize>,
    pub latency_ms: f64,
    pub reps: usize,
    pub out: PathBuf,
}

pub fn cmd_bench_loader(args: &BenchArgs) -> Result<BenchReport> {
    let latency = Duration::try_from_secs_f64(args.latency_ms / 1000.0)
        .map_err(|_| Error::Config(format!("invalid latency {} ms", args.latency_ms)))?;
    let configs: Vec<LoaderConfig> = args
        .threads
        .iter()
        .map(|&t| LoaderConfig {
            injected_latency: latency,
            ..LoaderConfig::with_threads(t)
        })
        .collect();
    let manifest = open_dataset(&args.dataset)?;
    let report = bench_loader(&manifest, &configs, args.reps)?;
    write_pretty(&args.out, &report)?;
    Ok(report)
}
