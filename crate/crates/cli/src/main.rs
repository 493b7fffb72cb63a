use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use protopipe::commands::{
    cmd_bench_loader, cmd_evaluate, cmd_personalize, cmd_recognize, gen_synthetic, parse_arms,
    BenchArgs, EvaluateArgs, PersonalizeArgs, RecognizeArgs, Scenario,
};
use protopipe::media_io::SyntheticSpec;
use protopipe::{Error, ErrorKind};

/// Few-shot video object recognition with prototypes.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error.
#[derive(Parser)]
#[command(name = "protopipe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (PPM frames, manifest, blank-frame sidecar).
    GenSynthetic(GenArgs),
    /// Build one user's prototypes from their clean videos.
    Personalize(PersonalizeCli),
    /// Classify every frame of one clutter video.
    Recognize(RecognizeCli),
    /// Run personalize and recognize for every user under each ablation arm.
    Evaluate(EvaluateCli),
    /// Time the frame loader under injected read latency.
    BenchLoader(BenchCli),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    users: usize,
    #[arg(long, default_value_t = 3)]
    objects: usize,
    /// Videos of each kind (clean and clutter) per object.
    #[arg(long, default_value_t = 2)]
    videos: usize,
    #[arg(long, default_value_t = 32)]
    frames: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0.25)]
    blank_fraction: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// `standard` or `ablation` (the rigged component-ablation dataset).
    #[arg(long, default_value = "standard")]
    scenario: String,
}

#[derive(Args)]
struct PersonalizeCli {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    user: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, env = "PROTOPIPE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Write the edge-filter audit here as JSON lines.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct RecognizeCli {
    #[arg(long)]
    prototypes: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    video: String,
    /// Pipeline config used for personalization; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "PROTOPIPE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateCli {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "PROTOPIPE_SEED")]
    seed: Option<u64>,
    /// Comma list of baseline, adapt, uniform, filter.
    #[arg(long, default_value = "baseline,adapt,uniform,filter")]
    ablation: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchCli {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma list of thread counts; the first is the baseline.
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    latency_ms: f64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> protopipe::Result<()> {
    match cli.command {
        Command::GenSynthetic(a) => {
            let spec = SyntheticSpec {
                num_users: a.users,
                objects_per_user: a.objects,
                videos_per_object: a.videos,
                frames_per_video: a.frames,
                frame_size: a.size,
                blank_fraction: a.blank_fraction,
                seed: a.seed,
            };
            let scenario: Scenario = a.scenario.parse()?;
            let manifest = gen_synthetic(&a.out, &spec, scenario)?;
            println!(
                "wrote {} users, {} videos, {} frames to {}",
                manifest.users.len(),
                manifest.videos().count(),
                manifest.total_frames(),
                a.out.display()
            );
        }
        Command::Personalize(a) => {
            let protos = cmd_personalize(&PersonalizeArgs {
                dataset: a.dataset,
                user: a.user,
                config: a.config,
                seed: a.seed,
                out: a.out.clone(),
                audit: a.audit,
            })?;
            println!(
                "{} prototypes for {} written to {}",
                protos.num_classes(),
                protos.user_id,
                a.out.display()
            );
        }
        Command::Recognize(a) => {
            let predictions = cmd_recognize(&RecognizeArgs {
                prototypes: a.prototypes,
                dataset: a.dataset,
                video: a.video,
                config: a.config,
                seed: a.seed,
                out: a.out.clone(),
            })?;
            println!(
                "{} frame predictions written to {}",
                predictions.per_frame.len(),
                a.out.display()
            );
        }
        Command::Evaluate(a) => {
            let report = cmd_evaluate(&EvaluateArgs {
                dataset: a.dataset,
                config: a.config,
                seed: a.seed,
                arms: parse_arms(&a.ablation)?,
                out: a.out,
            })?;
            print!("{}", report.table());
        }
        Command::BenchLoader(a) => {
            let report = cmd_bench_loader(&BenchArgs {
                dataset: a.dataset,
                threads: a.threads,
                latency_ms: a.latency_ms,
                reps: a.reps,
                out: a.out,
            })?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
