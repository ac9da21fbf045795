//! `patchdps`: generate synthetic captures, train the patch prior, run guided
//! reconstruction and score the result.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use patchdps::exec;
use patchdps::guidance::{SamplerKind, VjpMode};

mod commands;
mod config;
mod failure;
mod manifest;
mod preview;

use failure::CliResult;

#[derive(Parser, Debug)]
#[command(
    name = "patchdps",
    version,
    about = "Patch-level diffusion posterior sampling for reflectance maps"
)]
struct Cli {
    /// Worker threads for the data-parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config for this verb.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplerArg {
    Ancestral,
    Ddim,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Ancestral => SamplerKind::Ancestral,
            SamplerArg::Ddim => SamplerKind::Ddim,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VjpArg {
    Full,
    IdentityApprox,
}

impl From<VjpArg> for VjpMode {
    fn from(v: VjpArg) -> Self {
        match v {
            VjpArg::Full => VjpMode::Full,
            VjpArg::IdentityApprox => VjpMode::IdentityApprox,
        }
    }
}

/// Overrides for the `[guidance]` section.
#[derive(Args, Debug, Default)]
pub struct GuidanceFlags {
    #[arg(long)]
    zeta_prime: Option<f64>,
    /// Core tile size.
    #[arg(long)]
    p: Option<usize>,
    /// Overlap padding per side.
    #[arg(long)]
    p_pad: Option<usize>,
    /// Keep every n-th timestep of the training schedule.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    #[arg(long, value_enum)]
    vjp_mode: Option<VjpArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground truth, views and a patch dataset from the procedural generator.
    GenData(Common),
    /// Train the noise predictor on a patch dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint and optimizer state in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Guided reconstruction of a full reflectance map.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        guidance: GuidanceFlags,
        /// Validate and write the manifest without sampling.
        #[arg(long)]
        dry_run: bool,
    },
    /// PSNR, SSIM and seam score of a reconstruction against ground truth.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Unguided patches for inspecting the prior.
    SamplePatches(Common),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(c) => commands::gen_data(&c.config, &c.out, c.seed),
        Command::Train { common: c, resume } => commands::train(&c.config, &c.out, c.seed, resume.as_deref()),
        Command::Reconstruct {
            common: c,
            guidance,
            dry_run,
        } => commands::reconstruct(&c.config, &c.out, c.seed, &guidance, dry_run),
        Command::Eval { config, out } => commands::eval(&config, &out),
        Command::SamplePatches(c) => commands::sample_patches(&c.config, &c.out, c.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(failure::Failure::validation("--threads must be at least 1")),
        Some(n) => exec::with_threads(n, || run(cli)),
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
