//! `vidiff` command-line front end.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Common};

#[derive(Parser)]
#[command(name = "vidiff", version, about = "Desk-scale latent video diffusion", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubsetArgs {
    /// Keep only clips whose caption contains this text
    #[arg(long)]
    subset: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic captioned clip corpus
    MakeDataset(CommonArgs),
    /// Train the video autoencoder
    VaeTrain {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        subset: SubsetArgs,
    },
    /// Per-clip reconstruction PSNR
    VaeEval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        subset: SubsetArgs,
    },
    /// Train the diffusion transformer on frozen-autoencoder latents
    DitTrain {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        subset: SubsetArgs,
    },
    /// Sample one clip from a prompt, optionally conditioned on an image
    Generate(CommonArgs),
    /// Channel PCA over a directory of latent (or pixel) clips
    AnalyzeLatents {
        dir: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Paired exponential / inverse-exponential RoPE spacing runs
    RopeAblation(CommonArgs),
    /// Decoder-denoised versus fully integrated samples
    DecoderAb(CommonArgs),
    /// Finite-difference gradient suite
    GradCheck(CommonArgs),
}

impl From<CommonArgs> for Common {
    fn from(a: CommonArgs) -> Self {
        Common { config: a.config, seed: a.seed, out: a.out }
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    use commands::*;
    match cmd {
        Cmd::MakeDataset(c) => make_dataset_cmd(&c.into()),
        Cmd::VaeTrain { common, subset } => vae_train_cmd(&common.into(), subset.subset.as_deref()),
        Cmd::VaeEval { common, subset } => vae_eval_cmd(&common.into(), subset.subset.as_deref()),
        Cmd::DitTrain { common, subset } => dit_train_cmd(&common.into(), subset.subset.as_deref()),
        Cmd::Generate(c) => generate_cmd(&c.into()),
        Cmd::AnalyzeLatents { dir, common } => analyze_latents_cmd(&common.into(), &dir),
        Cmd::RopeAblation(c) => rope_ablation_cmd(&c.into()),
        Cmd::DecoderAb(c) => decoder_ab_cmd(&c.into()),
        Cmd::GradCheck(c) => grad_check_cmd(&c.into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("run `vidiff <subcommand> --help` for usage");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
