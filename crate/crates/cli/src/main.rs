use clap::{Parser, Subcommand};
use lmc_cli::commands;
use lmc_cli::config::load_config;
use lmc_cli::error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Desk-scale score distillation toolkit: train the diffusion model and its
/// manifold corrective, optimize and translate images through the loss
/// family, and measure the results.
#[derive(Parser)]
#[command(name = "lmc", version, about)]
struct Cli {
    /// JSON run configuration; defaults plus --seed when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override one config value: section.key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the procedural dataset and write it as IDX files.
    GenData,
    /// Train the conditional denoiser.
    TrainDiffusion,
    /// Train the bias network on denoiser triplets.
    TrainCorrective {
        /// Reuse (or create) a triplet cache file.
        #[arg(long)]
        triplet_cache: Option<PathBuf>,
    },
    /// Train the frozen probe classifier.
    TrainProbe,
    /// Optimize an image from scratch toward a class.
    Synthesize,
    /// Optimize an existing image toward a target class.
    Edit {
        /// PNG to edit (defaults to a dataset sample).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Produce several editing variants under the noise policy.
    Variants {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Distill the translator network from the loss.
    TrainTranslator,
    /// Run the trained translator on one image.
    Translate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Image statistics (spectra, derivative histograms) of a directory or
    /// of the configured dataset.
    Analyze {
        #[arg(long)]
        input_dir: Option<PathBuf>,
    },
    /// Gradient identity checks; exits non-zero on tolerance failure.
    Gradcheck,
    /// Editing benchmark sweep over loss kinds and guidance weights.
    EvalTable,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let mut cfg = load_config(cli.config.as_deref(), &cli.set, cli.seed)?;
    let out = cli.out.as_path();
    match cli.cmd {
        Cmd::GenData => commands::gen_data(&cfg, out),
        Cmd::TrainDiffusion => commands::train_diffusion(&cfg, out),
        Cmd::TrainCorrective { triplet_cache } => {
            commands::train_corrective(&cfg, out, triplet_cache.as_deref())
        }
        Cmd::TrainProbe => commands::train_probe(&cfg, out),
        Cmd::Synthesize => commands::synthesize(&cfg, out),
        Cmd::Edit { input } => {
            if let Some(p) = input {
                cfg.optimize.input = Some(p.display().to_string());
            }
            commands::edit(&cfg, out)
        }
        Cmd::Variants { input } => {
            if let Some(p) = input {
                cfg.optimize.input = Some(p.display().to_string());
            }
            commands::variants(&cfg, out)
        }
        Cmd::TrainTranslator => commands::train_translator(&cfg, out),
        Cmd::Translate { input } => {
            if let Some(p) = input {
                cfg.translate.input = Some(p.display().to_string());
            }
            commands::translate_cmd(&cfg, out)
        }
        Cmd::Analyze { input_dir } => commands::analyze(&cfg, out, input_dir.as_deref()),
        Cmd::Gradcheck => commands::gradcheck_cmd(&cfg, out),
        Cmd::EvalTable => commands::eval_table(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(dir) => {
            println!("run directory: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
