//! `evireg` — train, evaluate, and verify evidential-regression models.
//!
//! Exit codes: 0 success, 1 invalid configuration or input files,
//! 2 runtime failure, 3 gradient-verification violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evireg_cli::commands::{cmd_eval, cmd_gradcheck, cmd_sensitivity, cmd_train};
use evireg_cli::config::{
    apply_variant, recipe, resolve_output_dir, DataConfig, RunConfig, Variant,
};
use evireg_cli::exit_code_for;
use evireg_core::{EviregError, Result};

#[derive(Parser)]
#[command(
    name = "evireg",
    version,
    about = "Deep evidential regression: training, evaluation, and gradient verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every config-driven subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// Path to a run-config JSON file.
    #[arg(long, conflicts_with = "recipe")]
    config: Option<PathBuf>,

    /// Name of a built-in run config: cubic-hua, cubic, circle-hua, tabular.
    #[arg(long)]
    recipe: Option<String>,

    /// Override the loss variant (ERN, NLL-ERN, UR-ERN).
    #[arg(long)]
    variant: Option<String>,

    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed; derives the model, training, and data seeds.
    #[arg(long)]
    seed: Option<u64>,

    /// CSV file for tabular runs; overrides the config's csv_path.
    #[arg(long)]
    data_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Verify analytic gradients against finite differences and exactness
    /// bounds; exits 3 on violation.
    Gradcheck {
        /// Directory for the JSON report (default: runs/gradcheck).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write checkpoints, metrics, and plots.
    Train(ConfigArgs),
    /// Recompute metrics for an existing checkpoint.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint to evaluate (default: <out>/checkpoint.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep the escape-regularizer weight on the cubic task.
    Sensitivity(ConfigArgs),
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.recipe) {
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => recipe(name)?,
        (None, None) => {
            return Err(EviregError::invalid_input(
                "pass --config <file> or --recipe <name>".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if let Some(v) = &args.variant {
        apply_variant(&mut cfg, v.parse::<Variant>()?);
    }
    if let Some(csv) = &args.data_csv {
        match &mut cfg.data {
            DataConfig::Tabular { csv_path, .. } => {
                *csv_path = csv.display().to_string();
            }
            _ => {
                return Err(EviregError::invalid_input(
                    "--data-csv only applies to tabular runs".to_string(),
                ))
            }
        }
    }
    if let Some(seed) = args.seed {
        cfg.apply_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gradcheck { out } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("runs/gradcheck"));
            let dir = if dir.is_absolute() {
                dir
            } else {
                match std::env::var("EVIREG_OUT") {
                    Ok(root) if !root.is_empty() => PathBuf::from(root).join(dir),
                    _ => dir,
                }
            };
            cmd_gradcheck(&dir)
        }
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            let dir = resolve_output_dir(&cfg, args.out.as_deref());
            cmd_train(&cfg, &dir)?;
            Ok(0)
        }
        Command::Eval { config, checkpoint } => {
            let cfg = load_config(&config)?;
            let dir = resolve_output_dir(&cfg, config.out.as_deref());
            cmd_eval(&cfg, &dir, checkpoint.as_deref())?;
            Ok(0)
        }
        Command::Sensitivity(args) => {
            let cfg = load_config(&args)?;
            let dir = resolve_output_dir(&cfg, args.out.as_deref());
            cmd_sensitivity(&cfg, &dir)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
