//! `ocuclip` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocuclip_cli::{
    cmd_evaluate, cmd_generate, cmd_report, cmd_split, cmd_train, EvaluateArgs,
    GenerateArgs, GlobalOpts, ReportArgs, SplitArgs, TrainArgs,
};

#[derive(Parser)]
#[command(
    name = "ocuclip",
    version,
    about = "Context-aware vision-language contrastive models for exam-structured retinal datasets"
)]
struct Cli {
    /// Run-config file (JSON); flags override config values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic component of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (falls back to config `out`, then $OCUCLIP_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic exam dataset (manifest + PNG images).
    Generate(GenerateCli),
    /// Split a manifest into patient-disjoint train/validation manifests.
    Split(SplitCli),
    /// Train a model variant and select the best checkpoint on validation AUC.
    Train(TrainCli),
    /// Zero-shot evaluate checkpoints into per-class AUC reports.
    Evaluate(EvaluateCli),
    /// Merge evaluation reports (and paper-reported baselines) into one table.
    Report(ReportCli),
}

#[derive(Args)]
struct GenerateCli {
    /// Number of patients.
    #[arg(long)]
    patients: Option<usize>,
    /// Minimum exams per patient.
    #[arg(long)]
    exams_min: Option<usize>,
    /// Maximum exams per patient.
    #[arg(long)]
    exams_max: Option<usize>,
    /// Square image side in pixels (at least 16).
    #[arg(long)]
    image_size: Option<usize>,
    /// Grade signal strength in [0, 1].
    #[arg(long)]
    strength: Option<f64>,
    /// Probability a follow-up grade stays within the prior band.
    #[arg(long)]
    prior_correlation: Option<f64>,
    /// Band width for correlated follow-up grades.
    #[arg(long)]
    prior_band: Option<u8>,
    /// Fraction of ungradable images.
    #[arg(long)]
    ungradable_fraction: Option<f64>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SplitCli {
    /// Manifest to split.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fraction of patients assigned to training.
    #[arg(long)]
    train_ratio: Option<f64>,
}

#[derive(Args)]
struct TrainCli {
    /// Variant: unilateral-s, unilateral-d-labels, unilateral-d-summary,
    /// bilateral-concl, clinical-temporal, or combined:<a>+<b>.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Base learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    val_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateCli {
    /// Checkpoint file (repeatable).
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Manifest as `name=path` or a bare path (repeatable).
    #[arg(long = "manifest")]
    manifests: Vec<String>,
}

#[derive(Args)]
struct ReportCli {
    /// Evaluation report JSON (repeatable).
    #[arg(long = "report")]
    reports: Vec<PathBuf>,
    /// Paper-reported baseline report JSON (repeatable); rendered with a
    /// "(paper-reported)" label.
    #[arg(long = "baseline")]
    baselines: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print and exit 0; real parse errors follow
            // the documented exit-code contract (1 = usage).
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let global = GlobalOpts {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(
            &global,
            &GenerateArgs {
                patients: args.patients,
                exams_min: args.exams_min,
                exams_max: args.exams_max,
                image_size: args.image_size,
                strength: args.strength,
                prior_correlation: args.prior_correlation,
                prior_band: args.prior_band,
                ungradable_fraction: args.ungradable_fraction,
                force: args.force,
            },
        ),
        Command::Split(args) => cmd_split(
            &global,
            &SplitArgs {
                manifest: args.manifest,
                train_ratio: args.train_ratio,
            },
        ),
        Command::Train(args) => cmd_train(
            &global,
            &TrainArgs {
                variant: args.variant,
                epochs: args.epochs,
                lr: args.lr,
                batch_size: args.batch_size,
                train_manifest: args.train_manifest,
                val_manifest: args.val_manifest,
            },
        ),
        Command::Evaluate(args) => cmd_evaluate(
            &global,
            &EvaluateArgs {
                checkpoints: args.checkpoints,
                manifests: args.manifests,
            },
        ),
        Command::Report(args) => cmd_report(
            &global,
            &ReportArgs {
                reports: args.reports,
                baselines: args.baselines,
            },
        ),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
