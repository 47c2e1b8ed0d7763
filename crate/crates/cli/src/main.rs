use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dbvae_core::data::synthetic::generate_synthetic;
use dbvae_core::data::load_dataset;
use dbvae_core::metrics::{fmt4, VarianceDivisor};
use dbvae_core::model::Mode;

use dbvae_cli::evaluate::Split;
use dbvae_cli::experiment::{render_comparison, ExperimentConfig};
use dbvae_cli::report::ReportFormat;
use dbvae_cli::{
    cmd_evaluate, cmd_experiment, cmd_report, run_training, synth, CliError, CliResult, RunConfig,
};

/// Debiasing experiments for facial-expression classification.
#[derive(Parser)]
#[command(name = "dbvae", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic expression corpus with a long-tailed
    /// category distribution.
    GenerateSynthetic(GenerateArgs),
    /// Train one model and write its run directory.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint on its own train or validation split.
    Evaluate(EvaluateArgs),
    /// Train paired runs of several models on one corpus and aggregate
    /// bias/variance tables.
    Experiment(ExperimentArgs),
    /// Rebuild tables, change summaries, and scatter plots from stored
    /// experiment artifacts.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Corpus root directory (one subdirectory per category).
    #[arg(long)]
    out: PathBuf,
    /// Base seed of the rendering streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale the default per-category counts (e.g. 0.1 for a smoke
    /// corpus). Mutually exclusive with --counts.
    #[arg(long)]
    scale: Option<f64>,
    /// Exact per-category counts, eight comma-separated values.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Standard deviation of per-pixel Gaussian noise.
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Maximum glyph translation in pixels.
    #[arg(long, default_value_t = 4)]
    jitter: u32,
}

/// Training settings shared by `train` and `experiment`.
#[derive(Args, Clone)]
struct TrainOverrides {
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Fraction of each category held out for validation.
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Weight of the classification loss term.
    #[arg(long)]
    w_classification: Option<f64>,
    /// Weight of the whole VAE block (0 disables it).
    #[arg(long)]
    w_vae: Option<f64>,
    /// Weight of the reconstruction term inside the VAE block.
    #[arg(long)]
    w_reconstruction: Option<f64>,
    /// Weight of the KL term inside the VAE block.
    #[arg(long)]
    w_kl: Option<f64>,
    /// Histogram bins per latent dimension in the resampler.
    #[arg(long)]
    bins: Option<usize>,
    /// Resampler smoothing constant (large alpha flattens toward
    /// uniform sampling).
    #[arg(long)]
    alpha: Option<f64>,
    /// How per-dimension rarity scores combine: product or max.
    #[arg(long)]
    combine: Option<String>,
    /// Recompute the sampling distribution every N epochs.
    #[arg(long)]
    refresh_every: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, config: &mut RunConfig) -> CliResult<()> {
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.batch {
            config.batch = v;
        }
        if let Some(v) = self.learning_rate {
            config.adam.learning_rate = v;
        }
        if let Some(v) = self.val_fraction {
            config.val_fraction = v;
        }
        if let Some(v) = self.w_classification {
            config.weights.classification = v;
        }
        if let Some(v) = self.w_vae {
            config.weights.vae = v;
        }
        if let Some(v) = self.w_reconstruction {
            config.weights.reconstruction = v;
        }
        if let Some(v) = self.w_kl {
            config.weights.kl = v;
        }
        if let Some(v) = self.bins {
            config.resampler.bins = v;
        }
        if let Some(v) = self.alpha {
            config.resampler.alpha = v;
        }
        if let Some(v) = &self.combine {
            config
                .apply("resampler_combine", v)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if let Some(v) = self.refresh_every {
            config.refresh_every = v;
        }
        Ok(())
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Model to train: cnn or dbvae.
    #[arg(long)]
    mode: Mode,
    /// Corpus root directory.
    #[arg(long)]
    data: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the split, initialisation, and training streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run directory holding config.txt and checkpoint.ckpt.
    #[arg(long)]
    run: PathBuf,
    /// Corpus root; defaults to the path stored in the run config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Which side of the run's split to evaluate: train or val.
    #[arg(long, default_value = "val")]
    split: Split,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Corpus root directory.
    #[arg(long)]
    data: PathBuf,
    /// Experiment directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Repeated runs per model.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Models to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "cnn,dbvae")]
    models: Vec<Mode>,
    /// Run r of every model uses seed seed_base + r.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    /// Variance divisor: population (divide by R) or sample (R - 1).
    #[arg(long, default_value = "population")]
    divisor: VarianceDivisor,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment directory holding experiment.json and per_run.csv.
    #[arg(long)]
    experiment: PathBuf,
    /// Report directory; defaults to <experiment>/report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Artifacts to write: csv, json, svg, or all.
    #[arg(long, default_value = "all")]
    format: ReportFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenerateSynthetic(args) => {
            let spec = synth::build_spec(
                args.seed,
                args.scale,
                args.counts.as_deref(),
                args.noise,
                args.jitter,
            )?;
            let total = generate_synthetic(&spec, &args.out)?;
            println!("wrote {total} images under {}", args.out.display());
            print!("{}", synth::render_counts_table(&spec));
            Ok(())
        }
        Command::Train(args) => {
            let mut config = RunConfig::new(args.mode, args.seed, args.data, args.out);
            args.overrides.apply(&mut config)?;
            config
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let dataset = load_dataset(&config.data)?;
            let artifacts = run_training(&config, &dataset, 0)?;
            for record in &artifacts.records {
                println!(
                    "category {:<12} accuracy {}  ({}/{})",
                    record.category,
                    fmt4(record.accuracy),
                    record.correct,
                    record.total
                );
            }
            println!(
                "standard {}  balanced {}",
                fmt4(artifacts.standard),
                fmt4(artifacts.balanced)
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            let evaluation = cmd_evaluate(&args.run, args.data.as_deref(), args.split)?;
            println!(
                "model={} split={} standard={} balanced={}",
                evaluation.model,
                evaluation.split.as_str(),
                fmt4(evaluation.standard),
                fmt4(evaluation.balanced)
            );
            Ok(())
        }
        Command::Experiment(args) => {
            let mut template = RunConfig::new(
                args.models.first().copied().unwrap_or(Mode::Cnn),
                args.seed_base,
                args.data.clone(),
                args.out.join("run"),
            );
            args.overrides.apply(&mut template)?;
            let config = ExperimentConfig {
                template,
                runs: args.runs,
                seed_base: args.seed_base,
                models: args.models,
                divisor: args.divisor,
                out: args.out,
            };
            config
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let outcome = cmd_experiment(&config, &args.data)?;
            print!("{}", render_comparison(&outcome.summaries));
            Ok(())
        }
        Command::Report(args) => {
            let report = cmd_report(&args.experiment, args.out.as_deref(), args.format)?;
            let out = args
                .out
                .unwrap_or_else(|| args.experiment.join("report"));
            println!(
                "report for {} model(s) over {} runs written to {}",
                report.summaries.len(),
                report.doc.runs,
                out.display()
            );
            Ok(())
        }
    }
}
