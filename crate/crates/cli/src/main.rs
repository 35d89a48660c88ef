use clap::{Parser, Subcommand};
use ngm_cli::commands;
use ngm_cli::config::RunConfig;
use ngm_cli::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Latent-conditioned neural Galerkin pipeline: pretrain on sampled initial
/// conditions, adapt to unseen instances, evolve in time, validate against
/// pseudospectral references.
#[derive(Parser)]
#[command(name = "ngm", version, about)]
struct Cli {
    /// Configuration file (flat `key = value` lines)
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory from the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Cap the worker thread count (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the configured initial conditions onto the collocation grid
    SampleIcs,
    /// Jointly train shared weights and per-sample latent codes
    Pretrain,
    /// Adapt a latent code to one sample (weights frozen)
    Finetune {
        /// Sample name, e.g. `test_0000` or `train_0003`
        #[arg(long, default_value = "test_0000")]
        sample: String,
    },
    /// Advance the fine-tuned parameters in time
    Evolve {
        /// Checkpoint to start from (default: `<out>/finetuned.ckpt`)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Solve the pseudospectral reference for one sample
    Reference {
        #[arg(long, default_value = "test_0000")]
        sample: String,
    },
    /// Compare prediction and reference, write the MSE report
    Compare {
        #[arg(long, default_value = "test_0000")]
        sample: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        config.set("seed", seed.to_string());
    }
    if let Some(out) = cli.out {
        config.set("out", out.display().to_string());
    }
    if cli.jobs > 0 {
        config.set("jobs", cli.jobs.to_string());
    }
    let resolved = config.resolve()?;
    if resolved.jobs > 0 {
        // ignore failure: the global pool can only be installed once
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(resolved.jobs)
            .build_global();
    }

    match cli.command {
        Command::SampleIcs => commands::cmd_sample_ics(&resolved),
        Command::Pretrain => commands::cmd_pretrain(&resolved),
        Command::Finetune { sample } => {
            let summary = commands::cmd_finetune(&resolved, &sample)?;
            println!(
                "fine-tuned `{sample}`: warm-start data loss {:e} -> {:e} (nearest sample {})",
                summary.warm_data_loss, summary.tuned_data_loss, summary.warm_start_index
            );
            Ok(())
        }
        Command::Evolve { checkpoint } => commands::cmd_evolve(&resolved, checkpoint.as_deref()),
        Command::Reference { sample } => commands::cmd_reference(&resolved, &sample),
        Command::Compare { sample } => {
            let rows = commands::cmd_compare(&resolved, &sample)?;
            for row in rows {
                println!("mse sample={} mode={} t={} {:e}", row.sample, row.mode, row.time, row.mse);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
