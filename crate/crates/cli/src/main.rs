use std::path::PathBuf;

use anchorreg::trainer::Ablation;
use anchorreg_cli as cmd;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anchorreg", version, about = "Anchor-graph regularized dual-encoder training and evaluation")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Run configuration: a `key = value` file plus single-key overrides.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long, env = "ANCHORREG_CONFIG")]
    config: Option<PathBuf>,

    /// Override one key, e.g. `--set total_epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<anchorreg::trainer::RunConfig> {
        cmd::load_run_config(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-topic dataset.
    Synth {
        /// `key = value` generator settings; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Densify the anchor graphs of a dataset with random walks.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Remove graph edges that a trained encoder scores at or below a threshold.
    Prune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Never prune the graphs.
        #[arg(long)]
        no_prune: bool,
        /// Zero the query-side regularizer weight.
        #[arg(long)]
        no_doc_graph: bool,
        /// Zero the label-side regularizer weight.
        #[arg(long)]
        no_lbl_graph: bool,
        /// Plain task loss on label-propagated ground truth.
        #[arg(long)]
        aug_gt: bool,
    },
    /// Retrieve for one split and write metrics and predictions.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run configuration; defaults to config.txt beside the checkpoint.
        #[arg(long, env = "ANCHORREG_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, default_value = "1,3,5")]
        k: String,
        #[arg(long, default_value = "test")]
        split: cmd::Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the full method and four ablations with one seed.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print dataset graph statistics and checkpoint shapes.
    Inspect {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = cmd::load_synthetic_spec(spec.as_deref())?;
            let files = cmd::cmd_synth(&spec, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Augment { data, config, out } => {
            cmd::cmd_augment(&data, &config.load()?, &out)?;
            println!("wrote augmented dataset to {}", out.display());
        }
        Command::Prune { data, checkpoint, threshold, config, out } => {
            let removed = cmd::cmd_prune(&data, &checkpoint, threshold, &config.load()?, &out)?;
            println!("removed {removed} edges; wrote {}", out.display());
        }
        Command::Train { data, config, out, no_prune, no_doc_graph, no_lbl_graph, aug_gt } => {
            let ablation = Ablation { no_prune, no_doc_graph, no_lbl_graph, aug_gt };
            let output = cmd::cmd_train(&data, &config.load()?, ablation, &out)?;
            let last = output.history.last().map_or(f64::NAN, |r| r.objective);
            println!("trained {} epochs, final objective {last:.6}; wrote {}", output.history.len(), out.display());
        }
        Command::Eval { data, checkpoint, config, k, split, out } => {
            let cfg = cmd::config_for_checkpoint(&checkpoint, config.as_deref())?;
            let report = cmd::cmd_eval(&data, &checkpoint, &cfg, &cmd::parse_ks(&k)?, split, &out)?;
            print!("{}", report.to_table());
        }
        Command::Ablate { data, config, out } => {
            let rows = cmd::cmd_ablate(&data, &config.load()?, &out)?;
            print!("{}", cmd::ablation_table(&rows));
        }
        Command::Inspect { data, checkpoint } => {
            print!("{}", cmd::cmd_inspect(data.as_deref(), checkpoint.as_deref())?);
        }
    }
    Ok(())
}
