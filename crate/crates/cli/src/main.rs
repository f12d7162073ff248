use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use robust_intent::harness::{
    cmd_ablate, cmd_compare_losses, cmd_eval, cmd_finetune_lm, cmd_plot, cmd_prepare, cmd_pretrain_lm, cmd_run_full,
    cmd_sweep_lambda, cmd_train, ExperimentConfig, Grid, Summary, TEST_ASR, TEST_MANUAL,
};
use robust_intent::Result;

#[derive(Parser)]
#[command(name = "robust-intent", version, about = "ASR-robust intent detection experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured seed list.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory, overriding `paths.out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load or synthesize the corpus, simulate ASR and extract confusion pairs.
    Prepare,
    /// Pretrain the bidirectional language model.
    PretrainLm,
    /// Calibrate the pretrained language model with the joint loss.
    FinetuneLm,
    /// Train the intent classifier on the calibrated language model.
    Train,
    /// Evaluate the trained classifier on manual and ASR test transcripts.
    Eval,
    /// The whole pipeline for every configured seed.
    RunFull,
    /// Full pipeline against its ablations.
    Ablate,
    /// Compare the confusion distance functions.
    CompareLosses,
    /// Sweep the confusion-loss weight.
    SweepLambda {
        /// Comma-separated weights; defaults to `sweep.lambdas`.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Re-render the sweep plot from its saved table.
    Plot,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(s: &Summary) {
    let m = &s.metrics[TEST_MANUAL]["accuracy"];
    let a = &s.metrics[TEST_ASR]["accuracy"];
    println!(
        "{:<28} manual acc {:.4} ± {:.4}   asr acc {:.4} ± {:.4}",
        s.variant, m.mean, m.sd, a.mean, a.sd
    );
}

fn print_grid(g: &Grid) {
    for s in g.summaries.values() {
        print_summary(s);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let seed = cfg.seeds[0];
    match cli.command {
        Command::Prepare => {
            let m = cmd_prepare(&cfg)?;
            println!("prepared {} examples, {} confusion pairs ({})", m.examples.values().sum::<usize>(), m.num_pairs, m.method);
        }
        Command::PretrainLm => println!("{}", cmd_pretrain_lm(&cfg, seed)?.display()),
        Command::FinetuneLm => println!("{}", cmd_finetune_lm(&cfg, seed)?.display()),
        Command::Train => println!("{}", cmd_train(&cfg, seed)?.display()),
        Command::Eval => {
            for (k, m) in cmd_eval(&cfg, seed)? {
                println!("{k:<12} accuracy {:.4}  macro-F1 {:.4}", m.accuracy, m.macro_f1);
            }
        }
        Command::RunFull => print_summary(&cmd_run_full(&cfg)?.1),
        Command::Ablate => print_grid(&cmd_ablate(&cfg)?),
        Command::CompareLosses => print_grid(&cmd_compare_losses(&cfg)?),
        Command::SweepLambda { lambdas } => {
            let lambdas = lambdas.unwrap_or_else(|| cfg.sweep.lambdas.clone());
            let (table, _) = cmd_sweep_lambda(&cfg, &lambdas)?;
            for r in &table.rows {
                println!("lambda {:<6} manual acc {:.4}   asr acc {:.4}", r.lambda, r.manual_accuracy.mean, r.asr_accuracy.mean);
            }
        }
        Command::Plot => println!("{}", cmd_plot(&cfg)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
