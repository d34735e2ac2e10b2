use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tte::config::AdaptMode;
use tte::{pipeline, PipelineError, RunConfig, Threads};

/// Time-to-event pretraining pipeline.
#[derive(Debug, Parser)]
#[command(name = "tte", version)]
struct Cli {
    /// Configuration file (`[section]` headers with `key = value` lines).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set train.epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort with known hazards.
    Synth,
    /// Rank codes by conditional entropy and write the task list.
    SelectTasks,
    /// Pretrain on the multi-task time-to-event objective.
    Pretrain {
        /// Continue from the saved model and training state.
        #[arg(long)]
        resume: bool,
    },
    /// Pretrain on next-code prediction.
    PretrainNextCode,
    /// Fit a model for the target task.
    Adapt {
        #[arg(long, value_parser = ["probe", "finetune", "scratch"])]
        mode: Option<String>,
    },
    /// Score a task model on the test split.
    Evaluate {
        /// Score the model written by `adapt` in this mode.
        #[arg(long, value_parser = ["probe", "finetune", "scratch"])]
        mode: Option<String>,
        /// Second task model for a paired bootstrap comparison.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Label memory and likelihood throughput, sparse versus dense.
    Bench,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut overrides = cli.overrides;
    match &cli.command {
        Command::Adapt { mode: Some(m) } | Command::Evaluate { mode: Some(m), .. } => {
            overrides.push(format!("adapt.mode={}", m.parse::<AdaptMode>()?.as_str()))
        }
        _ => {}
    }
    if let Command::Evaluate { compare: Some(p), .. } = &cli.command {
        overrides.push(format!("evaluate.compare={}", p.display()));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    let exec = Threads::from_env()?;
    log::info!("using {} threads", exec.count());
    match cli.command {
        Command::Synth => {
            pipeline::synth(&cfg)?;
        }
        Command::SelectTasks => {
            pipeline::select_tasks_stage(&cfg)?;
        }
        Command::Pretrain { resume } => {
            let s = pipeline::pretrain_stage(&cfg, &exec, resume)?;
            println!("{}", s.checkpoint.display());
        }
        Command::PretrainNextCode => {
            let s = pipeline::pretrain_next_code_stage(&cfg, &exec)?;
            println!("{}", s.checkpoint.display());
        }
        Command::Adapt { .. } => {
            let s = pipeline::adapt_stage(&cfg, &exec)?;
            println!("{}", s.checkpoint.display());
        }
        Command::Evaluate { .. } => {
            let r = pipeline::evaluate_stage(&cfg, &exec)?;
            print!("{}", r.to_table());
        }
        Command::Bench => {
            let r = pipeline::bench_stage(&cfg)?;
            for row in &r.rows {
                println!("events {}: sparse/dense bytes {:.5}", row.events, row.ratio);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
