use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use speq::experiments::runner::counting_name;
use speq::experiments::{budget_line, emit_plots, preset, resume, run_experiment, ExperimentConfig, PlotMode};
use speq::schedule::Counting;
use speq::Result;

#[derive(Parser)]
#[command(name = "speq", version, about = "Train, plot and budget off-policy actor-critic runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ModeArg {
    VsEnvSteps,
    VsGradSteps,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum CountingArg {
    CriticsPlusPolicy,
    CriticsOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config file or of each config in a preset.
    #[command(group(ArgGroup::new("source").required(true).args(["config", "preset"])))]
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Draw mean ± std learning curves from metrics CSVs into an SVG.
    Plot {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
    },
    /// Print the closed-form update budget of a config.
    Budget {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "critics_plus_policy")]
        counting: CountingArg,
    },
    /// Continue a run from one of its checkpoints.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, preset: name } => {
            let configs = match (config, name) {
                (Some(path), _) => vec![ExperimentConfig::load(&path)?],
                (None, Some(name)) => preset(&name)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let mut complete = true;
            for cfg in &configs {
                let summary = run_experiment(cfg)?;
                println!("{}", summary.to_text());
                complete &= !summary.partial();
            }
            Ok(complete)
        }
        Command::Plot { mode, out, csvs } => {
            let mode = match mode {
                ModeArg::VsEnvSteps => PlotMode::VsEnvSteps,
                ModeArg::VsGradSteps => PlotMode::VsGradSteps,
            };
            let series = emit_plots(&csvs, mode, &out)?;
            println!("wrote {} ({} runs)", out.display(), series.len());
            Ok(true)
        }
        Command::Budget { config, counting } => {
            let cfg = ExperimentConfig::load(&config)?;
            let counting = match counting {
                CountingArg::CriticsPlusPolicy => Counting::CriticsPlusPolicy,
                CountingArg::CriticsOnly => Counting::CriticsOnly,
            };
            let b = budget_line(&cfg, counting);
            println!("counting          {}", counting_name(counting));
            println!("grad_budget       {}", b.grad_budget);
            println!("warmup correction {}", b.correction);
            println!("predicted counted {}", b.predicted);
            Ok(true)
        }
        Command::Resume { checkpoint } => {
            let r = resume(&checkpoint)?;
            println!(
                "seed {} finished at step {}: final return {:.3} ± {:.3}",
                r.seed, r.counters.env_steps, r.final_return_mean, r.final_return_std
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::warn!("some seeds failed; summaries are partial");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
