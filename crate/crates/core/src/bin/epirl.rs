use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epirl::agents::AgentKind;
use epirl::config::Config;
use epirl::interventions::ActionSpaceKind;
use epirl::runner::{self, CommonArgs, PolicySpec};
use epirl::Result;

/// Agent-based epidemic simulation, intervention learning and analysis.
#[derive(Parser)]
#[command(name = "epirl", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML overlay on the built-in defaults (falls back to $EPIRL_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-path override such as population.pop_size=2000; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Agent {
    Ppo,
    Dqn,
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Continuous,
    Discrete,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write the daily trace.
    Simulate {
        /// none | schedule:7w7l | schedule:uk-approx | schedule:<file> | checkpoint:<file>
        #[arg(long, default_value = "none")]
        policy: String,
    },
    /// Fit pop_infected and beta_initial to observed cumulative cases and deaths.
    Calibrate {
        /// CSV with header date,cum_confirmed,cum_deaths.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        /// Intervention schedule applied during calibration runs.
        #[arg(long, default_value = "schedule:uk-approx")]
        schedule: String,
    },
    /// Train a PPO or DQN agent.
    Train {
        #[arg(long, value_enum, default_value = "ppo")]
        agent: Agent,
        /// Defaults to the configured space for PPO and discrete for DQN.
        #[arg(long, value_enum)]
        space: Option<Space>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate one policy on a seed set.
    Evaluate {
        #[arg(long)]
        policy: String,
        /// `a..b` or comma-separated; defaults to evaluation.seeds.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Evaluate several policies on one seed set and write a comparison report.
    Compare {
        /// Repeat for each policy; at least two.
        #[arg(long = "policy", required = true)]
        policies: Vec<String>,
        #[arg(long)]
        seeds: Option<String>,
    },
}

fn seeds(arg: &Option<String>, config: &Config) -> Result<Vec<u64>> {
    match arg {
        Some(s) => runner::parse_seeds(s),
        None => Ok(config.evaluation.seeds.clone()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let (config, config_path) = Config::load(cli.common.config.as_deref(), &cli.common.overrides)?;
    let common = CommonArgs {
        config,
        config_path,
        out: cli.common.out,
    };
    let seed = cli.common.seed;
    match cli.command {
        Command::Simulate { policy } => {
            let s = runner::simulate(&common, &policy.parse()?, seed)?;
            println!(
                "infections {} deaths {} economic loss {:.2}% return {:.1}",
                s.cumulative_infections, s.deaths, s.economic_loss_pct, s.total_return
            );
        }
        Command::Calibrate { data, trials, schedule } => {
            let s = runner::calibrate(&common, &data, &schedule.parse()?, trials, seed)?;
            println!(
                "best pop_infected {:.1} beta_initial {:.6} loss {:.5} ({} trials, {} failed)",
                s.pop_infected, s.beta_initial, s.loss, s.trials, s.failed_trials
            );
        }
        Command::Train {
            agent,
            space,
            episodes,
            resume,
        } => {
            let agent = match agent {
                Agent::Ppo => AgentKind::Ppo,
                Agent::Dqn => AgentKind::Dqn,
            };
            let space = space.map(|s| match s {
                Space::Continuous => ActionSpaceKind::Continuous,
                Space::Discrete => ActionSpaceKind::Discrete,
            });
            let s = runner::train_agent(&common, agent, space, episodes, seed, resume.as_deref())?;
            match (s.leading_mean, s.trailing_mean) {
                (Some(l), Some(t)) => println!("{} episodes, leading mean {l:.1}, trailing mean {t:.1}", s.episodes),
                _ => println!("{} episodes", s.episodes),
            }
        }
        Command::Evaluate { policy, seeds: list } => {
            let seeds = seeds(&list, &common.config)?;
            let rows = runner::evaluate_policy(&common, &policy.parse()?, &seeds)?;
            for r in rows {
                println!(
                    "seed {} infections {} deaths {} loss {:.2}% return {:.1}",
                    r.seed, r.cumulative_infections, r.deaths, r.economic_loss_pct, r.total_return
                );
            }
        }
        Command::Compare { policies, seeds: list } => {
            let seeds = seeds(&list, &common.config)?;
            let specs = policies.iter().map(|p| p.parse()).collect::<Result<Vec<PolicySpec>>>()?;
            let report = runner::compare(&common, &specs, &seeds)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if runner::is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
