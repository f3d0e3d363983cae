use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lanechange::env::EpisodeTrace;
use lanechange::harness::{
    dump_qdist, load_checkpoint, run_evaluation, run_training_with, write_qdist, AgentKind, Benchmark, EvalOptions,
    Policy, RunConfig,
};

#[derive(Parser)]
#[command(name = "lanechange", version, about = "Highway lane-change agents: training, evaluation, inspection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a learned agent and write metrics, curve and checkpoints.
    Train {
        /// TOML file overlaid on the benchmark preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds to train; defaults to the config's `run.seeds`.
        #[arg(long, num_args = 1..)]
        seed: Vec<u64>,
        #[arg(long, value_parser = parse_agent)]
        agent: Option<AgentKind>,
        #[arg(long, value_parser = parse_benchmark)]
        benchmark: Option<Benchmark>,
        /// Overrides `run.total_steps`.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Continue from a checkpoint of the same configuration and seed.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint, or a MOBIL baseline named with --agent.
    Eval {
        #[arg(long, required_unless_present = "agent")]
        checkpoint: Option<PathBuf>,
        /// Rule-based baseline (mobil_timid or mobil_aggressive).
        #[arg(long, value_parser = parse_agent, conflicts_with = "checkpoint")]
        agent: Option<AgentKind>,
        #[arg(long, value_parser = parse_benchmark, requires = "agent")]
        benchmark: Option<Benchmark>,
        /// TOML overrides for a MOBIL baseline.
        #[arg(long, requires = "agent")]
        config: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        /// Per-episode metrics CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-episode trace CSVs.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Dump the value distributions of a Rainbow checkpoint along a trace.
    DumpQdist {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episode trace CSV written by `eval --traces`.
        #[arg(long)]
        scenario: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    AgentKind::parse(s).ok_or_else(|| {
        let names: Vec<_> = AgentKind::ALL.iter().map(|a| a.as_str()).collect();
        format!("unknown agent {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    Benchmark::parse(s).ok_or_else(|| format!("unknown benchmark {s:?}; expected A or B"))
}

fn load_config(path: Option<&PathBuf>, benchmark: Option<Benchmark>, agent: Option<AgentKind>) -> lanechange::Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p, benchmark, agent),
        None => RunConfig::from_toml_str("", benchmark, agent),
    }
}

fn run(cli: Cli) -> lanechange::Result<()> {
    match cli.command {
        Command::Train {
            config,
            seed,
            agent,
            benchmark,
            steps,
            out,
            resume,
            quiet,
        } => {
            let mut config = load_config(config.as_ref(), benchmark, agent)?;
            if let Some(steps) = steps {
                config.run.total_steps = steps;
            }
            let seeds = if seed.is_empty() { config.run.seeds.clone() } else { seed };
            if resume.is_some() && seeds.len() != 1 {
                return Err(lanechange::Error::Config("--resume needs exactly one --seed".into()));
            }
            for seed in seeds {
                let mut log = |m: &lanechange::harness::EpisodeMetrics| {
                    if !quiet && m.episode % 50 == 0 {
                        eprintln!(
                            "seed {seed} step {:>8} episode {:>6} trailing reward {:>8.2}",
                            m.end_step, m.episode, m.trailing_reward
                        );
                    }
                };
                let outcome = run_training_with(&config, seed, &out, resume.as_deref(), &mut log)?;
                println!(
                    "seed {seed}: {} episodes, trailing reward {:.2}, settling step {}, metrics {}",
                    outcome.summary.episodes,
                    outcome.summary.trailing_reward,
                    outcome.summary.settling_step,
                    outcome.metrics_path.display()
                );
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            agent,
            benchmark,
            config,
            episodes,
            seed,
            workers,
            out,
            traces,
        } => {
            let loaded = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let learner = loaded.as_ref().map(|l| l.learner()).transpose()?;
            let (config, policy, settling) = match (&loaded, &learner) {
                (Some(l), Some(learner)) => (l.header.config.clone(), Policy::Learned(learner.as_ref()), l.header.settling_step),
                _ => {
                    let config = load_config(config.as_ref(), benchmark, agent)?;
                    if config.run.agent.is_learned() {
                        return Err(lanechange::Error::Config(format!(
                            "{} needs a --checkpoint",
                            config.run.agent.as_str()
                        )));
                    }
                    (config, Policy::Mobil, 0)
                }
            };
            let options = EvalOptions {
                episodes: episodes.unwrap_or(config.run.eval_episodes),
                seed,
                workers: workers.unwrap_or(config.run.eval_workers),
                trace_dir: traces,
                settling_step: settling,
            };
            let report = run_evaluation(&config, policy, &options)?;
            if let Some(path) = out {
                let mut f = BufWriter::new(File::create(path)?);
                report.write(&mut f, &config, &[("eval_seed", seed.to_string())])?;
                f.flush()?;
            }
            println!("{}", report.table_row(&config));
            Ok(())
        }
        Command::DumpQdist { checkpoint, scenario, out } => {
            let loaded = load_checkpoint(&checkpoint)?;
            let trace = EpisodeTrace::read(File::open(scenario)?)?;
            let rows = dump_qdist(&loaded, &trace)?;
            match out {
                Some(path) => {
                    let mut f = BufWriter::new(File::create(path)?);
                    write_qdist(&mut f, &trace, &rows)?;
                    f.flush()?;
                }
                None => write_qdist(std::io::stdout().lock(), &trace, &rows)?,
            }
            Ok(())
        }
    }
}

/// A closed stdout (e.g. piping into `head`) is not an error.
fn broken_pipe(e: &lanechange::Error) -> bool {
    let io = match e {
        lanechange::Error::Io(e) => Some(e),
        lanechange::Error::Csv(e) => match e.kind() {
            csv::ErrorKind::Io(e) => Some(e),
            _ => None,
        },
        _ => None,
    };
    io.is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
