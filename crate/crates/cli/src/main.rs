use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freqsim::config::parse_scenario_with_seed;
use freqsim::dispatch::{compute_cost_bound, optimal_dispatch, ramp_relaxation_check};
use freqsim::graph::check_condition;
use freqsim::report::{self, render, write_text};
use freqsim::sim::{compare_controllers, run_scenario};
use freqsim::trace::write_trace;
use freqsim::{ControllerConfig, Error, ScenarioConfig};
use serde::Serialize;

/// Distributed secondary frequency control simulator.
#[derive(Debug, Parser)]
#[command(name = "freqsim", version)]
struct Cli {
    /// Replace the scenario seed (changes randomized parameters and loads).
    #[arg(long, global = true, value_name = "SEED")]
    seed_override: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario; write the trace CSV and a TOML report.
    Run {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Trace CSV path; the report goes next to it as `<stem>.report.toml`.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Settling band on |Δf| in Hz (overrides the scenario).
        #[arg(long)]
        band: Option<f64>,
    },
    /// Run two scenarios on the same plant and compare them.
    Compare {
        #[arg(long, value_name = "FILE", num_args = 1, required = true)]
        config: Vec<PathBuf>,
        /// Write the comparison report here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        #[arg(long)]
        band: Option<f64>,
    },
    /// Spectral convergence check of each area's communication graph.
    CheckGraph {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Closed-form optimal dispatch of a load deviation over each area's resources.
    Dispatch {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Load deviation (pu).
        #[arg(long, allow_hyphen_values = true)]
        load: f64,
    },
    /// Price-tracking bound `c·ε` for each area.
    Bound(BoundArgs),
    /// Ramp-relaxation check for each resource.
    RampCheck(BoundArgs),
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Largest per-slot load change (pu); defaults to the scenario's load profile.
    #[arg(long)]
    epsilon: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(1)
        }
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Error> {
    parse_scenario_with_seed(path, seed)
}

fn distributed_beta(config: &ScenarioConfig, command: &str) -> Result<f64, Error> {
    match config.controller {
        ControllerConfig::Distributed { beta, .. } => Ok(beta),
        ControllerConfig::Agc { .. } => Err(Error::InvalidParameter {
            field: "controller".into(),
            reason: format!("{command} needs a distributed controller (beta), scenario uses agc"),
        }),
    }
}

#[derive(Serialize)]
struct AreaEntry<T: Serialize> {
    area: usize,
    #[serde(flatten)]
    value: T,
}

#[derive(Serialize)]
struct Areas<T: Serialize> {
    area: Vec<AreaEntry<T>>,
}

fn per_area<T: Serialize>(
    config: &ScenarioConfig,
    mut f: impl FnMut(usize) -> Result<T, Error>,
) -> Result<String, Error> {
    let area = (0..config.areas.len())
        .map(|j| {
            Ok(AreaEntry {
                area: j,
                value: f(j)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    render(&Areas { area })
}

fn costs(config: &ScenarioConfig, j: usize) -> Vec<f64> {
    config.resources[j].iter().map(|r| r.a).collect()
}

fn epsilon_for(config: &ScenarioConfig, j: usize, given: Option<f64>) -> f64 {
    given.unwrap_or_else(|| config.loads[j].max_change(config.n_slots(), config.slot_len))
}

fn execute(cli: Cli) -> Result<String, Error> {
    let seed = cli.seed_override;
    match cli.command {
        Command::Run { config, out, band } => {
            let mut scenario = load(&config, seed)?;
            if let Some(b) = band {
                scenario.band = b;
                scenario.validate()?;
            }
            let trace = run_scenario(&scenario)?;
            write_trace(&trace, &out)?;
            let report = report::run_report(&scenario, &trace)?;
            let text = render(&report)?;
            let report_path = out.with_extension("report.toml");
            write_text(&report_path, &text)?;
            log::info!("wrote {} and {}", out.display(), report_path.display());
            let m = &report.metrics;
            Ok(format!(
                "trace: {}\nreport: {}\nsettling_time: {}\nfreq_nadir: {:.6e}\n",
                out.display(),
                report_path.display(),
                m.settling_time
                    .map_or("none".to_string(), |t| format!("{t}")),
                m.freq_nadir
            ))
        }
        Command::Compare { config, out, band } => {
            let [left, right] = config.as_slice() else {
                return Err(Error::InvalidParameter {
                    field: "--config".into(),
                    reason: format!(
                        "compare takes exactly two --config files, got {}",
                        config.len()
                    ),
                });
            };
            let mut l = load(left, seed)?;
            let mut r = load(right, seed)?;
            if let Some(b) = band {
                l.band = b;
                r.band = b;
            }
            let cmp = compare_controllers(&l, &r)?;
            let text = render(&report::comparison_report(&l, &r, &cmp))?;
            match out {
                Some(path) => {
                    write_text(&path, &text)?;
                    Ok(format!("report: {}\n", path.display()))
                }
                None => Ok(text),
            }
        }
        Command::CheckGraph { config } => {
            let scenario = load(&config, seed)?;
            let beta = distributed_beta(&scenario, "check-graph")?;
            per_area(&scenario, |j| {
                check_condition(&scenario.graphs[j], beta, &costs(&scenario, j))
            })
        }
        Command::Dispatch {
            config,
            load: demand,
        } => {
            let scenario = load(&config, seed)?;
            per_area(&scenario, |j| {
                optimal_dispatch(&costs(&scenario, j), demand)
            })
        }
        Command::Bound(args) => {
            let scenario = load(&args.config, seed)?;
            let beta = distributed_beta(&scenario, "bound")?;
            #[derive(Serialize)]
            struct Entry {
                #[serde(flatten)]
                bound: freqsim::CostBound,
                tracking_bound: f64,
            }
            per_area(&scenario, |j| {
                let eps = epsilon_for(&scenario, j, args.epsilon);
                let bound =
                    compute_cost_bound(&scenario.graphs[j], beta, &costs(&scenario, j), eps)?;
                Ok(Entry {
                    tracking_bound: bound.bound(),
                    bound,
                })
            })
        }
        Command::RampCheck(args) => {
            let scenario = load(&args.config, seed)?;
            let beta = distributed_beta(&scenario, "ramp-check")?;
            #[derive(Serialize)]
            struct Entry {
                epsilon: f64,
                all_satisfied: bool,
                resource: Vec<freqsim::dispatch::RampCheck>,
            }
            per_area(&scenario, |j| {
                let eps = epsilon_for(&scenario, j, args.epsilon);
                let graph = &scenario.graphs[j];
                let bound = compute_cost_bound(graph, beta, &costs(&scenario, j), eps)?;
                let checks = ramp_relaxation_check(&bound, graph, beta, &scenario.resources[j])?;
                Ok(Entry {
                    epsilon: eps,
                    all_satisfied: checks.iter().all(|c| c.satisfied),
                    resource: checks,
                })
            })
        }
    }
}
