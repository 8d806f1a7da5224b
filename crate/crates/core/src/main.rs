use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use harq_ic::channel::{link_stats, DEFAULT_MC_SAMPLES};
use harq_ic::experiments::{derive_params, solve, sweep, write_csv, RatePolicy, SweepKind};
use harq_ic::mdp::{long_term_metrics, Policy, StateSpace};
use harq_ic::oracle::enumerate_frontier;
use harq_ic::simulator::{self, SimConfig};
use harq_ic::{Result, SystemParams};

#[derive(Parser)]
#[command(name = "harq-ic", version, about = "Optimal secondary access policies over primary ARQ retransmissions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file with system parameters; the built-in reference scenario if absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// How to set the rates before use.
    #[arg(long, value_enum, default_value = "RSU_STAR")]
    rate_policy: RatePolicy,
    #[arg(long, default_value_t = 2012)]
    seed: u64,
    /// Monte-Carlo samples for the joint-decoding probabilities.
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES, value_parser = positive)]
    mc_samples: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Derive rates and print the parameters with their link statistics.
    DeriveParams(Common),
    /// Compute the optimal access policy and the greedy policy path.
    Solve(Common),
    /// Simulate a policy slot by slot.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        slots: u64,
        /// JSON list of {t, b, phi, prob}; fixes D and B.
        #[arg(long)]
        policy_file: PathBuf,
    },
    /// Print the frontier of all deterministic policies as CSV.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long = "D")]
        deadline: usize,
        #[arg(long = "B")]
        buffer: usize,
    },
    /// Sweep a parameter and write per-scheme metrics as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated grid; a default grid per kind if absent.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn report(kind: &str, message: String) {
    let json = serde_json::to_string(&ErrorReport { error: kind, message }).expect("error report serializes");
    eprintln!("{json}");
}

fn load_params(common: &Common) -> Result<SystemParams> {
    match &common.config {
        Some(path) => Ok(serde_json::from_reader(io::BufReader::new(File::open(path)?))?),
        None => Ok(SystemParams::reference()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn derived(common: &Common) -> Result<SystemParams> {
    derive_params(&load_params(common)?, common.rate_policy, common.mc_samples, common.seed)
}

fn read_policy(path: &Path) -> Result<Policy> {
    Ok(serde_json::from_reader(io::BufReader::new(File::open(path)?))?)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::DeriveParams(common) => {
            let params = derived(&common)?;
            let stats = link_stats(&params, common.mc_samples, common.seed);
            #[derive(Serialize)]
            struct Out {
                params: SystemParams,
                stats: harq_ic::LinkStats,
            }
            print_json(&Out { params, stats })
        }
        Command::Solve(common) => print_json(&solve(&derived(&common)?, common.mc_samples, common.seed)?),
        Command::Simulate { common, slots, policy_file } => {
            let policy = read_policy(&policy_file)?;
            let mut params = load_params(&common)?;
            params.deadline = policy.space().deadline();
            params.buffer = policy.space().buffer();
            let params = derive_params(&params, common.rate_policy, common.mc_samples, common.seed)?;
            let stats = link_stats(&params, common.mc_samples, common.seed);
            let analytic = long_term_metrics(&policy, &stats);
            let config = SimConfig { params, policy, num_slots: slots, seed: common.seed };
            let simulation = simulator::run(&config)?;
            #[derive(Serialize)]
            struct Out {
                simulation: simulator::SimResult,
                analytic: harq_ic::PolicyMetrics,
            }
            print_json(&Out { simulation, analytic })
        }
        Command::Oracle { common, deadline, buffer } => {
            let space = Arc::new(StateSpace::new(deadline, buffer)?);
            let mut params = load_params(&common)?;
            params.deadline = deadline;
            params.buffer = buffer;
            let params = derive_params(&params, common.rate_policy, common.mc_samples, common.seed)?;
            let stats = link_stats(&params, common.mc_samples, common.seed);
            let frontier = enumerate_frontier(&stats, space)?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["w_s_bar", "t_s_bar", "policy_bitmask"])?;
            for p in &frontier {
                w.write_record([p.w_s_bar.to_string(), p.t_s_bar.to_string(), p.policy.bitmask().to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Sweep { common, kind, out, grid } => {
            let base = load_params(&common)?;
            let grid = grid.unwrap_or_else(|| kind.default_grid());
            let rows = sweep(kind, &base, common.rate_policy, &grid, common.mc_samples, common.seed)?;
            let file = BufWriter::new(File::create(&out)?);
            write_csv(&rows, file)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // help and version requests
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", e.render().to_string().trim().to_string());
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
