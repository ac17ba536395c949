//! `metamarket` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or any other
//! failure, 2 when the market is infeasible (inverted price bounds or a
//! generator that cannot produce a valid instance).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use metamarket::experiment::{
    cmd_compare, cmd_gen, cmd_solve, cmd_sweep, CompareSpec, ExperimentConfig, ScenarioSource,
    SweepParameter, SweepSpec, DEFAULT_GRID_RESOLUTION, DEFAULT_INITIAL_STEP,
};
use metamarket::pricing::Solver;
use metamarket::MarketError;

#[derive(Parser)]
#[command(name = "metamarket", version)]
#[command(about = "Price and allocate rendering and bandwidth in a leader/follower market")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file and print its price bounds
    Gen {
        #[command(flatten)]
        source: SourceArgs,

        /// Output directory; the scenario is written to <out>/scenario.toml
        #[arg(long, env = "METAMARKET_OUT", default_value = "out")]
        out: PathBuf,
    },

    /// Solve one instance and write prices, assignment, trace, ledger and checks
    Solve {
        #[command(flatten)]
        source: SourceArgs,

        #[command(flatten)]
        solver: SolverArgs,

        #[arg(long, env = "METAMARKET_OUT", default_value = "out")]
        out: PathBuf,
    },

    /// Re-solve while sweeping one population parameter
    Sweep {
        #[command(flatten)]
        source: SourceArgs,

        #[command(flatten)]
        solver: SolverArgs,

        /// Parameter to sweep: alpha, beta or n_msus
        #[arg(long)]
        sweep: SweepParameter,

        /// Sweep range as `lo,hi`
        #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
        range: (f64, f64),

        #[arg(long, default_value_t = 11)]
        steps: usize,

        #[arg(long, env = "METAMARKET_OUT", default_value = "out")]
        out: PathBuf,
    },

    /// Compare solvers and the greedy-only ablation over sizes and seeds
    Compare {
        #[command(flatten)]
        solver: SolverArgs,

        /// Comma-separated solvers to run
        #[arg(long, value_delimiter = ',', default_value = "gsrap,fnse")]
        solvers: Vec<Solver>,

        /// Comma-separated population sizes
        #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100")]
        n_values: Vec<usize>,

        /// Comma-separated scenario seeds
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,

        #[arg(long, default_value_t = 4)]
        n_bss: usize,

        #[arg(long, env = "METAMARKET_OUT", default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Scenario file; when absent a scenario is generated from --seed
    #[arg(long, conflicts_with_all = ["seed", "n_msus", "n_bss"])]
    scenario: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value_t = 20)]
    n_msus: usize,

    #[arg(long, default_value_t = 4)]
    n_bss: usize,
}

impl SourceArgs {
    fn source(&self) -> ScenarioSource {
        match &self.scenario {
            Some(path) => ScenarioSource::File { path: path.clone() },
            None => ScenarioSource::generated(self.seed, self.n_msus, self.n_bss),
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// gsrap, fnse or grid-oracle
    #[arg(long, default_value = "gsrap")]
    solver: Solver,

    /// Golden-section perturbation scale (overrides the scenario)
    #[arg(long)]
    kappa: Option<f64>,

    /// Price-interval convergence threshold (overrides the scenario)
    #[arg(long)]
    delta: Option<f64>,

    /// Initial step of the coordinate-ascent baseline
    #[arg(long, default_value_t = DEFAULT_INITIAL_STEP)]
    step: f64,

    /// Points per axis of the price grid
    #[arg(long, default_value_t = DEFAULT_GRID_RESOLUTION)]
    resolution: usize,

    /// Seed of the golden-section perturbations (defaults to the scenario seed)
    #[arg(long)]
    search_seed: Option<u64>,

    /// Golden-section restarts; the most profitable run is kept
    #[arg(long, default_value_t = 1)]
    starts: usize,

    /// Skip the equilibrium checks
    #[arg(long)]
    no_verify: bool,
}

impl SolverArgs {
    fn config(&self, source: ScenarioSource, out: PathBuf) -> ExperimentConfig {
        ExperimentConfig {
            solver: self.solver,
            kappa: self.kappa,
            conv_delta: self.delta,
            initial_step: self.step,
            resolution: self.resolution,
            search_seed: self.search_seed,
            starts: self.starts,
            verify: !self.no_verify,
            ..ExperimentConfig::new(source, out)
        }
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad range bound `{v}`: {e}"))
    };
    Ok((parse(lo)?, parse(hi)?))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { source, out } => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let summary = cmd_gen(&source.source(), out.join("scenario.toml"))?;
            let b = summary.bounds;
            println!("wrote {}", summary.path.display());
            println!(
                "users: {} rational, {} irrational",
                summary.n_rational, summary.n_irrational
            );
            println!("pr bounds: [{}, {}]", b.pr_min, b.pr_max);
            println!("pw bounds: [{}, {}]", b.pw_min, b.pw_max);
        }
        Command::Solve {
            source,
            solver,
            out,
        } => {
            let config = solver.config(source.source(), out);
            let report = cmd_solve(&config)?;
            let s = &report.summary;
            println!("solver: {}", s.solver.as_str());
            println!("prices: pr = {}, pw = {}", s.pr_star, s.pw_star);
            println!("profit: {}", s.profit);
            println!("profit evaluations: {}", s.profit_evaluations);
            println!("served: {}/{}", s.served, s.n_msus);
            if let Some(passed) = s.equilibrium_passed {
                println!(
                    "equilibrium checks: {}",
                    if passed { "pass" } else { "fail" }
                );
            }
            println!("ledger head: {}", s.ledger_head);
            println!("outputs in {}", config.out_dir.display());
        }
        Command::Sweep {
            source,
            solver,
            sweep,
            range,
            steps,
            out,
        } => {
            let mut config = solver.config(source.source(), out);
            config.sweep = Some(SweepSpec {
                parameter: sweep,
                lo: range.0,
                hi: range.1,
                steps,
            });
            let rows = cmd_sweep(&config)?;
            println!(
                "{:>10} {:>10} {:>10} {:>12}",
                sweep.as_str(),
                "pr",
                "pw",
                "profit"
            );
            for r in &rows {
                println!(
                    "{:>10.4} {:>10.4} {:>10.4} {:>12.4}",
                    r.value, r.pr_star, r.pw_star, r.profit
                );
            }
            println!("wrote {}", config.out_dir.join("sweep.csv").display());
        }
        Command::Compare {
            solver,
            solvers,
            n_values,
            seeds,
            n_bss,
            out,
        } => {
            if n_bss == 0 {
                bail!(MarketError::Config("n_bss must be at least 1".into()));
            }
            let config = solver.config(ScenarioSource::generated(0, 1, n_bss), out);
            let spec = CompareSpec {
                solvers,
                n_values,
                seeds,
                n_bss,
            };
            let rows = cmd_compare(&config, &spec)?;
            println!(
                "{:<12} {:>6} {:>6} {:>12} {:>8} {:>8}",
                "algorithm", "n", "seed", "profit", "evals", "to 1%"
            );
            for r in &rows {
                println!(
                    "{:<12} {:>6} {:>6} {:>12.4} {:>8} {:>8}",
                    r.algorithm,
                    r.n_msus,
                    r.seed,
                    r.profit,
                    r.profit_evaluations,
                    r.evaluations_to_1pct
                );
            }
            println!("wrote {}", config.out_dir.join("compare.csv").display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<MarketError>() {
        Some(e) if e.is_infeasible() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
