use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use propchaos::acceptance::{run_acceptance, Scale};
use propchaos::config::ExperimentConfig;
use propchaos::experiments::{
    clt_cmd, expansion_cmd, graph_stats_cmd, simulate_forward_cmd, wick_cmd, RunError,
};
use propchaos::manifest::RunManifest;
use propchaos::output::write_report;
use propchaos::runner::Runner;

/// Monte Carlo experiments on propagation of chaos for mean-field jump
/// processes.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward particle system: functionals, energy and collision rates.
    SimulateForward(Common),
    /// Interaction graphs: loop counts, cluster sizes and an event log.
    GraphStats(Common),
    /// Loop expansion of the chaos defect.
    Expansion(Common),
    /// Direct and limit estimates of the Wick covariance.
    Wick(Common),
    /// Gaussian fluctuations of the empirical measure.
    Clt(Common),
    /// Runs the acceptance criteria and prints one line per criterion.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated particle numbers, e.g. `100,1000`.
    #[arg(long, value_delimiter = ',')]
    n_ladder: Option<Vec<usize>>,
    #[arg(long)]
    replicas: Option<u64>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Reduced replica counts for a fast smoke run.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, RunError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.out.clone_from(o);
        }
        if let Some(l) = &self.n_ladder {
            cfg.run.n_ladder.clone_from(l);
        }
        if let Some(r) = self.replicas {
            cfg.run.replicas = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(
    name: &str,
    args: &Common,
    cmd: fn(&ExperimentConfig, &Runner) -> propchaos::experiments::Tables,
) -> Result<(), RunError> {
    let cfg = args.resolve()?;
    let runner = Runner::new(cfg.seed, cfg.workers);
    let mut manifest = RunManifest::start(name, &cfg);
    let tables = cmd(&cfg, &runner)?;
    manifest.finish();
    for path in write_report(&cfg.out, &manifest, &cfg, &tables)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SimulateForward(a) => run("simulate-forward", a, simulate_forward_cmd),
        Command::GraphStats(a) => run("graph-stats", a, graph_stats_cmd),
        Command::Expansion(a) => run("expansion", a, expansion_cmd),
        Command::Wick(a) => run("wick", a, wick_cmd),
        Command::Clt(a) => run("clt", a, clt_cmd),
        Command::Selftest(a) => {
            let scale = if a.quick { Scale::Quick } else { Scale::Full };
            let runner = Runner::new(a.seed, a.workers);
            let outcomes = run_acceptance(scale, &runner, &mut std::io::stdout());
            return if outcomes.iter().all(|o| o.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
