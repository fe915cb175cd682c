use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hawkes_core::config::{self, LoadedConfig};
use hawkes_core::experiment::{self, Command};
use hawkes_core::output::write_atomic;
use hawkes_core::{HawkesError, Result};
use serde_json::json;

/// Simulate nonlinear Hawkes processes and check their stability bounds.
#[derive(Parser, Debug)]
#[command(name = "hawkes", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (JSON). `HAWKES_SECTION__KEY=value` variables override entries.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Artifact path; defaults to a file in `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replica fan-out.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Event streams by thinning (or the configured sampler).
    Simulate(Common),
    /// Event streams from the cluster construction.
    Cluster(Common),
    /// Event streams with sampled parent attribution.
    Attribute(Common),
    /// Coupled runs from the perturbation and from rest; survival of the last discrepancy.
    Couple(Common),
    /// Bound on the total variation distance after time t.
    Tvbound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        grid_len: Option<usize>,
    },
    /// Cluster moment generating function versus simulation.
    Mgf {
        #[command(flatten)]
        common: Common,
        /// Comma-separated θ values.
        #[arg(long, value_delimiter = ',')]
        theta_list: Option<Vec<f64>>,
    },
    /// Stationary mean-field identity.
    Meanfield(Common),
    /// Stationary tail and density estimates.
    Tails(Common),
    /// Hypothesis report.
    Check(Common),
    /// Multi-type simulation and stability.
    Multitype(Common),
}

fn load(common: &Common, tweak: impl FnOnce(&mut config::ExperimentConfig)) -> Result<LoadedConfig> {
    let mut loaded = config::load_config(&common.config)?;
    let c = &mut loaded.config;
    if let Some(s) = common.seed {
        c.run.seed = s;
    }
    if let Some(r) = common.replicas {
        c.run.replicas = r;
    }
    tweak(c);
    c.validate()?;
    loaded.hash = c.hash()?;
    Ok(loaded)
}

fn execute(cli: Cli) -> Result<()> {
    let (cmd, common, loaded) = match &cli.command {
        Sub::Simulate(c) => (Command::Simulate, c, load(c, |_| {})?),
        Sub::Cluster(c) => (Command::Cluster, c, load(c, |_| {})?),
        Sub::Attribute(c) => (Command::Attribute, c, load(c, |_| {})?),
        Sub::Couple(c) => (Command::Couple, c, load(c, |_| {})?),
        Sub::Tvbound {
            common,
            grid_step,
            grid_len,
        } => (
            Command::TvBound,
            common,
            load(common, |c| {
                if let Some(s) = grid_step {
                    c.analysis.grid_step = *s;
                }
                if let Some(m) = grid_len {
                    c.analysis.grid_len = *m;
                }
            })?,
        ),
        Sub::Mgf { common, theta_list } => (
            Command::Mgf,
            common,
            load(common, |c| {
                if let Some(t) = theta_list {
                    c.analysis.thetas = t.clone();
                }
            })?,
        ),
        Sub::Meanfield(c) => (Command::MeanField, c, load(c, |_| {})?),
        Sub::Tails(c) => (Command::Tails, c, load(c, |_| {})?),
        Sub::Check(c) => (Command::Check, c, load(c, |_| {})?),
        Sub::Multitype(c) => (Command::Multitype, c, load(c, |_| {})?),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| HawkesError::Config(format!("thread pool: {e}")))?;
    let artifact = pool.install(|| experiment::run(cmd, &loaded))?;
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&loaded.config.output.dir).join(cmd.default_file()));
    write_atomic(&out, artifact.body.as_bytes())?;
    let mut summary = artifact.summary;
    summary["output"] = json!(out.display().to_string());
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut err = json!({ "kind": e.kind(), "message": e.to_string() });
            if let HawkesError::UnknownKeys(keys) = &e {
                err["keys"] = json!(keys);
            }
            eprintln!("{}", json!({ "error": err }));
            ExitCode::FAILURE
        }
    }
}
