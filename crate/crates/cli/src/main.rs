//! `rainfall-nhmm`: fit, simulate, check and diagnose hourly rainfall models.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rainfall_nhmm::config::RunConfig;
use rainfall_nhmm::workflow;
use rainfall_nhmm::Result;

#[derive(Parser)]
#[command(
    name = "rainfall-nhmm",
    version,
    about = "Clone-state hidden Markov model for hourly rainfall"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model by MCMC and write the posterior draws.
    Fit(Common),
    /// Simulate a posterior-predictive ensemble.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of simulated series.
        #[arg(long)]
        n_series: Option<usize>,
        /// Seed of the simulation streams.
        #[arg(long)]
        sim_seed: Option<u64>,
        /// Reuse posterior draws when more series than draws are requested.
        #[arg(long)]
        allow_cycling: bool,
    },
    /// Compare the observed record with the simulated ensemble.
    Check(Common),
    /// PSRF table, posterior summary and effect curves.
    Diagnose(Common),
}

/// Options shared by every subcommand; each overrides the matching config key.
#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Observed record: timestamp,mm per line.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_dry: Option<usize>,
    #[arg(long)]
    n_wet: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// MCMC seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.data {
            cfg.data.path = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.output_dir = p.clone();
        }
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.model.n_dry, self.n_dry);
        set(&mut cfg.model.n_wet, self.n_wet);
        set(&mut cfg.mcmc.n_chains, self.chains);
        set(&mut cfg.mcmc.n_iter, self.iterations);
        set(&mut cfg.mcmc.burn_in, self.burn_in);
        set(&mut cfg.mcmc.thin, self.thin);
        if let Some(s) = self.seed {
            cfg.mcmc.seed = s;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(common) => {
            let cfg = common.config()?;
            let m = workflow::cmd_fit(&cfg)?;
            let draws = m.mcmc.n_chains * m.mcmc.n_retained();
            println!(
                "fitted {} hours; {draws} draws in {}",
                m.data.hours,
                cfg.output_dir.join(workflow::FIT_DIR).display()
            );
            if let Some(p) = &m.psrf {
                println!(
                    "PSRF median {:.3}, mean {:.3}, max {:.3}",
                    p.median, p.mean, p.max
                );
            }
        }
        Command::Simulate {
            common,
            n_series,
            sim_seed,
            allow_cycling,
        } => {
            let mut cfg = common.config()?;
            if let Some(n) = n_series {
                cfg.simulate.n_series = n;
            }
            if let Some(s) = sim_seed {
                cfg.simulate.seed = s;
            }
            cfg.simulate.allow_cycling |= allow_cycling;
            let m = workflow::cmd_simulate(&cfg)?;
            println!(
                "simulated {} series of {} hours in {}",
                m.settings.n_series,
                m.timeline.len(),
                cfg.output_dir.join(workflow::SIMULATE_DIR).display()
            );
        }
        Command::Check(common) => {
            let cfg = common.config()?;
            let index = workflow::cmd_check(&cfg)?;
            for c in &index.checks {
                println!(
                    "{:<32} {:>5} coordinates, {:>5.1}% inside",
                    c.statistic,
                    c.coordinates,
                    100.0 * c.fraction_inside
                );
            }
        }
        Command::Diagnose(common) => {
            let cfg = common.config()?;
            let m = workflow::cmd_diagnose(&cfg)?;
            let p = &m.psrf;
            println!(
                "PSRF over {} parameters: median {:.3}, mean {:.3}, max {:.3}",
                p.entries.len(),
                p.median,
                p.mean,
                p.max
            );
            if let Some(mv) = p.multivariate {
                println!("multivariate PSRF {mv:.3}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
