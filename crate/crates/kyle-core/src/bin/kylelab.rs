//! Scenario runner.
//!
//! Exit codes: 0 all enabled checks passed; 1 some check failed;
//! 2 configuration or usage error; 3 solver diagnostics failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kyle_core::error::Error;
use kyle_core::runner::{run_diagnostics, run_filter_solve, run_iv_curve, run_simulate, RunOverrides};
use kyle_core::scenario::Scenario;

#[derive(Parser)]
#[command(name = "kylelab", version, about = "Equilibrium lab for insider trading with stochastic noise-trading volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the Monte Carlo seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Monte Carlo path count
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory (default: config's output.directory, then ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count (results are identical for any value)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate equilibrium paths and run the statistical verifier
    Simulate(Common),
    /// Emit implied-total-variance curves for given state and uncertainty
    IvCurve {
        #[command(flatten)]
        common: Common,
        /// State value xi
        #[arg(long, default_value_t = 0.0)]
        xi: f64,
        /// Remaining uncertainty levels (comma separated)
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.25, 0.5, 0.75])]
        big_sigma: Vec<f64>,
        /// Explicit strikes (comma separated); default: 41 log-spaced
        #[arg(long, value_delimiter = ',')]
        strikes: Option<Vec<f64>>,
    },
    /// Solve the filtering problem and emit (G, Sigma, lambda) diagnostics
    FilterSolve(Common),
    /// Volatility-model diagnostics (mgf probes, Hölder/moment summaries)
    Diagnostics(Common),
}

fn overrides(c: &Common) -> RunOverrides {
    RunOverrides {
        seed: c.seed,
        n_paths: c.paths,
        out_dir: c.out.clone(),
        threads: c.threads,
    }
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Solver(_) => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Simulate(common) => {
            let scenario = Scenario::from_file(&common.config)?;
            let ov = overrides(&common);
            let artifacts = run_simulate(&scenario, &ov)?;
            for line in &artifacts.report.checks {
                println!(
                    "{} {}: {:.6e} vs {:.3e} ({})",
                    if line.pass { "PASS" } else { "FAIL" },
                    line.name,
                    line.statistic,
                    line.threshold,
                    line.detail,
                );
            }
            println!(
                "report: {} (mean profit {:.6} +/- {:.6})",
                artifacts.report_path.display(),
                artifacts.report.mean_profit,
                artifacts.report.mean_profit_se,
            );
            if let Some(p) = &artifacts.paths_path {
                println!("paths: {}", p.display());
            }
            Ok(if artifacts.report.all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::IvCurve { common, xi, big_sigma, strikes } => {
            let scenario = Scenario::from_file(&common.config)?;
            let ov = overrides(&common);
            let artifacts = run_iv_curve(&scenario, &ov, xi, &big_sigma, strikes.as_deref())?;
            for c in &artifacts.curves {
                println!(
                    "curve {}: Sigma = {}, spot = {:.6}, shape = {} ({} interior minima)",
                    c.file, c.big_sigma, c.spot, c.shape, c.interior_minima
                );
            }
            println!("metadata: {}", artifacts.metadata_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::FilterSolve(common) => {
            let scenario = Scenario::from_file(&common.config)?;
            let ov = overrides(&common);
            let artifacts = run_filter_solve(&scenario, &ov)?;
            println!(
                "backend {}: budget |err| mean {:.4e}, q99 {:.4e}, within 0.02 on {:.2}% of paths",
                artifacts.backend,
                artifacts.budget_mean_abs_err,
                artifacts.budget_q99_abs_err,
                100.0 * artifacts.budget_within_tolerance_fraction,
            );
            println!("diagnostics: {}", artifacts.diagnostics_path.display());
            let ok = artifacts.invariant_violations == 0;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Diagnostics(common) => {
            let scenario = Scenario::from_file(&common.config)?;
            let ov = overrides(&common);
            let artifacts = run_diagnostics(&scenario, &ov)?;
            for p in &artifacts.mgf_probes {
                println!(
                    "{} mgf probe t={:.3} u={:.2}: mc {:.6} vs closed {:.6} (z = {:.2})",
                    if p.pass { "PASS" } else { "FAIL" },
                    p.t,
                    p.u,
                    p.monte_carlo,
                    p.closed_form,
                    p.z
                );
            }
            for h in &artifacts.holder {
                println!(
                    "{} holder[{}] gamma0={} median {:.4} q95 {:.4}",
                    if h.stable { "PASS" } else { "FAIL" },
                    h.channel,
                    h.gamma0,
                    h.norm_median,
                    h.norm_q95
                );
            }
            println!("diagnostics: {}", artifacts.diagnostics_path.display());
            Ok(if artifacts.all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
