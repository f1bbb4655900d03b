//! Scenario pipelines behind the CLI subcommands: execute, verify, and
//! write machine-readable artifacts (JSON reports, CSV path/curve data).
//!
//! File formats: CSV files carry a header row and full-precision floats
//! (shortest round-trip decimal form); JSON reports are pretty-printed
//! with a stable field order. Outputs contain no timestamps, so identical
//! (config, seed) runs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::equil::report::{run_mc, McConfig, McInputs, McOutcome, McReport, PathDump};
use crate::error::{Error, Result};
use crate::filter::{check_filtration, variance_budget, BackendSolution};
use crate::math::stats;
use crate::options::{default_strikes, iv_curve, IVCurve};
use crate::paths::{brownian_increments, stream, Channel};
use crate::scenario::Scenario;
use crate::vol::{cir_mgf, holder_diagnostic, simulate_vol, VolModelSpec};

/// CLI-level overrides applied on top of the scenario config.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunOverrides {
    fn mc(&self, base: &McConfig) -> McConfig {
        let mut mc = base.clone();
        if let Some(s) = self.seed {
            mc.seed = s;
        }
        if let Some(n) = self.n_paths {
            mc.n_paths = n;
        }
        mc
    }

    fn out_dir(&self, scenario: &Scenario) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| scenario.config.output.directory.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Run `f` inside a rayon pool of the requested width. Results do not
    /// depend on the width; only wall time does.
    pub fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        match self.threads {
            None => f(),
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .expect("thread pool")
                .install(f),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("report serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub struct SimulateArtifacts {
    pub report: McReport,
    pub report_path: PathBuf,
    pub paths_path: Option<PathBuf>,
}

/// vol -> filter -> equilibrium pipeline with the statistical verifier.
pub fn run_simulate(scenario: &Scenario, overrides: &RunOverrides) -> Result<SimulateArtifacts> {
    let backend = scenario.solve_backend()?;
    let mc = overrides.mc(&scenario.config.mc);
    let inputs = McInputs {
        market: &scenario.market,
        grid: &scenario.grid,
        dist: &scenario.config.dist,
        vol: &scenario.config.vol,
        rfield: &scenario.rfield,
        backend: &backend,
    };
    let outcome: Result<McOutcome> = overrides.with_pool(|| run_mc(&inputs, &mc));
    let outcome = outcome?;

    let dir = overrides.out_dir(scenario);
    ensure_dir(&dir)?;
    let report_path = dir.join("mc_report.json");
    write_json(&report_path, &outcome.report)?;
    let paths_path = if outcome.dumps.is_empty() {
        None
    } else {
        let p = dir.join("paths.csv");
        write_path_dumps(&p, scenario, &outcome.dumps)?;
        Some(p)
    };
    Ok(SimulateArtifacts { report: outcome.report, report_path, paths_path })
}

fn write_path_dumps(path: &Path, scenario: &Scenario, dumps: &[PathDump]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(
        f,
        "path,t,sigma,big_sigma,lambda,xi,x,y_hat,y_total,price,kyle_lambda,depth,profit"
    )?;
    let t = scenario.grid.nodes();
    for d in dumps {
        for i in 0..t.len() {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                d.index,
                t[i],
                d.sigma[i],
                d.big_sigma[i],
                d.lambda[i],
                d.path.xi[i],
                d.path.x[i],
                d.path.y_hat[i],
                d.path.y_total[i],
                d.path.price[i],
                d.path.kyle_lambda[i],
                d.path.depth[i],
                d.path.profit[i],
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveArtifact {
    pub file: String,
    pub xi: f64,
    pub big_sigma: f64,
    pub spot: f64,
    pub shape: String,
    pub interior_minima: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IvArtifacts {
    pub curves: Vec<CurveArtifact>,
    pub metadata_path: PathBuf,
}

/// Price call curves for each requested (xi, Sigma) and emit CSV + shape
/// metadata. An explicitly empty strike list is a usage error; when the
/// list is omitted the default rule is 41 log-spaced strikes spanning
/// +/- 3 standard deviations of the value law around the spot.
pub fn run_iv_curve(
    scenario: &Scenario,
    overrides: &RunOverrides,
    xi: f64,
    big_sigmas: &[f64],
    strikes: Option<&[f64]>,
) -> Result<IvArtifacts> {
    if big_sigmas.is_empty() {
        return Err(Error::invalid("need at least one Sigma value"));
    }
    if let Some(ks) = strikes {
        if ks.is_empty() {
            return Err(Error::invalid("explicit strike list must not be empty"));
        }
    }
    if !scenario.config.dist.positive_support() {
        return Err(Error::invalid(
            "implied-volatility curves need a positively supported value law",
        ));
    }
    let dir = overrides.out_dir(scenario);
    ensure_dir(&dir)?;
    let mut curves = Vec::new();
    let mut artifacts = Vec::new();
    for (j, &s) in big_sigmas.iter().enumerate() {
        let curve = match strikes {
            Some(ks) => iv_curve(&scenario.rfield, xi, s, ks)?,
            None => {
                let ks = default_strikes(&scenario.rfield, 41);
                iv_curve(&scenario.rfield, xi, s, &ks)?
            }
        };
        let file = format!("iv_curve_{j}.csv");
        write_curve_csv(&dir.join(&file), &curve)?;
        artifacts.push(CurveArtifact {
            file,
            xi,
            big_sigma: s,
            spot: curve.spot,
            shape: curve.shape.clone(),
            interior_minima: curve.interior_minima,
        });
        curves.push(curve);
    }
    let metadata_path = dir.join("iv_curves.json");
    write_json(&metadata_path, &artifacts)?;
    Ok(IvArtifacts { curves: artifacts, metadata_path })
}

fn write_curve_csv(path: &Path, curve: &IVCurve) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "strike,price,total_variance")?;
    for i in 0..curve.strikes.len() {
        writeln!(f, "{},{},{}", curve.strikes[i], curve.prices[i], curve.total_variance[i])?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterArtifacts {
    pub backend: String,
    pub n_paths: usize,
    pub budget_mean_abs_err: f64,
    pub budget_q99_abs_err: f64,
    pub budget_within_tolerance_fraction: f64,
    pub invariant_violations: usize,
    pub pde: Option<crate::filter::pde::PdeDiagnostics>,
    pub lsmc: Option<crate::filter::lsmc::LsmcDiagnostics>,
    pub diagnostics_path: PathBuf,
    pub paths_path: PathBuf,
}

/// Solve the filtering problem along sample paths and emit diagnostics:
/// (G, Sigma, lambda) samples, the pathwise unit variance budget, and the
/// backend's own solver records.
pub fn run_filter_solve(scenario: &Scenario, overrides: &RunOverrides) -> Result<FilterArtifacts> {
    let backend = scenario.solve_backend()?;
    let mc = overrides.mc(&scenario.config.mc);
    let n_paths = mc.n_paths;
    let dir = overrides.out_dir(scenario);
    ensure_dir(&dir)?;

    let mut budgets = Vec::with_capacity(n_paths);
    let mut violations = 0usize;
    let paths_path = dir.join("filter_paths.csv");
    let mut f = fs::File::create(&paths_path)?;
    writeln!(f, "path,t,sigma,g,u,big_sigma,lambda,budget")?;
    let keep = mc.keep_paths.max(1).min(n_paths);
    let mut w_inc = Vec::new();
    for p in 0..n_paths {
        brownian_increments(&mut stream(mc.seed, p as u64, Channel::DriverW), &scenario.grid, &mut w_inc);
        let vol_path = simulate_vol(&scenario.config.vol, &scenario.grid, &w_inc)?;
        let filt = backend.filtration(&vol_path, &scenario.market, &scenario.grid)?;
        violations += usize::from(!check_filtration(&filt).is_empty());
        let budget = variance_budget(
            &filt.lambda,
            &vol_path.sigma,
            &filt.big_sigma,
            &scenario.market,
            &scenario.grid,
        );
        budgets.push((budget - 1.0).abs());
        if p < keep {
            for (i, &t) in scenario.grid.nodes().iter().enumerate() {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{}",
                    p,
                    t,
                    vol_path.sigma[i],
                    filt.g[i],
                    filt.u_coef[i],
                    filt.big_sigma[i],
                    filt.lambda[i],
                    budget,
                )?;
            }
        }
    }
    let mut sorted = budgets.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q99 = sorted[((0.99 * (n_paths as f64 - 1.0)).round() as usize).min(n_paths - 1)];
    let within = budgets.iter().filter(|&&b| b <= 0.02).count() as f64 / n_paths as f64;

    let artifacts = FilterArtifacts {
        backend: backend.name().to_string(),
        n_paths,
        budget_mean_abs_err: stats::mean(&budgets),
        budget_q99_abs_err: q99,
        budget_within_tolerance_fraction: within,
        invariant_violations: violations,
        pde: match &backend {
            BackendSolution::MarkovPde(field) => Some(field.diagnostics.clone()),
            _ => None,
        },
        lsmc: match &backend {
            BackendSolution::PicardLsmc(sol) => Some(sol.diagnostics.clone()),
            _ => None,
        },
        diagnostics_path: dir.join("filter_diagnostics.json"),
        paths_path,
    };
    write_json(&artifacts.diagnostics_path, &artifacts)?;
    Ok(artifacts)
}

#[derive(Debug, Clone, Serialize)]
pub struct MgfProbe {
    pub t: f64,
    pub u: f64,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub standard_error: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderSummary {
    pub channel: String,
    pub gamma0: f64,
    pub gamma: f64,
    pub norm_median: f64,
    pub norm_q95: f64,
    pub exp_moment_half: Vec<f64>,
    pub exp_moment_full: Vec<f64>,
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsArtifacts {
    pub mgf_probes: Vec<MgfProbe>,
    pub holder: Vec<HolderSummary>,
    pub all_pass: bool,
    pub diagnostics_path: PathBuf,
}

/// Volatility-model diagnostics: moment-generating-function probes of the
/// CIR factor against Euler Monte Carlo, and pathwise Hölder/exponential
/// moment summaries standing in for the regularity assumptions.
pub fn run_diagnostics(scenario: &Scenario, overrides: &RunOverrides) -> Result<DiagnosticsArtifacts> {
    let dir = overrides.out_dir(scenario);
    ensure_dir(&dir)?;
    let mc = overrides.mc(&scenario.config.mc);
    let n_paths = mc.n_paths;
    let grid = &scenario.grid;

    let mut mgf_probes = Vec::new();
    if let VolModelSpec::CirClamped { a, k, eta, x0, .. } = scenario.config.vol {
        let horizon = grid.horizon();
        for (t_frac, u) in [(0.5, 0.4), (1.0, 0.5), (1.0, 0.25)] {
            let t_target = t_frac * horizon;
            let node = grid
                .nodes()
                .iter()
                .position(|&t| t >= t_target - 1e-12)
                .unwrap_or(grid.steps());
            let mut vals = Vec::with_capacity(n_paths);
            let mut w_inc = Vec::new();
            for p in 0..n_paths {
                brownian_increments(&mut stream(mc.seed, p as u64, Channel::DriverW), grid, &mut w_inc);
                let vp = simulate_vol(&scenario.config.vol, grid, &w_inc)?;
                vals.push((u * vp.factor.as_ref().unwrap()[node]).exp());
            }
            let m = stats::mean(&vals);
            let se = stats::standard_error(&vals);
            let closed = cir_mgf(a, k, eta, x0, grid.nodes()[node], u)?;
            let z = (m - closed) / se;
            mgf_probes.push(MgfProbe {
                t: grid.nodes()[node],
                u,
                closed_form: closed,
                monte_carlo: m,
                standard_error: se,
                z,
                pass: z.abs() <= 3.0,
            });
        }
    }

    // Hölder norms of sigma (and the factor where present)
    let mut holder = Vec::new();
    let channels: &[(&str, f64)] = match scenario.config.vol {
        VolModelSpec::CirClamped { .. } | VolModelSpec::RoughCirClamped { .. } => {
            &[("sigma", 0.25), ("factor", 0.5)]
        }
        _ => &[("sigma", 0.25)],
    };
    for &(channel, gamma0) in channels {
        let gamma = 0.8 * gamma0;
        let mut norms = Vec::with_capacity(n_paths);
        let mut w_inc = Vec::new();
        for p in 0..n_paths {
            brownian_increments(&mut stream(mc.seed, p as u64, Channel::DriverW), grid, &mut w_inc);
            let vp = simulate_vol(&scenario.config.vol, grid, &w_inc)?;
            let series = match channel {
                "factor" => vp.factor.clone().unwrap_or_else(|| vp.sigma.clone()),
                _ => vp.sigma.clone(),
            };
            norms.push(holder_diagnostic(grid, &series, gamma0, 1.0, gamma)?.holder_norm);
        }
        let mut sorted = norms.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[n_paths / 2];
        let q95 = sorted[((0.95 * (n_paths as f64 - 1.0)).round() as usize).min(n_paths - 1)];
        let rs = [1.0, 2.0, 4.0];
        let half: Vec<f64> = rs
            .iter()
            .map(|&r| stats::mean(&norms[..n_paths / 2].iter().map(|&h| (r * h).exp()).collect::<Vec<_>>()))
            .collect();
        let full: Vec<f64> = rs
            .iter()
            .map(|&r| stats::mean(&norms.iter().map(|&h| (r * h).exp()).collect::<Vec<_>>()))
            .collect();
        let stable = half
            .iter()
            .zip(&full)
            .all(|(h, f)| h.is_finite() && f.is_finite() && (h / f - 1.0).abs() < 0.5);
        holder.push(HolderSummary {
            channel: channel.to_string(),
            gamma0,
            gamma,
            norm_median: median,
            norm_q95: q95,
            exp_moment_half: half,
            exp_moment_full: full,
            stable,
        });
    }

    let all_pass = mgf_probes.iter().all(|p| p.pass) && holder.iter().all(|h| h.stable);
    let artifacts = DiagnosticsArtifacts {
        mgf_probes,
        holder,
        all_pass,
        diagnostics_path: dir.join("diagnostics.json"),
    };
    write_json(&artifacts.diagnostics_path, &artifacts)?;
    Ok(artifacts)
}
