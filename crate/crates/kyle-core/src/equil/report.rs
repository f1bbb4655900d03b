//! Monte Carlo verification of the equilibrium structure.
//!
//! Each statistical claim becomes one check line: martingale drifts of the
//! state, the price and 1/lambda; submartingale drifts of Kyle's lambda
//! and of depth; terminal pinning; the profit formula; conditional
//! variance/normality of the state (run under a common Sigma path, i.e.
//! deterministic volatility or a frozen W); lognormal log-return moments;
//! inconspicuous trading; and the deviation profit bound. Statistics are
//! normalized so every line reads "statistic vs threshold".

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{deviation_profit, simulate_equilibrium_path, Deviation, EquilibriumPath, PathInputs};
use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::filter::{variance_budget, BackendSolution, FiltrationPath};
use crate::grid::{MarketParams, TimeGrid};
use crate::math::stats;
use crate::paths::{brownian_increments, stream, Channel};
use crate::rfield::RField;
use crate::vol::{simulate_vol, VolModelSpec, VolPath};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Share one W path (volatility and filtration) across all paths, so
    /// conditional tests pool over a common Sigma.
    pub frozen_w: bool,
    pub n_buckets: usize,
    /// Deviated strategies to price on the same noise (empty: none).
    pub deviations: Vec<Deviation>,
    /// Retain this many full paths for file dumps.
    pub keep_paths: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_paths: 10_000,
            seed: 1,
            frozen_w: false,
            n_buckets: 8,
            deviations: Vec::new(),
            keep_paths: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmp {
    /// pass iff statistic <= threshold
    Le,
    /// pass iff statistic >= threshold
    Ge,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestLine {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub cmp: Cmp,
    pub pass: bool,
    pub detail: String,
}

impl TestLine {
    fn new(name: impl Into<String>, statistic: f64, threshold: f64, cmp: Cmp, detail: impl Into<String>) -> Self {
        let pass = match cmp {
            Cmp::Le => statistic <= threshold,
            Cmp::Ge => statistic >= threshold,
        } && statistic.is_finite();
        TestLine { name: name.into(), statistic, threshold, cmp, pass, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub backend: String,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub frozen_w: bool,
    pub lambda0: f64,
    pub mean_profit: f64,
    pub mean_profit_se: f64,
    pub profit_target_mean: f64,
    pub checks: Vec<TestLine>,
    pub all_pass: bool,
}

/// Full per-path dump for file output.
#[derive(Debug, Clone)]
pub struct PathDump {
    pub index: usize,
    pub sigma: Vec<f64>,
    pub big_sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub path: EquilibriumPath,
}

pub struct McInputs<'a> {
    pub market: &'a MarketParams,
    pub grid: &'a TimeGrid,
    pub dist: &'a DistributionSpec,
    pub vol: &'a VolModelSpec,
    pub rfield: &'a RField,
    pub backend: &'a BackendSolution,
}

pub struct McOutcome {
    pub report: McReport,
    pub dumps: Vec<PathDump>,
}

struct PathSummary {
    pi_u: f64,
    pi_t: f64,
    target: f64,
    terminal_price_err: f64,
    terminal_state_err: f64,
    step_identity_err: f64,
    xi_probe: f64,
    xi_end: f64,
    sigma_probe: f64,
    logret: f64,
    qcov: f64,
    budget: f64,
    bucket_xi: Vec<f64>,
    bucket_price: Vec<f64>,
    bucket_inv_lambda: Vec<f64>,
    bucket_kyle: Vec<f64>,
    bucket_depth: Vec<f64>,
    bucket_x: Vec<f64>,
    dev_profits: Vec<f64>,
}

fn bucket_edges(last: usize, n_buckets: usize) -> Vec<usize> {
    (0..=n_buckets).map(|k| k * last / n_buckets).collect()
}

fn increments(values: &[f64], edges: &[usize]) -> Vec<f64> {
    edges.windows(2).map(|w| values[w[1]] - values[w[0]]).collect()
}

fn zscore(mean: f64, se: f64) -> f64 {
    if se == 0.0 {
        if mean.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        mean / se
    }
}

/// Column-wise bucket z-scores across paths.
fn bucket_z(rows: &[&Vec<f64>]) -> Vec<f64> {
    let nb = rows[0].len();
    (0..nb)
        .map(|k| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            zscore(stats::mean(&col), stats::standard_error(&col))
        })
        .collect()
}

pub fn run_mc(inputs: &McInputs, cfg: &McConfig) -> Result<McOutcome> {
    if cfg.n_paths < 100 {
        return Err(Error::invalid("need at least 100 Monte Carlo paths"));
    }
    let n = inputs.grid.steps();
    if n < 2 * cfg.n_buckets {
        return Err(Error::invalid("grid too coarse for the requested buckets"));
    }
    let deterministic_vol = inputs.vol.is_deterministic();
    let common_sigma = cfg.frozen_w || deterministic_vol;

    // shared structures under a frozen W (or a W-independent backend)
    let mut shared: Option<(Vec<f64>, VolPath, FiltrationPath)> = None;
    if cfg.frozen_w || deterministic_vol {
        let mut w_inc = Vec::new();
        brownian_increments(&mut stream(cfg.seed, 0, Channel::DriverW), inputs.grid, &mut w_inc);
        let vol_path = simulate_vol(inputs.vol, inputs.grid, &w_inc)?;
        let filtration = inputs.backend.filtration(&vol_path, inputs.market, inputs.grid)?;
        shared = Some((w_inc, vol_path, filtration));
    }

    let r10 = inputs.rfield.r(1.0, 0.0)?;
    let probe = inputs
        .grid
        .nodes()
        .iter()
        .position(|&t| t >= 0.5 * inputs.grid.horizon())
        .unwrap_or(n / 2);
    let edges_full = bucket_edges(n, cfg.n_buckets);
    let edges_open = bucket_edges(n - 1, cfg.n_buckets); // Kyle's lambda lives on [0, T)

    let worker = |p: usize| -> Result<(PathSummary, Option<PathDump>)> {
        let (z, value) = inputs.dist.sample_v(&mut stream(cfg.seed, p as u64, Channel::Value));

        let (w_inc, vol_path, filtration) = match &shared {
            Some((w, v, f)) => (w.clone(), v.clone(), f.clone()),
            None => {
                let mut w = Vec::new();
                brownian_increments(&mut stream(cfg.seed, p as u64, Channel::DriverW), inputs.grid, &mut w);
                let v = simulate_vol(inputs.vol, inputs.grid, &w)?;
                let f = inputs.backend.filtration(&v, inputs.market, inputs.grid)?;
                (w, v, f)
            }
        };

        let mut rng_b = stream(cfg.seed, p as u64, Channel::DriverB);
        let eps: Vec<f64> = (0..n)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng_b))
            .collect();

        let pin = PathInputs {
            market: inputs.market,
            grid: inputs.grid,
            rfield: inputs.rfield,
            filtration: &filtration,
            sigma: &vol_path.sigma,
            w_inc: &w_inc,
            eps: &eps,
            z,
            value,
        };
        let path = simulate_equilibrium_path(&pin)?;

        let target = (r10 + inputs.rfield.r_conjugate(value)?) / filtration.lambda[0];
        let dev_profits = cfg
            .deviations
            .iter()
            .map(|d| deviation_profit(d, &pin, &path))
            .collect::<Result<Vec<f64>>>()?;

        let inv_lambda: Vec<f64> = filtration.lambda.iter().map(|&l| 1.0 / l).collect();
        let mut qcov = 0.0;
        let mut step_err: f64 = 0.0;
        for i in 0..n {
            let dxi = path.xi[i + 1] - path.xi[i];
            qcov += dxi * w_inc[i];
            let dyh = path.y_hat[i + 1] - path.y_hat[i];
            step_err = step_err.max((dxi - filtration.lambda[i] * dyh).abs());
        }
        let budget = variance_budget(
            &filtration.lambda,
            &vol_path.sigma,
            &filtration.big_sigma,
            inputs.market,
            inputs.grid,
        );

        let summary = PathSummary {
            pi_u: path.profit[n],
            pi_t: path.profit_secondary,
            target,
            terminal_price_err: (path.price[n] - value).abs(),
            terminal_state_err: (path.xi[n] - z).abs(),
            step_identity_err: step_err,
            xi_probe: path.xi[probe],
            xi_end: path.xi[n],
            sigma_probe: filtration.big_sigma[probe],
            logret: if path.price[probe] > 0.0 { (path.price[n] / path.price[probe]).ln() } else { f64::NAN },
            qcov,
            budget,
            bucket_xi: increments(&path.xi, &edges_full),
            bucket_price: increments(&path.price, &edges_full),
            bucket_inv_lambda: increments(&inv_lambda, &edges_open),
            bucket_kyle: increments(&path.kyle_lambda, &edges_open),
            bucket_depth: increments(&path.depth, &edges_open),
            bucket_x: increments(&path.x, &edges_full),
            dev_profits,
        };
        let dump = (p < cfg.keep_paths).then(|| PathDump {
            index: p,
            sigma: vol_path.sigma.clone(),
            big_sigma: filtration.big_sigma.clone(),
            lambda: filtration.lambda.clone(),
            path: path.clone(),
        });
        Ok((summary, dump))
    };

    // path order is fixed by index; rayon only changes scheduling
    let results: Vec<(PathSummary, Option<PathDump>)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(worker)
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<&PathSummary> = results.iter().map(|(s, _)| s).collect();
    let dumps: Vec<PathDump> = results.iter().filter_map(|(_, d)| d.clone()).collect();

    let lambda0 = match &shared {
        Some((_, _, f)) => f.lambda[0],
        None => {
            // lambda_0 is known at time 0; recompute from a probe path
            let mut w = Vec::new();
            brownian_increments(&mut stream(cfg.seed, 0, Channel::DriverW), inputs.grid, &mut w);
            let v = simulate_vol(inputs.vol, inputs.grid, &w)?;
            inputs.backend.filtration(&v, inputs.market, inputs.grid)?.lambda[0]
        }
    };

    let mut checks = Vec::new();
    let three = 3.0;

    // profit formula, paired against (R(1,0) + R^c(0, v)) / lambda_0
    let paired: Vec<f64> = summaries.iter().map(|s| s.pi_u - s.target).collect();
    checks.push(TestLine::new(
        "profit_formula_paired",
        zscore(stats::mean(&paired), stats::standard_error(&paired)).abs(),
        three,
        Cmp::Le,
        "z-score of mean(profit - (R(1,0)+R^c(0,v))/lambda_0)",
    ));

    let pis: Vec<f64> = summaries.iter().map(|s| s.pi_u).collect();
    let mean_profit = stats::mean(&pis);
    let mean_profit_se = stats::standard_error(&pis);
    let target_mean = {
        let t: Vec<f64> = summaries.iter().map(|s| s.target).collect();
        stats::mean(&t)
    };
    checks.push(TestLine::new(
        "profit_mean_vs_target",
        ((mean_profit - target_mean) / mean_profit_se).abs(),
        three,
        Cmp::Le,
        format!("mean profit {mean_profit:.6} vs target {target_mean:.6} (se {mean_profit_se:.2e})"),
    ));

    // the two profit routes agree up to discretization
    let gaps: Vec<f64> = summaries.iter().map(|s| s.pi_u - s.pi_t).collect();
    let rms_gap = (gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len() as f64).sqrt();
    let rms_pi = (pis.iter().map(|x| x * x).sum::<f64>() / pis.len() as f64).sqrt();
    let route_threshold = (0.01 * 2000.0 / n as f64).max(0.01);
    checks.push(TestLine::new(
        "profit_routes_agree",
        rms_gap / rms_pi.max(1e-300),
        route_threshold,
        Cmp::Le,
        format!("relative RMS of u-clock vs time-domain profit at {n} steps"),
    ));

    // terminal pinning
    let max_state = summaries.iter().map(|s| s.terminal_state_err).fold(0.0, f64::max);
    checks.push(TestLine::new(
        "terminal_state_pin",
        max_state,
        0.0,
        Cmp::Le,
        "max |xi_T - h^{-1}(v)| (bridge pins exactly)",
    ));
    let max_price = summaries.iter().map(|s| s.terminal_price_err).fold(0.0, f64::max);
    checks.push(TestLine::new(
        "terminal_price",
        max_price,
        1e-8,
        Cmp::Le,
        "max |P_T - v|",
    ));

    // step identity d xi = lambda d y_hat
    let max_step = summaries.iter().map(|s| s.step_identity_err).fold(0.0, f64::max);
    checks.push(TestLine::new(
        "step_identity",
        max_step,
        1e-12,
        Cmp::Le,
        "max |d xi - lambda d y_hat|",
    ));

    // martingale drifts per coarse time bucket
    for (name, rows) in [
        ("martingale_drift_xi", summaries.iter().map(|s| &s.bucket_xi).collect::<Vec<_>>()),
        ("martingale_drift_price", summaries.iter().map(|s| &s.bucket_price).collect::<Vec<_>>()),
        ("martingale_drift_inv_lambda", summaries.iter().map(|s| &s.bucket_inv_lambda).collect::<Vec<_>>()),
    ] {
        let zs = bucket_z(&rows);
        let worst = zs.iter().fold(0.0f64, |a, &z| a.max(z.abs()));
        checks.push(TestLine::new(
            name,
            worst,
            three,
            Cmp::Le,
            format!("worst |bucket z| over {} buckets", cfg.n_buckets),
        ));
    }

    // submartingales: bucket means >= -1 SE
    for (name, rows) in [
        ("submartingale_kyle_lambda", summaries.iter().map(|s| &s.bucket_kyle).collect::<Vec<_>>()),
        ("submartingale_depth", summaries.iter().map(|s| &s.bucket_depth).collect::<Vec<_>>()),
    ] {
        let zs = bucket_z(&rows);
        let worst = zs.iter().fold(0.0f64, |a, &z| a.max(-z));
        checks.push(TestLine::new(
            name,
            worst,
            1.0,
            Cmp::Le,
            "worst bucket -z (drift must not be significantly negative)",
        ));
    }

    // inconspicuous trading: bucket means of dX vanish
    {
        let rows: Vec<&Vec<f64>> = summaries.iter().map(|s| &s.bucket_x).collect();
        let zs = bucket_z(&rows);
        let worst = zs.iter().fold(0.0f64, |a, &z| a.max(z.abs()));
        checks.push(TestLine::new(
            "inconspicuous_trading",
            worst,
            three,
            Cmp::Le,
            "worst |bucket z| of insider trading increments",
        ));
    }

    // orthogonality of the state to W (meaningless under a frozen W)
    if !cfg.frozen_w && !deterministic_vol {
        let q: Vec<f64> = summaries.iter().map(|s| s.qcov).collect();
        checks.push(TestLine::new(
            "orthogonality_xi_w",
            zscore(stats::mean(&q), stats::standard_error(&q)).abs(),
            three,
            Cmp::Le,
            "z-score of sum d xi dW per path",
        ));
    }

    // conditional law of xi_T given time-t information (common Sigma only)
    if common_sigma {
        let diffs: Vec<f64> = summaries.iter().map(|s| s.xi_end - s.xi_probe).collect();
        let sigma_probe = summaries[0].sigma_probe;
        let var = stats::variance(&diffs);
        let var_se = sigma_probe * (2.0 / (cfg.n_paths as f64 - 1.0)).sqrt();
        checks.push(TestLine::new(
            "conditional_variance",
            ((var - sigma_probe) / var_se).abs(),
            three,
            Cmp::Le,
            format!("Var(xi_T - xi_t) = {var:.6} vs Sigma_t = {sigma_probe:.6}"),
        ));
        let (g1, se1) = stats::skewness(&diffs);
        checks.push(TestLine::new("conditional_normality_skew", (g1 / se1).abs(), three, Cmp::Le, "skewness z"));
        let (g2, se2) = stats::excess_kurtosis(&diffs);
        checks.push(TestLine::new("conditional_normality_kurtosis", (g2 / se2).abs(), three, Cmp::Le, "excess kurtosis z"));

        if let DistributionSpec::Lognormal { log_vol, .. } = inputs.dist {
            let sv2 = log_vol * log_vol;
            let rets: Vec<f64> = summaries.iter().map(|s| s.logret).collect();
            let want_mean = -0.5 * sv2 * sigma_probe;
            let want_var = sv2 * sigma_probe;
            checks.push(TestLine::new(
                "logreturn_conditional_mean",
                zscore(stats::mean(&rets) - want_mean, stats::standard_error(&rets)).abs(),
                three,
                Cmp::Le,
                format!("mean log-return vs -sigma_v^2 Sigma_t / 2 = {want_mean:.6}"),
            ));
            let var = stats::variance(&rets);
            let var_se = want_var * (2.0 / (cfg.n_paths as f64 - 1.0)).sqrt();
            checks.push(TestLine::new(
                "logreturn_conditional_variance",
                ((var - want_var) / var_se).abs(),
                three,
                Cmp::Le,
                format!("Var(log-return) = {var:.6} vs sigma_v^2 Sigma_t = {want_var:.6}"),
            ));
        }
    }

    // pathwise variance budget (informative for stochastic vol backends)
    if !deterministic_vol {
        let bad = summaries.iter().filter(|s| (s.budget - 1.0).abs() > 0.02).count();
        checks.push(TestLine::new(
            "variance_budget_99pct",
            bad as f64 / cfg.n_paths as f64,
            0.01,
            Cmp::Le,
            "fraction of paths with |int rho_hat^2 lambda^2 sigma^2 - 1| > 0.02",
        ));
    }

    // deviation suite: bounded above, and strictly dominated when deviating
    for (j, dev) in cfg.deviations.iter().enumerate() {
        let dv: Vec<f64> = summaries.iter().map(|s| s.dev_profits[j]).collect();
        let excess: Vec<f64> = summaries.iter().map(|s| s.dev_profits[j] - s.target).collect();
        checks.push(TestLine::new(
            format!("deviation_bound_{}", dev.label()),
            zscore(stats::mean(&excess), stats::standard_error(&excess)),
            three,
            Cmp::Le,
            "z-score of mean(deviation profit - bound); must not exceed +3",
        ));
        let strict = match dev {
            Deviation::Scale { c } => (*c - 1.0).abs() > 1e-12,
            _ => true,
        };
        if strict {
            let shortfall: Vec<f64> = summaries
                .iter()
                .map(|s| s.pi_u - s.dev_profits[j])
                .collect();
            checks.push(TestLine::new(
                format!("deviation_strict_{}", dev.label()),
                zscore(stats::mean(&shortfall), stats::standard_error(&shortfall)),
                three,
                Cmp::Ge,
                format!(
                    "paired equilibrium-minus-deviation profit z (mean {:.5})",
                    stats::mean(&dv)
                ),
            ));
        }
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let report = McReport {
        backend: inputs.backend.name().to_string(),
        n_paths: cfg.n_paths,
        n_steps: n,
        seed: cfg.seed,
        frozen_w: cfg.frozen_w,
        lambda0,
        mean_profit,
        mean_profit_se,
        profit_target_mean: target_mean,
        checks,
        all_pass,
    };
    Ok(McOutcome { report, dumps })
}
