//! Noise-trading volatility models and their regularity diagnostics.
//!
//! Clamped models map a nonnegative factor V through
//! `sigma = sigma_low + min(sqrt(V), sigma_high)`, so every sigma sample
//! lies in [sigma_low, sigma_low + sigma_high]. The CIR factor uses
//! full-truncation Euler; the rough factor discretizes the fractional
//! Volterra equation with the kernel integrated exactly over each step
//! against left-point-frozen coefficients.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VolModelSpec {
    /// Piecewise-constant deterministic volatility: (start_time, level)
    /// pairs, first segment starting at 0.
    Deterministic { levels: Vec<(f64, f64)> },
    /// d sigma = sigma (b dt + psi dW) with constant coefficients.
    LogDiffusion { sigma0: f64, drift: f64, vol_of_vol: f64 },
    /// CIR factor dV = (a - k V) dt + eta sqrt(V) dW, clamped into sigma.
    CirClamped {
        a: f64,
        k: f64,
        eta: f64,
        x0: f64,
        sigma_low: f64,
        sigma_high: f64,
    },
    /// Truncated Volterra square-root factor with fractional kernel
    /// K(t) = t^{alpha-1}/Gamma(alpha), alpha = hurst + 1/2.
    RoughCirClamped {
        hurst: f64,
        b0: f64,
        b1: f64,
        a1: f64,
        v_bar: f64,
        v0: f64,
        sigma_low: f64,
        sigma_high: f64,
    },
}

impl VolModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            VolModelSpec::Deterministic { levels } => {
                if levels.is_empty() {
                    return Err(Error::invalid("deterministic vol needs at least one level"));
                }
                if levels[0].0 != 0.0 {
                    return Err(Error::invalid("first vol segment must start at t = 0"));
                }
                if levels.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::invalid("vol segment times must increase"));
                }
                if levels.iter().any(|&(_, s)| !(s > 0.0)) {
                    return Err(Error::invalid("vol levels must be positive"));
                }
            }
            VolModelSpec::LogDiffusion { sigma0, drift, vol_of_vol } => {
                if !(*sigma0 > 0.0) || !drift.is_finite() || !vol_of_vol.is_finite() {
                    return Err(Error::invalid("log-diffusion vol needs sigma0 > 0 and finite coefficients"));
                }
            }
            VolModelSpec::CirClamped { a, k, eta, x0, sigma_low, sigma_high } => {
                if !(*a > 0.0 && *k > 0.0 && *eta > 0.0 && *x0 > 0.0) {
                    return Err(Error::invalid("CIR parameters must be positive"));
                }
                if 2.0 * a < eta * eta {
                    return Err(Error::invalid(format!(
                        "Feller condition violated: 2a = {} < eta^2 = {}",
                        2.0 * a,
                        eta * eta
                    )));
                }
                check_clamps(*sigma_low, *sigma_high)?;
            }
            VolModelSpec::RoughCirClamped { hurst, b0, b1, a1, v_bar, v0, sigma_low, sigma_high } => {
                if !(*hurst > 0.0 && *hurst < 0.5) {
                    return Err(Error::invalid(format!("hurst must lie in (0, 1/2), got {hurst}")));
                }
                if *b0 < 0.0 || *b1 < 0.0 || *a1 < 0.0 || !(*v_bar > 0.0) || *v0 < 0.0 {
                    return Err(Error::invalid("rough factor coefficients out of range"));
                }
                check_clamps(*sigma_low, *sigma_high)?;
            }
        }
        Ok(())
    }

    /// Bounds [lo, hi] that every sigma sample respects; for the
    /// log-diffusion model these are heuristic (paths are unbounded) and
    /// solvers flag them as such.
    pub fn sigma_bounds(&self) -> (f64, f64) {
        match self {
            VolModelSpec::Deterministic { levels } => {
                let lo = levels.iter().map(|&(_, s)| s).fold(f64::INFINITY, f64::min);
                let hi = levels.iter().map(|&(_, s)| s).fold(0.0, f64::max);
                (lo, hi)
            }
            VolModelSpec::LogDiffusion { sigma0, .. } => (sigma0 * 0.05, sigma0 * 20.0),
            VolModelSpec::CirClamped { sigma_low, sigma_high, .. }
            | VolModelSpec::RoughCirClamped { sigma_low, sigma_high, .. } => {
                (*sigma_low, *sigma_low + *sigma_high)
            }
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, VolModelSpec::Deterministic { .. })
    }

    /// Deterministic level at time t (piecewise-constant lookup).
    pub fn deterministic_level(&self, t: f64) -> Option<f64> {
        match self {
            VolModelSpec::Deterministic { levels } => {
                let mut level = levels[0].1;
                for &(start, s) in levels {
                    if t >= start {
                        level = s;
                    }
                }
                Some(level)
            }
            _ => None,
        }
    }
}

fn check_clamps(sigma_low: f64, sigma_high: f64) -> Result<()> {
    if !(sigma_low > 0.0 && sigma_high > sigma_low) {
        return Err(Error::invalid(format!(
            "clamp bounds must satisfy 0 < sigma_low < sigma_high, got {sigma_low}, {sigma_high}"
        )));
    }
    Ok(())
}

fn clamp_sigma(v: f64, sigma_low: f64, sigma_high: f64) -> f64 {
    sigma_low + v.max(0.0).sqrt().min(sigma_high)
}

/// One simulated volatility path on a grid.
#[derive(Debug, Clone)]
pub struct VolPath {
    /// sigma at every grid node.
    pub sigma: Vec<f64>,
    /// Underlying factor V where the model has one.
    pub factor: Option<Vec<f64>>,
}

/// Simulate sigma along `grid` driven by the W increments (one per step).
pub fn simulate_vol(spec: &VolModelSpec, grid: &TimeGrid, dw: &[f64]) -> Result<VolPath> {
    spec.validate()?;
    let n = grid.steps();
    if dw.len() != n {
        return Err(Error::invalid(format!(
            "driver increments ({}) must match grid steps ({n})",
            dw.len()
        )));
    }
    match spec {
        VolModelSpec::Deterministic { .. } => {
            let sigma = grid
                .nodes()
                .iter()
                .map(|&t| spec.deterministic_level(t).unwrap())
                .collect();
            Ok(VolPath { sigma, factor: None })
        }
        VolModelSpec::LogDiffusion { sigma0, drift, vol_of_vol } => {
            // exact exponential scheme for constant coefficients
            let mut sigma = Vec::with_capacity(n + 1);
            let mut log_s = sigma0.ln();
            sigma.push(*sigma0);
            for i in 0..n {
                log_s += (drift - 0.5 * vol_of_vol * vol_of_vol) * grid.dt(i) + vol_of_vol * dw[i];
                sigma.push(log_s.exp());
            }
            Ok(VolPath { sigma, factor: None })
        }
        VolModelSpec::CirClamped { a, k, eta, x0, sigma_low, sigma_high } => {
            let mut v = Vec::with_capacity(n + 1);
            v.push(*x0);
            let mut cur = *x0;
            for i in 0..n {
                let pos = cur.max(0.0);
                cur += (a - k * pos) * grid.dt(i) + eta * pos.sqrt() * dw[i];
                v.push(cur);
            }
            let sigma = v.iter().map(|&x| clamp_sigma(x, *sigma_low, *sigma_high)).collect();
            Ok(VolPath { sigma, factor: Some(v) })
        }
        VolModelSpec::RoughCirClamped { hurst, b0, b1, a1, v_bar, v0, sigma_low, sigma_high } => {
            let weights = fractional_weights(grid, *hurst);
            let v = rough_factor(grid, dw, &weights, *b0, *b1, *a1, *v_bar, *v0);
            let sigma = v.iter().map(|&x| clamp_sigma(x, *sigma_low, *sigma_high)).collect();
            Ok(VolPath { sigma, factor: Some(v) })
        }
    }
}

/// Exact step integrals of the fractional kernel:
/// w[i][j] = int_{t_j}^{t_{j+1}} K(t_i - u) du
///         = ((t_i - t_j)^alpha - (t_i - t_{j+1})^alpha) / Gamma(alpha + 1)
/// for j < i. Shared across paths on one grid.
pub fn fractional_weights(grid: &TimeGrid, hurst: f64) -> Vec<Vec<f64>> {
    let alpha = hurst + 0.5;
    let norm = gamma(alpha + 1.0);
    let t = grid.nodes();
    let n = grid.steps();
    let mut w = Vec::with_capacity(n + 1);
    w.push(Vec::new());
    for i in 1..=n {
        let mut row = Vec::with_capacity(i);
        for j in 0..i {
            let d0 = (t[i] - t[j]).powf(alpha);
            let d1 = (t[i] - t[j + 1]).powf(alpha);
            row.push((d0 - d1) / norm);
        }
        w.push(row);
    }
    w
}

fn rough_factor(
    grid: &TimeGrid,
    dw: &[f64],
    weights: &[Vec<f64>],
    b0: f64,
    b1: f64,
    a1: f64,
    v_bar: f64,
    v0: f64,
) -> Vec<f64> {
    let n = grid.steps();
    let mut v = Vec::with_capacity(n + 1);
    v.push(v0);
    // coefficients frozen at the left node of each step
    let mut drift = Vec::with_capacity(n);
    let mut diff = Vec::with_capacity(n);
    drift.push(b0 - b1 * v0);
    diff.push((a1 * v0.clamp(0.0, v_bar)).sqrt());
    for i in 1..=n {
        let row = &weights[i];
        let mut acc = v0;
        for j in 0..i {
            acc += row[j] * (drift[j] + diff[j] * dw[j] / grid.dt(j));
        }
        v.push(acc);
        if i < n {
            drift.push(b0 - b1 * acc);
            diff.push((a1 * acc.clamp(0.0, v_bar)).sqrt());
        }
    }
    v
}

/// Closed-form moment generating function E[exp(u V_t)] of the CIR factor.
pub fn cir_mgf(a: f64, k: f64, eta: f64, x: f64, t: f64, u: f64) -> Result<f64> {
    if !(a > 0.0 && k > 0.0 && eta > 0.0) || x < 0.0 || t < 0.0 {
        return Err(Error::invalid("cir_mgf needs positive (a,k,eta) and nonnegative (x,t)"));
    }
    let u0 = 2.0 * k / (eta * eta) / (1.0 - (-k).exp());
    if u >= u0 {
        return Err(Error::domain(format!("mgf undefined: u = {u} >= u0 = {u0}")));
    }
    let f = 1.0 / (1.0 - eta * eta / (2.0 * k) * (1.0 - (-k * t).exp()) * u);
    Ok(f.powf(2.0 * a / (eta * eta)) * (u * (-k * t).exp() * f * x).exp())
}

/// Pathwise Hölder-regularity diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct HolderDiagnostic {
    /// Double Riemann sum of exp(M |X_t - X_s| / |t-s|^{gamma0}) over grid
    /// pairs (the Garsia–Rodemich–Rumsey functional).
    pub f_m: f64,
    /// max over grid pairs of |X_t - X_s| / |t-s|^{gamma}.
    pub holder_norm: f64,
}

/// Riemann-sum approximation of the regularity functional and the pathwise
/// Hölder seminorm of a path sampled on `grid`. Requires gamma < gamma0.
pub fn holder_diagnostic(
    grid: &TimeGrid,
    path: &[f64],
    gamma0: f64,
    m: f64,
    gamma: f64,
) -> Result<HolderDiagnostic> {
    if gamma >= gamma0 {
        return Err(Error::invalid(format!("need gamma < gamma0, got {gamma} >= {gamma0}")));
    }
    let t = grid.nodes();
    if path.len() != t.len() {
        return Err(Error::invalid("path must be sampled on the grid nodes"));
    }
    let horizon = grid.horizon();
    let n = t.len();
    let mut f_m = 0.0;
    let mut holder: f64 = 0.0;
    for i in 0..n {
        // cell measure of node i (half-steps at the ends)
        let wi = cell(t, i) / horizon;
        for j in 0..n {
            let wj = cell(t, j) / horizon;
            if i == j {
                f_m += wi * wj; // exp(0) on the diagonal
                continue;
            }
            let ds = (t[i] - t[j]).abs();
            let dx = (path[i] - path[j]).abs();
            f_m += wi * wj * (m * dx / ds.powf(gamma0)).exp();
            holder = holder.max(dx / ds.powf(gamma));
        }
    }
    Ok(HolderDiagnostic { f_m, holder_norm: holder })
}

fn cell(t: &[f64], i: usize) -> f64 {
    let n = t.len();
    if i == 0 {
        0.5 * (t[1] - t[0])
    } else if i + 1 == n {
        0.5 * (t[n - 1] - t[n - 2])
    } else {
        0.5 * (t[i + 1] - t[i - 1])
    }
}
