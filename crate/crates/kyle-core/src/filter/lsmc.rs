//! Least-squares Monte Carlo backend over Picard-truncated drivers.
//!
//! A sequence of regularized BSDEs with drivers
//!     J~^2 / (2 (J~_0/n + |y^n|)),   J~ = rho_hat sigma,
//! is solved backward on a training cloud of volatility paths; the iterates
//! grow in n (up to regression noise) and the sweep stops once the sup
//! change falls under tolerance. One backward step freezes the driver's
//! square-root profile y_s ~ h sqrt(T - s) on the step and integrates the
//! truncated driver in closed form, so the terminal layer is exact: the
//! first step back from T returns y = J~ sqrt(T - t) with no tuning.
//!
//! The conditional-expectation operator is a cubic polynomial regression on
//! the standardized cross-section of sigma, refreshed at every node.

use serde::{Deserialize, Serialize};

use super::{compute_sigma_lambda, FiltrationPath};
use crate::error::{Error, Result};
use crate::grid::{MarketParams, TimeGrid};
use crate::paths::{brownian_increments, stream, Channel};
use crate::vol::{simulate_vol, VolModelSpec};

const BASIS: usize = 4;
const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsmcConfig {
    /// Training cloud size.
    pub n_paths: usize,
    /// Picard truncation doubles per iteration; hard cap on iterations.
    pub max_picard: usize,
    /// Stop when the sup change between iterates, relative to the global
    /// scale of y, falls below this.
    pub tol: f64,
    /// Seed of the training cloud (independent of evaluation paths).
    pub seed: u64,
}

impl Default for LsmcConfig {
    fn default() -> Self {
        LsmcConfig { n_paths: 10_000, max_picard: 15, tol: 1e-4, seed: 0x5eed_15fc }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LsmcDiagnostics {
    pub picard_iterations: usize,
    pub final_truncation: f64,
    pub sup_change: f64,
    /// Fraction of grid points with y^{n+1} >= y^n - allowance.
    pub monotone_fraction: f64,
    pub converged: bool,
}

/// Fitted conditional-expectation coefficients per node, enough to evaluate
/// y (and its dW coefficient) on fresh paths.
#[derive(Debug, Clone)]
pub struct LsmcSolution {
    horizon: f64,
    rho_hat: f64,
    sqrt_rem: Vec<f64>,            // sqrt(T - t_i)
    theta: Vec<[f64; BASIS]>,      // continuation-value fit at node i
    z_fit: Vec<[f64; BASIS]>,      // dW-coefficient fit at node i
    scaler: Vec<(f64, f64, f64, f64)>, // (mean, sd, sigma_min, sigma_max)
    c_trunc: f64,
    pub diagnostics: LsmcDiagnostics,
}

impl LsmcSolution {
    fn features(&self, i: usize, sigma: f64) -> [f64; BASIS] {
        let (m, sd, lo, hi) = self.scaler[i];
        let s = if sd > 0.0 { (sigma.clamp(lo, hi) - m) / sd } else { 0.0 };
        [1.0, s, s * s, s * s * s]
    }

    fn predict(coefs: &[f64; BASIS], x: &[f64; BASIS]) -> f64 {
        coefs.iter().zip(x).map(|(c, f)| c * f).sum()
    }

    /// Continuation value E[y_{i+1} | sigma_i = sigma].
    pub fn continuation(&self, i: usize, sigma: f64) -> f64 {
        let x = self.features(i, sigma);
        Self::predict(&self.theta[i], &x).max(0.0)
    }

    /// y at node i for a path currently at `sigma`.
    pub fn y(&self, i: usize, sigma: f64) -> f64 {
        let n = self.sqrt_rem.len() - 1;
        if i >= n {
            return 0.0;
        }
        let theta = self.continuation(i, sigma);
        step_solve(
            theta,
            self.rho_hat * sigma,
            self.c_trunc,
            self.sqrt_rem[i],
            self.sqrt_rem[i + 1],
        )
    }

    /// dW coefficient of y at node i (regression estimate; diagnostics grade).
    pub fn z_y(&self, i: usize, sigma: f64) -> f64 {
        let n = self.sqrt_rem.len() - 1;
        if i >= n {
            return 0.0;
        }
        let x = self.features(i, sigma);
        Self::predict(&self.z_fit[i], &x)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Evaluate (G, U, Sigma, lambda) along a fresh sigma path.
    pub fn eval_filtration(
        &self,
        sigma: &[f64],
        params: &MarketParams,
        grid: &TimeGrid,
    ) -> Result<FiltrationPath> {
        let n = grid.steps();
        if sigma.len() != n + 1 {
            return Err(Error::invalid("sigma path must live on the grid nodes"));
        }
        let mut g = Vec::with_capacity(n + 1);
        let mut u_coef = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let y = self.y(i, sigma[i]);
            g.push(y * y);
            u_coef.push(2.0 * y * self.z_y(i, sigma[i]));
        }
        let (big_sigma, lambda) = compute_sigma_lambda(&g, sigma, params, grid)?;
        Ok(FiltrationPath { g, u_coef, big_sigma, lambda })
    }
}

/// One implicit backward step: solve
///     y = theta + int_{t_i}^{t_{i+1}} J~^2 / (2 (c + y_s)) ds
/// with y_s = h sqrt(T - s) frozen on the step (h = y / sqrt(T - t_i)).
/// The integral is closed-form; for c = 0 the root is a quadratic formula,
/// otherwise a few Newton iterations from that root.
fn step_solve(theta: f64, j_tilde: f64, c: f64, a: f64, b: f64) -> f64 {
    let theta = theta.max(0.0);
    let j2 = j_tilde * j_tilde;
    let quad_root = 0.5 * (theta + (theta * theta + 4.0 * j2 * a * (a - b)).sqrt());
    if c <= 0.0 || quad_root <= 0.0 {
        return quad_root;
    }
    let mut h = quad_root / a;
    for _ in 0..4 {
        let l = ((c + h * a) / (c + h * b)).ln();
        let d = j2 / h * ((a - b) - c / h * l);
        let l_prime = a / (c + h * a) - b / (c + h * b);
        let d_prime = -j2 / (h * h) * (a - b) + j2 * c * (2.0 * l / (h * h * h) - l_prime / (h * h));
        let phi = h * a - theta - d;
        let slope = a - d_prime;
        let next = h - phi / slope;
        if next > 0.0 {
            if (next - h).abs() <= 1e-14 * h.abs().max(1e-14) {
                h = next;
                break;
            }
            h = next;
        } else {
            h *= 0.5;
        }
    }
    h * a
}

/// Weighted cubic regression: returns coefficients on [1, s, s^2, s^3].
fn fit(features: &[[f64; BASIS]], targets: &[f64]) -> [f64; BASIS] {
    let mut xtx = [[0.0f64; BASIS]; BASIS];
    let mut xty = [0.0f64; BASIS];
    for (x, &y) in features.iter().zip(targets) {
        for r in 0..BASIS {
            xty[r] += x[r] * y;
            for c in r..BASIS {
                xtx[r][c] += x[r] * x[c];
            }
        }
    }
    for r in 0..BASIS {
        xtx[r][r] += RIDGE * features.len() as f64;
        for c in 0..r {
            xtx[r][c] = xtx[c][r];
        }
    }
    cholesky_solve(&mut xtx, xty)
}

fn cholesky_solve(m: &mut [[f64; BASIS]; BASIS], mut rhs: [f64; BASIS]) -> [f64; BASIS] {
    // in-place LL^T
    for i in 0..BASIS {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= m[i][k] * m[j][k];
            }
            if i == j {
                m[i][j] = s.max(1e-30).sqrt();
            } else {
                m[i][j] = s / m[j][j];
            }
        }
    }
    for i in 0..BASIS {
        for k in 0..i {
            rhs[i] -= m[i][k] * rhs[k];
        }
        rhs[i] /= m[i][i];
    }
    for i in (0..BASIS).rev() {
        for k in i + 1..BASIS {
            rhs[i] -= m[k][i] * rhs[k];
        }
        rhs[i] /= m[i][i];
    }
    rhs
}

pub fn solve_picard_lsmc(
    spec: &VolModelSpec,
    params: &MarketParams,
    grid: &TimeGrid,
    cfg: &LsmcConfig,
) -> Result<LsmcSolution> {
    spec.validate()?;
    if cfg.n_paths < 100 {
        return Err(Error::invalid("LSMC needs at least 100 training paths"));
    }
    let n = grid.steps();
    let horizon = grid.horizon();
    let n_paths = cfg.n_paths;
    let stride = n + 1;

    // training cloud
    let mut sigmas = vec![0.0f64; n_paths * stride];
    let mut dws = vec![0.0f64; n_paths * n];
    let mut dw = Vec::new();
    for p in 0..n_paths {
        brownian_increments(&mut stream(cfg.seed, p as u64, Channel::DriverW), grid, &mut dw);
        let vp = simulate_vol(spec, grid, &dw)?;
        sigmas[p * stride..(p + 1) * stride].copy_from_slice(&vp.sigma);
        dws[p * n..(p + 1) * n].copy_from_slice(&dw);
    }

    // per-node feature scalers from the training cross-section
    let mut scaler = Vec::with_capacity(stride);
    for i in 0..stride {
        let col: Vec<f64> = (0..n_paths).map(|p| sigmas[p * stride + i]).collect();
        let m = col.iter().sum::<f64>() / n_paths as f64;
        let var = col.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / n_paths as f64;
        let sd = var.sqrt();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        scaler.push((m, if sd > 1e-10 { sd } else { 0.0 }, lo, hi));
    }
    let sqrt_rem: Vec<f64> = grid.nodes().iter().map(|&t| (horizon - t).max(0.0).sqrt()).collect();
    let j0 = params.rho_hat * sigmas[0];

    let features_at = |i: usize, sigma: f64| -> [f64; BASIS] {
        let (m, sd, lo, hi) = scaler[i];
        let s = if sd > 0.0 { (sigma.clamp(lo, hi) - m) / sd } else { 0.0 };
        [1.0, s, s * s, s * s * s]
    };

    let mut y_prev: Option<Vec<f64>> = None;
    let mut y_cur = vec![0.0f64; n_paths * stride];
    let mut theta = vec![[0.0f64; BASIS]; n];
    let mut z_fit = vec![[0.0f64; BASIS]; n];
    let mut diagnostics = LsmcDiagnostics::default();
    let mut c_trunc = j0;
    let mut trunc_div = 1.0f64;

    let scale_guess = params.rho_hat
        * sigmas.iter().cloned().fold(0.0f64, f64::max)
        * horizon.sqrt();

    for it in 0..cfg.max_picard {
        c_trunc = j0 / trunc_div;
        // backward sweep
        let mut feats: Vec<[f64; BASIS]> = vec![[0.0; BASIS]; n_paths];
        let mut target = vec![0.0f64; n_paths];
        let mut target_z = vec![0.0f64; n_paths];
        for i in (0..n).rev() {
            for p in 0..n_paths {
                feats[p] = features_at(i, sigmas[p * stride + i]);
                let y_next = y_cur[p * stride + i + 1];
                target[p] = y_next;
                target_z[p] = y_next * dws[p * n + i] / grid.dt(i);
            }
            theta[i] = fit(&feats, &target);
            z_fit[i] = fit(&feats, &target_z);
            for p in 0..n_paths {
                let th = LsmcSolution::predict(&theta[i], &feats[p]).max(0.0);
                let jt = params.rho_hat * sigmas[p * stride + i];
                y_cur[p * stride + i] =
                    step_solve(th, jt, c_trunc, sqrt_rem[i], sqrt_rem[i + 1]);
            }
        }

        diagnostics.picard_iterations = it + 1;
        diagnostics.final_truncation = c_trunc;
        if let Some(prev) = &y_prev {
            let mut sup: f64 = 0.0;
            let mut monotone = 0usize;
            let allowance = 1e-3 * scale_guess;
            for (a, b) in prev.iter().zip(&y_cur) {
                sup = sup.max((a - b).abs());
                if *b >= *a - allowance {
                    monotone += 1;
                }
            }
            diagnostics.sup_change = sup / scale_guess.max(1e-300);
            diagnostics.monotone_fraction = monotone as f64 / y_cur.len() as f64;
            if diagnostics.sup_change < cfg.tol {
                diagnostics.converged = true;
                break;
            }
        }
        y_prev = Some(y_cur.clone());
        trunc_div *= 2.0;
    }

    if !diagnostics.converged {
        return Err(Error::solver(format!(
            "LSMC did not converge: sup_change = {:.3e} after {} Picard iterations (tol {:.1e})",
            diagnostics.sup_change, diagnostics.picard_iterations, cfg.tol
        )));
    }

    Ok(LsmcSolution {
        horizon,
        rho_hat: params.rho_hat,
        sqrt_rem,
        theta,
        z_fit,
        scaler,
        c_trunc,
        diagnostics,
    })
}
