//! Markovian backend for the clamped CIR factor.
//!
//! With sigma_t = f(V_t), f(v) = sigma_low + min(sqrt(v), sigma_high), the
//! square root y of G solves the semilinear terminal-value problem
//!     y_t + L y + rho_hat^2 f(v)^2 / (2 y) = 0,  y(T, v) = 0,
//! with L the CIR generator. The singular terminal layer is removed by the
//! substitution w = y / sqrt(T - t), which satisfies
//!     w_tau = L w + (1/tau) (rho_hat^2 f^2 / (2w) - w/2),  tau = T - t,
//! with the exact boundary value w(0, v) = rho_hat f(v). The discretization
//! is implicit in the linear parts (upwinded drift, so the system matrix is
//! an M-matrix and the scheme inherits the box bounds
//! rho_hat f_min <= w <= rho_hat f_max) and lagged in the 1/(2w) source,
//! with two inner sweeps per step.

use serde::{Deserialize, Serialize};

use super::{compute_sigma_lambda, FiltrationPath};
use crate::error::{Error, Result};
use crate::grid::{MarketParams, TimeGrid};
use crate::vol::VolModelSpec;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeMesh {
    pub nt: usize,
    pub nv: usize,
}

impl Default for PdeMesh {
    fn default() -> Self {
        PdeMesh { nt: 400, nv: 200 }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PdeDiagnostics {
    /// Worst relative excursion of w outside [rho_hat f_min, rho_hat f_max].
    pub bound_violation_rel: f64,
    /// Bound check verdict (violation above 5% flags the mesh as too coarse).
    pub bounds_ok: bool,
    pub nt: usize,
    pub nv: usize,
    pub v_max: f64,
}

/// Solved field w(tau, v) with precomputed v-derivatives.
#[derive(Debug, Clone)]
pub struct PdeField {
    tau: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    w_v: Vec<f64>,
    horizon: f64,
    eta: f64,
    pub diagnostics: PdeDiagnostics,
}

struct CirCoeffs {
    a: f64,
    k: f64,
    eta: f64,
    sigma_low: f64,
    sigma_high: f64,
    x0: f64,
}

fn cir_coeffs(spec: &VolModelSpec) -> Result<CirCoeffs> {
    match spec {
        VolModelSpec::CirClamped { a, k, eta, x0, sigma_low, sigma_high } => Ok(CirCoeffs {
            a: *a,
            k: *k,
            eta: *eta,
            sigma_low: *sigma_low,
            sigma_high: *sigma_high,
            x0: *x0,
        }),
        _ => Err(Error::invalid("the PDE backend requires the clamped CIR volatility model")),
    }
}

fn clamp_map(v: f64, lo: f64, hi: f64) -> f64 {
    lo + v.max(0.0).sqrt().min(hi)
}

pub fn solve_markov_pde(
    spec: &VolModelSpec,
    params: &MarketParams,
    horizon: f64,
    mesh: PdeMesh,
) -> Result<PdeField> {
    spec.validate()?;
    let c = cir_coeffs(spec)?;
    if mesh.nt < 16 || mesh.nv < 16 {
        return Err(Error::invalid("PDE mesh too small"));
    }
    let rho_hat = params.rho_hat;
    let w_lo = rho_hat * c.sigma_low;
    let w_hi = rho_hat * (c.sigma_low + c.sigma_high);

    // v-range: stationary mean a/k plus a wide multiple of the stationary
    // standard deviation, and never below the start point
    let mean = c.a / c.k;
    let sd = (c.a * c.eta * c.eta / (2.0 * c.k * c.k)).sqrt();
    let v_max = (mean + 10.0 * sd).max(1.5 * c.x0).max(1e-6);
    let nv = mesh.nv;
    let hv = v_max / (nv - 1) as f64;
    let v: Vec<f64> = (0..nv).map(|j| j as f64 * hv).collect();
    let f2: Vec<f64> = v
        .iter()
        .map(|&vj| {
            let f = clamp_map(vj, c.sigma_low, c.sigma_high);
            rho_hat * rho_hat * f * f
        })
        .collect();

    // tau-mesh clustered quadratically at the singular layer tau = 0
    let nt = mesh.nt;
    let tau: Vec<f64> = (0..=nt)
        .map(|m| horizon * (m as f64 / nt as f64).powi(2))
        .collect();

    let mut w = vec![0.0; (nt + 1) * nv];
    for j in 0..nv {
        w[j] = f2[j].sqrt(); // rho_hat f(v)
    }

    // time-independent generator stencil (lower, diag, upper) of -L
    let mut lo = vec![0.0; nv];
    let mut di = vec![0.0; nv];
    let mut up = vec![0.0; nv];
    for j in 0..nv {
        let diffusion = 0.5 * c.eta * c.eta * v[j];
        let drift = c.a - c.k * v[j];
        let (mut l, mut d, mut u) = (0.0, 0.0, 0.0);
        if j > 0 && j + 1 < nv {
            l -= diffusion / (hv * hv);
            u -= diffusion / (hv * hv);
            d += 2.0 * diffusion / (hv * hv);
        } else if j + 1 == nv {
            // Neumann ghost at v_max: second difference collapses
            l -= diffusion / (hv * hv);
            d += diffusion / (hv * hv);
        }
        if drift >= 0.0 {
            if j + 1 < nv {
                d += drift / hv;
                u -= drift / hv;
            }
        } else if j > 0 {
            d -= drift / hv;
            l += drift / hv;
        }
        lo[j] = l;
        di[j] = d;
        up[j] = u;
    }

    let mut rhs = vec![0.0; nv];
    let mut work_l = vec![0.0; nv];
    let mut work_d = vec![0.0; nv];
    let mut work_u = vec![0.0; nv];
    let mut prev = vec![0.0; nv];
    let mut cur = vec![0.0; nv];
    for m in 0..nt {
        let dt = tau[m + 1] - tau[m];
        let tau_bar = 0.5 * (tau[m] + tau[m + 1]);
        prev.copy_from_slice(&w[m * nv..(m + 1) * nv]);
        cur.copy_from_slice(&prev);
        // two inner sweeps refresh the lagged 1/(2w) source
        for _ in 0..2 {
            for j in 0..nv {
                work_l[j] = dt * lo[j];
                work_d[j] = 1.0 + dt * di[j] + 0.5 * dt / tau_bar;
                work_u[j] = dt * up[j];
                rhs[j] = prev[j] + dt / tau_bar * f2[j] / (2.0 * cur[j]);
            }
            thomas(&work_l, &work_d, &work_u, &mut rhs, &mut cur);
        }
        w[(m + 1) * nv..(m + 2) * nv].copy_from_slice(&cur);
    }

    // bound bookkeeping
    let mut violation: f64 = 0.0;
    for &x in &w {
        if x < w_lo {
            violation = violation.max((w_lo - x) / w_lo);
        }
        if x > w_hi {
            violation = violation.max((x - w_hi) / w_hi);
        }
    }

    // v-derivative field by central differences
    let mut w_v = vec![0.0; (nt + 1) * nv];
    for m in 0..=nt {
        let row = &w[m * nv..(m + 1) * nv];
        let out = &mut w_v[m * nv..(m + 1) * nv];
        out[0] = (row[1] - row[0]) / hv;
        out[nv - 1] = (row[nv - 1] - row[nv - 2]) / hv;
        for j in 1..nv - 1 {
            out[j] = (row[j + 1] - row[j - 1]) / (2.0 * hv);
        }
    }

    let diagnostics = PdeDiagnostics {
        bound_violation_rel: violation,
        bounds_ok: violation <= 0.05,
        nt,
        nv,
        v_max,
    };
    Ok(PdeField { tau, v, w, w_v, horizon, eta: c.eta, diagnostics })
}

/// Tridiagonal solve (Thomas); rhs is scratch, result lands in `out`.
fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &mut [f64], out: &mut [f64]) {
    let n = di.len();
    let mut c_star = vec![0.0; n];
    c_star[0] = up[0] / di[0];
    rhs[0] /= di[0];
    for i in 1..n {
        let m = di[i] - lo[i] * c_star[i - 1];
        c_star[i] = up[i] / m;
        rhs[i] = (rhs[i] - lo[i] * rhs[i - 1]) / m;
    }
    out[n - 1] = rhs[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = rhs[i] - c_star[i] * out[i + 1];
    }
}

impl PdeField {
    fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
        let n = nodes.len();
        if x <= nodes[0] {
            return (0, 0.0);
        }
        if x >= nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let i = nodes.partition_point(|&t| t <= x) - 1;
        (i, (x - nodes[i]) / (nodes[i + 1] - nodes[i]))
    }

    fn interp(&self, field: &[f64], t: f64, v: f64) -> f64 {
        let tau_q = (self.horizon - t).max(0.0);
        let (i, ti) = Self::bracket(&self.tau, tau_q);
        let (j, tj) = Self::bracket(&self.v, v.clamp(self.v[0], *self.v.last().unwrap()));
        let nv = self.v.len();
        let g = |ii: usize, jj: usize| field[ii * nv + jj];
        (1.0 - ti) * ((1.0 - tj) * g(i, j) + tj * g(i, j + 1))
            + ti * ((1.0 - tj) * g(i + 1, j) + tj * g(i + 1, j + 1))
    }

    /// w(t, v) = y / sqrt(T - t).
    pub fn w_at(&self, t: f64, v: f64) -> f64 {
        self.interp(&self.w, t, v)
    }

    pub fn y(&self, t: f64, v: f64) -> f64 {
        self.w_at(t, v) * (self.horizon - t).max(0.0).sqrt()
    }

    /// dW coefficient of y along the factor: z_y = (d y / d v) eta sqrt(v).
    pub fn z_y(&self, t: f64, v: f64) -> f64 {
        let wv = self.interp(&self.w_v, t, v);
        wv * (self.horizon - t).max(0.0).sqrt() * self.eta * v.max(0.0).sqrt()
    }

    pub fn v_max(&self) -> f64 {
        *self.v.last().unwrap()
    }
}

/// Evaluate the solved field along one simulated factor path.
pub fn eval_filtration(
    field: &PdeField,
    factor: &[f64],
    sigma: &[f64],
    params: &MarketParams,
    grid: &TimeGrid,
) -> Result<FiltrationPath> {
    let n = grid.steps();
    if factor.len() != n + 1 || sigma.len() != n + 1 {
        return Err(Error::invalid("factor path must live on the grid nodes"));
    }
    let t = grid.nodes();
    let mut g = Vec::with_capacity(n + 1);
    let mut u_coef = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let y = field.y(t[i], factor[i]);
        let z = field.z_y(t[i], factor[i]);
        g.push(y * y);
        u_coef.push(2.0 * y * z);
    }
    g[n] = 0.0;
    u_coef[n] = 0.0;
    let (big_sigma, lambda) = compute_sigma_lambda(&g, sigma, params, grid)?;
    Ok(FiltrationPath { g, u_coef, big_sigma, lambda })
}
