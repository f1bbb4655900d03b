//! Equilibrium path simulation.
//!
//! The state is built in the u = 1 - Sigma clock, where it is an exact
//! Gaussian bridge from 0 to z = h^{-1}(value): conditional mean and
//! variance of each step are closed-form, so the terminal value is pinned
//! without any drift blow-up. An explicit Euler scheme on the time-domain
//! SDE is kept alongside purely for cross-validation.
//!
//! Per step, with u_i = 1 - Sigma_i and du_i = u_{i+1} - u_i:
//!   state:    xi_{i+1} = xi_i + (z - xi_i) du_i/Sigma_i + dbeta_i,
//!             dbeta_i = sqrt(du_i Sigma_{i+1}/Sigma_i) eps_i
//!   strategy: dX_i = (z - xi_i) du_i / (lambda_i Sigma_i)
//!   price:    P_i  = R_xi(Sigma_i, xi_i)
//!   impact:   Lambda_i = lambda_i R_xixi(Sigma_i, xi_i), depth = 1/Lambda
//!   profit:   dPi_i = (value - P_i)(z - xi_i) du_i / (lambda_i Sigma_i)
//! plus a second profit route, the time-domain Riemann sum of
//! (value - P) dX with the explicit trading rate.

pub mod report;

use crate::error::{Error, Result};
use crate::filter::FiltrationPath;
use crate::grid::{MarketParams, TimeGrid};
use crate::math::stats::KahanSum;
use crate::rfield::RField;

/// Everything one simulated equilibrium path produces.
#[derive(Debug, Clone)]
pub struct EquilibriumPath {
    /// Bridge terminal z = h^{-1}(value).
    pub z: f64,
    /// Fundamental value, equal to h(z) by the sampling coupling.
    pub value: f64,
    pub xi: Vec<f64>,
    pub x: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub y_total: Vec<f64>,
    pub price: Vec<f64>,
    /// Kyle's lambda; the terminal node repeats the last interior value
    /// (R_xixi at Sigma = 0 is not defined for every law).
    pub kyle_lambda: Vec<f64>,
    pub depth: Vec<f64>,
    /// Running realized profit in the u-clock.
    pub profit: Vec<f64>,
    /// Time-domain Riemann sum of (value - P) dX, kept as a cross-check.
    pub profit_secondary: f64,
    /// Realized bridge noise increments (the dbeta of the u-clock).
    pub beta_inc: Vec<f64>,
}

/// Shared inputs for one path simulation.
pub struct PathInputs<'a> {
    pub market: &'a MarketParams,
    pub grid: &'a TimeGrid,
    pub rfield: &'a RField,
    pub filtration: &'a FiltrationPath,
    pub sigma: &'a [f64],
    /// W increments (only used to assemble the raw order flow Y).
    pub w_inc: &'a [f64],
    /// Standard normal innovations, one per step (the B driver).
    pub eps: &'a [f64],
    pub z: f64,
    pub value: f64,
}

/// Exact Gaussian-bridge state in the u-clock. Returns the state on all
/// nodes and the realized noise increments dbeta.
pub fn simulate_state_bridge(
    filtration: &FiltrationPath,
    z: f64,
    eps: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sig = &filtration.big_sigma;
    let n = sig.len() - 1;
    if eps.len() != n {
        return Err(Error::invalid("need one innovation per step"));
    }
    if sig.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("Sigma must be strictly decreasing"));
    }
    let mut xi = Vec::with_capacity(n + 1);
    let mut beta = Vec::with_capacity(n);
    xi.push(0.0);
    for i in 0..n {
        if i + 1 == n {
            // last step: the bridge pins the terminal value exactly
            beta.push(0.0);
            xi.push(z);
            break;
        }
        let du = sig[i] - sig[i + 1];
        let pull = (z - xi[i]) * du / sig[i];
        let var = du * sig[i + 1] / sig[i];
        let db = var.sqrt() * eps[i];
        beta.push(db);
        let next = xi[i] + pull + db;
        xi.push(next);
    }
    Ok((xi, beta))
}

/// Explicit Euler scheme on the time-domain state SDE; the drift explodes
/// at the horizon, so the last step jumps to the terminal value. Exists for
/// cross-validation of the bridge only.
pub fn simulate_state_euler(
    filtration: &FiltrationPath,
    params: &MarketParams,
    grid: &TimeGrid,
    sigma: &[f64],
    z: f64,
    eps: &[f64],
) -> Result<Vec<f64>> {
    let n = grid.steps();
    if eps.len() != n {
        return Err(Error::invalid("need one innovation per step"));
    }
    let rh = params.rho_hat;
    let lam = &filtration.lambda;
    let sig = &filtration.big_sigma;
    let mut xi = Vec::with_capacity(n + 1);
    xi.push(0.0);
    for i in 0..n - 1 {
        let dt = grid.dt(i);
        let drift = lam[i] * lam[i] * rh * rh * sigma[i] * sigma[i] / sig[i] * (z - xi[i]);
        let diff = rh * lam[i] * sigma[i] * dt.sqrt() * eps[i];
        xi.push(xi[i] + drift * dt + diff);
    }
    xi.push(z);
    Ok(xi)
}

/// Left-point u-clock integral of the equilibrium trading rate.
/// Returns cumulative X and the per-step increments.
pub fn insider_strategy(
    filtration: &FiltrationPath,
    xi: &[f64],
    z: f64,
) -> (Vec<f64>, Vec<f64>) {
    let sig = &filtration.big_sigma;
    let lam = &filtration.lambda;
    let n = sig.len() - 1;
    let mut x = Vec::with_capacity(n + 1);
    let mut dx = Vec::with_capacity(n);
    x.push(0.0);
    let mut acc = KahanSum::default();
    for i in 0..n {
        let du = sig[i] - sig[i + 1];
        let d = (z - xi[i]) * du / (lam[i] * sig[i]);
        dx.push(d);
        acc.add(d);
        x.push(acc.value());
    }
    (x, dx)
}

/// Price path, Kyle's lambda and market depth along a state path.
pub fn price_and_lambda(
    rfield: &RField,
    filtration: &FiltrationPath,
    xi: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let sig = &filtration.big_sigma;
    let lam = &filtration.lambda;
    let n = sig.len() - 1;
    let mut price = Vec::with_capacity(n + 1);
    let mut kyle = Vec::with_capacity(n + 1);
    for i in 0..=n {
        price.push(rfield.r_xi(sig[i], xi[i])?);
        if i < n {
            kyle.push(lam[i] * rfield.r_xixi(sig[i], xi[i])?);
        }
    }
    kyle.push(kyle[n - 1]);
    let depth = kyle.iter().map(|&l| 1.0 / l).collect();
    Ok((price, kyle, depth))
}

/// Full equilibrium path from the shared inputs.
pub fn simulate_equilibrium_path(inp: &PathInputs) -> Result<EquilibriumPath> {
    let n = inp.grid.steps();
    let filt = inp.filtration;
    let (xi, beta_inc) = simulate_state_bridge(filt, inp.z, inp.eps)?;
    let (x, dx) = insider_strategy(filt, &xi, inp.z);
    let (price, kyle_lambda, depth) = price_and_lambda(inp.rfield, filt, &xi)?;

    // Y_hat by construction of the step identity d xi = lambda d Y_hat;
    // Y adds back the W-correlated part of the noise flow.
    let mut y_hat = Vec::with_capacity(n + 1);
    let mut y_total = Vec::with_capacity(n + 1);
    y_hat.push(0.0);
    y_total.push(0.0);
    let (mut ah, mut at) = (KahanSum::default(), KahanSum::default());
    for i in 0..n {
        let dyh = (xi[i + 1] - xi[i]) / filt.lambda[i];
        ah.add(dyh);
        y_hat.push(ah.value());
        at.add(dyh + inp.market.rho * inp.sigma[i] * inp.w_inc[i]);
        y_total.push(at.value());
    }

    // profit, both routes
    let mut profit = Vec::with_capacity(n + 1);
    profit.push(0.0);
    let mut acc_u = KahanSum::default();
    let mut acc_t = KahanSum::default();
    for i in 0..n {
        acc_u.add((inp.value - price[i]) * dx[i]);
        profit.push(acc_u.value());
        let rate = filt.lambda[i] * inp.market.rho_hat * inp.market.rho_hat * inp.sigma[i]
            * inp.sigma[i]
            / filt.big_sigma[i]
            * (inp.z - xi[i]);
        acc_t.add((inp.value - price[i]) * rate * inp.grid.dt(i));
    }

    Ok(EquilibriumPath {
        z: inp.z,
        value: inp.value,
        xi,
        x,
        y_hat,
        y_total,
        price,
        kyle_lambda,
        depth,
        profit,
        profit_secondary: acc_t.value(),
        beta_inc,
    })
}

/// Absolutely continuous departures from the equilibrium strategy. The
/// deviated state follows the pricing functional applied to the deviated
/// order flow: d xi = lambda dX + dbeta, with the same realized noise.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Deviation {
    /// Open-loop scaling c * X of the realized equilibrium strategy.
    Scale { c: f64 },
    /// No trading before fraction * T, equilibrium-form drift afterwards.
    DelayedStart { fraction: f64 },
    /// Drift toward z + shift instead of the true target.
    WrongTarget { shift: f64 },
}

impl Deviation {
    pub fn label(&self) -> String {
        match self {
            Deviation::Scale { c } => format!("scale_{c}"),
            Deviation::DelayedStart { fraction } => format!("delayed_{fraction}"),
            Deviation::WrongTarget { shift } => format!("wrong_target_{shift}"),
        }
    }
}

/// Monte Carlo profit of a deviated strategy on one path, priced through
/// the equilibrium pricing rule.
pub fn deviation_profit(
    dev: &Deviation,
    inp: &PathInputs,
    equilibrium: &EquilibriumPath,
) -> Result<f64> {
    let filt = inp.filtration;
    let sig = &filt.big_sigma;
    let lam = &filt.lambda;
    let n = sig.len() - 1;
    let t = inp.grid.nodes();
    let horizon = inp.grid.horizon();
    let mut xi = 0.0f64;
    let mut acc = KahanSum::default();
    for i in 0..n {
        let du = sig[i] - sig[i + 1];
        let dx = match dev {
            Deviation::Scale { c } => c * (equilibrium.x[i + 1] - equilibrium.x[i]),
            Deviation::DelayedStart { fraction } => {
                if t[i] < fraction * horizon {
                    0.0
                } else {
                    (inp.z - xi) * du / (lam[i] * sig[i])
                }
            }
            Deviation::WrongTarget { shift } => (inp.z + shift - xi) * du / (lam[i] * sig[i]),
        };
        let price = inp.rfield.r_xi(sig[i], xi)?;
        acc.add((inp.value - price) * dx);
        xi += lam[i] * dx + equilibrium.beta_inc[i];
    }
    Ok(acc.value())
}
