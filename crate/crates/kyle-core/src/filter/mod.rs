//! The market maker's uncertainty dynamics: solve the singular-terminal
//! BSDE for (G, U) and derive the remaining uncertainty Sigma and the
//! price-impact weight lambda.
//!
//! Three backends share one output contract:
//! - closed form for deterministic volatility,
//! - a Markovian finite-difference solve for the clamped CIR factor,
//! - least-squares Monte Carlo over Picard-truncated drivers for any
//!   stochastic volatility.
//!
//! Conventions: `G` solves
//!     dG = -(rho_hat^2 sigma^2 - U^2 / 4G) dt + U dW,  G_T = 0,
//! with `U` the dW coefficient of G. With y = sqrt(G) the same equation
//! reads dy = -(rho_hat^2 sigma^2 / 2y) dt + z dW and U = 2 y z.

pub mod lsmc;
pub mod pde;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{MarketParams, TimeGrid};
use crate::math::stats::KahanSum;
use crate::vol::VolModelSpec;

/// Per-path filtering quantities on the grid nodes.
#[derive(Debug, Clone)]
pub struct FiltrationPath {
    /// G > 0 on [0, T), G_T = 0.
    pub g: Vec<f64>,
    /// dW coefficient of G (zero for deterministic volatility).
    pub u_coef: Vec<f64>,
    /// Sigma: starts at 1, strictly decreasing, Sigma_T = 0 exactly.
    pub big_sigma: Vec<f64>,
    /// lambda = sqrt(Sigma / G) on [0, T); the terminal node carries the
    /// finite limit, taken as the last interior value.
    pub lambda: Vec<f64>,
}

/// Solver selection for scenario configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverBackend {
    /// Pick closed form for deterministic vol, PDE for clamped CIR, LSMC
    /// otherwise.
    Auto,
    ClosedForm,
    MarkovPde,
    PicardLsmc,
}

impl Default for SolverBackend {
    fn default() -> Self {
        SolverBackend::Auto
    }
}

/// Closed-form solution for deterministic volatility:
/// G_t = rho_hat^2 int_t^T sigma_s^2 ds, U = 0, Sigma = G/G_0,
/// lambda = 1/sqrt(G_0) constant.
pub fn solve_deterministic(
    spec: &VolModelSpec,
    params: &MarketParams,
    grid: &TimeGrid,
) -> Result<FiltrationPath> {
    if !spec.is_deterministic() {
        return Err(Error::invalid("closed-form backend requires deterministic volatility"));
    }
    let n = grid.steps();
    let t = grid.nodes();
    let rh2 = params.rho_hat * params.rho_hat;
    // backward compensated tail sums of sigma^2 dt
    let mut g = vec![0.0; n + 1];
    let mut acc = KahanSum::default();
    for i in (0..n).rev() {
        let s = spec.deterministic_level(t[i]).unwrap();
        acc.add(rh2 * s * s * grid.dt(i));
        g[i] = acc.value();
    }
    let g0 = g[0];
    let big_sigma: Vec<f64> = g.iter().map(|&gi| gi / g0).collect();
    let lam = 1.0 / g0.sqrt();
    Ok(FiltrationPath {
        g,
        u_coef: vec![0.0; n + 1],
        big_sigma,
        lambda: vec![lam; n + 1],
    })
}

/// Sigma and lambda from a G path along one volatility path.
///
/// ln Sigma accumulates the left-point rule for -rho_hat^2 sigma^2 / G on
/// every interior step; the final step's integral diverges, which is what
/// pins Sigma_T = 0 exactly. lambda at T takes the finite limit value of
/// the last interior node (both Sigma and G vanish linearly there).
pub fn compute_sigma_lambda(
    g: &[f64],
    sigma: &[f64],
    params: &MarketParams,
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.steps();
    if g.len() != n + 1 || sigma.len() != n + 1 {
        return Err(Error::invalid("g and sigma must live on the grid nodes"));
    }
    if g[..n].iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("G must be strictly positive before the horizon"));
    }
    let rh2 = params.rho_hat * params.rho_hat;
    let mut big_sigma = Vec::with_capacity(n + 1);
    let mut log_sigma = KahanSum::default();
    big_sigma.push(1.0);
    for i in 1..=n {
        log_sigma.add(-rh2 * sigma[i - 1] * sigma[i - 1] / g[i - 1] * grid.dt(i - 1));
        big_sigma.push(if i == n { 0.0 } else { log_sigma.value().exp() });
    }
    let mut lambda = Vec::with_capacity(n + 1);
    for i in 0..n {
        lambda.push((big_sigma[i] / g[i]).sqrt());
    }
    lambda.push(lambda[n - 1]);
    Ok((big_sigma, lambda))
}

/// Pathwise quadrature of int_0^T rho_hat^2 lambda^2 sigma^2 ds, which the
/// time change identifies with 1 - Sigma_T = 1. Trapezoid on the interior,
/// with the final singular step taken from the square-root asymptotics of
/// G (its exact value there is Sigma at the last interior node).
pub fn variance_budget(
    lambda: &[f64],
    sigma: &[f64],
    big_sigma: &[f64],
    params: &MarketParams,
    grid: &TimeGrid,
) -> f64 {
    let n = grid.steps();
    let rh2 = params.rho_hat * params.rho_hat;
    let mut acc = KahanSum::default();
    for i in 0..n - 1 {
        let f0 = rh2 * lambda[i] * lambda[i] * sigma[i] * sigma[i];
        let f1 = rh2 * lambda[i + 1] * lambda[i + 1] * sigma[i + 1] * sigma[i + 1];
        acc.add(0.5 * (f0 + f1) * grid.dt(i));
    }
    acc.add(big_sigma[n - 1]);
    acc.value()
}

/// A solved filtering backend, ready to be evaluated along volatility paths.
#[derive(Debug)]
pub enum BackendSolution {
    /// Deterministic vol: one shared solution (W-independent).
    ClosedForm(FiltrationPath),
    MarkovPde(pde::PdeField),
    PicardLsmc(lsmc::LsmcSolution),
}

impl BackendSolution {
    pub fn name(&self) -> &'static str {
        match self {
            BackendSolution::ClosedForm(_) => "closed-form",
            BackendSolution::MarkovPde(_) => "markov-pde",
            BackendSolution::PicardLsmc(_) => "picard-lsmc",
        }
    }

    /// Filtering quantities along one volatility path.
    pub fn filtration(
        &self,
        vol_path: &crate::vol::VolPath,
        params: &MarketParams,
        grid: &TimeGrid,
    ) -> Result<FiltrationPath> {
        match self {
            BackendSolution::ClosedForm(shared) => Ok(shared.clone()),
            BackendSolution::MarkovPde(field) => {
                let factor = vol_path.factor.as_ref().ok_or_else(|| {
                    Error::invalid("PDE backend needs the volatility factor path")
                })?;
                pde::eval_filtration(field, factor, &vol_path.sigma, params, grid)
            }
            BackendSolution::PicardLsmc(sol) => sol.eval_filtration(&vol_path.sigma, params, grid),
        }
    }
}

/// Invariant checks shared by all backends; returns a list of violations.
pub fn check_filtration(path: &FiltrationPath) -> Vec<String> {
    let n = path.g.len() - 1;
    let mut problems = Vec::new();
    if path.g[..n].iter().any(|&g| !(g > 0.0)) {
        problems.push("G not strictly positive before T".into());
    }
    if path.g[n] != 0.0 {
        problems.push(format!("G_T = {} (want 0)", path.g[n]));
    }
    if (path.big_sigma[0] - 1.0).abs() > 1e-14 || path.big_sigma[n] != 0.0 {
        problems.push("Sigma endpoints wrong".into());
    }
    if path.big_sigma.windows(2).any(|w| w[1] >= w[0]) {
        problems.push("Sigma not strictly decreasing".into());
    }
    if path.lambda[..n].iter().any(|&l| !(l > 0.0)) {
        problems.push("lambda not positive".into());
    }
    problems
}
