//! Market-level constants and time discretizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizon and driver correlation. `rho_hat = sqrt(1 - rho^2)` is derived
/// once at construction so `rho^2 + rho_hat^2 = 1` holds to machine
/// precision everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub horizon: f64,
    pub rho: f64,
    pub rho_hat: f64,
}

impl MarketParams {
    pub fn new(horizon: f64, rho: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::invalid(format!("rho must satisfy |rho| < 1, got {rho}")));
        }
        Ok(MarketParams {
            horizon,
            rho,
            rho_hat: (1.0 - rho * rho).sqrt(),
        })
    }
}

/// Grid refinement tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Refinement {
    Uniform,
    /// Shrink the remaining time by `factor` once per block of steps, so
    /// nodes cluster at the horizon where the filtering variance vanishes
    /// and the insider drift explodes.
    GeometricNearEnd { factor: f64 },
}

/// Strictly increasing time nodes t_0 = 0 < ... < t_n = T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    refinement: Refinement,
}

impl TimeGrid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn refinement(&self) -> Refinement {
        self.refinement
    }

    /// Number of steps (nodes - 1).
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }
}

/// Build a time grid with `n` steps over [0, T].
///
/// The geometric-near-end rule: with factor q, the remaining time is cut by
/// the factor q once per block; blocks = min(ceil(ln 1e-12 / ln q), n/2) so
/// the final step is of order 1e-12 * T, and each block is filled with an
/// equal number of uniform substeps (earlier blocks absorb the remainder).
pub fn make_grid(n: usize, horizon: f64, refinement: Refinement) -> Result<TimeGrid> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 steps, got {n}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let nodes = match refinement {
        Refinement::Uniform => (0..=n)
            .map(|i| horizon * i as f64 / n as f64)
            .collect::<Vec<_>>(),
        Refinement::GeometricNearEnd { factor } => {
            if !(factor > 0.0 && factor < 1.0) {
                return Err(Error::invalid(format!(
                    "geometric factor must lie in (0,1), got {factor}"
                )));
            }
            let max_blocks = ((1e-12f64.ln() / factor.ln()).ceil() as usize).max(1);
            let blocks = max_blocks.min(n / 2).max(1);
            let per_block = n / blocks;
            let extra = n - per_block * blocks; // first blocks take one more step
            let mut nodes = Vec::with_capacity(n + 1);
            nodes.push(0.0);
            let mut block_start = 0.0;
            for b in 0..blocks {
                let remaining = horizon - block_start;
                let block_end = if b + 1 == blocks {
                    horizon
                } else {
                    block_start + remaining * (1.0 - factor)
                };
                let m = per_block + usize::from(b < extra);
                for k in 1..=m {
                    let t = block_start + (block_end - block_start) * k as f64 / m as f64;
                    nodes.push(t);
                }
                block_start = block_end;
            }
            nodes
        }
    };
    debug_assert_eq!(nodes.len(), n + 1);
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "grid degenerated: requested refinement produces non-increasing nodes",
        ));
    }
    Ok(TimeGrid { nodes, refinement })
}
