//! Reproducible random streams and Brownian driver paths.
//!
//! Splitting rule: every stochastic quantity draws from a ChaCha8 stream
//! keyed by the master seed, with stream id `path_index * 4 + channel`
//! (channels: 0 = W, 1 = B, 2 = fundamental value, 3 = auxiliary). Results
//! are therefore a pure function of (inputs, seed) and independent of how
//! paths are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{MarketParams, TimeGrid};

/// Stream channels reserved per path.
#[derive(Debug, Clone, Copy)]
pub enum Channel {
    DriverW = 0,
    DriverB = 1,
    Value = 2,
    Aux = 3,
}

/// ChaCha stream for a (seed, path, channel) triple.
pub fn stream(seed: u64, path_index: u64, channel: Channel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index.wrapping_mul(4).wrapping_add(channel as u64));
    rng
}

/// Fill `out` with independent N(0, dt_i) increments along the grid.
pub fn brownian_increments(rng: &mut ChaCha8Rng, grid: &TimeGrid, out: &mut Vec<f64>) {
    out.clear();
    for i in 0..grid.steps() {
        let z: f64 = StandardNormal.sample(rng);
        out.push(z * grid.dt(i).sqrt());
    }
}

/// Named per-path sample channels aligned to one grid.
#[derive(Debug, Clone)]
pub struct PathSet {
    grid: TimeGrid,
    seed: u64,
    names: Vec<String>,
    /// `values[channel][path][step]` holds increments per step.
    values: Vec<Vec<Vec<f64>>>,
}

impl PathSet {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.values.first().map_or(0, |c| c.len())
    }

    pub fn channel(&self, name: &str) -> Option<&[Vec<f64>]> {
        let idx = self.names.iter().position(|n| n == name)?;
        Some(&self.values[idx])
    }
}

/// Increment paths of the two independent drivers W and B.
///
/// The correlation `rho` never enters here: it is applied downstream when
/// the noise order flow combines the drivers. Identical (grid, params,
/// n_paths, seed) reproduce identical output bit for bit.
pub fn correlated_brownian(
    grid: &TimeGrid,
    _params: &MarketParams,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    let mut w_paths = Vec::with_capacity(n_paths);
    let mut b_paths = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mut w = Vec::new();
        let mut b = Vec::new();
        brownian_increments(&mut stream(seed, p as u64, Channel::DriverW), grid, &mut w);
        brownian_increments(&mut stream(seed, p as u64, Channel::DriverB), grid, &mut b);
        w_paths.push(w);
        b_paths.push(b);
    }
    Ok(PathSet {
        grid: grid.clone(),
        seed,
        names: vec!["W".into(), "B".into()],
        values: vec![w_paths, b_paths],
    })
}

/// Cumulative path from increments, starting at 0 on the full node set.
pub fn cumulative(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for &d in increments {
        acc += d;
        out.push(acc);
    }
    out
}
