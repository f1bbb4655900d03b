//! Quadrature rules in probabilist form.
//!
//! `gauss-quad` supplies physicist Gauss-Hermite nodes/weights (weight
//! e^{-x^2}); here they are rescaled once so that `expect` computes
//! E[f(Z)] for Z ~ N(0,1) as a plain weighted sum.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;

/// Gauss-Hermite rule recast for standard normal expectations.
#[derive(Debug, Clone)]
pub struct NormalExpectation {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalExpectation {
    pub fn new(order: usize) -> Self {
        let deg = NonZeroUsize::new(order.max(1)).unwrap();
        let rule = GaussHermite::new(deg);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for &(x, w) in rule.as_node_weight_pairs() {
            nodes.push(std::f64::consts::SQRT_2 * x);
            weights.push(w / sqrt_pi);
        }
        NormalExpectation { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Quadrature nodes z_k (standard normal abscissas).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights summing to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// E[f(Z)], Z ~ N(0,1).
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(z);
        }
        acc
    }
}

/// ∫_a^b f(x) dx by fixed-order Gauss-Legendre, split into unit-length
/// panels so accuracy does not degrade on long intervals.
pub fn integrate_panels<F: Fn(f64) -> f64>(rule: &GaussLegendre, a: f64, b: f64, f: F) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let n_panels = ((hi - lo).ceil() as usize).max(1);
    let step = (hi - lo) / n_panels as f64;
    let mut acc = 0.0;
    for i in 0..n_panels {
        let pa = lo + i as f64 * step;
        let pb = if i + 1 == n_panels { hi } else { pa + step };
        acc += rule.integrate(pa, pb, &f);
    }
    sign * acc
}

pub fn legendre_rule(order: usize) -> GaussLegendre {
    GaussLegendre::new(NonZeroUsize::new(order.max(2)).unwrap())
}
