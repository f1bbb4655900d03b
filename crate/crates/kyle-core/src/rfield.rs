//! The space-time pricing field R and its derivatives.
//!
//! R(u, xi) solves the heat equation R_u = R_xixi / 2 with initial data
//! R(0, xi) = int_0^xi h, so for u > 0 it has the exact convolution form
//! R(u, xi) = E[A(xi + sqrt(u) Z)] with A the antiderivative of the
//! transport map h. All evaluations go through Gauss-Hermite quadrature of
//! configurable order; doubling the order is the standard stability probe.
//!
//! For mixture laws, where h itself is the result of a root find, h and A
//! are cached in piecewise-cubic tables at construction (abs+rel error
//! ~1e-12); queries beyond the table fall back to the exact root find.

use gauss_quad::legendre::GaussLegendre;

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::math::interp::{adaptive_table, MonotoneCubic};
use crate::math::quad::{integrate_panels, legendre_rule, NormalExpectation};

pub const DEFAULT_QUAD_ORDER: usize = 64;
const MIN_QUAD_ORDER: usize = 16;
/// Half-width of the cached h table for mixtures; wide enough for the
/// abscissas of a quadrupled quadrature order.
const TABLE_HALF_WIDTH: f64 = 16.0;

/// Cached transport-map machinery for one law.
#[derive(Debug, Clone)]
struct MixtureCache {
    h: MonotoneCubic,
    /// Antiderivative of the cached h, integrated piece-exactly.
    a: MonotoneCubic,
    gl: GaussLegendre,
}

#[derive(Debug, Clone)]
pub struct RField {
    spec: DistributionSpec,
    quad: NormalExpectation,
    cache: Option<MixtureCache>,
}

impl RField {
    pub fn new(spec: DistributionSpec, quad_order: usize) -> Result<Self> {
        spec.validate()?;
        if quad_order < MIN_QUAD_ORDER {
            return Err(Error::invalid(format!(
                "quadrature order must be at least {MIN_QUAD_ORDER}, got {quad_order}"
            )));
        }
        let cache = match &spec {
            DistributionSpec::LognormalMixture { .. } => {
                let h_table = adaptive_table(
                    |x| spec.transport_map(x),
                    |x| spec.transport_derivative(x),
                    -TABLE_HALF_WIDTH,
                    TABLE_HALF_WIDTH,
                    1e-12,
                    16,
                );
                let a_table = integrate_table(&h_table);
                Some(MixtureCache { h: h_table, a: a_table, gl: legendre_rule(32) })
            }
            _ => None,
        };
        Ok(RField { spec, quad: NormalExpectation::new(quad_order), cache })
    }

    pub fn with_default_order(spec: DistributionSpec) -> Result<Self> {
        Self::new(spec, DEFAULT_QUAD_ORDER)
    }

    /// Rebuild with a different quadrature order (cache reused logic-free).
    pub fn with_order(&self, quad_order: usize) -> Result<Self> {
        Self::new(self.spec.clone(), quad_order)
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn quad_order(&self) -> usize {
        self.quad.order()
    }

    /// The Gauss-Hermite rule backing all expectations.
    pub fn quad(&self) -> &NormalExpectation {
        &self.quad
    }

    /// Transport map h, table-backed for mixtures.
    pub fn h(&self, x: f64) -> f64 {
        match &self.cache {
            Some(c) if x >= c.h.lo() && x <= c.h.hi() => c.h.eval(x),
            _ => self.spec.transport_map(x),
        }
    }

    /// A(x) = int_0^x h.
    pub fn antiderivative(&self, x: f64) -> f64 {
        if let Some(a) = self.spec.antiderivative(x) {
            return a;
        }
        let c = self.cache.as_ref().expect("mixture cache present");
        if x >= c.a.lo() && x <= c.a.hi() {
            c.a.eval(x)
        } else if x > c.a.hi() {
            c.a.eval(c.a.hi())
                + integrate_panels(&c.gl, c.a.hi(), x, |t| self.spec.transport_map(t))
        } else {
            c.a.eval(c.a.lo())
                - integrate_panels(&c.gl, x, c.a.lo(), |t| self.spec.transport_map(t))
        }
    }

    fn check_u(u: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain(format!("u must lie in [0,1], got {u}")));
        }
        Ok(())
    }

    /// R(u, xi).
    pub fn r(&self, u: f64, xi: f64) -> Result<f64> {
        Self::check_u(u)?;
        if u == 0.0 {
            return Ok(self.antiderivative(xi));
        }
        let s = u.sqrt();
        Ok(self.quad.expect(|z| self.antiderivative(xi + s * z)))
    }

    /// R_xi(u, xi) = E[h(xi + sqrt(u) Z)]; nondecreasing in xi.
    pub fn r_xi(&self, u: f64, xi: f64) -> Result<f64> {
        Self::check_u(u)?;
        if u == 0.0 {
            return Ok(self.h(xi));
        }
        let s = u.sqrt();
        Ok(self.quad.expect(|z| self.h(xi + s * z)))
    }

    /// R_xixi by Gaussian integration by parts, E[h(xi + sqrt(u) Z) Z] / sqrt(u),
    /// so no derivative of h is ever required. At u = 0 only the families
    /// with a closed-form h' are defined.
    pub fn r_xixi(&self, u: f64, xi: f64) -> Result<f64> {
        Self::check_u(u)?;
        if u == 0.0 {
            return match &self.spec {
                DistributionSpec::Normal { std, .. } => Ok(*std),
                DistributionSpec::Lognormal { log_vol, .. } => Ok(log_vol * self.h(xi)),
                DistributionSpec::LognormalMixture { .. } => Err(Error::domain(
                    "R_xixi at u = 0 needs a closed-form h'; not available for mixtures",
                )),
            };
        }
        let s = u.sqrt();
        Ok(self.quad.expect(|z| self.h(xi + s * z) * z) / s)
    }

    /// Convex conjugate R^c(0, v) = v h^{-1}(v) - R(0, h^{-1}(v)), evaluated
    /// through the known maximizer xi = h^{-1}(v).
    pub fn r_conjugate(&self, v: f64) -> Result<f64> {
        let xi = self.spec.inverse_transport(v)?;
        Ok(v * xi - self.antiderivative(xi))
    }

    /// Central-difference probe of the heat equation: D_u R - D_xixi R / 2.
    /// Used by tests and diagnostics only.
    pub fn heat_residual(&self, u: f64, xi: f64, du: f64, dxi: f64) -> Result<f64> {
        if u - du < 0.0 || u + du > 1.0 {
            return Err(Error::domain(format!(
                "interior point required: u={u} du={du}"
            )));
        }
        let r_u = (self.r(u + du, xi)? - self.r(u - du, xi)?) / (2.0 * du);
        let r_xx = (self.r(u, xi + dxi)? - 2.0 * self.r(u, xi)? + self.r(u, xi - dxi)?)
            / (dxi * dxi);
        Ok(r_u - 0.5 * r_xx)
    }
}

/// Exact antiderivative of a cubic Hermite table: per-piece integrals of the
/// cubic are closed-form, and the result is re-expressed as a Hermite table
/// with slopes equal to the integrand values at the knots.
fn integrate_table(h: &MonotoneCubic) -> MonotoneCubic {
    let xs = h.knots().to_vec();
    let n = xs.len();
    let mut cumulative = vec![0.0; n];
    for i in 0..n - 1 {
        let dx = xs[i + 1] - xs[i];
        let (y0, y1) = (h.value_at(i), h.value_at(i + 1));
        let (m0, m1) = (h.slope_at(i), h.slope_at(i + 1));
        // int of the Hermite basis over one piece: h00 = h01 = 1/2, h10 = -h11 = 1/12
        let piece = dx * (0.5 * (y0 + y1) + dx * (m0 - m1) / 12.0);
        cumulative[i + 1] = cumulative[i] + piece;
    }
    // shift so that A(0) = 0
    let at_zero = {
        let tmp = MonotoneCubic::with_slopes(
            xs.clone(),
            cumulative.clone(),
            (0..n).map(|i| h.value_at(i)).collect(),
        );
        tmp.eval(0.0)
    };
    let ys: Vec<f64> = cumulative.iter().map(|c| c - at_zero).collect();
    MonotoneCubic::with_slopes(xs, ys, (0..n).map(|i| h.value_at(i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::MixtureComponent;
    use crate::math::stats;
    use crate::paths::{stream, Channel};
    use rand_distr::{Distribution, StandardNormal};

    // moderate separation: Gauss-Hermite at the default order resolves this
    // family to machine precision (steeper mixtures need the panelled rule
    // used by the option-curve code)
    fn mixture3() -> DistributionSpec {
        DistributionSpec::LognormalMixture {
            components: vec![
                MixtureComponent { scale: 0.8, log_vol: 0.25, weight: 0.30 },
                MixtureComponent { scale: 1.0, log_vol: 0.30, weight: 0.40 },
                MixtureComponent { scale: 1.3, log_vol: 0.35, weight: 0.30 },
            ],
        }
    }

    #[test]
    fn standard_normal_field_closed_form() {
        // nu = N(0,1): h = id, A = xi^2/2, R(u, xi) = (xi^2 + u) / 2
        let f = RField::with_default_order(DistributionSpec::Normal { mean: 0.0, std: 1.0 }).unwrap();
        assert!((f.r(1.0, 0.0).unwrap() - 0.5).abs() < 1e-13);
        assert!((f.r(0.3, -1.2).unwrap() - 0.5 * (1.44 + 0.3)).abs() < 1e-13);
        assert_eq!(f.r(0.0, 0.0).unwrap(), 0.0);
        assert!((f.r_xixi(0.7, 0.4).unwrap() - 1.0).abs() < 1e-10);
        // R^c(0, v) = v^2/2
        assert!((f.r_conjugate(1.7).unwrap() - 0.5 * 1.7 * 1.7).abs() < 1e-13);
        assert!(f.r_conjugate(0.0).unwrap().abs() < 1e-13);
    }

    #[test]
    fn lognormal_r_xi_matches_closed_form() {
        let (m, sv) = (1.3, 0.5);
        let f = RField::with_default_order(DistributionSpec::Lognormal { scale: m, log_vol: sv }).unwrap();
        for &(u, xi) in &[(0.0, 0.3), (0.25, -0.7), (0.5, 0.3), (1.0, 1.1)] {
            let want = m * (0.5 * sv * sv * (u - 1.0) + sv * xi).exp();
            let got = f.r_xi(u, xi).unwrap();
            assert!((got / want - 1.0).abs() < 1e-12, "u={u} xi={xi}: {got} vs {want}");
            if u > 0.0 {
                let w2 = sv * want;
                let g2 = f.r_xixi(u, xi).unwrap();
                assert!((g2 / w2 - 1.0).abs() < 1e-10, "second derivative at u={u}");
            }
        }
        // initial condition
        assert!((f.r_xi(0.0, 0.4).unwrap() - f.h(0.4)).abs() < 1e-14);
    }

    #[test]
    fn lognormal_r_matches_monte_carlo() {
        // oracle: 1e7-sample MC of A(xi + sqrt(u) Z)
        let spec = DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.5 };
        let f = RField::with_default_order(spec.clone()).unwrap();
        let (u, xi) = (0.5f64, 0.3);
        let mut rng = stream(11, 0, Channel::Aux);
        let n = 10_000_000usize;
        let mut sum = stats::KahanSum::default();
        let mut sumsq = stats::KahanSum::default();
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let a = spec.antiderivative(xi + u.sqrt() * z).unwrap();
            sum.add(a);
            sumsq.add(a * a);
        }
        let mean = sum.value() / n as f64;
        let var = (sumsq.value() / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        let got = f.r(u, xi).unwrap();
        assert!((got - mean).abs() < 3.0 * se, "quad={got} mc={mean} se={se}");
    }

    #[test]
    fn heat_residual_small_for_all_families() {
        let specs = [
            DistributionSpec::Normal { mean: 0.0, std: 1.0 },
            DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.5 },
            mixture3(),
        ];
        for spec in specs {
            let f = RField::with_default_order(spec.clone()).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..20 {
                for j in 0..20 {
                    let u = 0.05 + 0.9 * i as f64 / 19.0;
                    let xi = -2.0 + 4.0 * j as f64 / 19.0;
                    let r = f.heat_residual(u, xi, 1e-4, 1e-4).unwrap();
                    worst = worst.max(r.abs());
                }
            }
            assert!(worst <= 1e-5, "family {spec:?}: residual {worst}");
        }
    }

    #[test]
    fn convexity_in_xi() {
        for spec in [
            DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.8 },
            mixture3(),
        ] {
            let f = RField::with_default_order(spec).unwrap();
            for i in 0..6 {
                let u = i as f64 / 5.0;
                let mut prev = None;
                for j in 0..=80 {
                    let xi = -4.0 + 8.0 * j as f64 / 80.0;
                    let v = f.r(u, xi).unwrap();
                    if let Some((vm1, vm2)) = prev {
                        // second difference of a convex function
                        let dd: f64 = v - 2.0 * vm1 + vm2;
                        assert!(dd >= -1e-10, "u={u} xi={xi} dd={dd}");
                    }
                    prev = Some((v, prev.map_or(v, |p: (f64, f64)| p.0)));
                }
            }
        }
    }

    #[test]
    fn quadrature_order_doubling_is_stable() {
        for spec in [
            DistributionSpec::Normal { mean: 0.5, std: 2.0 },
            DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.5 },
            mixture3(),
        ] {
            let f64q = RField::new(spec.clone(), 64).unwrap();
            let f128 = f64q.with_order(128).unwrap();
            for &(u, xi) in &[(0.1, 0.0), (0.5, 1.0), (0.9, -1.5)] {
                let d = (f64q.r(u, xi).unwrap() - f128.r(u, xi).unwrap()).abs();
                assert!(d < 1e-10, "{spec:?} R at ({u},{xi}): {d}");
                let d1 = (f64q.r_xi(u, xi).unwrap() - f128.r_xi(u, xi).unwrap()).abs();
                assert!(d1 < 1e-10, "{spec:?} R_xi at ({u},{xi}): {d1}");
            }
        }
    }

    #[test]
    fn conjugate_matches_direct_maximization() {
        // golden-section oracle for sup_xi (xi v - R(0, xi))
        let f = RField::with_default_order(DistributionSpec::Lognormal { scale: 1.0, log_vol: 1.0 }).unwrap();
        let v = 1.0;
        let target = |xi: f64| xi * v - f.antiderivative(xi);
        let (mut a, mut b) = (-10.0, 10.0);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if target(c) > target(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let oracle = target(0.5 * (a + b));
        let got = f.r_conjugate(v).unwrap();
        assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
        assert!(got >= 0.0);
        // optimum at xi = 0 gives zero
        let h0 = f.h(0.0);
        assert!(f.r_conjugate(h0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mixture_h_table_matches_root_find() {
        let spec = mixture3();
        let f = RField::with_default_order(spec.clone()).unwrap();
        for i in 0..=200 {
            let x = -6.0 + 12.0 * i as f64 / 200.0;
            let direct = spec.transport_map(x);
            let cached = f.h(x);
            assert!(
                (cached - direct).abs() <= 1e-10 * (1.0 + direct.abs()),
                "x={x}: cached={cached} direct={direct}"
            );
        }
    }

    #[test]
    fn field_value_martingale_along_brownian_paths() {
        // V_u = R_xi(1-u, B_u) is a martingale for a standard Brownian B.
        let f = RField::with_default_order(mixture3()).unwrap();
        let n_paths = 4000;
        let n_steps = 16;
        let mut diffs = Vec::with_capacity(n_paths);
        for p in 0..n_paths {
            let mut rng = stream(31, p as u64, Channel::Aux);
            let du = 0.9 / n_steps as f64; // stay away from u = 1
            let mut b = 0.0;
            let v0 = f.r_xi(1.0, 0.0).unwrap();
            for _ in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                b += du.sqrt() * z;
            }
            let v1 = f.r_xi(1.0 - 0.9, b).unwrap();
            diffs.push(v1 - v0);
        }
        let m = stats::mean(&diffs);
        let se = stats::standard_error(&diffs);
        assert!(m.abs() < 3.0 * se, "drift {m} vs se {se}");
    }

    #[test]
    fn quadrature_tail_terms_decay() {
        // integrability guard: the outermost Gauss-Hermite contribution is
        // negligible against the total for every family
        for spec in [
            DistributionSpec::Normal { mean: 0.0, std: 1.0 },
            DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.5 },
            mixture3(),
        ] {
            let f = RField::with_default_order(spec).unwrap();
            let quad = NormalExpectation::new(64);
            let (u, xi) = (0.8f64, 0.5);
            let s = u.sqrt();
            let total = f.r(u, xi).unwrap().abs().max(1.0);
            let z_last = quad.nodes()[quad.order() - 1];
            let w_last = quad.weights()[quad.order() - 1];
            let tail = (w_last * f.antiderivative(xi + s * z_last)).abs();
            assert!(tail < 1e-12 * total, "tail {tail} total {total}");
        }
    }

    #[test]
    fn domain_errors() {
        let f = RField::with_default_order(DistributionSpec::Normal { mean: 0.0, std: 1.0 }).unwrap();
        assert!(f.r(-0.1, 0.0).is_err());
        assert!(f.r(1.1, 0.0).is_err());
        assert!(RField::new(DistributionSpec::Normal { mean: 0.0, std: 1.0 }, 8).is_err());
        let mx = RField::with_default_order(mixture3()).unwrap();
        assert!(mx.r_xixi(0.0, 0.0).is_err());
        assert!(mx.r_conjugate(-1.0).is_err());
    }
}
