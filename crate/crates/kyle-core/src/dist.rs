//! Laws of the fundamental value and the monotone map pushing N(0,1)
//! forward to them.
//!
//! The map `h = F_nu^{-1} ∘ Phi` is closed-form for the normal and
//! lognormal families. For lognormal mixtures the forward map is solved by
//! bisection (to width 1e-12 in probability) polished with Newton steps on
//! the mixture cdf; the inverse map is always the closed composition
//! `Phi^{-1}(F_nu(v))`.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::normal;

pub const MIXTURE_WEIGHT_TOL: f64 = 1e-12;
/// Bisection tolerance for the mixture forward map, in probability.
const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    /// Scale m_i > 0; the component mean is exactly m_i.
    pub scale: f64,
    /// Log volatility sigma_i > 0.
    pub log_vol: f64,
    /// Nonnegative weight; weights sum to 1.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistributionSpec {
    Normal { mean: f64, std: f64 },
    /// Law of m * exp(-log_vol^2/2 + log_vol * Z); the mean is m.
    Lognormal { scale: f64, log_vol: f64 },
    LognormalMixture { components: Vec<MixtureComponent> },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Normal { mean, std } => {
                if !std.is_finite() || *std <= 0.0 || !mean.is_finite() {
                    return Err(Error::invalid(format!(
                        "normal law requires finite mean and std > 0, got mean={mean} std={std}"
                    )));
                }
            }
            DistributionSpec::Lognormal { scale, log_vol } => {
                if !(*scale > 0.0) || !(*log_vol > 0.0) {
                    return Err(Error::invalid(format!(
                        "lognormal law requires scale > 0 and log_vol > 0, got {scale}, {log_vol}"
                    )));
                }
            }
            DistributionSpec::LognormalMixture { components } => {
                if components.is_empty() {
                    return Err(Error::invalid("mixture needs at least one component"));
                }
                let mut total = 0.0;
                for c in components {
                    if !(c.scale > 0.0) || !(c.log_vol > 0.0) || c.weight < 0.0 {
                        return Err(Error::invalid(format!(
                            "mixture component out of range: {c:?}"
                        )));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > MIXTURE_WEIGHT_TOL {
                    return Err(Error::invalid(format!(
                        "mixture weights must sum to 1 (got {total})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when the law lives on (0, inf).
    pub fn positive_support(&self) -> bool {
        !matches!(self, DistributionSpec::Normal { .. })
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Normal { mean, .. } => *mean,
            DistributionSpec::Lognormal { scale, .. } => *scale,
            DistributionSpec::LognormalMixture { components } => {
                components.iter().map(|c| c.weight * c.scale).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            DistributionSpec::Normal { std, .. } => std * std,
            DistributionSpec::Lognormal { scale, log_vol } => {
                scale * scale * ((log_vol * log_vol).exp() - 1.0)
            }
            DistributionSpec::LognormalMixture { components } => {
                let m = self.mean();
                let second: f64 = components
                    .iter()
                    .map(|c| c.weight * c.scale * c.scale * (c.log_vol * c.log_vol).exp())
                    .sum();
                second - m * m
            }
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Cumulative distribution function F_nu.
    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            DistributionSpec::Normal { mean, std } => normal::cdf((v - mean) / std),
            DistributionSpec::Lognormal { scale, log_vol } => lognormal_cdf(v, *scale, *log_vol),
            DistributionSpec::LognormalMixture { components } => components
                .iter()
                .map(|c| c.weight * lognormal_cdf(v, c.scale, c.log_vol))
                .sum(),
        }
    }

    /// Density f_nu.
    pub fn pdf(&self, v: f64) -> f64 {
        match self {
            DistributionSpec::Normal { mean, std } => normal::pdf((v - mean) / std) / std,
            DistributionSpec::Lognormal { scale, log_vol } => lognormal_pdf(v, *scale, *log_vol),
            DistributionSpec::LognormalMixture { components } => components
                .iter()
                .map(|c| c.weight * lognormal_pdf(v, c.scale, c.log_vol))
                .sum(),
        }
    }

    /// The transport map h(x) = F_nu^{-1}(Phi(x)).
    pub fn transport_map(&self, x: f64) -> f64 {
        match self {
            DistributionSpec::Normal { mean, std } => std * x + mean,
            DistributionSpec::Lognormal { scale, log_vol } => component_quantile(x, *scale, *log_vol),
            DistributionSpec::LognormalMixture { components } => mixture_transport(components, x),
        }
    }

    /// Derivative of the transport map, h'(x) = phi(x) / f_nu(h(x)).
    pub fn transport_derivative(&self, x: f64) -> f64 {
        match self {
            DistributionSpec::Normal { std, .. } => *std,
            DistributionSpec::Lognormal { log_vol, .. } => log_vol * self.transport_map(x),
            DistributionSpec::LognormalMixture { .. } => {
                let h = self.transport_map(x);
                normal::pdf(x) / self.pdf(h)
            }
        }
    }

    /// The inverse map h^{-1}(v) = Phi^{-1}(F_nu(v)).
    ///
    /// Values outside the support of nu are a domain error rather than
    /// +/- infinity.
    pub fn inverse_transport(&self, v: f64) -> Result<f64> {
        match self {
            DistributionSpec::Normal { mean, std } => Ok((v - mean) / std),
            DistributionSpec::Lognormal { scale, log_vol } => {
                if v <= 0.0 {
                    return Err(Error::domain(format!(
                        "value {v} outside the positive support of the lognormal law"
                    )));
                }
                Ok(((v / scale).ln() + 0.5 * log_vol * log_vol) / log_vol)
            }
            DistributionSpec::LognormalMixture { components } => {
                if v <= 0.0 {
                    return Err(Error::domain(format!(
                        "value {v} outside the positive support of the mixture law"
                    )));
                }
                // work in whichever tail keeps relative precision
                let p = self.cdf(v);
                if p <= 0.5 {
                    if p <= 0.0 {
                        return Err(Error::domain(format!(
                            "value {v} maps to probability 0; out of invertible range"
                        )));
                    }
                    Ok(normal::quantile(p))
                } else {
                    let s: f64 = components
                        .iter()
                        .map(|c| c.weight * lognormal_sf(v, c.scale, c.log_vol))
                        .sum();
                    if s <= 0.0 {
                        return Err(Error::domain(format!(
                            "value {v} maps to probability 1; out of invertible range"
                        )));
                    }
                    Ok(-normal::quantile(s))
                }
            }
        }
    }

    /// Draw (z, v = h(z)) with z standard normal. The coupling v = h(z) is
    /// kept exact so the terminal condition of the state bridge is z itself.
    pub fn sample_v(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let z: f64 = StandardNormal.sample(rng);
        (z, self.transport_map(z))
    }

    /// Closed-form antiderivative A(x) = int_0^x h, available outside the
    /// mixture family (the mixture case is integrated numerically by the
    /// pricing field, which caches h).
    pub fn antiderivative(&self, x: f64) -> Option<f64> {
        match self {
            DistributionSpec::Normal { mean, std } => Some(0.5 * std * x * x + mean * x),
            DistributionSpec::Lognormal { scale, log_vol } => {
                let a = scale / log_vol * (-0.5 * log_vol * log_vol).exp();
                Some(a * ((log_vol * x).exp() - 1.0))
            }
            DistributionSpec::LognormalMixture { .. } => None,
        }
    }
}

fn lognormal_cdf(v: f64, scale: f64, log_vol: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    normal::cdf(((v / scale).ln() + 0.5 * log_vol * log_vol) / log_vol)
}

/// Upper tail P(X > v) with full relative precision.
fn lognormal_sf(v: f64, scale: f64, log_vol: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    normal::sf(((v / scale).ln() + 0.5 * log_vol * log_vol) / log_vol)
}

fn lognormal_pdf(v: f64, scale: f64, log_vol: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    normal::pdf(((v / scale).ln() + 0.5 * log_vol * log_vol) / log_vol) / (log_vol * v)
}

/// Quantile of one lognormal component at probability Phi(x), in closed form.
fn component_quantile(x: f64, scale: f64, log_vol: f64) -> f64 {
    scale * (-0.5 * log_vol * log_vol + log_vol * x).exp()
}

/// Forward map of the mixture: solve F_nu(h) = Phi(x).
///
/// The root is bracketed by the extreme component quantiles at the same x
/// and bisected in log space until the bracket is 1e-12 wide in
/// probability, then polished with Newton steps. For x > 0 the equation is
/// solved in survival form, S_nu(h) = Phi(-x); both tails then retain full
/// relative precision (the cdf form cancels catastrophically near 1).
fn mixture_transport(components: &[MixtureComponent], x: f64) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in components {
        let q = component_quantile(x, c.scale, c.log_vol);
        lo = lo.min(q);
        hi = hi.max(q);
    }
    if lo >= hi {
        return lo; // single effective component
    }
    let upper = x > 0.0;
    // target and monotone objective: F(v) - p for the lower tail,
    // q - S(v) for the upper tail; both increase in v
    let target = if upper { normal::sf(x) } else { normal::cdf(x) };
    let objective = |v: f64| -> f64 {
        if upper {
            target
                - components
                    .iter()
                    .map(|c| c.weight * lognormal_sf(v, c.scale, c.log_vol))
                    .sum::<f64>()
        } else {
            components
                .iter()
                .map(|c| c.weight * lognormal_cdf(v, c.scale, c.log_vol))
                .sum::<f64>()
                - target
        }
    };
    let pdf = |v: f64| -> f64 {
        components
            .iter()
            .map(|c| c.weight * lognormal_pdf(v, c.scale, c.log_vol))
            .sum()
    };
    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        if objective(lhi.exp()) - objective(llo.exp()) <= PROB_TOL || lhi - llo <= 1e-15 {
            break;
        }
        let mid = 0.5 * (llo + lhi);
        if objective(mid.exp()) < 0.0 {
            llo = mid;
        } else {
            lhi = mid;
        }
    }
    let mut v = (0.5 * (llo + lhi)).exp();
    for _ in 0..4 {
        let d = pdf(v);
        if d <= 0.0 {
            break;
        }
        let next = v - objective(v) / d;
        if next > 0.0 {
            v = next;
        } else {
            break;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::stats;
    use crate::paths::{stream, Channel};

    fn mixture3() -> DistributionSpec {
        DistributionSpec::LognormalMixture {
            components: vec![
                MixtureComponent { scale: 0.7, log_vol: 0.25, weight: 0.35 },
                MixtureComponent { scale: 1.0, log_vol: 0.35, weight: 0.40 },
                MixtureComponent { scale: 1.6, log_vol: 0.30, weight: 0.25 },
            ],
        }
    }

    #[test]
    fn cdf_anchor_points() {
        let ln = DistributionSpec::Lognormal { scale: 1.0, log_vol: 1.0 };
        assert!((ln.cdf((-0.5f64).exp()) - 0.5).abs() < 1e-14);
        let n = DistributionSpec::Normal { mean: 0.0, std: 1.0 };
        assert!((n.cdf(0.0) - 0.5).abs() < 1e-15);
        let mx = DistributionSpec::LognormalMixture {
            components: vec![
                MixtureComponent { scale: 1.0, log_vol: 0.5, weight: 0.5 },
                MixtureComponent { scale: 2.0, log_vol: 0.5, weight: 0.5 },
            ],
        };
        assert!((mx.cdf(1e9) - 1.0).abs() < 1e-12);
        assert_eq!(mx.cdf(0.0), 0.0);
    }

    #[test]
    fn closed_form_transports() {
        let n = DistributionSpec::Normal { mean: 2.0, std: 3.0 };
        assert_eq!(n.transport_map(1.5), 3.0 * 1.5 + 2.0);
        let ln = DistributionSpec::Lognormal { scale: 1.5, log_vol: 0.5 };
        let h = |x: f64| 1.5 * (-0.125 + 0.5 * x).exp();
        for &x in &[-2.0, 0.0, 1.3] {
            assert!((ln.transport_map(x) - h(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn mixture_map_hits_median_and_round_trips() {
        let mx = mixture3();
        let v = mx.transport_map(0.0);
        assert!((mx.cdf(v) - 0.5).abs() < 1e-11, "median mismatch: {}", mx.cdf(v));
        let x = mx.inverse_transport(mx.transport_map(1.3)).unwrap();
        assert!((x - 1.3).abs() < 1e-8, "round trip drift: {x}");
        // the other direction
        for &v in &[0.4, 0.9, 1.7, 3.0] {
            let back = mx.transport_map(mx.inverse_transport(v).unwrap());
            assert!((back - v).abs() < 1e-8 * v.max(1.0), "v={v} back={back}");
        }
    }

    #[test]
    fn monotone_on_dense_grid() {
        for spec in [
            DistributionSpec::Normal { mean: -1.0, std: 0.7 },
            DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.8 },
            mixture3(),
        ] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=400 {
                let x = -6.0 + 12.0 * i as f64 / 400.0;
                let h = spec.transport_map(x);
                assert!(h >= prev, "h not monotone at x={x}");
                prev = h;
            }
        }
    }

    #[test]
    fn domain_errors_outside_support() {
        let ln = DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.5 };
        assert!(ln.inverse_transport(0.0).is_err());
        assert!(ln.inverse_transport(-1.0).is_err());
        assert!(mixture3().inverse_transport(-0.1).is_err());
        // lognormal anchor: h^{-1}(m e^{-sigma^2/2}) = 0
        assert!(ln.inverse_transport((-0.125f64).exp()).unwrap().abs() < 1e-14);
    }

    #[test]
    fn sampled_values_match_law() {
        let ln = DistributionSpec::Lognormal { scale: 1.0, log_vol: 0.5 };
        let mut rng = stream(2024, 0, Channel::Value);
        let n = 100_000;
        let mut vs = Vec::with_capacity(n);
        for _ in 0..n {
            let (z, v) = ln.sample_v(&mut rng);
            assert!((v - ln.transport_map(z)).abs() < 1e-15);
            vs.push(v);
        }
        // mean of this parameterization is the scale
        let m = stats::mean(&vs);
        let se = stats::standard_error(&vs);
        assert!((m - 1.0).abs() < 3.0 * se, "mean={m} se={se}");
        // Kolmogorov-Smirnov against the cdf (1% level)
        let d = stats::ks_distance(&mut vs, |v| ln.cdf(v));
        assert!(d < stats::ks_critical(n, 0.01), "ks={d}");
    }

    #[test]
    fn mixture_pushforward_ks() {
        let mx = mixture3();
        let mut rng = stream(7, 1, Channel::Value);
        let n = 100_000;
        let mut vs: Vec<f64> = (0..n).map(|_| mx.sample_v(&mut rng).1).collect();
        let d = stats::ks_distance(&mut vs, |v| mx.cdf(v));
        assert!(d < stats::ks_critical(n, 0.01), "ks={d}");
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(DistributionSpec::Normal { mean: 0.0, std: 0.0 }.validate().is_err());
        assert!(DistributionSpec::Lognormal { scale: -1.0, log_vol: 0.5 }.validate().is_err());
        let bad = DistributionSpec::LognormalMixture {
            components: vec![MixtureComponent { scale: 1.0, log_vol: 0.5, weight: 0.9 }],
        };
        assert!(bad.validate().is_err());
        assert!(mixture3().validate().is_ok());
    }
}
