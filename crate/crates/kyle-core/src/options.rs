//! Option pricing under the equilibrium conditional law and implied
//! total-variance curves.
//!
//! Conditionally on time-t market information the terminal state is
//! N(xi, Sigma), so any payoff H prices as a one-dimensional Gaussian
//! quadrature of H(h(xi + sqrt(Sigma) y)). Generic payoffs go through the
//! field's Gauss-Hermite rule; calls are kinked, which stalls Gaussian
//! rules, so the curve builder splits the integral at the kink
//! z_K = (h^{-1}(K) - xi)/sqrt(Sigma) and integrates the smooth part with
//! panelled Gauss-Legendre against the normal density. Implied volatility
//! is reported as total variance w = sigma_BS^2 (T - t), which depends on
//! (xi, Sigma) only and eliminates the time-to-maturity parameter.

use gauss_quad::legendre::GaussLegendre;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::normal;
use crate::math::quad::legendre_rule;
use crate::rfield::RField;

/// Implied-total-variance curve over a strike grid.
#[derive(Debug, Clone, Serialize)]
pub struct IVCurve {
    pub xi: f64,
    pub big_sigma: f64,
    pub spot: f64,
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    pub total_variance: Vec<f64>,
    /// Count of strict interior local minima after 3-point median filtering.
    pub interior_minima: usize,
    /// "flat", "smile" or "w-shaped" per the minima count and curve range.
    pub shape: String,
}

/// E[H(h(xi + sqrt(Sigma) Z))] by Gauss-Hermite quadrature; Sigma = 0
/// collapses to H(h(xi)).
pub fn option_price<H: Fn(f64) -> f64>(rfield: &RField, xi: f64, big_sigma: f64, payoff: H) -> Result<f64> {
    if !(0.0..=1.0).contains(&big_sigma) {
        return Err(Error::domain(format!("Sigma must lie in [0,1], got {big_sigma}")));
    }
    if big_sigma == 0.0 {
        return Ok(payoff(rfield.h(xi)));
    }
    let s = big_sigma.sqrt();
    Ok(rfield.quad().expect(|y| payoff(rfield.h(xi + s * y))))
}

/// Integrate f(z) phi(z) dz over [lo, hi] in unit panels.
fn normal_panels<F: Fn(f64) -> f64>(rule: &GaussLegendre, lo: f64, hi: f64, f: F) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let n_panels = ((hi - lo).ceil() as usize).max(1);
    let step = (hi - lo) / n_panels as f64;
    let mut acc = 0.0;
    for i in 0..n_panels {
        let a = lo + i as f64 * step;
        let b = if i + 1 == n_panels { hi } else { a + step };
        acc += rule.integrate(a, b, |z| f(z) * normal::pdf(z));
    }
    acc
}

const Z_CUTOFF: f64 = 12.0;

/// Call price E[(h(xi + sqrt(Sigma) Z) - K)^+] with the kink split out:
/// the integrand is smooth on [z_K, inf), so panelled Gauss-Legendre
/// converges spectrally where the raw Gauss-Hermite rule stalls.
pub fn call_price(rfield: &RField, xi: f64, big_sigma: f64, strike: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&big_sigma) {
        return Err(Error::domain(format!("Sigma must lie in [0,1], got {big_sigma}")));
    }
    if !(strike > 0.0) {
        return Err(Error::domain(format!("strike must be positive, got {strike}")));
    }
    if big_sigma == 0.0 {
        return Ok((rfield.h(xi) - strike).max(0.0));
    }
    let s = big_sigma.sqrt();
    let z_k = match rfield.spec().inverse_transport(strike) {
        Ok(x_k) => (x_k - xi) / s,
        Err(_) => -Z_CUTOFF, // strike below the support: whole density is in the money
    };
    let lo = z_k.max(-Z_CUTOFF);
    if lo >= Z_CUTOFF {
        return Ok(0.0);
    }
    let rule = legendre_rule((rfield.quad_order() / 2).clamp(16, 96));
    Ok(normal_panels(&rule, lo, Z_CUTOFF, |z| (rfield.h(xi + s * z) - strike).max(0.0)))
}

/// Forward E[h(xi + sqrt(Sigma) Z)] through the same panelled rule, so
/// curve prices and their forward are mutually consistent to quadrature
/// accuracy even for steep mixture maps.
pub fn forward_price(rfield: &RField, xi: f64, big_sigma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&big_sigma) {
        return Err(Error::domain(format!("Sigma must lie in [0,1], got {big_sigma}")));
    }
    if big_sigma == 0.0 {
        return Ok(rfield.h(xi));
    }
    let s = big_sigma.sqrt();
    let rule = legendre_rule((rfield.quad_order() / 2).clamp(16, 96));
    Ok(normal_panels(&rule, -Z_CUTOFF, Z_CUTOFF, |z| rfield.h(xi + s * z)))
}

/// Zero-rate call price parameterized by total variance w = sigma^2 tau.
pub fn bs_price(spot: f64, strike: f64, total_variance: f64) -> Result<f64> {
    if !(spot > 0.0) || !(strike > 0.0) {
        return Err(Error::domain(format!("need positive spot and strike, got {spot}, {strike}")));
    }
    if total_variance < 0.0 {
        return Err(Error::domain(format!("negative total variance {total_variance}")));
    }
    if total_variance == 0.0 {
        return Ok((spot - strike).max(0.0));
    }
    let sq = total_variance.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * total_variance) / sq;
    let d2 = d1 - sq;
    Ok(spot * normal::cdf(d1) - strike * normal::cdf(d2))
}

/// Invert the call formula for total variance: bisection to a bracket of
/// width 1e-12, then Newton polish. Prices outside the no-arbitrage band
/// ((S-K)^+, S) are a domain error.
pub fn implied_total_variance(price: f64, spot: f64, strike: f64) -> Result<f64> {
    if !(spot > 0.0) || !(strike > 0.0) {
        return Err(Error::domain("need positive spot and strike".to_string()));
    }
    let intrinsic = (spot - strike).max(0.0);
    let time_value = price - intrinsic;
    if time_value <= 1e-14 * spot {
        if time_value >= -1e-12 * spot {
            return Ok(0.0);
        }
        return Err(Error::domain(format!(
            "price {price} below intrinsic {intrinsic}"
        )));
    }
    if price >= spot {
        return Err(Error::domain(format!("price {price} at or above spot {spot}")));
    }
    let (mut lo, mut hi) = (0.0f64, 4.0f64);
    while bs_price(spot, strike, hi)? < price {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::domain("implied variance out of range".to_string()));
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if bs_price(spot, strike, mid)? < price {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut w = 0.5 * (lo + hi);
    // vega in total-variance units: dC/dw = S phi(d1) / (2 sqrt(w))
    for _ in 0..3 {
        let sq = w.sqrt();
        if sq == 0.0 {
            break;
        }
        let d1 = ((spot / strike).ln() + 0.5 * w) / sq;
        let vega_w = spot * normal::pdf(d1) / (2.0 * sq);
        if vega_w <= 0.0 {
            break;
        }
        let next = w - (bs_price(spot, strike, w)? - price) / vega_w;
        if next > 0.0 {
            w = next;
        } else {
            break;
        }
    }
    Ok(w)
}

/// Default strike rule: `count` log-spaced strikes across the +/- 3
/// standard-deviation span of the value law in transport coordinates,
/// i.e. [h(-3), h(3)]. (A spot +/- 3 std band dips below zero for these
/// right-skewed laws and would fill the lower wing with strikes whose
/// time value is unresolvable in double precision.)
pub fn default_strikes(rfield: &RField, count: usize) -> Vec<f64> {
    let lo = rfield.h(-3.0).max(1e-12);
    let hi = rfield.h(3.0);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Price a call curve and invert each strike; flags the qualitative shape.
pub fn iv_curve(rfield: &RField, xi: f64, big_sigma: f64, strikes: &[f64]) -> Result<IVCurve> {
    if strikes.is_empty() {
        return Err(Error::invalid("empty strike list"));
    }
    if strikes.windows(2).any(|w| w[1] <= w[0]) || strikes[0] <= 0.0 {
        return Err(Error::invalid("strikes must be positive and increasing"));
    }
    let spot = forward_price(rfield, xi, big_sigma)?;
    if !(spot > 0.0) {
        return Err(Error::domain(format!("spot {spot} not positive; curve undefined")));
    }
    // strikes whose time value is below resolution carry no volatility
    // information and are dropped from the curve
    let mut kept = Vec::with_capacity(strikes.len());
    let mut prices = Vec::with_capacity(strikes.len());
    let mut total_variance = Vec::with_capacity(strikes.len());
    for &k in strikes {
        let p = call_price(rfield, xi, big_sigma, k)?;
        let time_value = p - (spot - k).max(0.0);
        if time_value < 1e-10 * spot || p >= spot * (1.0 - 1e-14) {
            continue;
        }
        total_variance.push(implied_total_variance(p, spot, k)?);
        prices.push(p);
        kept.push(k);
    }
    if kept.len() < 3 {
        return Err(Error::domain(
            "fewer than 3 strikes carry resolvable time value; curve undefined",
        ));
    }
    let interior_minima = count_interior_minima(&total_variance);
    let range = total_variance.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - total_variance.iter().cloned().fold(f64::INFINITY, f64::min);
    let level = median(&total_variance);
    let shape = if range <= 0.005 * level {
        "flat"
    } else if interior_minima >= 2 {
        "w-shaped"
    } else {
        "curved"
    };
    Ok(IVCurve {
        xi,
        big_sigma,
        spot,
        strikes: kept,
        prices,
        total_variance,
        interior_minima,
        shape: shape.to_string(),
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Interior local minima of the 3-point-median-filtered curve.
///
/// A minimum is a confirmed fall followed by a confirmed rise, both by at
/// least the prominence floor, so quadrature/inversion ripple cannot
/// masquerade as a well and plateau-bottomed wells count once.
pub fn count_interior_minima(curve: &[f64]) -> usize {
    if curve.len() < 3 {
        return 0;
    }
    let n = curve.len();
    let mut sm = Vec::with_capacity(n);
    sm.push(curve[0]);
    for i in 1..n - 1 {
        let mut tri = [curve[i - 1], curve[i], curve[i + 1]];
        tri.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sm.push(tri[1]);
    }
    sm.push(curve[n - 1]);

    let range = sm.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - sm.iter().cloned().fold(f64::INFINITY, f64::min);
    let prominence = (1e-4 * range).max(1e-7 * median(&sm).abs());

    let mut count = 0;
    let mut extreme = sm[0];
    let mut falling = false;
    for &v in &sm[1..] {
        if falling {
            if v <= extreme {
                extreme = v;
            } else if v >= extreme + prominence {
                falling = false;
                extreme = v;
                count += 1;
            }
        } else if v >= extreme {
            extreme = v;
        } else if v <= extreme - prominence {
            falling = true;
            extreme = v;
        }
    }
    count
}
