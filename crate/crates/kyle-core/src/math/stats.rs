//! Sample statistics and compensated accumulation used by the Monte Carlo
//! verifiers. All reductions run in fixed path order so reported numbers
//! are independent of the worker-thread count.

/// Kahan compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut acc = KahanSum::default();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

pub fn mean(values: &[f64]) -> f64 {
    kahan_sum(values) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2);
    let m = mean(values);
    let mut acc = KahanSum::default();
    for &v in values {
        let d = v - m;
        acc.add(d * d);
    }
    acc.value() / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn standard_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Sample skewness (g1) and its normal-theory standard error sqrt(6/n).
pub fn skewness(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    let (mut m2, mut m3) = (KahanSum::default(), KahanSum::default());
    for &v in values {
        let d = v - m;
        m2.add(d * d);
        m3.add(d * d * d);
    }
    let s2 = m2.value() / n;
    let g1 = (m3.value() / n) / s2.powf(1.5);
    (g1, (6.0 / n).sqrt())
}

/// Sample excess kurtosis (g2) and its normal-theory standard error sqrt(24/n).
pub fn excess_kurtosis(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    let (mut m2, mut m4) = (KahanSum::default(), KahanSum::default());
    for &v in values {
        let d = v - m;
        m2.add(d * d);
        m4.add(d * d * d * d);
    }
    let s2 = m2.value() / n;
    let g2 = (m4.value() / n) / (s2 * s2) - 3.0;
    (g2, (24.0 / n).sqrt())
}

/// Kolmogorov-Smirnov distance between a sample and a cdf.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let fx = cdf(x);
        d = d.max((fx - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - fx).abs());
    }
    d
}

/// Asymptotic KS critical value at level alpha (0.05 and 0.01 supported).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    let c = if alpha <= 0.01 { 1.628 } else { 1.358 };
    c / (n as f64).sqrt()
}

/// Sample covariance of two equally long slices.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 2);
    let mx = mean(xs);
    let my = mean(ys);
    let mut acc = KahanSum::default();
    for i in 0..n {
        acc.add((xs[i] - mx) * (ys[i] - my));
    }
    acc.value() / (n - 1) as f64
}
