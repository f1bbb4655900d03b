//! Interpolation helpers: monotone cubic tables for 1-D maps and a
//! bilinear evaluator for rectangular fields.

/// Piecewise-cubic Hermite interpolant with Fritsch-Carlson slopes.
///
/// Monotone data produce a monotone interpolant, which matters when the
/// table caches a transport map whose monotonicity downstream code relies
/// on.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        assert!(xs.windows(2).all(|w| w[1] > w[0]), "abscissas must increase");
        let n = xs.len();
        let mut d = vec![0.0; n - 1]; // secant slopes
        for i in 0..n - 1 {
            d[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        }
        let mut m = vec![0.0; n];
        m[0] = d[0];
        m[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            if d[i - 1] * d[i] <= 0.0 {
                m[i] = 0.0;
            } else {
                // harmonic mean weighted by interval lengths (Fritsch-Butland)
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
        MonotoneCubic { xs, ys, slopes: m }
    }

    /// Hermite table with caller-supplied knot slopes (no monotone filtering).
    pub fn with_slopes(xs: Vec<f64>, ys: Vec<f64>, slopes: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len() && xs.len() == slopes.len());
        assert!(xs.windows(2).all(|w| w[1] > w[0]), "abscissas must increase");
        MonotoneCubic { xs, ys, slopes }
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn value_at(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn slope_at(&self, i: usize) -> f64 {
        self.slopes[i]
    }

    /// Evaluate at `x`; clamps outside the table range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self.xs.partition_point(|&t| t <= x) {
            0 => 0,
            k => k - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Build a Hermite table of `f` (with derivative `fp`) on [lo, hi],
/// bisecting intervals until the interpolation error at interval probe
/// points is below `tol` (absolute + relative). `max_depth` caps the
/// subdivision rounds.
pub fn adaptive_table<F, G>(f: F, fp: G, lo: f64, hi: f64, tol: f64, max_depth: u32) -> MonotoneCubic
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    assert!(hi > lo);
    let seed = 257;
    let mut xs: Vec<f64> = (0..seed)
        .map(|i| lo + (hi - lo) * i as f64 / (seed - 1) as f64)
        .collect();
    let mut depth = 0;
    loop {
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let ms: Vec<f64> = xs.iter().map(|&x| fp(x)).collect();
        let table = MonotoneCubic::with_slopes(xs.clone(), ys, ms);
        let mut new_xs = Vec::with_capacity(xs.len() * 2);
        let mut refined = false;
        for i in 0..xs.len() - 1 {
            new_xs.push(xs[i]);
            let mut bad = false;
            for frac in [0.35, 0.5, 0.71] {
                let xp = xs[i] + frac * (xs[i + 1] - xs[i]);
                let fx = f(xp);
                if (table.eval(xp) - fx).abs() > tol * (1.0 + fx.abs()) {
                    bad = true;
                    break;
                }
            }
            if bad {
                new_xs.push(0.5 * (xs[i] + xs[i + 1]));
                refined = true;
            }
        }
        new_xs.push(*xs.last().unwrap());
        depth += 1;
        if !refined || depth >= max_depth {
            let ys: Vec<f64> = new_xs.iter().map(|&x| f(x)).collect();
            let ms: Vec<f64> = new_xs.iter().map(|&x| fp(x)).collect();
            return MonotoneCubic::with_slopes(new_xs, ys, ms);
        }
        xs = new_xs;
    }
}

/// Bilinear interpolation on a rectangular grid. Values are stored row-major
/// as `values[i * ys.len() + j]` for node (xs[i], ys[j]). Queries clamp to
/// the grid.
#[derive(Debug, Clone)]
pub struct BilinearGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    values: Vec<f64>,
}

impl BilinearGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), xs.len() * ys.len());
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
        BilinearGrid { xs, ys, values }
    }

    fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
        let n = nodes.len();
        if x <= nodes[0] {
            return (0, 0.0);
        }
        if x >= nodes[n - 1] {
            return (n - 2, 1.0);
        }
        let i = nodes.partition_point(|&t| t <= x) - 1;
        let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
        (i, t)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (i, tx) = Self::bracket(&self.xs, x);
        let (j, ty) = Self::bracket(&self.ys, y);
        let ny = self.ys.len();
        let v00 = self.values[i * ny + j];
        let v01 = self.values[i * ny + j + 1];
        let v10 = self.values[(i + 1) * ny + j];
        let v11 = self.values[(i + 1) * ny + j + 1];
        (1.0 - tx) * ((1.0 - ty) * v00 + ty * v01) + tx * ((1.0 - ty) * v10 + ty * v11)
    }
}
