//! Piecewise cubic Hermite interpolation of nodal samples.
//!
//! All grid quantities in the crate (densities, velocities, Lagrangian fields)
//! are stored as samples. Between samples they are read through the cubic
//! Hermite interpolant whose nodal slopes come from a five-point Lagrange
//! stencil, which reproduces polynomials up to degree three and keeps
//! interpolation and cumulative integrals fourth-order accurate.

/// Behaviour of an interpolant outside its grid span.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outside {
    Zero,
    /// Hold the end value.
    Hold,
    /// Continue linearly with the end value and end slope.
    Linear,
}

/// Stencils whose largest spacing exceeds this multiple of the smallest are
/// considered too uneven for the five-point formula.
const MAX_SPACING_RATIO: f64 = 20.0;

/// Derivative at `x[i]` of the Lagrange polynomial through the nodes `idx`.
fn lagrange_derivative(x: &[f64], f: &[f64], i: usize, idx: &[usize]) -> f64 {
    let xi = x[i];
    let mut s = 0.0;
    for &j in idx {
        let w = if j == i {
            idx.iter()
                .filter(|&&k| k != i)
                .map(|&k| 1.0 / (xi - x[k]))
                .sum::<f64>()
        } else {
            let mut w = 1.0 / (x[j] - xi);
            for &k in idx {
                if k != i && k != j {
                    w *= (xi - x[k]) / (x[j] - x[k]);
                }
            }
            w
        };
        s += w * f[j];
    }
    s
}

fn stencil(n: usize, i: usize, width: usize) -> std::ops::Range<usize> {
    let width = width.min(n);
    let lo = i.saturating_sub(width / 2).min(n - width);
    lo..lo + width
}

fn spacing_ratio(x: &[f64], r: &std::ops::Range<usize>) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in r.start..r.end - 1 {
        let h = x[k + 1] - x[k];
        lo = lo.min(h);
        hi = hi.max(h);
    }
    hi / lo
}

/// Nodal derivative estimates for samples `f` on the strictly increasing grid `x`.
pub fn node_slopes(x: &[f64], f: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert_eq!(n, f.len());
    if n < 2 {
        return vec![0.0; n];
    }
    let mut idx = Vec::with_capacity(5);
    (0..n)
        .map(|i| {
            let mut r = stencil(n, i, 5);
            if r.len() == 5 && spacing_ratio(x, &r) > MAX_SPACING_RATIO {
                r = stencil(n, i, 3);
            }
            idx.clear();
            idx.extend(r);
            lagrange_derivative(x, f, i, &idx)
        })
        .collect()
}

/// Fourth-order derivative of samples on a uniform grid with spacing `dx`.
pub fn uniform_slopes(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    if n < 5 {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
        return node_slopes(&x, f);
    }
    let mut m = vec![0.0; n];
    for i in 2..n - 2 {
        m[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * dx);
    }
    // one-sided five-point formulas at the two nodes nearest each end
    m[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * dx);
    m[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * dx);
    let k = n - 1;
    m[k] = (25.0 * f[k] - 48.0 * f[k - 1] + 36.0 * f[k - 2] - 16.0 * f[k - 3] + 3.0 * f[k - 4])
        / (12.0 * dx);
    m[k - 1] = (3.0 * f[k] + 10.0 * f[k - 1] - 18.0 * f[k - 2] + 6.0 * f[k - 3] - f[k - 4])
        / (12.0 * dx);
    m
}

/// Clamps slopes so that the interpolant of non-negative samples stays
/// non-negative: each cell's Bernstein coefficients are kept >= 0.
fn limit_nonnegative(x: &[f64], f: &[f64], m: &mut [f64]) {
    let n = x.len();
    for k in 0..n {
        let upper = if k > 0 { 3.0 * f[k] / (x[k] - x[k - 1]) } else { f64::INFINITY };
        let lower = if k + 1 < n { -3.0 * f[k] / (x[k + 1] - x[k]) } else { f64::NEG_INFINITY };
        m[k] = m[k].clamp(lower, upper);
    }
}

#[derive(Clone, Debug)]
pub struct CubicHermite {
    x: Vec<f64>,
    f: Vec<f64>,
    m: Vec<f64>,
    /// Integral from `x[0]` to `x[k]`.
    cum: Vec<f64>,
    outside: Outside,
}

impl CubicHermite {
    /// Interpolant with estimated slopes. `x` must be strictly increasing with
    /// at least two nodes.
    pub fn new(x: Vec<f64>, f: Vec<f64>, outside: Outside) -> Self {
        let m = node_slopes(&x, &f);
        Self::with_slopes(x, f, m, outside)
    }

    /// Interpolant of non-negative samples that stays non-negative everywhere.
    pub fn nonnegative(x: Vec<f64>, f: Vec<f64>, outside: Outside) -> Self {
        let mut m = node_slopes(&x, &f);
        limit_nonnegative(&x, &f, &mut m);
        Self::with_slopes(x, f, m, outside)
    }

    pub fn with_slopes(x: Vec<f64>, f: Vec<f64>, m: Vec<f64>, outside: Outside) -> Self {
        assert!(x.len() >= 2, "interpolant needs at least two nodes");
        assert!(x.len() == f.len() && f.len() == m.len());
        let mut cum = Vec::with_capacity(x.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..x.len() - 1 {
            let h = x[k + 1] - x[k];
            acc += 0.5 * h * (f[k] + f[k + 1]) + h * h / 12.0 * (m[k] - m[k + 1]);
            cum.push(acc);
        }
        Self { x, f, m, cum, outside }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn slopes(&self) -> &[f64] {
        &self.m
    }

    pub fn lo(&self) -> f64 {
        self.x[0]
    }

    pub fn hi(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Integral over the whole grid span.
    pub fn total(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    /// Integral from `x[0]` to each node.
    pub fn cumulative(&self) -> &[f64] {
        &self.cum
    }

    /// Index of the cell containing `t`, clamped to the valid range.
    pub fn cell(&self, t: f64) -> usize {
        let k = self.x.partition_point(|&v| v <= t);
        k.saturating_sub(1).min(self.x.len() - 2)
    }

    fn local(&self, t: f64) -> (usize, f64, f64) {
        let k = self.cell(t);
        let h = self.x[k + 1] - self.x[k];
        (k, h, (t - self.x[k]) / h)
    }

    fn in_span(&self, t: f64) -> bool {
        t >= self.lo() && t <= self.hi()
    }

    fn beyond(&self, t: f64) -> (f64, f64, f64) {
        // (node, value, slope) of the nearer end
        let k = if t < self.lo() { 0 } else { self.x.len() - 1 };
        (self.x[k], self.f[k], self.m[k])
    }

    pub fn eval(&self, t: f64) -> f64 {
        if !self.in_span(t) {
            let (xe, fe, me) = self.beyond(t);
            return match self.outside {
                Outside::Zero => 0.0,
                Outside::Hold => fe,
                Outside::Linear => fe + me * (t - xe),
            };
        }
        let (k, h, u) = self.local(t);
        let (f0, f1, m0, m1) = (self.f[k], self.f[k + 1], self.m[k] * h, self.m[k + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * f0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * f1
            + (u3 - u2) * m1
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if !self.in_span(t) {
            let (_, _, me) = self.beyond(t);
            return match self.outside {
                Outside::Zero | Outside::Hold => 0.0,
                Outside::Linear => me,
            };
        }
        let (k, h, u) = self.local(t);
        let (f0, f1, m0, m1) = (self.f[k], self.f[k + 1], self.m[k] * h, self.m[k + 1] * h);
        let u2 = u * u;
        ((6.0 * u2 - 6.0 * u) * f0
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (-6.0 * u2 + 6.0 * u) * f1
            + (3.0 * u2 - 2.0 * u) * m1)
            / h
    }

    /// Integral of the interpolant from `x[0]` to `t`, clamped to the grid span.
    /// Only meaningful for `Outside::Zero`, which is how densities are stored.
    pub fn integral_to(&self, t: f64) -> f64 {
        if t <= self.lo() {
            return 0.0;
        }
        if t >= self.hi() {
            return self.total();
        }
        let (k, h, u) = self.local(t);
        let (f0, f1, m0, m1) = (self.f[k], self.f[k + 1], self.m[k] * h, self.m[k + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        let u4 = u3 * u;
        self.cum[k]
            + h * ((0.5 * u4 - u3 + u) * f0
                + (0.25 * u4 - 2.0 * u3 / 3.0 + 0.5 * u2) * m0
                + (-0.5 * u4 + u3) * f1
                + (0.25 * u4 - u3 / 3.0) * m1)
    }

    /// Integral of the square of the interpolant over the grid span. Four-point
    /// Gauss-Legendre per cell is exact for the degree-six integrand.
    pub fn integral_of_square(&self) -> f64 {
        const NODES: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const WEIGHTS: [f64; 4] = [
            0.347_854_845_137_453_9,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_9,
        ];
        let mut total = 0.0;
        for k in 0..self.x.len() - 1 {
            let h = self.x[k + 1] - self.x[k];
            let (f0, f1, m0, m1) = (self.f[k], self.f[k + 1], self.m[k] * h, self.m[k + 1] * h);
            let mut s = 0.0;
            for (z, w) in NODES.iter().zip(WEIGHTS) {
                let u = 0.5 * (1.0 + z);
                let (u2, u3) = (u * u, u * u * u);
                let v = (2.0 * u3 - 3.0 * u2 + 1.0) * f0
                    + (u3 - 2.0 * u2 + u) * m0
                    + (-2.0 * u3 + 3.0 * u2) * f1
                    + (u3 - u2) * m1;
                s += w * v * v;
            }
            total += 0.5 * h * s;
        }
        total
    }
}

/// Cumulative integral of samples on a grid, `out[i] = int_{x_0}^{x_i} f`.
/// Equivalent to the trapezoid rule plus the endpoint slope correction.
pub fn cumulative_integral(x: &[f64], f: &[f64]) -> Vec<f64> {
    CubicHermite::new(x.to_vec(), f.to_vec(), Outside::Zero).cum
}

/// Integral of samples over the whole grid span.
pub fn integrate(x: &[f64], f: &[f64]) -> f64 {
    *cumulative_integral(x, f).last().unwrap_or(&0.0)
}
