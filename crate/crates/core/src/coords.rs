//! Eulerian and Lagrangian descriptions of a solution and the maps between them.
//!
//! The Lagrangian state is a tuple `(y, U, h, r)` over a uniform label grid,
//! with `y` the characteristic positions, `U` the velocity along them, `h` the
//! energy density and `r` the density of the second component in label
//! coordinates. States that differ by a relabeling `xi -> f(xi)` describe the
//! same Eulerian solution; the canonical representative satisfies `y + H = id`
//! where `H` is the running integral of `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::interp::{cumulative_integral, node_slopes, uniform_slopes, CubicHermite, Outside};
use crate::measures::{check_grid, plateau_layout, push_forward_with, NodeKind, RadonMeasure, WeightedSamples, FOLD_TOL, PLATEAU_EPS};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EulerianRecord {
    x: Vec<f64>,
    u: Vec<f64>,
    rho: Vec<f64>,
    mu: RadonMeasure,
}

/// Velocity `u`, density `rho` and energy measure `mu` sampled on a grid.
///
/// For consistent data the absolutely continuous part of `mu` is
/// `(u_x^2 + rho^2) dx`; `consistency_residual` reports how far off it is.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "EulerianRecord", into = "EulerianRecord")]
pub struct EulerianState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: Vec<f64>,
    pub mu: RadonMeasure,
}

impl TryFrom<EulerianRecord> for EulerianState {
    type Error = Error;

    fn try_from(r: EulerianRecord) -> Result<Self> {
        EulerianState::new(r.x, r.u, r.rho, r.mu)
    }
}

impl From<EulerianState> for EulerianRecord {
    fn from(e: EulerianState) -> Self {
        EulerianRecord { x: e.x, u: e.u, rho: e.rho, mu: e.mu }
    }
}

impl EulerianState {
    pub fn new(x: Vec<f64>, u: Vec<f64>, rho: Vec<f64>, mu: RadonMeasure) -> Result<Self> {
        check_grid(&x, "eulerian grid")?;
        if u.len() != x.len() || rho.len() != x.len() {
            return Err(Error::InvalidState("u and rho must have one sample per grid node".into()));
        }
        if u.iter().chain(&rho).any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite u or rho sample".into()));
        }
        Ok(Self { x, u, rho, mu })
    }

    pub fn u_interpolant(&self) -> CubicHermite {
        CubicHermite::new(self.x.clone(), self.u.clone(), Outside::Zero)
    }

    pub fn rho_interpolant(&self) -> CubicHermite {
        CubicHermite::new(self.x.clone(), self.rho.clone(), Outside::Zero)
    }

    /// `||u||_2^2`, taken over the interpolant.
    pub fn u_norm_sq(&self) -> f64 {
        self.u_interpolant().integral_of_square()
    }

    /// `||u||_2^2 + mu(R)`, the conserved energy.
    pub fn energy(&self) -> f64 {
        self.u_norm_sq() + self.mu.total_mass()
    }

    /// Largest nodal mismatch between the density of `mu` and `u_x^2 + rho^2`.
    pub fn consistency_residual(&self) -> f64 {
        let up = self.u_interpolant();
        self.x
            .iter()
            .zip(&self.rho)
            .map(|(&x, r)| (self.mu.density_at(x) - up.derivative(x).powi(2) - r * r).abs())
            .fold(0.0, f64::max)
    }
}

/// Lagrangian state on a uniform label grid.
///
/// `y_xi` and `U_xi` are carried as independent unknowns: the evolution
/// integrates them directly rather than differentiating `zeta` and `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub xi: Vec<f64>,
    /// `y - xi`.
    pub zeta: Vec<f64>,
    pub y_xi: Vec<f64>,
    #[serde(rename = "U")]
    pub u: Vec<f64>,
    #[serde(rename = "U_xi")]
    pub u_xi: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
}

/// Tolerances used when checking membership in the admissible set.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Allowed negative excursion of `y_xi` and `h`.
    pub sign: f64,
    /// Allowed `|y_xi h - U_xi^2 - r^2|`, relative to `max(y_xi) * max(h)`.
    pub constraint: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { sign: 1e-8, constraint: 1e-6 }
    }
}

impl LagrangianState {
    /// Builds a state from `(zeta, U, h, r)`, estimating `y_xi` and `U_xi` by
    /// fourth-order differences.
    pub fn from_fields(xi: Vec<f64>, zeta: Vec<f64>, u: Vec<f64>, h: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        check_uniform(&xi)?;
        let dxi = xi[1] - xi[0];
        let y_xi = uniform_slopes(&zeta, dxi).into_iter().map(|v| v + 1.0).collect();
        let u_xi = uniform_slopes(&u, dxi);
        let s = Self { xi, zeta, y_xi, u, u_xi, h, r };
        s.check_shape()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn dxi(&self) -> f64 {
        self.xi[1] - self.xi[0]
    }

    pub fn y(&self) -> Vec<f64> {
        self.xi.iter().zip(&self.zeta).map(|(a, b)| a + b).collect()
    }

    /// Array lengths, grid uniformity and finiteness.
    pub fn check_shape(&self) -> Result<()> {
        check_uniform(&self.xi)?;
        let n = self.xi.len();
        for (name, v) in [
            ("zeta", &self.zeta),
            ("y_xi", &self.y_xi),
            ("U", &self.u),
            ("U_xi", &self.u_xi),
            ("h", &self.h),
            ("r", &self.r),
        ] {
            if v.len() != n {
                return Err(Error::InvalidState(format!("{name} has {} entries, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidState(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Membership in the admissible set up to `tol`: `y_xi, h >= 0`,
    /// `y_xi + h > 0`, the pointwise constraint and a non-decreasing `y`.
    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        self.check_shape()?;
        if let Some(i) = (0..self.len()).find(|&i| self.y_xi[i] < -tol.sign || self.h[i] < -tol.sign) {
            return Err(Error::InvalidState(format!(
                "negative y_xi or h at node {i}: y_xi = {}, h = {}",
                self.y_xi[i], self.h[i]
            )));
        }
        if let Some(i) = (0..self.len()).find(|&i| self.y_xi[i] + self.h[i] <= 0.0) {
            return Err(Error::InvalidState(format!("y_xi + h vanishes at node {i}")));
        }
        let scale = self.y_xi.iter().fold(0.0f64, |a, &b| a.max(b)) * self.h.iter().fold(0.0f64, |a, &b| a.max(b));
        let res = self.constraint_residual();
        if res > tol.constraint * scale.max(1e-300) && res > 1e-14 {
            return Err(Error::InvalidState(format!("constraint residual {res:e} exceeds tolerance")));
        }
        let y = self.y();
        let dxi = self.dxi();
        if let Some(k) = y.windows(2).position(|w| w[1] - w[0] < -FOLD_TOL * dxi) {
            return Err(Error::NotMonotone { index: k, drop: y[k] - y[k + 1] });
        }
        Ok(())
    }

    /// `max |y_xi h - U_xi^2 - r^2|`.
    pub fn constraint_residual(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.y_xi[i] * self.h[i] - self.u_xi[i].powi(2) - self.r[i].powi(2)).abs())
            .fold(0.0, f64::max)
    }

    /// Running integral of `h` from the left end of the grid.
    pub fn cumulative_h(&self) -> Vec<f64> {
        cumulative_integral(&self.xi, &self.h)
    }

    /// `max |y + H - xi|`, which vanishes for the canonical representative.
    pub fn canonical_drift(&self) -> f64 {
        self.cumulative_h()
            .iter()
            .zip(&self.zeta)
            .map(|(big_h, z)| (z + big_h).abs())
            .fold(0.0, f64::max)
    }

    /// Trapezoid-rule energy `int (U^2 y_xi + h) dxi`.
    pub fn energy(&self) -> f64 {
        let n = self.len();
        let dxi = self.dxi();
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * (self.u[i] * self.u[i] * self.y_xi[i] + self.h[i])
            })
            .sum::<f64>()
            * dxi
    }
}

fn check_uniform(xi: &[f64]) -> Result<()> {
    check_grid(xi, "xi grid")?;
    let n = xi.len();
    let dxi = (xi[n - 1] - xi[0]) / (n - 1) as f64;
    let scale = xi[0].abs().max(xi[n - 1].abs()).max(dxi);
    if let Some(i) = (0..n).find(|&i| (xi[i] - (xi[0] + i as f64 * dxi)).abs() > 1e-9 * scale) {
        return Err(Error::InvalidGrid(format!("xi grid is not uniform at node {i}")));
    }
    Ok(())
}

/// Uniform label grid with `n` nodes covering `[lo, hi + mu(R)]`, where
/// `[lo, hi]` holds the Eulerian grid and all atoms.
pub fn default_xi_grid(e: &EulerianState, n: usize) -> Vec<f64> {
    let (lo, hi) = span(e);
    let top = hi + e.mu.total_mass();
    (0..n).map(|i| lo + (top - lo) * i as f64 / (n - 1) as f64).collect()
}

fn span(e: &EulerianState) -> (f64, f64) {
    let (a, b) = e.mu.span();
    (a.min(e.x[0]), b.max(e.x[e.x.len() - 1]))
}

/// Solver for `y(xi)`, the generalized inverse of `x -> x + mu((-inf, x])`.
struct Inverter<'a> {
    mu: &'a RadonMeasure,
    points: Vec<f64>,
    /// `x + mu((-inf, x))` at each point.
    g_left: Vec<f64>,
    mass: Vec<f64>,
}

enum Preimage {
    Regular(f64),
    /// Label lies in the gap opened by an atom at this position.
    Plateau(f64),
}

impl<'a> Inverter<'a> {
    fn new(mu: &'a RadonMeasure) -> Self {
        let mut points: Vec<f64> = mu.grid().iter().copied().chain(mu.atoms().iter().map(|a| a.0)).collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let atoms = mu.atoms();
        let mass: Vec<f64> = points
            .iter()
            .map(|p| atoms.iter().find(|a| a.0 == *p).map_or(0.0, |a| a.1))
            .collect();
        let g_left = points.iter().map(|&p| p + mu.cdf_open(p)).collect();
        Self { mu, points, g_left, mass }
    }

    fn solve(&self, xi: f64) -> Preimage {
        let tol = 1e-12 * xi.abs().max(1.0);
        let n = self.points.len();
        let k = self.g_left.partition_point(|&g| g <= xi);
        if k == 0 {
            // left of everything; also catch a gap that starts a hair above xi
            if self.mass[0] > 0.0 && self.g_left[0] - xi <= tol {
                return Preimage::Plateau(self.points[0]);
            }
            return Preimage::Regular(xi - self.g_left[0] + self.points[0]);
        }
        let k = k - 1;
        let g_right = self.g_left[k] + self.mass[k];
        if self.mass[k] > 0.0 && xi <= g_right + tol {
            return Preimage::Plateau(self.points[k]);
        }
        if k + 1 == n {
            return Preimage::Regular(self.points[k] + (xi - g_right));
        }
        if self.mass[k + 1] > 0.0 && self.g_left[k + 1] - xi <= tol {
            return Preimage::Plateau(self.points[k + 1]);
        }
        let (a, b) = (self.points[k], self.points[k + 1]);
        let dens = self.mu.density_interpolant();
        let base = dens.integral_to(a);
        let phi = |x: f64| (x - a) + (dens.integral_to(x) - base);
        let target = xi - g_right;
        let full = self.g_left[k + 1] - g_right;
        let (mut lo, mut hi) = (a, b);
        let mut x = (a + (b - a) * target / full).clamp(a, b);
        for _ in 0..100 {
            let r = phi(x) - target;
            if r.abs() <= 4.0 * f64::EPSILON * xi.abs().max(1.0) {
                break;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - r / (1.0 + dens.eval(x).max(0.0));
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == x || hi - lo <= f64::EPSILON * x.abs().max(1.0) {
                break;
            }
            x = next;
        }
        Preimage::Regular(x)
    }
}

/// Maps Eulerian data to the canonical Lagrangian representative on the
/// uniform label grid `xi`.
pub fn to_lagrangian(e: &EulerianState, xi: &[f64]) -> Result<LagrangianState> {
    to_lagrangian_with(e, xi, Execution::default())
}

pub fn to_lagrangian_with(e: &EulerianState, xi: &[f64], exec: Execution) -> Result<LagrangianState> {
    check_uniform(xi)?;
    let (lo, hi) = span(e);
    let need_hi = hi + e.mu.total_mass();
    let n = xi.len();
    let slack = 1e-9 * need_hi.abs().max(lo.abs()).max(1.0);
    if xi[0] > lo + slack || xi[n - 1] < need_hi - slack {
        return Err(Error::XiGridTooShort { lo: xi[0], hi: xi[n - 1], need_lo: lo, need_hi });
    }

    let inv = Inverter::new(&e.mu);
    let up = e.u_interpolant();
    let rp = e.rho_interpolant();
    let dens = e.mu.density_interpolant();
    let nodes = exec.map_indexed(n, |i| match inv.solve(xi[i]) {
        Preimage::Plateau(y) => [y, 0.0, up.eval(y), 0.0, 1.0, 0.0],
        Preimage::Regular(y) => {
            let d = dens.eval(y).max(0.0);
            let y_xi = 1.0 / (1.0 + d);
            // Between nodes the interpolant of rho can overshoot sqrt(d) by the
            // interpolation error; clipping it keeps the constraint exact.
            let rho = rp.eval(y).clamp(-d.sqrt(), d.sqrt());
            // The constraint y_xi h = U_xi^2 + r^2 fixes |U_xi|; the sign comes
            // from the slope of u. Taking the magnitude from the constraint keeps
            // it exact and leaves h = 1 - y_xi untouched, so y + H = id holds too.
            let ux = up.derivative(y);
            let mag = y_xi * (d - rho * rho).max(0.0).sqrt();
            [y, y_xi, up.eval(y), mag.copysign(ux), 1.0 - y_xi, rho * y_xi]
        }
    });

    let mut s = LagrangianState {
        xi: xi.to_vec(),
        zeta: Vec::with_capacity(n),
        y_xi: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        u_xi: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
    };
    for (i, [y, y_xi, u, u_xi, h, r]) in nodes.into_iter().enumerate() {
        s.zeta.push(y - xi[i]);
        s.y_xi.push(y_xi);
        s.u.push(u);
        s.u_xi.push(u_xi);
        s.h.push(h);
        s.r.push(r);
    }
    Ok(s)
}

/// Maps a Lagrangian state back to Eulerian data. Flat runs of `y` become atoms
/// of `mu` at which `rho` is set to zero.
pub fn to_eulerian(s: &LagrangianState) -> Result<EulerianState> {
    s.check_shape()?;
    let y = s.y();
    let y_xi: Vec<f64> = s.y_xi.iter().map(|v| v.max(0.0)).collect();
    let layout = plateau_layout(&s.xi, &y, &y_xi, PLATEAU_EPS)?;
    let samples = WeightedSamples::with_derivative(s.xi.clone(), y.clone(), y_xi.clone(), s.h.clone())?;
    let mu = push_forward_with(&samples, &layout)?;

    let mut x = Vec::with_capacity(layout.entries.len());
    let mut u = Vec::with_capacity(layout.entries.len());
    let mut rho = Vec::with_capacity(layout.entries.len());
    for entry in &layout.entries {
        match *entry {
            NodeKind::Regular(i) => {
                x.push(y[i]);
                u.push(s.u[i]);
                rho.push(s.r[i] / y_xi[i]);
            }
            NodeKind::Singular(i) => {
                x.push(y[i]);
                u.push(s.u[i]);
                rho.push(0.0);
            }
            NodeKind::Run(j) => {
                let run = &layout.runs[j];
                let m = (run.end - run.start + 1) as f64;
                x.push(run.position);
                u.push(s.u[run.start..=run.end].iter().sum::<f64>() / m);
                rho.push(0.0);
            }
        }
    }
    if x.len() < 2 {
        return Err(Error::InvalidState("state collapses to a single point".into()));
    }
    EulerianState::new(x, u, rho, mu)
}

/// A strictly increasing relabeling `f` sampled on a label grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Relabeling {
    pub xi: Vec<f64>,
    pub f: Vec<f64>,
    pub f_xi: Vec<f64>,
}

impl Relabeling {
    pub fn identity(xi: &[f64]) -> Self {
        Self { xi: xi.to_vec(), f: xi.to_vec(), f_xi: vec![1.0; xi.len()] }
    }

    pub fn from_fn(xi: &[f64], f: impl Fn(f64) -> f64, f_xi: impl Fn(f64) -> f64) -> Self {
        Self {
            xi: xi.to_vec(),
            f: xi.iter().map(|&s| f(s)).collect(),
            f_xi: xi.iter().map(|&s| f_xi(s)).collect(),
        }
    }

    pub fn from_samples(xi: &[f64], f: Vec<f64>) -> Result<Self> {
        check_grid(xi, "xi grid")?;
        if f.len() != xi.len() {
            return Err(Error::InvalidRelabeling("f needs one sample per label".into()));
        }
        let f_xi = node_slopes(xi, &f);
        Ok(Self { xi: xi.to_vec(), f, f_xi })
    }

    /// The relabeling `y + H` of a state, which maps the canonical
    /// representative onto it.
    pub fn of_state(s: &LagrangianState) -> Self {
        let big_h = s.cumulative_h();
        Self {
            xi: s.xi.clone(),
            f: (0..s.len()).map(|i| s.xi[i] + s.zeta[i] + big_h[i]).collect(),
            f_xi: (0..s.len()).map(|i| s.y_xi[i] + s.h[i]).collect(),
        }
    }

    fn check(&self) -> Result<()> {
        check_grid(&self.xi, "xi grid")?;
        if self.f.len() != self.xi.len() || self.f_xi.len() != self.xi.len() {
            return Err(Error::InvalidRelabeling("f and f_xi need one sample per label".into()));
        }
        if self.f.iter().chain(&self.f_xi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidRelabeling("non-finite sample".into()));
        }
        if self.f.windows(2).any(|w| w[1] <= w[0]) || self.f_xi.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidRelabeling("f must be strictly increasing".into()));
        }
        Ok(())
    }

    fn interpolant(&self) -> CubicHermite {
        CubicHermite::with_slopes(self.xi.clone(), self.f.clone(), self.f_xi.clone(), Outside::Linear)
    }

    /// Samples of `f^{-1}` on the same grid.
    pub fn inverse(&self) -> Result<Relabeling> {
        self.check()?;
        let fp = self.interpolant();
        let n = self.xi.len();
        let mut g = Vec::with_capacity(n);
        let mut g_xi = Vec::with_capacity(n);
        for &t in &self.xi {
            let eta = if t <= self.f[0] {
                self.xi[0] + (t - self.f[0]) / self.f_xi[0]
            } else if t >= self.f[n - 1] {
                self.xi[n - 1] + (t - self.f[n - 1]) / self.f_xi[n - 1]
            } else {
                let k = self.f.partition_point(|&v| v <= t).saturating_sub(1).min(n - 2);
                let (mut lo, mut hi) = (self.xi[k], self.xi[k + 1]);
                let mut x = lo + (hi - lo) * (t - self.f[k]) / (self.f[k + 1] - self.f[k]);
                for _ in 0..100 {
                    let r = fp.eval(x) - t;
                    if r == 0.0 {
                        break;
                    }
                    if r > 0.0 {
                        hi = x;
                    } else {
                        lo = x;
                    }
                    let mut next = x - r / fp.derivative(x);
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                    if next == x || hi - lo <= 2.0 * f64::EPSILON * x.abs().max(1.0) {
                        break;
                    }
                    x = next;
                }
                x
            };
            g.push(eta);
            g_xi.push(1.0 / fp.derivative(eta));
        }
        Ok(Relabeling { xi: self.xi.clone(), f: g, f_xi: g_xi })
    }
}

/// Tests the slope bounds `1/(1+kappa) <= f_xi <= 1+kappa` that membership in
/// the relabeling group with constant `kappa` requires, along with strict
/// monotonicity and a finite displacement `f - id`.
pub fn check_relabeling(f: &Relabeling, kappa: f64) -> bool {
    if f.check().is_err() || !(kappa >= 0.0) {
        return false;
    }
    let lo = 1.0 / (1.0 + kappa) - 1e-12;
    let hi = 1.0 + kappa + 1e-12;
    f.f_xi.iter().all(|&d| d >= lo && d <= hi) && f.f.iter().zip(&f.xi).all(|(a, b)| (a - b).is_finite())
}

/// The relabeled state `X o f`: every field is read at `f(xi)` and the
/// densities pick up the factor `f_xi`.
pub fn relabel(s: &LagrangianState, f: &Relabeling) -> Result<LagrangianState> {
    s.check_shape()?;
    f.check()?;
    if f.xi.len() != s.len() || f.xi.iter().zip(&s.xi).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
        return Err(Error::InvalidRelabeling("relabeling and state use different label grids".into()));
    }
    let dxi = s.dxi();
    let y_slope: Vec<f64> = s.y_xi.iter().map(|v| v - 1.0).collect();
    // Labels mapped past the ends continue the end behaviour linearly.
    let field = |v: &Vec<f64>, m: Vec<f64>| CubicHermite::with_slopes(s.xi.clone(), v.clone(), m, Outside::Linear);
    let zeta = field(&s.zeta, y_slope);
    let u = field(&s.u, s.u_xi.clone());
    let y_xi = field(&s.y_xi, uniform_slopes(&s.y_xi, dxi));
    let u_xi = field(&s.u_xi, uniform_slopes(&s.u_xi, dxi));
    let h = field(&s.h, uniform_slopes(&s.h, dxi));
    let r = field(&s.r, uniform_slopes(&s.r, dxi));

    // Interpolating h on its own would break y_xi h = U_xi^2 + r^2 at the
    // interpolation error level, so h is recovered from the constraint wherever
    // y_xi is not close to a plateau.
    let y_floor = 1e-3 * s.y_xi.iter().fold(0.0f64, |a, &b| a.max(b));
    let n = s.len();
    let mut out = s.clone();
    for i in 0..n {
        let (t, d) = (f.f[i], f.f_xi[i]);
        out.zeta[i] = zeta.eval(t) + t - s.xi[i];
        out.u[i] = u.eval(t);
        let (yv, uv, rv) = (y_xi.eval(t), u_xi.eval(t), r.eval(t));
        out.y_xi[i] = yv.max(0.0) * d;
        out.u_xi[i] = uv * d;
        out.r[i] = rv * d;
        out.h[i] = if yv > y_floor { (uv * uv + rv * rv) / yv } else { h.eval(t) } * d;
    }
    Ok(out)
}
