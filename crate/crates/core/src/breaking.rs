//! Characteristic analysis of wave breaking.
//!
//! Along a characteristic put `alpha = U_xi / y_xi` (which is `u_x` there) and
//! `beta = r / y_xi` (which is `rho` there). They obey
//!
//! ```text
//! alpha_t = beta^2 / 2 - alpha^2 / 2 + (U^2 - P),   beta_t = -alpha beta.
//! ```
//!
//! The forcing `U^2 - P` is bounded by `C = 2 (||u0||^2 + mu0(R))`, so when
//! `beta = 0` the Riccati equation `gamma_t = -gamma^2 / 2 + C` bounds `alpha`
//! from above. A slope steeper than `-sqrt(2C)` therefore drives `alpha` to
//! minus infinity within an explicit time, while any `beta != 0` keeps `y_xi`
//! away from zero.

use serde::{Deserialize, Serialize};

use crate::coords::{EulerianState, LagrangianState};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::interp::CubicHermite;
use crate::kernel::eval_p;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharState {
    pub alpha: f64,
    pub beta: f64,
    /// `U^2 - P` at the characteristic.
    pub forcing: f64,
}

/// `(alpha, beta, U^2 - P)` at one node. Fails where `y_xi` vanishes.
pub fn alpha_beta(s: &LagrangianState, node: usize) -> Result<CharState> {
    let p = eval_p(s)?;
    char_state_at(s, &p, node)
}

fn char_state_at(s: &LagrangianState, p: &[f64], i: usize) -> Result<CharState> {
    if i >= s.len() {
        return Err(Error::InvalidState(format!("node {i} out of range")));
    }
    if !(s.y_xi[i] > 0.0) {
        return Err(Error::InvalidState(format!("y_xi vanishes at node {i}")));
    }
    Ok(CharState {
        alpha: s.u_xi[i] / s.y_xi[i],
        beta: s.r[i] / s.y_xi[i],
        forcing: s.u[i] * s.u[i] - p[i],
    })
}

/// Characteristic variables at every node, `None` where `y_xi` vanishes.
pub fn char_states(s: &LagrangianState) -> Result<Vec<Option<CharState>>> {
    let p = eval_p(s)?;
    Ok((0..s.len()).map(|i| char_state_at(s, &p, i).ok()).collect())
}

/// `(alpha_t, beta_t)`. Written as `0 - alpha beta` so that the invariant
/// line gives `+0` rather than `-0`.
pub fn char_rhs(st: CharState) -> (f64, f64) {
    (0.5 * st.beta * st.beta - 0.5 * st.alpha * st.alpha + st.forcing, 0.0 - st.alpha * st.beta)
}

/// Signed time at which the Riccati solution from `gamma0` blows up, if it
/// does. Negative means the blow-up lies in the past.
pub fn gamma_blowup_time(gamma0: f64, c: f64) -> Option<f64> {
    let s = (2.0 * c).sqrt();
    if gamma0.abs() <= s {
        return None;
    }
    Some(((gamma0 - s) / (gamma0 + s)).ln() / s)
}

/// Closed-form solution of `gamma_t = -gamma^2 / 2 + C`. Past the blow-up
/// time it returns the infinity the solution ran off to.
pub fn gamma_closed(gamma0: f64, c: f64, t: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveConstant(c));
    }
    if let Some(tb) = gamma_blowup_time(gamma0, c) {
        if t * tb > 0.0 && t.abs() >= tb.abs() {
            return Ok(if tb > 0.0 { f64::NEG_INFINITY } else { f64::INFINITY });
        }
    }
    let s = (2.0 * c).sqrt();
    let e = (-s * t).exp();
    Ok((s * gamma0 + 2.0 * c + (s * gamma0 - 2.0 * c) * e) / (gamma0 + s - (gamma0 - s) * e))
}

/// Signed breaking-time bound `T = ln((u0x - s) / (u0x + s)) / s` with
/// `s = sqrt(2C)`: positive for a slope steeper than `-s`, negative (breaking
/// in the past) for one steeper than `+s`.
pub fn breaking_time_bound(u0x: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::NonPositiveConstant(c));
    }
    let s = (2.0 * c).sqrt();
    gamma_blowup_time(u0x, c).ok_or(Error::Indeterminate { u0x, threshold: s })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    NoBreaking,
    FutureBreaking,
    PastBreaking,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BreakingVerdict {
    pub kind: VerdictKind,
    /// Positive bound on the time to (or since) breaking; present exactly for
    /// the two breaking kinds.
    pub t_bound: Option<f64>,
    pub c: f64,
    /// The decision sits close to one of its thresholds.
    pub near_cutoff: bool,
}

/// Verdict from pointwise data. Zero energy means the trivial solution, which
/// never breaks.
pub fn classify_point(u0x: f64, rho0: f64, c: f64, rho_tol: f64) -> BreakingVerdict {
    let verdict = |kind, t_bound, near_cutoff| BreakingVerdict { kind, t_bound, c, near_cutoff };
    let rho_near = rho0 != 0.0 && (rho0.abs() - rho_tol).abs() <= 9.0 * rho_tol.max(f64::MIN_POSITIVE);
    if rho0.abs() > rho_tol {
        return verdict(VerdictKind::NoBreaking, None, rho_near);
    }
    if c <= 0.0 {
        return verdict(VerdictKind::NoBreaking, None, false);
    }
    let s = (2.0 * c).sqrt();
    let near = rho_near || (u0x.abs() - s).abs() <= 1e-9 * s;
    match gamma_blowup_time(u0x, c) {
        Some(t) if u0x < 0.0 => verdict(VerdictKind::FutureBreaking, Some(t), near),
        Some(t) => verdict(VerdictKind::PastBreaking, Some(t.abs()), near),
        None => verdict(VerdictKind::Indeterminate, None, near),
    }
}

/// `C = 2 (||u0||^2 + mu0(R))`.
pub fn breaking_constant(e: &EulerianState) -> f64 {
    2.0 * e.energy()
}

/// One row of a classification sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerdictRecord {
    pub x: f64,
    pub u0x: f64,
    pub rho0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub kind: VerdictKind,
    pub t_bound: Option<f64>,
    pub near_cutoff: bool,
}

/// Classifies points of one initial datum, sharing the interpolants and `C`.
#[derive(Clone, Debug)]
pub struct Classifier {
    u: CubicHermite,
    rho: CubicHermite,
    c: f64,
    rho_tol: f64,
}

impl Classifier {
    pub fn new(e: &EulerianState) -> Self {
        let rho_max = e.rho.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        Self {
            u: e.u_interpolant(),
            rho: e.rho_interpolant(),
            c: breaking_constant(e),
            rho_tol: 1e-12 * rho_max,
        }
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn with_rho_tol(mut self, rho_tol: f64) -> Self {
        self.rho_tol = rho_tol;
        self
    }

    pub fn u0x(&self, x: f64) -> f64 {
        self.u.derivative(x)
    }

    pub fn classify(&self, x: f64) -> Result<VerdictRecord> {
        if !(x >= self.u.lo() && x <= self.u.hi()) {
            return Err(Error::OutsideSpan { x, lo: self.u.lo(), hi: self.u.hi() });
        }
        let u0x = self.u.derivative(x);
        let rho0 = self.rho.eval(x);
        let v = classify_point(u0x, rho0, self.c, self.rho_tol);
        Ok(VerdictRecord {
            x,
            u0x,
            rho0,
            c: self.c,
            kind: v.kind,
            t_bound: v.t_bound,
            near_cutoff: v.near_cutoff,
        })
    }
}

pub fn classify(e: &EulerianState, x: f64) -> Result<BreakingVerdict> {
    let r = Classifier::new(e).classify(x)?;
    Ok(BreakingVerdict { kind: r.kind, t_bound: r.t_bound, c: r.c, near_cutoff: r.near_cutoff })
}

/// Classifies every point of `xs`; the output keeps the input order.
pub fn classify_sweep(e: &EulerianState, xs: &[f64], exec: Execution) -> Result<Vec<VerdictRecord>> {
    let cl = Classifier::new(e);
    exec.map_slice(xs, |&x| cl.classify(x)).into_iter().collect()
}

/// Forcing `U^2 - P` seen by a characteristic.
#[derive(Clone, Debug, PartialEq)]
pub enum Forcing {
    Constant(f64),
    /// Samples at increasing times, linearly interpolated and held constant
    /// beyond the ends.
    Series { t: Vec<f64>, value: Vec<f64> },
}

impl Forcing {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Forcing::Constant(f) => *f,
            Forcing::Series { t: ts, value } => {
                let n = ts.len();
                if t <= ts[0] {
                    return value[0];
                }
                if t >= ts[n - 1] {
                    return value[n - 1];
                }
                let k = ts.partition_point(|&s| s <= t) - 1;
                let w = (t - ts[k]) / (ts[k + 1] - ts[k]);
                value[k] + w * (value[k + 1] - value[k])
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Forcing::Constant(f) if f.is_finite() => Ok(()),
            Forcing::Constant(_) => Err(Error::Config("forcing must be finite".into())),
            Forcing::Series { t, value } => {
                if t.is_empty() || t.len() != value.len() {
                    return Err(Error::Config("forcing series needs matching, non-empty arrays".into()));
                }
                if t.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("forcing series times must increase".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CharSample {
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `alpha^2 / beta^2`, absent while `beta = 0`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum CharOutcome {
    Completed,
    /// `|alpha|` passed `ALPHA_GUARD` between these two times.
    BlowUp { t_before: f64, t_after: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharTrajectory {
    pub samples: Vec<CharSample>,
    pub outcome: CharOutcome,
}

pub const ALPHA_GUARD: f64 = 1e10;

fn sample(t: f64, alpha: f64, beta: f64) -> CharSample {
    CharSample { t, alpha, beta, ratio: (beta != 0.0).then(|| alpha * alpha / (beta * beta)) }
}

/// RK4 for `(alpha, beta)` from `t = 0` to `t_end` (either sign) with steps of
/// at most `dt`. The `forcing` field of `s0` is ignored in favour of `forcing`.
pub fn integrate_char(s0: CharState, forcing: &Forcing, t_end: f64, dt: f64) -> Result<CharTrajectory> {
    forcing.check()?;
    if !(dt > 0.0) || !t_end.is_finite() {
        return Err(Error::Config("need dt > 0 and a finite end time".into()));
    }
    let steps = ((t_end.abs() / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let f = |t: f64, a: f64, b: f64| {
        char_rhs(CharState { alpha: a, beta: b, forcing: forcing.eval(t) })
    };

    let (mut a, mut b) = (s0.alpha, s0.beta);
    let mut samples = vec![sample(0.0, a, b)];
    for k in 0..steps {
        let t = k as f64 * h;
        let (ka1, kb1) = f(t, a, b);
        let (ka2, kb2) = f(t + 0.5 * h, a + 0.5 * h * ka1, b + 0.5 * h * kb1);
        let (ka3, kb3) = f(t + 0.5 * h, a + 0.5 * h * ka2, b + 0.5 * h * kb2);
        let (ka4, kb4) = f(t + h, a + h * ka3, b + h * kb3);
        let na = a + h / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4);
        let nb = b + h / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4);
        let t_next = (k + 1) as f64 * h;
        if !(na.abs() <= ALPHA_GUARD) || !nb.is_finite() {
            return Ok(CharTrajectory { samples, outcome: CharOutcome::BlowUp { t_before: t, t_after: t_next } });
        }
        a = na;
        b = nb;
        samples.push(sample(t_next, a, b));
    }
    Ok(CharTrajectory { samples, outcome: CharOutcome::Completed })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_t: f64,
    pub beta_t: f64,
}

/// `n` equally spaced points on `[lo, hi]`, built so that a symmetric range
/// gives an exactly symmetric lattice containing zero when `n` is odd.
fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let m = (n - 1) as f64;
    (0..n).map(|i| mid + half * (2.0 * i as f64 - m) / m).collect()
}

/// The characteristic vector field on an `n x n` lattice, rows ordered with
/// `alpha` outermost.
pub fn vectorfield_grid(forcing: f64, alpha: (f64, f64), beta: (f64, f64), n: usize) -> Result<Vec<FieldRow>> {
    vectorfield_grid_with(forcing, alpha, beta, n, Execution::default())
}

pub fn vectorfield_grid_with(
    forcing: f64,
    alpha: (f64, f64),
    beta: (f64, f64),
    n: usize,
    exec: Execution,
) -> Result<Vec<FieldRow>> {
    if n < 2 {
        return Err(Error::Config("lattice needs at least 2 points per axis".into()));
    }
    for (lo, hi) in [alpha, beta] {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("bad lattice range [{lo}, {hi}]")));
        }
    }
    if !forcing.is_finite() {
        return Err(Error::Config("forcing must be finite".into()));
    }
    let a = lattice(alpha.0, alpha.1, n);
    let b = lattice(beta.0, beta.1, n);
    Ok(exec.map_indexed(n * n, |k| {
        let st = CharState { alpha: a[k / n], beta: b[k % n], forcing };
        let (alpha_t, beta_t) = char_rhs(st);
        FieldRow { alpha: st.alpha, beta: st.beta, alpha_t, beta_t }
    }))
}
