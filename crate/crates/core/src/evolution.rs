//! Time integration of the Lagrangian system.
//!
//! With `P`, `Q` from the kernel the system reads
//!
//! ```text
//! y_t = U,  (y_xi)_t = U_xi,  U_t = -Q,
//! (U_xi)_t = h/2 + (U^2 - P) y_xi,  h_t = 2 (U^2 - P) U_xi,  r_t = 0,
//! ```
//!
//! a semilinear ODE whose right-hand side is Lipschitz on bounded sets, so a
//! fixed-step explicit scheme goes straight through wave breaking. `r` never
//! changes and is carried over bit for bit.

use serde::Serialize;

use crate::coords::{LagrangianState, Tolerances};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernel::{KernelWorkspace, Quadrature};

/// Time derivative of every component of a state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Derivative {
    pub zeta: Vec<f64>,
    pub y_xi: Vec<f64>,
    pub u: Vec<f64>,
    pub u_xi: Vec<f64>,
    pub h: Vec<f64>,
    pub r: Vec<f64>,
}

impl Derivative {
    fn zeros(n: usize) -> Self {
        Self {
            zeta: vec![0.0; n],
            y_xi: vec![0.0; n],
            u: vec![0.0; n],
            u_xi: vec![0.0; n],
            h: vec![0.0; n],
            r: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, Default)]
struct RhsWork {
    ws: KernelWorkspace,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl RhsWork {
    fn eval(&mut self, s: &LagrangianState, rule: Quadrature, out: &mut Derivative) -> Result<()> {
        let n = s.len();
        self.p.resize(n, 0.0);
        self.q.resize(n, 0.0);
        self.ws.eval(s.dxi(), &s.zeta, &s.y_xi, &s.u, &s.h, rule, &mut self.p, &mut self.q)?;
        for i in 0..n {
            let forcing = s.u[i] * s.u[i] - self.p[i];
            // y - xi moves with U, and y_t = U
            out.zeta[i] = s.u[i];
            out.y_xi[i] = s.u_xi[i];
            out.u[i] = -self.q[i];
            out.u_xi[i] = 0.5 * s.h[i] + forcing * s.y_xi[i];
            out.h[i] = 2.0 * forcing * s.u_xi[i];
        }
        Ok(())
    }
}

pub fn rhs(s: &LagrangianState) -> Result<Derivative> {
    rhs_with(s, Quadrature::default())
}

pub fn rhs_with(s: &LagrangianState, rule: Quadrature) -> Result<Derivative> {
    s.check_shape()?;
    let mut out = Derivative::zeros(s.len());
    RhsWork::default().eval(s, rule, &mut out)?;
    Ok(out)
}

/// Classical RK4 with preallocated stage buffers.
#[derive(Clone, Debug)]
pub struct Stepper {
    rule: Quadrature,
    work: RhsWork,
    k: [Derivative; 4],
    stage: Option<LagrangianState>,
}

impl Stepper {
    pub fn new(rule: Quadrature) -> Self {
        Self {
            rule,
            work: RhsWork::default(),
            k: Default::default(),
            stage: None,
        }
    }

    /// Advances `s` by `dt` (which may be negative), then floors `y_xi` and `h`
    /// at zero. Returns the most negative value seen before flooring, or zero.
    pub fn step(&mut self, s: &mut LagrangianState, dt: f64) -> Result<f64> {
        let n = s.len();
        for k in &mut self.k {
            if k.zeta.len() != n {
                *k = Derivative::zeros(n);
            }
        }
        let stage = self.stage.get_or_insert_with(|| s.clone());
        if stage.len() != n {
            *stage = s.clone();
        }
        stage.xi.copy_from_slice(&s.xi);
        stage.r.copy_from_slice(&s.r);

        let rule = self.rule;
        let [k1, k2, k3, k4] = &mut self.k;
        self.work.eval(s, rule, k1)?;
        set_stage(stage, s, k1, 0.5 * dt);
        self.work.eval(stage, rule, k2)?;
        set_stage(stage, s, k2, 0.5 * dt);
        self.work.eval(stage, rule, k3)?;
        set_stage(stage, s, k3, dt);
        self.work.eval(stage, rule, k4)?;

        let c = dt / 6.0;
        let combine = |x: &mut [f64], a: &[f64], b: &[f64], cc: &[f64], d: &[f64]| {
            for i in 0..x.len() {
                x[i] += c * (a[i] + 2.0 * b[i] + 2.0 * cc[i] + d[i]);
            }
        };
        combine(&mut s.zeta, &k1.zeta, &k2.zeta, &k3.zeta, &k4.zeta);
        combine(&mut s.y_xi, &k1.y_xi, &k2.y_xi, &k3.y_xi, &k4.y_xi);
        combine(&mut s.u, &k1.u, &k2.u, &k3.u, &k4.u);
        combine(&mut s.u_xi, &k1.u_xi, &k2.u_xi, &k3.u_xi, &k4.u_xi);
        combine(&mut s.h, &k1.h, &k2.h, &k3.h, &k4.h);

        let mut violation = 0.0f64;
        for v in s.y_xi.iter_mut().chain(s.h.iter_mut()) {
            if *v < 0.0 {
                violation = violation.min(*v);
                *v = 0.0;
            }
        }
        Ok(violation)
    }
}

fn set_stage(stage: &mut LagrangianState, s: &LagrangianState, k: &Derivative, a: f64) {
    for i in 0..s.len() {
        stage.zeta[i] = s.zeta[i] + a * k.zeta[i];
        stage.y_xi[i] = s.y_xi[i] + a * k.y_xi[i];
        stage.u[i] = s.u[i] + a * k.u[i];
        stage.u_xi[i] = s.u_xi[i] + a * k.u_xi[i];
        stage.h[i] = s.h[i] + a * k.h[i];
    }
}

/// One RK4 step of size `dt`.
pub fn step(s: &LagrangianState, dt: f64) -> Result<LagrangianState> {
    let mut out = s.clone();
    Stepper::new(Quadrature::default()).step(&mut out, dt)?;
    Ok(out)
}

pub fn energy(s: &LagrangianState) -> f64 {
    s.energy()
}

/// Nodes where `y_xi` has dropped below a threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BreakingSet {
    pub nodes: Vec<usize>,
    pub max_u_xi: f64,
    pub max_r: f64,
    /// Whether `U_xi` and `r` are as small at those nodes as the constraint
    /// `U_xi^2 + r^2 = y_xi h` demands.
    pub consistent: bool,
}

pub fn detect_breaking(s: &LagrangianState, eps: f64) -> BreakingSet {
    let nodes: Vec<usize> = (0..s.len()).filter(|&i| s.y_xi[i] < eps).collect();
    let max_u_xi = nodes.iter().map(|&i| s.u_xi[i].abs()).fold(0.0, f64::max);
    let max_r = nodes.iter().map(|&i| s.r[i].abs()).fold(0.0, f64::max);
    let h_max = s.h.iter().fold(0.0f64, |a, &b| a.max(b));
    let bound = 2.0 * (eps * h_max).sqrt() + 1e-12;
    BreakingSet {
        consistent: max_u_xi <= bound && max_r <= bound,
        nodes,
        max_u_xi,
        max_r,
    }
}

/// Default breaking threshold: a millionth of the median initial `y_xi`.
pub fn default_breaking_eps(s: &LagrangianState) -> f64 {
    let mut v = s.y_xi.clone();
    v.sort_by(f64::total_cmp);
    let median = v[v.len() / 2];
    if median > 0.0 {
        1e-6 * median
    } else {
        1e-6
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveConfig {
    /// Step size, positive. The direction of time comes from `t_end`.
    pub dt: f64,
    pub t_end: f64,
    /// Emit diagnostics every this many steps (and always at both ends).
    pub diag_every: usize,
    /// `y_xi` threshold for breaking; `None` picks `default_breaking_eps`.
    pub breaking_eps: Option<f64>,
    pub quadrature: Quadrature,
    /// A step whose relative energy change exceeds this is rejected.
    pub max_energy_jump: f64,
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            diag_every: 10,
            breaking_eps: None,
            quadrature: Quadrature::default(),
            max_energy_jump: 1e-3,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub min_y_xi: f64,
    pub constraint_residual: f64,
    pub breaking_nodes: usize,
    pub max_p: f64,
    /// `max |U^2 - P|`.
    pub max_forcing: f64,
    /// Most negative `y_xi` or `h` flooring had to remove during the last step.
    pub floor_violation: f64,
    /// `max P` stays below the initial energy.
    pub bound_ok: bool,
}

/// Receives every diagnostics emission along with the state it describes.
pub trait DiagnosticsSink {
    fn record(&mut self, diag: &Diagnostics, state: &LagrangianState);
}

impl<F: FnMut(&Diagnostics, &LagrangianState)> DiagnosticsSink for F {
    fn record(&mut self, diag: &Diagnostics, state: &LagrangianState) {
        self(diag, state)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BreakingEvent {
    pub node: usize,
    pub xi: f64,
    /// First time `y_xi` fell below the threshold, interpolated within the step.
    pub t: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub state: LagrangianState,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub diagnostics: Vec<Diagnostics>,
    pub snapshots: Vec<Snapshot>,
    pub breaking: Vec<BreakingEvent>,
    pub breaking_eps: f64,
    pub final_state: LagrangianState,
}

impl Trajectory {
    /// Earliest recorded breaking time, if any node broke.
    pub fn first_breaking(&self) -> Option<f64> {
        self.breaking.iter().map(|b| b.t).min_by(f64::total_cmp)
    }
}

#[allow(clippy::too_many_arguments)]
fn diagnostics(
    s: &LagrangianState,
    step: usize,
    t: f64,
    eps: f64,
    e0: f64,
    floor_violation: f64,
    rule: Quadrature,
    work: &mut RhsWork,
) -> Result<Diagnostics> {
    let n = s.len();
    work.p.resize(n, 0.0);
    work.q.resize(n, 0.0);
    work.ws.eval(s.dxi(), &s.zeta, &s.y_xi, &s.u, &s.h, rule, &mut work.p, &mut work.q)?;
    let max_p = work.p.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let max_forcing = (0..n).map(|i| (s.u[i] * s.u[i] - work.p[i]).abs()).fold(0.0, f64::max);
    Ok(Diagnostics {
        step,
        t,
        energy: s.energy(),
        min_y_xi: s.y_xi.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
        constraint_residual: s.constraint_residual(),
        breaking_nodes: s.y_xi.iter().filter(|&&v| v < eps).count(),
        max_p,
        max_forcing,
        floor_violation,
        bound_ok: max_p <= e0 * (1.0 + 1e-9) + 1e-14,
    })
}

pub fn evolve(x0: &LagrangianState, cfg: &EvolveConfig) -> Result<Trajectory> {
    evolve_with_sink(x0, cfg, &mut |_: &Diagnostics, _: &LagrangianState| {})
}

/// Integrates from `t = 0` to `cfg.t_end`. Diagnostics go to `sink` as they are
/// produced, so a caller still holds the last good record if a step aborts.
pub fn evolve_with_sink(x0: &LagrangianState, cfg: &EvolveConfig, sink: &mut dyn DiagnosticsSink) -> Result<Trajectory> {
    x0.validate(&Tolerances::default())?;
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive, got {}", cfg.dt)));
    }
    if !cfg.t_end.is_finite() {
        return Err(Error::Config("t_end must be finite".into()));
    }
    let steps = ((cfg.t_end.abs() / cfg.dt) - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps > 0 { cfg.t_end / steps as f64 } else { 0.0 };
    let diag_every = cfg.diag_every.max(1);
    let eps = cfg.breaking_eps.unwrap_or_else(|| default_breaking_eps(x0));

    let mut s = x0.clone();
    let mut stepper = Stepper::new(cfg.quadrature);
    let mut work = RhsWork::default();
    let e0 = s.energy();

    let mut breaking: Vec<BreakingEvent> = (0..s.len())
        .filter(|&i| s.y_xi[i] < eps)
        .map(|i| BreakingEvent { node: i, xi: s.xi[i], t: 0.0 })
        .collect();
    let mut broken: Vec<bool> = s.y_xi.iter().map(|&v| v < eps).collect();

    let mut snap_times: Vec<f64> = cfg.snapshot_times.clone();
    snap_times.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut snapshots = Vec::new();
    let mut next_snap = 0;
    let take_snapshots = |t: f64, s: &LagrangianState, next_snap: &mut usize, out: &mut Vec<Snapshot>| {
        while *next_snap < snap_times.len() && snap_times[*next_snap].abs() <= t.abs() + 0.5 * dt.abs() {
            out.push(Snapshot { t, state: s.clone() });
            *next_snap += 1;
        }
    };

    let mut records = Vec::new();
    let d = diagnostics(&s, 0, 0.0, eps, e0, 0.0, cfg.quadrature, &mut work)?;
    sink.record(&d, &s);
    records.push(d);
    take_snapshots(0.0, &s, &mut next_snap, &mut snapshots);

    let mut prev_y_xi = s.y_xi.clone();
    let mut e_prev = e0;
    for k in 1..=steps {
        let t = k as f64 * dt;
        prev_y_xi.copy_from_slice(&s.y_xi);
        let violation = stepper.step(&mut s, dt)?;
        let e = s.energy();
        if !e.is_finite() || s.u.iter().chain(&s.zeta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        let jump = (e - e_prev).abs() / e_prev.abs().max(f64::MIN_POSITIVE);
        if e_prev != 0.0 && jump > cfg.max_energy_jump {
            return Err(Error::StepRejected { t, jump });
        }
        e_prev = e;

        for i in 0..s.len() {
            if !broken[i] && s.y_xi[i] < eps {
                broken[i] = true;
                let (a, b) = (prev_y_xi[i], s.y_xi[i]);
                let frac = if a > b { ((a - eps) / (a - b)).clamp(0.0, 1.0) } else { 1.0 };
                breaking.push(BreakingEvent { node: i, xi: s.xi[i], t: t - dt + frac * dt });
            }
        }

        if k % diag_every == 0 || k == steps {
            let d = diagnostics(&s, k, t, eps, e0, violation, cfg.quadrature, &mut work)?;
            sink.record(&d, &s);
            records.push(d);
        }
        take_snapshots(t, &s, &mut next_snap, &mut snapshots);
    }

    breaking.sort_by(|a, b| a.t.abs().total_cmp(&b.t.abs()).then(a.node.cmp(&b.node)));
    Ok(Trajectory {
        diagnostics: records,
        snapshots,
        breaking,
        breaking_eps: eps,
        final_state: s,
    })
}

/// Independent evolutions, run concurrently under `exec`.
pub fn evolve_many(states: &[LagrangianState], cfgs: &[EvolveConfig], exec: Execution) -> Vec<Result<Trajectory>> {
    assert_eq!(states.len(), cfgs.len());
    exec.map_indexed(states.len(), |i| evolve(&states[i], &cfgs[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A state in the admissible set with `y_xi = 1/2`, `r = 0`.
    fn peak(n: usize) -> LagrangianState {
        let xi: Vec<f64> = (0..n).map(|i| -12.0 + 24.0 * i as f64 / (n - 1) as f64).collect();
        let u: Vec<f64> = xi.iter().map(|s| 0.5 * (-s * s / 2.0).exp()).collect();
        let u_xi: Vec<f64> = xi.iter().zip(&u).map(|(s, u)| -0.5 * s * u).collect();
        LagrangianState {
            zeta: xi.iter().map(|s| -0.5 * s).collect(),
            y_xi: vec![0.5; n],
            h: u_xi.iter().map(|v| 2.0 * v * v).collect(),
            r: vec![0.0; n],
            xi,
            u,
            u_xi,
        }
    }

    #[test]
    fn zero_state_is_stationary() {
        let xi: Vec<f64> = (0..33).map(|i| i as f64 * 0.25).collect();
        let s = LagrangianState {
            zeta: vec![0.0; 33],
            y_xi: vec![1.0; 33],
            u: vec![0.0; 33],
            u_xi: vec![0.0; 33],
            h: vec![0.0; 33],
            r: vec![0.0; 33],
            xi,
        };
        let d = rhs(&s).unwrap();
        assert!(d.zeta.iter().chain(&d.u).chain(&d.u_xi).chain(&d.h).all(|&v| v == 0.0));
        assert_eq!(step(&s, 0.1).unwrap(), s);
    }

    #[test]
    fn r_is_carried_bitwise() {
        let mut s = peak(65);
        s.r = (0..65).map(|i| 1e-3 * (i as f64).sin()).collect();
        let t = step(&s, 1e-2).unwrap();
        assert_eq!(t.r, s.r);
    }

    #[test]
    fn stepping_backwards_undoes_a_step() {
        let s = peak(129);
        let fwd = step(&s, 1e-2).unwrap();
        let back = step(&fwd, -1e-2).unwrap();
        let err = s.u.iter().zip(&back.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn breaking_set_reports_small_slopes() {
        let mut s = peak(17);
        s.y_xi[8] = 1e-9;
        s.u_xi[8] = 0.0;
        s.h[8] = 1.0;
        let b = detect_breaking(&s, 1e-6);
        assert_eq!(b.nodes, vec![8]);
        assert!(b.consistent);
        s.u_xi[8] = 0.5;
        assert!(!detect_breaking(&s, 1e-6).consistent);
    }

    #[test]
    fn rejects_non_positive_dt() {
        let cfg = EvolveConfig { dt: 0.0, ..Default::default() };
        assert!(matches!(evolve(&peak(17), &cfg), Err(Error::Config(_))));
    }
}
