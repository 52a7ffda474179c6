//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for each
//! and exits non-zero if any failed.

use std::time::Instant;

use chwave::breaking::{
    breaking_time_bound, char_rhs, gamma_blowup_time, gamma_closed, integrate_char, CharOutcome, CharState, Classifier,
    Forcing,
};
use chwave::commands::{run, Command, RoundTrip};
use chwave::config::RunConfig;
use chwave::coords::{default_xi_grid, relabel, to_eulerian, to_lagrangian, EulerianState, LagrangianState, Relabeling};
use chwave::evolution::{evolve, evolve_many, evolve_with_sink, Diagnostics, EvolveConfig};
use chwave::kernel::{eval_pq, Quadrature};
use chwave::presets::{steep_front_width, Preset, Profile, RhoOverlay};
use chwave::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn preset(profile: Profile, rho: Option<RhoOverlay>, x_min: f64, x_max: f64, nx: usize) -> EulerianState {
    Preset { profile, rho, x_min, x_max, nx }.build().unwrap()
}

fn lagrangian(e: &EulerianState, n: usize) -> LagrangianState {
    to_lagrangian(e, &default_xi_grid(e, n)).unwrap()
}

fn gaussian(nx: usize) -> EulerianState {
    preset(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, None, -10.0, 10.0, nx)
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn state_diff(a: &LagrangianState, b: &LagrangianState) -> f64 {
    [
        sup_diff(&a.zeta, &b.zeta),
        sup_diff(&a.y_xi, &b.y_xi),
        sup_diff(&a.u, &b.u),
        sup_diff(&a.u_xi, &b.u_xi),
        sup_diff(&a.h, &b.h),
        sup_diff(&a.r, &b.r),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Random state in the admissible set, with an occasional flat stretch.
fn random_state(rng: &mut ChaCha8Rng, n: usize) -> LagrangianState {
    let dxi = rng.gen_range(0.01..0.5);
    let xi: Vec<f64> = (0..n).map(|i| -0.5 * n as f64 * dxi + i as f64 * dxi).collect();
    let flat = if rng.gen_bool(0.5) {
        let a = rng.gen_range(0..n / 2);
        a..a + rng.gen_range(2..n / 4 + 3)
    } else {
        0..0
    };
    let mut y_xi = vec![0.0; n];
    let mut u_xi = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut r = vec![0.0; n];
    for i in 0..n {
        if flat.contains(&i) {
            h[i] = rng.gen_range(0.0..2.0);
        } else {
            y_xi[i] = rng.gen_range(0.05..2.0);
            u_xi[i] = rng.gen_range(-1.0..1.0);
            r[i] = rng.gen_range(-1.0..1.0);
            h[i] = (u_xi[i] * u_xi[i] + r[i] * r[i]) / y_xi[i];
        }
    }
    let mut zeta = vec![0.0; n];
    let mut y = xi[0] + rng.gen_range(-1.0..1.0);
    zeta[0] = y - xi[0];
    for i in 1..n {
        y += 0.5 * dxi * (y_xi[i - 1] + y_xi[i]);
        zeta[i] = y - xi[i];
    }
    let u = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    LagrangianState { xi, zeta, y_xi, u, u_xi, h, r }
}

/// Direct O(N^2) trapezoid quadrature of P and Q.
fn direct_pq(s: &LagrangianState) -> (Vec<f64>, Vec<f64>) {
    let n = s.len();
    let dxi = s.dxi();
    let y = s.y();
    let g: Vec<f64> = (0..n).map(|j| 2.0 * s.u[j] * s.u[j] * s.y_xi[j] + s.h[j]).collect();
    let w = |j: usize| if j == 0 || j == n - 1 { 0.5 * dxi } else { dxi };
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let k = (-(y[i] - y[j]).abs()).exp() * w(j) * g[j];
            p[i] += 0.25 * k;
            if j < i {
                q[i] -= 0.25 * k;
            } else if j > i {
                q[i] += 0.25 * k;
            }
        }
    }
    (p, q)
}

fn rel_err(fast: &[f64], direct: &[f64]) -> f64 {
    let scale = direct.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    sup_diff(fast, direct) / if scale > 0.0 { scale } else { 1.0 }
}

fn kernel_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut worst_corrected = 0.0f64;
    for k in 0..50 {
        let n = [16, 64, 256][k % 3];
        let s = random_state(&mut rng, n);
        let (p, q) = eval_pq(&s, Quadrature::Trapezoid).unwrap();
        let (pd, qd) = direct_pq(&s);
        worst = worst.max(rel_err(&p, &pd)).max(rel_err(&q, &qd));

        // the corrected rule adds local terms on top of the same sums
        let (pc, qc) = eval_pq(&s, Quadrature::Corrected).unwrap();
        let dxi = s.dxi();
        let g: Vec<f64> = (0..n).map(|j| 2.0 * s.u[j] * s.u[j] * s.y_xi[j] + s.h[j]).collect();
        let gx: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(2).min(n - 5);
                let st: Vec<f64> = (lo..lo + 5).map(|j| (j as f64 - i as f64) * dxi).collect();
                // derivative of the quartic through the stencil at offset 0
                (0..5)
                    .map(|a| {
                        let mut d = 0.0;
                        for b in (0..5).filter(|&b| b != a) {
                            let mut term = 1.0 / (st[a] - st[b]);
                            for c in (0..5).filter(|&c| c != a && c != b) {
                                term *= (0.0 - st[c]) / (st[a] - st[c]);
                            }
                            d += term;
                        }
                        d * g[lo + a]
                    })
                    .sum()
            })
            .collect();
        let c = 0.25 * dxi * dxi / 6.0;
        let pe: Vec<f64> = (0..n).map(|i| pd[i] - c * s.y_xi[i] * g[i]).collect();
        let qe: Vec<f64> = (0..n).map(|i| qd[i] + c * gx[i]).collect();
        worst_corrected = worst_corrected.max(rel_err(&pc, &pe)).max(rel_err(&qc, &qe));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && worst_corrected <= 1e-12 && secs < 5.0,
        format!("max rel err {worst:.2e} (corrected rule {worst_corrected:.2e}), {secs:.2} s"),
    )
}

fn round_trip() -> Outcome {
    let n = 4096;
    let smooth = [
        ("gaussian", preset(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, None, -10.0, 10.0, n)),
        ("sech2", preset(Profile::Sech2 { amplitude: 0.8, width: 1.5 }, None, -15.0, 15.0, n)),
        (
            "gaussian+rho",
            preset(
                Profile::Gaussian { amplitude: 1.0, width: 1.0 },
                Some(RhoOverlay { level: 0.5, halfwidth: 1.0, edge: 0.5 }),
                -10.0,
                10.0,
                n,
            ),
        ),
    ];
    let mut worst = 0.0f64;
    for (_, e) in &smooth {
        let l = lagrangian(e, n);
        let back = to_eulerian(&l).unwrap();
        let rt = RoundTrip::measure(e, &l, &back);
        worst = worst.max(rt.u_sup_error).max(rt.rho_sup_error).max(rt.cdf_sup_error);
    }
    let e = preset(Profile::Atom { position: 0.0, mass: 1.0 }, None, -10.0, 10.0, n);
    let back = to_eulerian(&lagrangian(&e, n)).unwrap();
    let atom_err = match back.mu.atoms() {
        [(pos, m)] if *pos == 0.0 => (m - 1.0).abs(),
        _ => f64::INFINITY,
    };
    outcome(
        worst <= 1e-7 && atom_err <= 1e-8,
        format!("worst u/rho/cdf error {worst:.2e}, atom mass error {atom_err:.2e}"),
    )
}

fn energy_samples(traj: &[Diagnostics]) -> Vec<f64> {
    traj.iter().map(|d| d.energy).collect()
}

fn drift(energies: &[f64]) -> f64 {
    energies.iter().map(|e| (e - energies[0]).abs()).fold(0.0, f64::max) / energies[0]
}

/// Criteria 3 and 4 share one run.
fn energy_and_constraint() -> (Outcome, Outcome) {
    let start = Instant::now();
    let x0 = lagrangian(&gaussian(2048), 2048);
    let base = EvolveConfig { dt: 1e-3, t_end: 2.0, diag_every: 1, ..Default::default() };
    let main = evolve(&x0, &base).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let d_main = drift(&energy_samples(&main.diagnostics));

    // Convergence order of the time discretization. At dt = 1e-3 the time error
    // sits below the floor set by rounding, so the order is measured where it is
    // resolvable: at dt and dt/2 against a dt/8 reference, on common times.
    let cfg = |dt: f64, every: usize| EvolveConfig { dt, t_end: 2.0, diag_every: every, ..Default::default() };
    let runs = evolve_many(
        &[x0.clone(), x0.clone(), x0.clone(), x0.clone()],
        &[cfg(0.04, 5), cfg(0.02, 10), cfg(0.005, 40), cfg(5e-4, 1)],
        Execution::default(),
    );
    let runs: Vec<_> = runs.into_iter().map(|r| r.unwrap()).collect();
    let reference = energy_samples(&runs[2].diagnostics);
    let err = |k: usize| sup_diff(&energy_samples(&runs[k].diagnostics), &reference) / reference[0];
    let (e1, e2) = (err(0), err(1));
    let ratio = e1 / e2;
    let d_half = drift(&energy_samples(&runs[3].diagnostics));

    let c3 = outcome(
        d_main <= 1e-6 && ratio >= 12.0 && secs < 60.0,
        format!(
            "drift {d_main:.2e} at dt=1e-3 in {secs:.1} s; time-error ratio {ratio:.1} \
             (dt=0.04: {e1:.2e}, dt=0.02: {e2:.2e}); drift at dt=5e-4 {d_half:.2e}"
        ),
    );
    let c0 = main.diagnostics[0].constraint_residual;
    let cmax = main.diagnostics.iter().map(|d| d.constraint_residual).fold(0.0, f64::max);
    let c4 = outcome(c0 <= 1e-12 && cmax <= 1e-6, format!("initial {c0:.2e}, max {cmax:.2e}"));
    (c3, c4)
}

struct SteepFront {
    e: EulerianState,
    t_bound: f64,
}

const STEEP_N: usize = 4097;

fn steep_front(rho: Option<RhoOverlay>) -> SteepFront {
    let (a, m) = (0.25, 3.0);
    let w = steep_front_width(a, m, 1.5, -4.0, 4.0, STEEP_N).unwrap();
    let plain = preset(Profile::SteepFront { amplitude: a, width: w, envelope: m }, None, -4.0, 4.0, STEEP_N);
    let cl = Classifier::new(&plain);
    let x_steep = plain.x.iter().copied().min_by(|p, q| cl.u0x(*p).total_cmp(&cl.u0x(*q))).unwrap();
    let t_bound = breaking_time_bound(cl.u0x(x_steep), cl.constant()).unwrap();
    let e = preset(Profile::SteepFront { amplitude: a, width: w, envelope: m }, rho, -4.0, 4.0, STEEP_N);
    SteepFront { e, t_bound }
}

fn breaking_bound() -> Outcome {
    let sf = steep_front(None);
    let x0 = lagrangian(&sf.e, STEEP_N);
    let cfg = EvolveConfig { dt: 1e-3, t_end: 1.2 * sf.t_bound, diag_every: 50, ..Default::default() };
    let traj = evolve(&x0, &cfg).unwrap();
    let t = sf.t_bound;
    match traj.first_breaking() {
        Some(tb) => outcome(tb > 0.0 && tb <= t * (1.0 + 1e-3), format!("t_b = {tb:.5}, T = {t:.5}")),
        None => outcome(false, format!("no breaking before {:.4} (T = {t:.5})", cfg.t_end)),
    }
}

fn no_blowup() -> Outcome {
    let t = steep_front(None).t_bound;
    let sf = steep_front(Some(RhoOverlay { level: 0.5, halfwidth: 1.0, edge: 0.1 }));
    let x0 = lagrangian(&sf.e, STEEP_N);
    // by symmetry the middle label follows the steepest characteristic
    let c = STEEP_N / 2;
    let (y0, a0) = (x0.y_xi[c], x0.u_xi[c] / x0.y_xi[c]);
    let mut min_ratio = f64::INFINITY;
    let mut max_alpha = 0.0f64;
    let cfg = EvolveConfig { dt: 1e-3, t_end: 2.0 * t, diag_every: 1, ..Default::default() };
    let res = evolve_with_sink(&x0, &cfg, &mut |_: &Diagnostics, s: &LagrangianState| {
        min_ratio = min_ratio.min(s.y_xi[c] / y0);
        max_alpha = max_alpha.max((s.u_xi[c] / s.y_xi[c]).abs());
    });
    if let Err(e) = res {
        return outcome(false, format!("evolution failed: {e}"));
    }
    outcome(
        min_ratio >= 1e-3 && max_alpha <= 10.0 * a0.abs(),
        format!("min y_xi ratio {min_ratio:.3e}, max |alpha| / |alpha0| = {:.2} over [0, {:.4}]", max_alpha / a0.abs(), 2.0 * t),
    )
}

/// Plain RK4 for gamma_t = -gamma^2/2 + C.
fn rk4_gamma(g: f64, c: f64, dt: f64) -> f64 {
    let f = |v: f64| -0.5 * v * v + c;
    let k1 = f(g);
    let k2 = f(g + 0.5 * dt * k1);
    let k3 = f(g + 0.5 * dt * k2);
    let k4 = f(g + dt * k3);
    g + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn gamma_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_rel = 0.0f64;
    let mut worst_time = 0.0f64;
    let mut lib_bracket_ok = true;
    for _ in 0..20 {
        let c: f64 = rng.gen_range(0.1..5.0);
        let s = (2.0 * c).sqrt();
        let g0 = -s * rng.gen_range(1.05..5.0);
        let tb = gamma_blowup_time(g0, c).unwrap();
        let steps = 200_000;
        let dt = tb / steps as f64;
        let mut g = g0;
        let mut k = 0;
        while (k as f64) * dt < 0.99 * tb {
            g = rk4_gamma(g, c, dt);
            k += 1;
            let exact = gamma_closed(g0, c, k as f64 * dt).unwrap();
            worst_rel = worst_rel.max(((g - exact) / exact).abs());
        }
        // carry on until the oracle diverges and bracket that moment
        let t_div = loop {
            g = rk4_gamma(g, c, dt);
            k += 1;
            if !g.is_finite() || g.abs() > 1e12 {
                break k as f64 * dt;
            }
        };
        worst_time = worst_time.max((t_div - tb).abs());
        let traj = integrate_char(CharState { alpha: g0, beta: 0.0, forcing: c }, &Forcing::Constant(c), 2.0 * tb, dt).unwrap();
        match traj.outcome {
            CharOutcome::BlowUp { t_before, t_after } => lib_bracket_ok &= t_before - 1e-4 <= tb && tb <= t_after + 1e-4,
            CharOutcome::Completed => lib_bracket_ok = false,
        }
    }
    outcome(
        worst_rel <= 1e-6 && worst_time <= 1e-4 && lib_bracket_ok,
        format!("max rel err {worst_rel:.2e}, blow-up time mismatch {worst_time:.2e}, library bracket ok: {lib_bracket_ok}"),
    )
}

fn time_reversal() -> Outcome {
    let x0 = lagrangian(&gaussian(1024), 1024);
    let fwd = evolve(&x0, &EvolveConfig { dt: 1e-3, t_end: 1.0, diag_every: 100, ..Default::default() }).unwrap();
    let back = evolve(&fwd.final_state, &EvolveConfig { dt: 1e-3, t_end: -1.0, diag_every: 100, ..Default::default() }).unwrap();
    let err = state_diff(&back.final_state, &x0);
    let moved = state_diff(&fwd.final_state, &x0);
    outcome(err <= 1e-6 && moved > 1e-2, format!("sup error {err:.2e} after moving {moved:.2e}"))
}

fn relabeling() -> Outcome {
    let e = preset(
        Profile::Gaussian { amplitude: 1.0, width: 1.0 },
        Some(RhoOverlay { level: 0.3, halfwidth: 1.0, edge: 0.5 }),
        -10.0,
        10.0,
        2048,
    );
    let x0 = lagrangian(&e, 2048);
    let f = Relabeling::from_fn(&x0.xi, |s| s + 0.3 * s.tanh(), |s| 1.0 + 0.3 / s.cosh().powi(2));
    let cfg = EvolveConfig { dt: 1e-3, t_end: 1.0, diag_every: 100, ..Default::default() };
    let runs = evolve_many(&[relabel(&x0, &f).unwrap(), x0.clone()], &[cfg.clone(), cfg], Execution::default());
    let a = runs[0].as_ref().unwrap().final_state.clone();
    let b = relabel(&runs[1].as_ref().unwrap().final_state, &f).unwrap();
    let err = state_diff(&a, &b);
    outcome(err <= 1e-5, format!("sup disagreement {err:.2e}"))
}

fn beta_sign() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut zero_ok = true;
    let mut positive_ok = true;
    let mut samples = 0usize;
    for k in 0..100 {
        let c = rng.gen_range(0.1..5.0);
        let forcing = if k % 2 == 0 {
            Forcing::Constant(rng.gen_range(-c..c))
        } else {
            let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.2).collect();
            let value = t.iter().map(|_| rng.gen_range(-c..c)).collect();
            Forcing::Series { t, value }
        };
        let alpha = rng.gen_range(-5.0..5.0);
        let t_end = rng.gen_range(0.5..3.0) * if k % 5 == 4 { -1.0 } else { 1.0 };
        let zero = integrate_char(CharState { alpha, beta: 0.0, forcing: 0.0 }, &forcing, t_end, 1e-3).unwrap();
        zero_ok &= zero.samples.iter().all(|s| s.beta.to_bits() == 0);
        let beta = rng.gen_range(1e-3..3.0);
        let pos = integrate_char(CharState { alpha, beta, forcing: 0.0 }, &forcing, t_end, 1e-3).unwrap();
        positive_ok &= pos.outcome == CharOutcome::Completed && pos.samples.iter().all(|s| s.beta > 0.0);
        samples += pos.samples.len();
    }
    outcome(zero_ok && positive_ok, format!("beta=0 line exact: {zero_ok}, beta>0 kept: {positive_ok} ({samples} samples)"))
}

fn vectorfield_figure() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(None, &["forcing=5".into(), format!("out_dir={:?}", dir.path().display().to_string())]).unwrap();
    run(Command::Vectorfield, &cfg).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("vectorfield.csv")).unwrap();
    let mut rows = 0;
    let mut exact = true;
    let mut origin = false;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = rec.iter().map(|s| s.parse().unwrap()).collect();
        let (a_t, b_t) = char_rhs(CharState { alpha: v[0], beta: v[1], forcing: 5.0 });
        exact &= a_t == v[2] && b_t == v[3];
        origin |= v == [0.0, 0.0, 5.0, 0.0];
        rows += 1;
    }
    outcome(exact && origin && rows == 441, format!("{rows} rows, exact agreement: {exact}, row (0,0,5,0) present: {origin}"))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "kernel oracle equivalence", kernel_oracle()));
    results.push((2, "round trip", round_trip()));
    let (c3, c4) = energy_and_constraint();
    results.push((3, "energy conservation", c3));
    results.push((4, "constraint transport", c4));
    results.push((5, "breaking-time bound", breaking_bound()));
    results.push((6, "no blow-up with density", no_blowup()));
    results.push((7, "comparison ODE closed form", gamma_oracle()));
    results.push((8, "time reversal", time_reversal()));
    results.push((9, "relabeling equivariance", relabeling()));
    results.push((10, "density sign and invariant line", beta_sign()));
    results.push((11, "vector field lattice", vectorfield_figure()));

    let mut failed = 0;
    for (k, name, o) in &results {
        println!("[{}] {k:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", results.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
