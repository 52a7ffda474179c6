//! The command layer behind the `chwave` binary. Each command resolves its
//! inputs from a `RunConfig`, writes `manifest.json` into the output directory
//! before anything else, then its results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::breaking::{classify_sweep, vectorfield_grid_with, Classifier, VerdictKind, VerdictRecord};
use crate::config::RunConfig;
use crate::coords::{default_xi_grid, to_eulerian, to_lagrangian_with, EulerianState, LagrangianState};
use crate::error::{Error, Result};
use crate::evolution::{evolve_with_sink, BreakingEvent, Diagnostics};
use crate::exec::Execution;
use crate::kernel::eval_pq;
use crate::presets::Preset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Transform,
    Evolve,
    Predict,
    Vectorfield,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Transform => "transform",
            Command::Evolve => "evolve",
            Command::Predict => "predict",
            Command::Vectorfield => "vectorfield",
            Command::Diagnose => "diagnose",
        }
    }
}

/// Derived constants recorded in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct Derived {
    #[serde(rename = "C")]
    pub c: f64,
    pub energy: f64,
    pub u_norm_sq: f64,
    pub mu_mass: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub xi_min: f64,
    pub xi_max: f64,
    pub nxi: usize,
    pub dxi: f64,
}

impl Derived {
    fn new(e: &EulerianState, xi: &[f64]) -> Self {
        let u_norm_sq = e.u_norm_sq();
        let mu_mass = e.mu.total_mass();
        let n = xi.len();
        Self {
            c: 2.0 * (u_norm_sq + mu_mass),
            energy: u_norm_sq + mu_mass,
            u_norm_sq,
            mu_mass,
            x_min: e.x[0],
            x_max: e.x[e.x.len() - 1],
            nx: e.x.len(),
            xi_min: xi[0],
            xi_max: xi[n - 1],
            nxi: n,
            dxi: xi[1] - xi[0],
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    preset: Option<&'a Preset>,
    derived: Option<&'a Derived>,
}

/// Errors of the round trip `to_eulerian(to_lagrangian(e))`, measured at the
/// original grid nodes.
#[derive(Clone, Debug, Serialize)]
pub struct RoundTrip {
    pub u_sup_error: f64,
    pub rho_sup_error: f64,
    pub cdf_sup_error: f64,
    pub mass_error: f64,
    pub atom_mass_error: f64,
    pub canonical_drift: f64,
    pub constraint_residual: f64,
    pub energy_eulerian: f64,
    pub energy_lagrangian: f64,
}

impl RoundTrip {
    pub fn measure(e: &EulerianState, l: &LagrangianState, back: &EulerianState) -> Self {
        let (u0, r0) = (e.u_interpolant(), e.rho_interpolant());
        let (u1, r1) = (back.u_interpolant(), back.rho_interpolant());
        let sup = |f: &dyn Fn(f64) -> f64| e.x.iter().map(|&x| f(x).abs()).fold(0.0, f64::max);
        Self {
            u_sup_error: sup(&|x| u1.eval(x) - u0.eval(x)),
            rho_sup_error: sup(&|x| r1.eval(x) - r0.eval(x)),
            cdf_sup_error: sup(&|x| back.mu.cdf(x) - e.mu.cdf(x)),
            mass_error: (back.mu.total_mass() - e.mu.total_mass()).abs(),
            atom_mass_error: (back.mu.atom_mass() - e.mu.atom_mass()).abs(),
            canonical_drift: l.canonical_drift(),
            constraint_residual: l.constraint_residual(),
            energy_eulerian: e.energy(),
            energy_lagrangian: l.energy(),
        }
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_manifest(dir: &Path, cmd: Command, cfg: &RunConfig, preset: Option<&Preset>, derived: Option<&Derived>) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            tool: "chwave",
            version: env!("CARGO_PKG_VERSION"),
            command: cmd.name(),
            config: cfg,
            preset,
            derived,
        },
    )
}

fn execution(cfg: &RunConfig) -> Execution {
    if cfg.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

/// Runs a command and returns human-readable summary lines.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<String>> {
    #[cfg(feature = "parallel")]
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
        return pool.install(|| dispatch(cmd, cfg));
    }
    dispatch(cmd, cfg)
}

fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<Vec<String>> {
    match cmd {
        Command::Transform => transform(cfg),
        Command::Evolve => evolve(cfg),
        Command::Predict => predict(cfg),
        Command::Vectorfield => vectorfield(cfg),
        Command::Diagnose => diagnose(cfg),
    }
}

struct Setup {
    preset: Preset,
    e: EulerianState,
    xi: Vec<f64>,
    derived: Derived,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let preset = cfg.preset()?;
    let e = preset.build()?;
    let xi = default_xi_grid(&e, cfg.nxi());
    let derived = Derived::new(&e, &xi);
    Ok(Setup { preset, e, xi, derived })
}

fn transform(cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = out_dir(cfg)?;
    if let Some(input) = &cfg.input {
        let text = fs::read_to_string(input).map_err(|e| Error::Config(format!("cannot read {input}: {e}")))?;
        let l: LagrangianState = serde_json::from_str(&text)?;
        l.check_shape().map_err(|e| Error::Config(format!("{input}: {e}")))?;
        let e = to_eulerian(&l)?;
        let derived = Derived::new(&e, &l.xi);
        write_manifest(&dir, Command::Transform, cfg, None, Some(&derived))?;
        write_json(&dir.join("eulerian.json"), &e)?;
        return Ok(vec![
            format!("wrote eulerian.json: {} points, {} atoms", e.x.len(), e.mu.atoms().len()),
            format!("energy {:.12e}", e.energy()),
        ]);
    }

    let s = setup(cfg)?;
    write_manifest(&dir, Command::Transform, cfg, Some(&s.preset), Some(&s.derived))?;
    let l = to_lagrangian_with(&s.e, &s.xi, execution(cfg))?;
    write_json(&dir.join("lagrangian.json"), &l)?;
    let back = to_eulerian(&l)?;
    write_json(&dir.join("eulerian_roundtrip.json"), &back)?;
    let rt = RoundTrip::measure(&s.e, &l, &back);
    write_json(&dir.join("roundtrip.json"), &rt)?;
    Ok(vec![
        format!("wrote lagrangian.json ({} labels)", l.len()),
        format!(
            "round trip: u {:.2e}, rho {:.2e}, cdf {:.2e}, y+H-id {:.2e}",
            rt.u_sup_error, rt.rho_sup_error, rt.cdf_sup_error, rt.canonical_drift
        ),
    ])
}

#[derive(Serialize)]
struct DiagRow {
    t: f64,
    energy: f64,
    min_y_xi: f64,
    constraint_residual: f64,
    breaking_nodes: usize,
}

#[derive(Serialize)]
struct BreakingReport<'a> {
    breaking_eps: f64,
    first_breaking: Option<f64>,
    events: &'a [BreakingEvent],
}

#[derive(Serialize)]
struct Abort<'a> {
    error: String,
    last_good: Option<&'a Diagnostics>,
}

#[derive(Serialize)]
struct SnapshotFile<'a> {
    t: f64,
    state: &'a LagrangianState,
}

fn evolve(cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = out_dir(cfg)?;
    let s = setup(cfg)?;
    write_manifest(&dir, Command::Evolve, cfg, Some(&s.preset), Some(&s.derived))?;
    let x0 = to_lagrangian_with(&s.e, &s.xi, execution(cfg))?;
    let ecfg = cfg.evolve_config();

    let mut csv = csv::Writer::from_path(dir.join("diagnostics.csv"))?;
    let mut last: Option<Diagnostics> = None;
    let mut csv_error: Option<csv::Error> = None;
    let result = evolve_with_sink(&x0, &ecfg, &mut |d: &Diagnostics, _: &LagrangianState| {
        let row = DiagRow {
            t: d.t,
            energy: d.energy,
            min_y_xi: d.min_y_xi,
            constraint_residual: d.constraint_residual,
            breaking_nodes: d.breaking_nodes,
        };
        if let Err(e) = csv.serialize(row) {
            csv_error.get_or_insert(e);
        }
        last = Some(d.clone());
    });
    csv.flush()?;
    if let Some(e) = csv_error {
        return Err(e.into());
    }
    let traj = match result {
        Ok(t) => t,
        Err(err) => {
            write_json(&dir.join("abort.json"), &Abort { error: err.to_string(), last_good: last.as_ref() })?;
            return Err(err);
        }
    };

    if !traj.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        for snap in &traj.snapshots {
            write_json(&snap_dir.join(format!("t_{:.6}.json", snap.t)), &SnapshotFile { t: snap.t, state: &snap.state })?;
        }
    }
    write_json(&dir.join("final.json"), &SnapshotFile { t: cfg.t_end, state: &traj.final_state })?;
    write_json(
        &dir.join("breaking.json"),
        &BreakingReport { breaking_eps: traj.breaking_eps, first_breaking: traj.first_breaking(), events: &traj.breaking },
    )?;

    let e0 = traj.diagnostics[0].energy;
    let drift = traj.diagnostics.iter().map(|d| (d.energy - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let mut lines = vec![
        format!("evolved to t = {} in {} diagnostic records", cfg.t_end, traj.diagnostics.len()),
        format!("max relative energy drift {drift:.3e}"),
    ];
    match traj.first_breaking() {
        Some(t) => lines.push(format!("first breaking at t = {t:.6} ({} nodes)", traj.breaking.len())),
        None => lines.push("no breaking detected".into()),
    }
    Ok(lines)
}

#[derive(Serialize)]
struct KindCount {
    kind: VerdictKind,
    count: usize,
    min_t_bound: Option<f64>,
}

fn summarize(records: &[VerdictRecord]) -> Vec<KindCount> {
    [VerdictKind::NoBreaking, VerdictKind::FutureBreaking, VerdictKind::PastBreaking, VerdictKind::Indeterminate]
        .into_iter()
        .map(|kind| {
            let of_kind = records.iter().filter(|r| r.kind == kind);
            KindCount {
                kind,
                count: of_kind.clone().count(),
                min_t_bound: of_kind.filter_map(|r| r.t_bound).min_by(f64::total_cmp),
            }
        })
        .collect()
}

fn predict(cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = out_dir(cfg)?;
    let s = setup(cfg)?;
    write_manifest(&dir, Command::Predict, cfg, Some(&s.preset), Some(&s.derived))?;
    let records = classify_sweep(&s.e, &s.e.x, execution(cfg))?;
    write_json(&dir.join("verdicts.json"), &records)?;
    let summary = summarize(&records);
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for row in &summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(summary
        .iter()
        .map(|k| match k.min_t_bound {
            Some(t) => format!("{:?}: {} points, smallest bound {t:.6}", k.kind, k.count),
            None => format!("{:?}: {} points", k.kind, k.count),
        })
        .collect())
}

fn vectorfield(cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = out_dir(cfg)?;
    write_manifest(&dir, Command::Vectorfield, cfg, None, None)?;
    let rows = vectorfield_grid_with(
        cfg.forcing,
        (cfg.alpha_min, cfg.alpha_max),
        (cfg.beta_min, cfg.beta_max),
        cfg.lattice_n,
        execution(cfg),
    )?;
    let mut w = csv::Writer::from_path(dir.join("vectorfield.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(vec![format!("wrote vectorfield.csv ({} rows)", rows.len())])
}

#[derive(Serialize)]
struct Diagnosis {
    energy_eulerian: f64,
    energy_lagrangian: f64,
    #[serde(rename = "C")]
    c: f64,
    consistency_residual: f64,
    constraint_residual: f64,
    canonical_drift: f64,
    min_y_xi: f64,
    max_p: f64,
    max_forcing: f64,
    bound_ok: bool,
    plateau_nodes: usize,
    steepest: VerdictRecord,
}

fn diagnose(cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = out_dir(cfg)?;
    let s = setup(cfg)?;
    write_manifest(&dir, Command::Diagnose, cfg, Some(&s.preset), Some(&s.derived))?;
    let l = to_lagrangian_with(&s.e, &s.xi, execution(cfg))?;
    let (p, _) = eval_pq(&l, cfg.quadrature)?;
    let max_p = p.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let max_forcing = (0..l.len()).map(|i| (l.u[i] * l.u[i] - p[i]).abs()).fold(0.0, f64::max);
    let cl = Classifier::new(&s.e);
    let x_steep = s
        .e
        .x
        .iter()
        .copied()
        .min_by(|a, b| cl.u0x(*a).total_cmp(&cl.u0x(*b)))
        .expect("grid has nodes");
    let d = Diagnosis {
        energy_eulerian: s.e.energy(),
        energy_lagrangian: l.energy(),
        c: cl.constant(),
        consistency_residual: s.e.consistency_residual(),
        constraint_residual: l.constraint_residual(),
        canonical_drift: l.canonical_drift(),
        min_y_xi: l.y_xi.iter().fold(f64::INFINITY, |a, &b| a.min(b)),
        max_p,
        max_forcing,
        bound_ok: max_p <= s.e.energy() * (1.0 + 1e-9),
        plateau_nodes: l.y_xi.iter().filter(|&&v| v == 0.0).count(),
        steepest: cl.classify(x_steep)?,
    };
    write_json(&dir.join("diagnose.json"), &d)?;
    Ok(vec![
        format!("energy {:.12e} (lagrangian {:.12e})", d.energy_eulerian, d.energy_lagrangian),
        format!("C = {:.6e}, steepest slope {:.6e} at x = {}", d.c, d.steepest.u0x, d.steepest.x),
        format!("steepest point verdict: {:?}", d.steepest.kind),
    ])
}
