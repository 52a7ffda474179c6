//! Finite Radon measures on the line and their push-forward under monotone maps.
//!
//! A measure is an absolutely continuous part, stored as non-negative density
//! samples on a grid (zero outside it), plus finitely many atoms. Pushing a
//! weighted sample set forward through a non-decreasing map turns every
//! plateau of the map into an atom carrying the weight sitting on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{node_slopes, CubicHermite, Outside};

/// Relative slope below which a map is treated as flat.
pub const PLATEAU_EPS: f64 = 1e-8;

/// Relative backward step of the node positions accepted as a plateau. Near a
/// breaking point neighbouring characteristics meet and the integrated
/// positions can cross by a rounding-sized amount.
pub const FOLD_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MeasureRecord {
    grid: Vec<f64>,
    density: Vec<f64>,
    atoms: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MeasureRecord", into = "MeasureRecord")]
pub struct RadonMeasure {
    density: CubicHermite,
    /// (position, mass), strictly increasing positions, positive masses.
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<MeasureRecord> for RadonMeasure {
    type Error = Error;

    fn try_from(r: MeasureRecord) -> Result<Self> {
        RadonMeasure::new(r.grid, r.density, r.atoms.into_iter().map(|[p, m]| (p, m)).collect())
    }
}

impl From<RadonMeasure> for MeasureRecord {
    fn from(m: RadonMeasure) -> Self {
        MeasureRecord {
            grid: m.grid().to_vec(),
            density: m.density().to_vec(),
            atoms: m.atoms.iter().map(|&(p, q)| [p, q]).collect(),
        }
    }
}

pub(crate) fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid(format!("{what} needs at least 2 nodes")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid(format!("{what} has non-finite nodes")));
    }
    if let Some(k) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "{what} is not strictly increasing at node {}",
            k + 1
        )));
    }
    Ok(())
}

impl RadonMeasure {
    /// Builds a measure from density samples and atoms. Atoms at identical
    /// positions are merged by summing their masses.
    pub fn new(grid: Vec<f64>, density: Vec<f64>, mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        check_grid(&grid, "measure grid")?;
        if density.len() != grid.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} density samples for {} grid nodes",
                density.len(),
                grid.len()
            )));
        }
        if let Some(v) = density.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidMeasure(format!("density sample {v} is not a finite non-negative number")));
        }
        if let Some(a) = atoms.iter().find(|(p, m)| !p.is_finite() || !m.is_finite() || *m <= 0.0) {
            return Err(Error::InvalidMeasure(format!("atom {a:?} needs a finite position and positive mass")));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (p, m) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += m,
                _ => merged.push((p, m)),
            }
        }
        // clean up -0.0 so that serialized output is canonical
        let density = density.into_iter().map(|v| v + 0.0).collect();
        Ok(Self {
            density: CubicHermite::nonnegative(grid, density, Outside::Zero),
            atoms: merged,
        })
    }

    pub fn zero() -> Self {
        Self::new(vec![0.0, 1.0], vec![0.0, 0.0], Vec::new()).expect("zero measure is valid")
    }

    /// Single atom and no absolutely continuous part.
    pub fn atom(position: f64, mass: f64) -> Result<Self> {
        Self::new(vec![position - 1.0, position + 1.0], vec![0.0, 0.0], vec![(position, mass)])
    }

    pub fn grid(&self) -> &[f64] {
        self.density.nodes()
    }

    pub fn density(&self) -> &[f64] {
        self.density.values()
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density_interpolant(&self) -> &CubicHermite {
        &self.density
    }

    /// Density of the absolutely continuous part at `x`.
    pub fn density_at(&self, x: f64) -> f64 {
        self.density.eval(x)
    }

    pub fn ac_mass(&self) -> f64 {
        self.density.total()
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.ac_mass() + self.atom_mass()
    }

    /// `mu((-inf, x])`, atoms at `x` included.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 <= x);
        self.density.integral_to(x) + self.atoms[..k].iter().map(|a| a.1).sum::<f64>()
    }

    /// `mu((-inf, x))`, atoms at `x` excluded.
    pub fn cdf_open(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|a| a.0 < x);
        self.density.integral_to(x) + self.atoms[..k].iter().map(|a| a.1).sum::<f64>()
    }

    /// Smallest interval containing the density grid and all atoms.
    pub fn span(&self) -> (f64, f64) {
        let mut lo = self.density.lo();
        let mut hi = self.density.hi();
        if let (Some(a), Some(b)) = (self.atoms.first(), self.atoms.last()) {
            lo = lo.min(a.0);
            hi = hi.max(b.0);
        }
        (lo, hi)
    }
}

pub fn cdf(mu: &RadonMeasure, x: f64) -> f64 {
    mu.cdf(x)
}

pub fn total_mass(mu: &RadonMeasure) -> f64 {
    mu.total_mass()
}

/// Samples of a non-decreasing map `y(xi)` together with weights `w(xi)` that
/// are to be pushed forward.
#[derive(Clone, Debug)]
pub struct WeightedSamples {
    pub xi: Vec<f64>,
    pub y: Vec<f64>,
    pub y_xi: Vec<f64>,
    pub weight: Vec<f64>,
}

impl WeightedSamples {
    /// Estimates the derivative of `y` from the samples.
    pub fn new(xi: Vec<f64>, y: Vec<f64>, weight: Vec<f64>) -> Result<Self> {
        check_grid(&xi, "xi grid")?;
        if y.len() != xi.len() {
            return Err(Error::InvalidState("y and xi lengths differ".into()));
        }
        let y_xi = node_slopes(&xi, &y);
        Self::with_derivative(xi, y, y_xi, weight)
    }

    pub fn with_derivative(xi: Vec<f64>, y: Vec<f64>, y_xi: Vec<f64>, weight: Vec<f64>) -> Result<Self> {
        check_grid(&xi, "xi grid")?;
        let n = xi.len();
        if y.len() != n || y_xi.len() != n || weight.len() != n {
            return Err(Error::InvalidState("sample arrays have different lengths".into()));
        }
        if y.iter().chain(&y_xi).chain(&weight).any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite sample".into()));
        }
        Ok(Self { xi, y, y_xi, weight })
    }
}

/// A maximal run of nodes on which the map is flat.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauRun {
    /// First and last node of the run (inclusive).
    pub start: usize,
    pub end: usize,
    pub position: f64,
    /// Estimated xi-extent of the flat piece, which may reach past the nodes
    /// into the neighbouring cells.
    pub xi_lo: f64,
    pub xi_hi: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// Ordinary node where the map is strictly increasing.
    Regular(usize),
    /// Isolated node with vanishing slope that is not part of a flat run, as
    /// happens at the instant a characteristic collapses. It carries no mass
    /// concentration of its own.
    Singular(usize),
    /// Index into `PlateauLayout::runs`.
    Run(usize),
}

/// Classification of sample nodes into strictly increasing and flat parts.
#[derive(Clone, Debug)]
pub struct PlateauLayout {
    pub runs: Vec<PlateauRun>,
    /// One entry per distinct image point, in increasing order.
    pub entries: Vec<NodeKind>,
}

impl PlateauLayout {
    pub fn regular(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().filter_map(|e| match e {
            NodeKind::Regular(i) => Some(*i),
            _ => None,
        })
    }
}

/// Splits the nodes into flat runs, isolated singular nodes and regular nodes.
/// Rejects maps that decrease by more than the flatness tolerance.
pub fn plateau_layout(xi: &[f64], y: &[f64], y_xi: &[f64], eps: f64) -> Result<PlateauLayout> {
    let n = xi.len();
    let span_xi = xi[n - 1] - xi[0];
    let scale = ((y[n - 1] - y[0]) / span_xi).max(f64::MIN_POSITIVE);
    let flat: Vec<bool> = (0..n - 1)
        .map(|k| {
            let dy = y[k + 1] - y[k];
            let dxi = xi[k + 1] - xi[k];
            if dy < -FOLD_TOL.max(eps) * scale.max(1.0) * dxi {
                Err(Error::NotMonotone { index: k, drop: -dy })
            } else {
                Ok(dy <= eps * scale * dxi)
            }
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::new();
    let mut entries = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && flat[i] {
            let start = i;
            let mut end = i + 1;
            while end + 1 < n && flat[end] {
                end += 1;
            }
            let position = y[start..=end].iter().sum::<f64>() / (end - start + 1) as f64;
            let mut xi_lo = xi[start];
            if start > 0 && y_xi[start - 1] > eps * scale {
                let reach = (position - y[start - 1]) / y_xi[start - 1];
                xi_lo = (xi[start - 1] + reach).clamp(xi[start - 1], xi[start]);
            }
            let mut xi_hi = xi[end];
            if end + 1 < n && y_xi[end + 1] > eps * scale {
                let reach = (y[end + 1] - position) / y_xi[end + 1];
                xi_hi = (xi[end + 1] - reach).clamp(xi[end], xi[end + 1]);
            }
            entries.push(NodeKind::Run(runs.len()));
            runs.push(PlateauRun { start, end, position, xi_lo, xi_hi });
            i = end + 1;
        } else {
            entries.push(if y_xi[i] <= eps * scale {
                NodeKind::Singular(i)
            } else {
                NodeKind::Regular(i)
            });
            i += 1;
        }
    }
    Ok(PlateauLayout { runs, entries })
}

/// Mass that `w` places on a flat run: the trapezoid rule over the run's nodes
/// plus the sub-cell pieces reaching out to the estimated plateau ends.
fn run_mass(run: &PlateauRun, xi: &[f64], w: &[f64]) -> f64 {
    let mut m = 0.0;
    for k in run.start..run.end {
        m += 0.5 * (xi[k + 1] - xi[k]) * (w[k] + w[k + 1]);
    }
    m + w[run.start] * (xi[run.start] - run.xi_lo) + w[run.end] * (run.xi_hi - xi[run.end])
}

/// Density samples `w / y_xi` on the images of the regular nodes. Falls back to
/// a zero density when fewer than two regular nodes exist.
fn ac_samples(s: &WeightedSamples, layout: &PlateauLayout) -> (Vec<f64>, Vec<f64>) {
    let (grid, dens): (Vec<f64>, Vec<f64>) = layout
        .regular()
        .map(|i| (s.y[i], s.weight[i] / s.y_xi[i]))
        .unzip();
    if grid.len() >= 2 {
        return (grid, dens);
    }
    let lo = s.y[0];
    let hi = s.y[s.y.len() - 1];
    let hi = if hi > lo { hi } else { lo + 1.0 };
    (vec![lo, hi], vec![0.0, 0.0])
}

/// Push-forward `y_#(w dxi)` of non-negative weights.
pub fn push_forward(s: &WeightedSamples) -> Result<RadonMeasure> {
    let layout = plateau_layout(&s.xi, &s.y, &s.y_xi, PLATEAU_EPS)?;
    push_forward_with(s, &layout)
}

pub fn push_forward_with(s: &WeightedSamples, layout: &PlateauLayout) -> Result<RadonMeasure> {
    let wmax = s.weight.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if let Some(v) = s.weight.iter().find(|&&v| v < -1e-12 * wmax.max(1.0)) {
        return Err(Error::InvalidMeasure(format!("negative weight {v} cannot be pushed forward")));
    }
    let clamped = WeightedSamples {
        weight: s.weight.iter().map(|v| v.max(0.0)).collect(),
        ..s.clone()
    };
    let (grid, density) = ac_samples(&clamped, layout);
    let atoms = layout
        .runs
        .iter()
        .map(|r| (r.position, run_mass(r, &clamped.xi, &clamped.weight)))
        .filter(|a| a.1 > 0.0)
        .collect();
    RadonMeasure::new(grid, density, atoms)
}

/// Density of `y_#(w dxi)` for weights of either sign, evaluated on the images
/// of the regular nodes. Weight on flat runs is discarded.
pub fn push_forward_signed(s: &WeightedSamples, layout: &PlateauLayout) -> (Vec<f64>, Vec<f64>) {
    ac_samples(s, layout)
}
