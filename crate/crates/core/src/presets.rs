//! Built-in initial data.
//!
//! Each profile gives `u` and its exact derivative; the energy measure gets the
//! density `u_x^2 + rho^2` sampled on the grid, plus atoms where a profile
//! asks for them.

use serde::{Deserialize, Serialize};

use crate::breaking::Classifier;
use crate::coords::EulerianState;
use crate::error::{Error, Result};
use crate::measures::RadonMeasure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Gaussian { amplitude: f64, width: f64 },
    Sech2 { amplitude: f64, width: f64 },
    /// `u = -a tanh(x/w) exp(-(x / (m w))^2)`: a front of slope `-a/w` at the
    /// origin inside a Gaussian envelope `m` widths wide.
    SteepFront { amplitude: f64, width: f64, envelope: f64 },
    /// `u = a exp(-|x|)` with an atom of the given mass at the crest.
    Peakon { amplitude: f64, atom_mass: f64 },
    /// `u = rho = 0`, all energy in one atom.
    Atom { position: f64, mass: f64 },
}

impl Profile {
    fn u_and_ux(&self, x: f64) -> (f64, f64) {
        match *self {
            Profile::Zero | Profile::Atom { .. } => (0.0, 0.0),
            Profile::Gaussian { amplitude: a, width: w } => {
                let u = a * (-0.5 * (x / w).powi(2)).exp();
                (u, -x / (w * w) * u)
            }
            Profile::Sech2 { amplitude: a, width: w } => {
                let s = 1.0 / (x / w).cosh();
                let t = (x / w).tanh();
                (a * s * s, -2.0 * a * s * s * t / w)
            }
            Profile::SteepFront { amplitude: a, width: w, envelope: m } => {
                let t = (x / w).tanh();
                let env = (-(x / (m * w)).powi(2)).exp();
                let sech2 = 1.0 - t * t;
                let u = -a * t * env;
                let ux = -a * env * (sech2 / w - 2.0 * x * t / (m * w).powi(2));
                (u, ux)
            }
            Profile::Peakon { amplitude: a, .. } => {
                let u = a * (-x.abs()).exp();
                // the two one-sided slopes have equal magnitude; the density
                // only needs the square
                (u, -x.signum() * u)
            }
        }
    }

    fn atoms(&self) -> Vec<(f64, f64)> {
        match *self {
            Profile::Peakon { atom_mass, .. } if atom_mass > 0.0 => vec![(0.0, atom_mass)],
            Profile::Atom { position, mass } => vec![(position, mass)],
            _ => Vec::new(),
        }
    }

    fn check(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            Profile::Gaussian { width, .. } | Profile::Sech2 { width, .. } => positive("width", width),
            Profile::SteepFront { width, envelope, .. } => {
                positive("width", width)?;
                positive("envelope", envelope)
            }
            Profile::Peakon { atom_mass, .. } if atom_mass < 0.0 => {
                Err(Error::Config("atom_mass must be non-negative".into()))
            }
            Profile::Atom { mass, .. } => positive("atom_mass", mass),
            _ => Ok(()),
        }
    }
}

/// `rho = level * (tanh((x + L)/d) - tanh((x - L)/d)) / 2`, a plateau of
/// half-width `L` with edges of width `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoOverlay {
    pub level: f64,
    pub halfwidth: f64,
    pub edge: f64,
}

impl RhoOverlay {
    pub fn eval(&self, x: f64) -> f64 {
        0.5 * self.level * (((x + self.halfwidth) / self.edge).tanh() - ((x - self.halfwidth) / self.edge).tanh())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub profile: Profile,
    pub rho: Option<RhoOverlay>,
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
}

impl Preset {
    pub fn build(&self) -> Result<EulerianState> {
        self.profile.check()?;
        if !(self.x_min < self.x_max) || self.nx < 2 {
            return Err(Error::Config("need x_min < x_max and nx >= 2".into()));
        }
        if let Some(r) = &self.rho {
            if !(r.edge > 0.0) {
                return Err(Error::Config("rho_edge must be positive".into()));
            }
        }
        let n = self.nx;
        let x: Vec<f64> = (0..n)
            .map(|i| self.x_min + (self.x_max - self.x_min) * i as f64 / (n - 1) as f64)
            .collect();
        let mut u = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        let mut density = Vec::with_capacity(n);
        for &xi in &x {
            let (ui, uxi) = self.profile.u_and_ux(xi);
            let ri = self.rho.map_or(0.0, |r| r.eval(xi));
            u.push(ui);
            rho.push(ri);
            density.push(uxi * uxi + ri * ri);
        }
        let mu = RadonMeasure::new(x.clone(), density, self.profile.atoms())?;
        EulerianState::new(x, u, rho, mu)
    }
}

/// Width of the steep-front profile whose slope at the origin equals
/// `-ratio * sqrt(2C)` once discretized on the preset grid. The ratio does not
/// depend on the amplitude; it decreases monotonically as the front widens.
pub fn steep_front_width(amplitude: f64, envelope: f64, ratio: f64, x_min: f64, x_max: f64, nx: usize) -> Result<f64> {
    if !(ratio > 0.0) || !(amplitude > 0.0) {
        return Err(Error::Config("slope_ratio and amplitude must be positive".into()));
    }
    let achieved = |w: f64| -> Result<f64> {
        let e = Preset {
            profile: Profile::SteepFront { amplitude, width: w, envelope },
            rho: None,
            x_min,
            x_max,
            nx,
        }
        .build()?;
        let cl = Classifier::new(&e);
        Ok(-cl.u0x(0.0) / (2.0 * cl.constant()).sqrt())
    };
    let dx = (x_max - x_min) / (nx - 1) as f64;
    // keep the front resolved and the envelope inside the domain
    let (mut lo, mut hi) = (4.0 * dx, 0.25 * (x_max - x_min) / envelope);
    if !(lo < hi) || achieved(lo)? < ratio || achieved(hi)? > ratio {
        return Err(Error::Config(format!(
            "slope_ratio {ratio} cannot be reached on this grid with a resolved front"
        )));
    }
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if achieved(mid)? > ratio {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-13 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}
