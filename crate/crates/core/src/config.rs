//! Run configuration: a flat `key = value` file (TOML syntax) whose entries can
//! be overridden one by one from the command line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolveConfig;
use crate::kernel::Quadrature;
use crate::presets::{steep_front_width, Preset, Profile, RhoOverlay};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// zero | gaussian | sech2 | steep_front | peakon | atom
    pub preset: String,
    pub amplitude: f64,
    pub width: f64,
    /// steep_front: envelope width in units of `width`.
    pub envelope: f64,
    /// steep_front: when set, `width` is solved so that the slope at the
    /// origin equals `-slope_ratio * sqrt(2C)`.
    pub slope_ratio: Option<f64>,
    /// Height of the rho overlay; zero disables it.
    pub rho_level: f64,
    pub rho_halfwidth: f64,
    pub rho_edge: f64,
    pub atom_position: f64,
    pub atom_mass: f64,

    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    /// Label grid size; defaults to `nx`.
    pub nxi: Option<usize>,

    pub dt: f64,
    pub t_end: f64,
    pub diag_every: usize,
    pub breaking_eps: Option<f64>,
    pub quadrature: Quadrature,
    pub snapshot_times: Vec<f64>,

    pub forcing: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub lattice_n: usize,

    /// transform: a Lagrangian state file to map back to Eulerian data instead
    /// of transforming the preset.
    pub input: Option<String>,
    pub out_dir: String,
    /// Worker threads for the parallel sweeps, 0 for the default.
    pub threads: usize,
    pub sequential: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "gaussian".into(),
            amplitude: 1.0,
            width: 1.0,
            envelope: 3.0,
            slope_ratio: None,
            rho_level: 0.0,
            rho_halfwidth: 1.0,
            rho_edge: 0.1,
            atom_position: 0.0,
            atom_mass: 1.0,
            x_min: -10.0,
            x_max: 10.0,
            nx: 2049,
            nxi: None,
            dt: 1e-3,
            t_end: 1.0,
            diag_every: 10,
            breaking_eps: None,
            quadrature: Quadrature::default(),
            snapshot_times: Vec::new(),
            forcing: 0.0,
            alpha_min: -6.0,
            alpha_max: 6.0,
            beta_min: -6.0,
            beta_max: 6.0,
            lattice_n: 21,
            input: None,
            out_dir: "out".into(),
            threads: 0,
            sequential: false,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl RunConfig {
    /// Reads `file` (if any), then applies `key=value` overrides in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!("config must be flat, but `{k}` is a table")));
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            table.insert(k.trim().to_string(), parse_value(v.trim()));
        }
        let cfg = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.x_min < self.x_max) {
            return bad(format!("x_min {} must be below x_max {}", self.x_min, self.x_max));
        }
        if self.nx < 5 || self.nxi.is_some_and(|n| n < 5) {
            return bad("nx and nxi must be at least 5".into());
        }
        if !(self.dt > 0.0) || !self.t_end.is_finite() {
            return bad("dt must be positive and t_end finite".into());
        }
        if self.lattice_n < 2 {
            return bad("lattice_n must be at least 2".into());
        }
        self.profile()?;
        Ok(())
    }

    pub fn nxi(&self) -> usize {
        self.nxi.unwrap_or(self.nx)
    }

    fn profile(&self) -> Result<Profile> {
        Ok(match self.preset.as_str() {
            "zero" => Profile::Zero,
            "gaussian" => Profile::Gaussian { amplitude: self.amplitude, width: self.width },
            "sech2" => Profile::Sech2 { amplitude: self.amplitude, width: self.width },
            "steep_front" => Profile::SteepFront { amplitude: self.amplitude, width: self.width, envelope: self.envelope },
            "peakon" => Profile::Peakon { amplitude: self.amplitude, atom_mass: self.atom_mass },
            "atom" => Profile::Atom { position: self.atom_position, mass: self.atom_mass },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected zero, gaussian, sech2, steep_front, peakon or atom)"
                )))
            }
        })
    }

    /// The preset with every derived parameter resolved.
    pub fn preset(&self) -> Result<Preset> {
        let mut profile = self.profile()?;
        if let (Profile::SteepFront { amplitude, width, envelope }, Some(ratio)) = (&mut profile, self.slope_ratio) {
            *width = steep_front_width(*amplitude, *envelope, ratio, self.x_min, self.x_max, self.nx)?;
        }
        let rho = (self.rho_level != 0.0).then_some(RhoOverlay {
            level: self.rho_level,
            halfwidth: self.rho_halfwidth,
            edge: self.rho_edge,
        });
        Ok(Preset { profile, rho, x_min: self.x_min, x_max: self.x_max, nx: self.nx })
    }

    pub fn evolve_config(&self) -> EvolveConfig {
        EvolveConfig {
            dt: self.dt,
            t_end: self.t_end,
            diag_every: self.diag_every,
            breaking_eps: self.breaking_eps,
            quadrature: self.quadrature,
            snapshot_times: self.snapshot_times.clone(),
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "preset = \"sech2\"\ndt = 0.01\n# comment\nnx = 101\n").unwrap();
        let c = RunConfig::load(Some(&p), &["dt=0.002".into(), "snapshot_times=[0.5, 1.0]".into(), "preset=zero".into()]).unwrap();
        assert_eq!(c.preset, "zero");
        assert_eq!(c.dt, 0.002);
        assert_eq!(c.nx, 101);
        assert_eq!(c.snapshot_times, vec![0.5, 1.0]);
    }

    #[test]
    fn typos_and_bad_values_are_config_errors() {
        for o in ["dtt=0.1", "dt=-1", "preset=wave", "nx=three", "x_min=50"] {
            let e = RunConfig::load(None, &[o.into()]).unwrap_err();
            assert!(e.is_config(), "{o}: {e}");
        }
    }

    #[test]
    fn nested_tables_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "[grid]\nnx = 5\n").unwrap();
        assert!(RunConfig::load(Some(&p), &[]).unwrap_err().is_config());
    }
}
