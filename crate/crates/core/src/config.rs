//! Flat `key = value` configuration.
//!
//! ```text
//! # comment
//! system.eta_d = 0.145
//! system.misalignment = reduced
//! grid.distance_km = 0, 60, 120
//! ```
//!
//! Keys are dotted names, values are numbers, words or comma-separated
//! number lists. Resolution order: built-in defaults (per preset), then the
//! config file, then command-line overrides. The manifest written next to
//! every run lists every resolved key.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ConfigLocation, Error, Result};
use crate::keyrate::RateMode;
use crate::optimize::Coupling;
use crate::params::{E11Model, IntensitySettings, MisalignmentMode, SystemParams};
use crate::scenario::{Grids, Preset, ScenarioOptions};

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parsed but unresolved configuration text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub entries: Vec<Entry>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::config(ConfigLocation::Line(line), format!("expected `key = value`, got `{body}`")))?;
            let (key, value) = (k.trim(), v.trim());
            let valid_key = !key.is_empty()
                && key.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
            if !valid_key {
                return Err(Error::config(ConfigLocation::Line(line), format!("malformed key `{key}`")));
            }
            if value.is_empty() {
                return Err(Error::config(ConfigLocation::Line(line), format!("missing value for `{key}`")));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::config(
                    ConfigLocation::Line(line),
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.push(Entry { key: key.to_string(), value: value.to_string(), line });
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(ConfigLocation::Key(path.display().to_string()), format!("cannot read config: {e}")))?;
        Self::parse(&text)
    }
}

/// Misalignment as configured, resolved into angles at the end so the
/// reduced form follows the final `e_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Misalignment {
    GaussianMC,
    Reduced,
    Fixed { theta1: f64, theta2: f64, theta3: f64 },
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub params: SystemParams,
    misalignment: Misalignment,
    pub options: ScenarioOptions,
    pub grids: Grids,
    pub l_ac_km: f64,
    pub l_bc_km: f64,
    pub intensities: IntensitySettings,
    pub mode: RateMode,
    /// `free`, `tied` or `matched` (Bob's intensities are `x` times Alice's).
    pub coupling: String,
}

impl RunConfig {
    /// Defaults for a preset, or the reference parameters when `None`.
    pub fn defaults(preset: Option<Preset>) -> Self {
        let params = preset.map_or_else(SystemParams::table3, Preset::base_params);
        let misalignment = match params.misalignment {
            MisalignmentMode::GaussianMC => Misalignment::GaussianMC,
            MisalignmentMode::FixedAngles { .. } if params.reduced_angle().is_some() => Misalignment::Reduced,
            MisalignmentMode::FixedAngles { theta1, theta2, theta3 } => Misalignment::Fixed { theta1, theta2, theta3 },
        };
        RunConfig {
            preset,
            params,
            misalignment,
            options: preset.map_or_else(ScenarioOptions::default, Preset::base_options),
            grids: preset.map(Preset::default_grids).unwrap_or_default(),
            l_ac_km: 10.0,
            l_bc_km: 10.0,
            intensities: IntensitySettings::symmetric(0.3, 0.1, 5e-4),
            mode: RateMode::AsymptoticTruth,
            coupling: "free".to_string(),
        }
    }

    /// Applies every entry of `file`; the first bad entry is reported
    /// with its line number.
    pub fn apply(&mut self, file: &ConfigFile) -> Result<()> {
        for e in &file.entries {
            self.set(&e.key, &e.value).map_err(|m| Error::config(ConfigLocation::Line(e.line), m))?;
        }
        self.resolve().map_err(|m| Error::config(ConfigLocation::Key("config".into()), m))
    }

    /// Applies a single override (used for command-line flags).
    pub fn set_override(&mut self, key: &str, value: &str) -> Result<()> {
        self.set(key, value).map_err(|m| Error::config(ConfigLocation::Key(key.to_string()), m))?;
        self.resolve().map_err(|m| Error::config(ConfigLocation::Key(key.to_string()), m))
    }

    fn resolve(&mut self) -> std::result::Result<(), String> {
        self.params.misalignment = match self.misalignment {
            Misalignment::GaussianMC => MisalignmentMode::GaussianMC,
            Misalignment::Reduced => MisalignmentMode::reduced(self.params.e_d),
            Misalignment::Fixed { theta1, theta2, theta3 } => MisalignmentMode::FixedAngles { theta1, theta2, theta3 },
        };
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let p = &mut self.params;
        let o = &mut self.options;
        let s = &mut self.intensities;
        match key {
            // Written by `manifest`; the subcommand is informational.
            "run.subcommand" => {}
            "run.preset" => {
                let current = self.preset.map(Preset::name);
                if current != Some(value) {
                    return Err(format!("manifest is for preset `{value}`, this run uses {}", current.unwrap_or("none")));
                }
            }
            "system.eta_d" => p.eta_d = num(value)?,
            "system.y0" => p.y0 = num(value)?,
            "system.f_e" => p.f_e = num(value)?,
            "system.alpha_db_per_km" => p.alpha_db_per_km = num(value)?,
            "system.e_d" => p.e_d = num(value)?,
            "system.e_m" => p.e_m = num(value)?,
            "system.e_split.alice" => p.e_split.alice = num(value)?,
            "system.e_split.bob" => p.e_split.bob = num(value)?,
            "system.e_split.measurement" => p.e_split.measurement = num(value)?,
            "system.misalignment" => {
                self.misalignment = match value {
                    "gaussian_mc" => Misalignment::GaussianMC,
                    "reduced" => Misalignment::Reduced,
                    "fixed" => match self.misalignment {
                        f @ Misalignment::Fixed { .. } => f,
                        _ => Misalignment::Fixed { theta1: 0.0, theta2: 0.0, theta3: 0.0 },
                    },
                    _ => return Err(format!("expected gaussian_mc, reduced or fixed, got `{value}`")),
                }
            }
            "system.theta1" | "system.theta2" | "system.theta3" => {
                let v = num(value)?;
                let Misalignment::Fixed { theta1, theta2, theta3 } = &mut self.misalignment else {
                    return Err(format!("`{key}` needs `system.misalignment = fixed` set before it"));
                };
                match key {
                    "system.theta1" => *theta1 = v,
                    "system.theta2" => *theta2 = v,
                    _ => *theta3 = v,
                }
            }
            "system.e11_model" => {
                p.e11_model = match value {
                    "engine_shift" => E11Model::EngineShift,
                    "decoy_extrapolation" => E11Model::DecoyExtrapolation {
                        nu: match p.e11_model {
                            E11Model::DecoyExtrapolation { nu } => nu,
                            E11Model::EngineShift => 1e-3,
                        },
                    },
                    _ => return Err(format!("expected engine_shift or decoy_extrapolation, got `{value}`")),
                }
            }
            "system.e11_nu" => match &mut p.e11_model {
                E11Model::DecoyExtrapolation { nu } => *nu = num(value)?,
                E11Model::EngineShift => {
                    return Err("`system.e11_nu` needs `system.e11_model = decoy_extrapolation` set before it".into())
                }
            },
            "numerics.quadrature_points" => p.quadrature_points = int(value)?,
            "numerics.mc_samples" => p.mc_samples = int(value)?,
            "numerics.seed" => p.rng_seed = value.parse().map_err(|_| format!("expected an unsigned integer, got `{value}`"))?,
            "geometry.l_ac_km" => self.l_ac_km = num(value)?,
            "geometry.l_bc_km" => self.l_bc_km = num(value)?,
            "intensities.mu_a" => s.mu_a = num(value)?,
            "intensities.nu_a" => s.nu_a = num(value)?,
            "intensities.omega_a" => s.omega_a = num(value)?,
            "intensities.mu_b" => s.mu_b = num(value)?,
            "intensities.nu_b" => s.nu_b = num(value)?,
            "intensities.omega_b" => s.omega_b = num(value)?,
            "rate.mode" => {
                self.mode = match value {
                    "asymptotic" => RateMode::AsymptoticTruth,
                    "two-decoy" => RateMode::TwoDecoyBounds,
                    _ => return Err(format!("expected asymptotic or two-decoy, got `{value}`")),
                }
            }
            "optimize.coupling" => {
                if !["free", "tied", "matched"].contains(&value) {
                    return Err(format!("expected free, tied or matched, got `{value}`"));
                }
                self.coupling = value.to_string();
            }
            "search.seeds_per_dim" => o.search.seeds_per_dim = int(value)?,
            "search.initial_step" => o.search.initial_step = num(value)?,
            "search.shrink" => o.search.shrink = num(value)?,
            "search.min_step" => o.search.min_step = num(value)?,
            "search.max_evaluations" => o.search.max_evaluations = int(value)?,
            "bounds.mu_min" => o.bounds.mu.0 = num(value)?,
            "bounds.mu_max" => o.bounds.mu.1 = num(value)?,
            "bounds.nu_min" => o.bounds.nu.0 = num(value)?,
            "bounds.nu_max" => o.bounds.nu.1 = num(value)?,
            "bounds.omega_floor" => o.bounds.omega_floor = num(value)?,
            "scenario.distance_convention" => o.convention = value.parse()?,
            "scenario.cutoff_tolerance" => o.cutoff_tolerance = num(value)?,
            _ => {
                if let Some(name) = key.strip_prefix("grid.") {
                    let Some(slot) = self.grids.get_mut(name) else {
                        let known: Vec<&str> = self.grids.keys().map(String::as_str).collect();
                        return Err(format!("unknown grid `{name}` for this run (known: {})", known.join(", ")));
                    };
                    *slot = list(value)?;
                } else {
                    return Err(format!("unknown key `{key}`"));
                }
            }
        }
        Ok(())
    }

    /// The coupling for single-point optimizations.
    pub fn coupling(&self) -> Result<Coupling> {
        Ok(match self.coupling.as_str() {
            "tied" => Coupling::Tied,
            "matched" => {
                let geo =
                    crate::params::ChannelGeometry::from_distances(self.l_ac_km, self.l_bc_km, self.params.alpha_db_per_km)?;
                Coupling::MatchedArrival { x: geo.x() }
            }
            _ => Coupling::Free,
        })
    }

    /// Every resolved setting in `key = value` form, readable back by
    /// [`ConfigFile::parse`].
    pub fn manifest(&self, subcommand: &str) -> String {
        let p = &self.params;
        let o = &self.options;
        let s = &self.intensities;
        let mut m = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(m, "{k} = {v}");
        };
        kv("run.subcommand", subcommand.to_string());
        if let Some(pr) = self.preset {
            kv("run.preset", pr.name().to_string());
        }
        kv("system.eta_d", p.eta_d.to_string());
        kv("system.y0", p.y0.to_string());
        kv("system.f_e", p.f_e.to_string());
        kv("system.alpha_db_per_km", p.alpha_db_per_km.to_string());
        kv("system.e_d", p.e_d.to_string());
        kv("system.e_m", p.e_m.to_string());
        kv("system.e_split.alice", p.e_split.alice.to_string());
        kv("system.e_split.bob", p.e_split.bob.to_string());
        kv("system.e_split.measurement", p.e_split.measurement.to_string());
        match self.misalignment {
            Misalignment::GaussianMC => kv("system.misalignment", "gaussian_mc".into()),
            Misalignment::Reduced => kv("system.misalignment", "reduced".into()),
            Misalignment::Fixed { .. } => kv("system.misalignment", "fixed".into()),
        }
        if let MisalignmentMode::FixedAngles { theta1, theta2, theta3 } = p.misalignment {
            let fixed = matches!(self.misalignment, Misalignment::Fixed { .. });
            let prefix = if fixed { "" } else { "# resolved " };
            let _ = writeln!(m, "{prefix}system.theta1 = {theta1}");
            let _ = writeln!(m, "{prefix}system.theta2 = {theta2}");
            let _ = writeln!(m, "{prefix}system.theta3 = {theta3}");
        }
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(m, "{k} = {v}");
        };
        match p.e11_model {
            E11Model::EngineShift => kv("system.e11_model", "engine_shift".into()),
            E11Model::DecoyExtrapolation { nu } => {
                kv("system.e11_model", "decoy_extrapolation".into());
                kv("system.e11_nu", nu.to_string());
            }
        }
        kv("numerics.quadrature_points", p.quadrature_points.to_string());
        kv("numerics.mc_samples", p.mc_samples.to_string());
        kv("numerics.seed", p.rng_seed.to_string());
        kv("geometry.l_ac_km", self.l_ac_km.to_string());
        kv("geometry.l_bc_km", self.l_bc_km.to_string());
        kv("intensities.mu_a", s.mu_a.to_string());
        kv("intensities.nu_a", s.nu_a.to_string());
        kv("intensities.omega_a", s.omega_a.to_string());
        kv("intensities.mu_b", s.mu_b.to_string());
        kv("intensities.nu_b", s.nu_b.to_string());
        kv("intensities.omega_b", s.omega_b.to_string());
        kv("rate.mode", self.mode.label().to_string());
        kv("optimize.coupling", self.coupling.clone());
        kv("search.seeds_per_dim", o.search.seeds_per_dim.to_string());
        kv("search.initial_step", o.search.initial_step.to_string());
        kv("search.shrink", o.search.shrink.to_string());
        kv("search.min_step", o.search.min_step.to_string());
        kv("search.max_evaluations", o.search.max_evaluations.to_string());
        kv("bounds.mu_min", o.bounds.mu.0.to_string());
        kv("bounds.mu_max", o.bounds.mu.1.to_string());
        kv("bounds.nu_min", o.bounds.nu.0.to_string());
        kv("bounds.nu_max", o.bounds.nu.1.to_string());
        kv("bounds.omega_floor", o.bounds.omega_floor.to_string());
        kv("scenario.distance_convention", o.convention.label().to_string());
        kv("scenario.cutoff_tolerance", o.cutoff_tolerance.to_string());
        for (name, values) in &self.grids {
            let v: Vec<String> = values.iter().map(f64::to_string).collect();
            kv(&format!("grid.{name}"), v.join(", "));
        }
        m
    }
}

fn num(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got `{v}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got `{v}`"))
    }
}

fn int(v: &str) -> std::result::Result<usize, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn list(v: &str) -> std::result::Result<Vec<f64>, String> {
    let out: Vec<f64> = v.split(',').map(|t| num(t.trim())).collect::<std::result::Result<_, _>>()?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}
