//! Run configuration: one TOML document covering the grid, both solvers,
//! the coupling controls, analytic forcing and initial-condition profiles,
//! the perturbation applied to a paired run, and output plumbing.
//!
//! Every profile is a named closed form, so each one has a symbolic oracle
//! available to tests. Missing sections fall back to defaults with all
//! physical constants equal to one. A configuration hashes to a hex digest
//! over a canonicalized key-sorted rendering, so semantically identical
//! files with reordered keys hash identically.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::CouplingParams;
use crate::error::{Error, Result};
use crate::fluid::{FluidParams, StressForm};
use crate::grid::{GridSpec, PlateField, VectorField};
use crate::plate::PlateParams;

/// Everything one simulation needs, as parsed from a TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub grid: GridSpec,
    pub fluid: FluidParams,
    pub plate: PlateParams,
    pub coupling: CouplingControls,
    pub time: TimeControls,
    pub forcing: ForcingSpec,
    pub initial: InitialSpec,
    pub perturbation: PerturbationSpec,
    pub mollifier: MollifierControls,
    pub output: OutputSpec,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            grid: GridSpec {
                nx: 32,
                ny: 24,
                length: 1.0,
            },
            fluid: FluidParams {
                density: 1.0,
                viscosity: 1.0,
                cg_tol: 1e-10,
                cg_max_iter: 40_000,
            },
            plate: PlateParams {
                mass: 1.0,
                bending: 1.0,
                tension: 1.0,
                damping: 1.0,
                contact_floor: 0.1,
            },
            coupling: CouplingControls::default(),
            time: TimeControls::default(),
            forcing: ForcingSpec::default(),
            initial: InitialSpec::default(),
            perturbation: PerturbationSpec::default(),
            mollifier: MollifierControls::default(),
            output: OutputSpec::default(),
        }
    }
}

/// Interface-iteration controls and the body acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingControls {
    pub stress: StressForm,
    pub gravity: f64,
    pub subiter_tol: f64,
    pub subiter_max: usize,
    pub relax_init: f64,
}

impl Default for CouplingControls {
    fn default() -> Self {
        CouplingControls {
            stress: StressForm::GradientOnly,
            gravity: 0.0,
            subiter_tol: 1e-8,
            subiter_max: 50,
            relax_init: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeControls {
    pub dt: f64,
    pub steps: usize,
}

impl Default for TimeControls {
    fn default() -> Self {
        TimeControls {
            dt: 1e-3,
            steps: 200,
        }
    }
}

/// Spatial shape applied to the plate as an external load density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingProfile {
    None,
    Uniform,
    CosineBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingSpec {
    pub profile: ForcingProfile,
    pub amplitude: f64,
    /// Temporal factor `cos(2 pi frequency t)`; zero means constant in time.
    pub frequency: f64,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec {
            profile: ForcingProfile::None,
            amplitude: 0.0,
            frequency: 0.0,
        }
    }
}

impl ForcingSpec {
    /// The plate load density at time `t`, or `None` when unforced.
    pub fn field(&self, grid: GridSpec, t: f64) -> Option<PlateField> {
        if self.profile == ForcingProfile::None || self.amplitude == 0.0 {
            return None;
        }
        let temporal = if self.frequency == 0.0 {
            1.0
        } else {
            (2.0 * PI * self.frequency * t).cos()
        };
        let a = self.amplitude * temporal;
        let l = grid.length;
        Some(match self.profile {
            ForcingProfile::None => unreachable!(),
            ForcingProfile::Uniform => PlateField::from_fn(grid, move |_| a),
            ForcingProfile::CosineBump => {
                PlateField::from_fn(grid, move |x| a * bump_profile(x, l))
            }
        })
    }
}

/// Initial plate shape: `1 + amplitude * profile(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeProfile {
    Flat,
    CosineBump,
    ClampedQuartic,
}

/// Initial plate velocity: `amplitude * profile(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateProfile {
    Zero,
    CosineBump,
    ClampedQuartic,
}

/// Initial fluid velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityProfile {
    Zero,
    /// Stream-function roll with a double zero on the whole boundary;
    /// projected once at startup to clear the residual divergence the
    /// curved geometry leaves behind.
    Vortex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub eta: ShapeProfile,
    pub eta_amplitude: f64,
    pub eta_rate: RateProfile,
    pub eta_rate_amplitude: f64,
    pub velocity: VelocityProfile,
    pub velocity_amplitude: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec {
            eta: ShapeProfile::Flat,
            eta_amplitude: 0.0,
            eta_rate: RateProfile::Zero,
            eta_rate_amplitude: 0.0,
            velocity: VelocityProfile::Zero,
            velocity_amplitude: 0.0,
        }
    }
}

/// `(1 - cos(2 pi x / l)) / 2`: zero value and slope at both ends, peak 1.
fn bump_profile(x: f64, l: f64) -> f64 {
    0.5 * (1.0 - (2.0 * PI * x / l).cos())
}

/// `16 (x/l)^2 (1 - x/l)^2`: zero value and slope at both ends, peak 1.
fn quartic_profile(x: f64, l: f64) -> f64 {
    let s = x / l;
    16.0 * s * s * (1.0 - s) * (1.0 - s)
}

impl InitialSpec {
    pub fn eta_field(&self, grid: GridSpec) -> PlateField {
        let a = self.eta_amplitude;
        let l = grid.length;
        match self.eta {
            ShapeProfile::Flat => PlateField::ones(grid),
            ShapeProfile::CosineBump => {
                PlateField::from_fn(grid, move |x| 1.0 + a * bump_profile(x, l))
            }
            ShapeProfile::ClampedQuartic => {
                PlateField::from_fn(grid, move |x| 1.0 + a * quartic_profile(x, l))
            }
        }
    }

    pub fn rate_field(&self, grid: GridSpec) -> PlateField {
        let a = self.eta_rate_amplitude;
        let l = grid.length;
        match self.eta_rate {
            RateProfile::Zero => PlateField::zeros(grid),
            RateProfile::CosineBump => PlateField::from_fn(grid, move |x| a * bump_profile(x, l)),
            RateProfile::ClampedQuartic => {
                PlateField::from_fn(grid, move |x| a * quartic_profile(x, l))
            }
        }
    }

    pub fn velocity_field(&self, grid: GridSpec) -> VectorField {
        match self.velocity {
            VelocityProfile::Zero => VectorField::zeros(grid),
            VelocityProfile::Vortex => {
                let a = self.velocity_amplitude;
                let l = grid.length;
                VectorField::from_fn(
                    grid,
                    move |x, yr| a * PI * (PI * x / l).sin().powi(2) * (2.0 * PI * yr).sin(),
                    move |x, yr| {
                        -a * PI / l * (2.0 * PI * x / l).sin() * (PI * yr).sin().powi(2)
                    },
                )
            }
        }
    }
}

/// What the paired run changes and by how much.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationTarget {
    Velocity,
    PlatePosition,
    PlateVelocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSpec {
    pub eps: f64,
    pub target: PerturbationTarget,
    /// Seeds the perturbation shape only; the solvers are deterministic.
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            eps: 0.0,
            target: PerturbationTarget::PlateVelocity,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MollifierControls {
    /// Kernel half width, in time steps.
    pub half_width: usize,
}

impl Default for MollifierControls {
    fn default() -> Self {
        MollifierControls { half_width: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub directory: String,
    /// Steps between stored snapshots.
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            directory: "out".into(),
            stride: 10,
        }
    }
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimulationConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.nx, self.grid.ny, self.grid.length)
    }

    pub fn coupling_params(&self) -> CouplingParams {
        CouplingParams {
            fluid: self.fluid,
            plate: self.plate,
            stress: self.coupling.stress,
            gravity: self.coupling.gravity,
            subiter_tol: self.coupling.subiter_tol,
            subiter_max: self.coupling.subiter_max,
            relax_init: self.coupling.relax_init,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec()?;
        self.coupling_params().validate()?;
        if !(self.time.dt > 0.0 && self.time.dt.is_finite()) {
            return Err(Error::config("time step must be positive and finite"));
        }
        if self.time.steps == 0 {
            return Err(Error::config("a run needs at least one step"));
        }
        for a in [
            self.forcing.amplitude,
            self.forcing.frequency,
            self.initial.eta_amplitude,
            self.initial.eta_rate_amplitude,
            self.initial.velocity_amplitude,
        ] {
            if !a.is_finite() {
                return Err(Error::config("profile amplitudes must be finite"));
            }
        }
        if self.forcing.frequency < 0.0 {
            return Err(Error::config("forcing frequency cannot be negative"));
        }
        let eta0 = self.initial.eta_field(grid);
        eta0.check_positive()
            .map_err(|_| Error::config("initial plate shape dips to a nonpositive height"))?;
        for i in [0, grid.nx] {
            if (eta0.at(i) - 1.0).abs() > 1e-12 {
                return Err(Error::config("initial plate shape must end at the rest height"));
            }
        }
        let min_eta = eta0.values().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eta <= self.plate.contact_floor {
            return Err(Error::config(
                "initial plate shape starts at or below the contact floor",
            ));
        }
        if !(self.perturbation.eps >= 0.0 && self.perturbation.eps.is_finite()) {
            return Err(Error::config("perturbation size must be finite and nonnegative"));
        }
        if self.mollifier.half_width < 2 {
            return Err(Error::config("mollifier half width must be at least 2 steps"));
        }
        if self.output.stride == 0 {
            return Err(Error::config("snapshot stride must be at least 1"));
        }
        if self.output.directory.is_empty() {
            return Err(Error::config("output directory must be nonempty"));
        }
        Ok(())
    }

    /// Hex digest of the canonicalized configuration: keys sorted at every
    /// level, floats rendered with 17 significant digits.
    pub fn canonical_hash(&self) -> Result<String> {
        let value = toml::Value::try_from(self)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        let mut text = String::new();
        canonical_into(&value, &mut text);
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        Ok(hex::encode(hasher.finalize()))
    }
}

fn canonical_into(v: &toml::Value, out: &mut String) {
    match v {
        toml::Value::String(s) => {
            out.push('"');
            out.push_str(&s.escape_default().to_string());
            out.push('"');
        }
        toml::Value::Integer(i) => out.push_str(&i.to_string()),
        toml::Value::Float(f) => out.push_str(&format!("{f:.16e}")),
        toml::Value::Boolean(b) => out.push_str(if *b { "true" } else { "false" }),
        toml::Value::Datetime(d) => out.push_str(&d.to_string()),
        toml::Value::Array(a) => {
            out.push('[');
            for x in a {
                canonical_into(x, out);
                out.push(',');
            }
            out.push(']');
        }
        toml::Value::Table(t) => {
            let mut keys: Vec<&String> = t.keys().collect();
            keys.sort();
            out.push('{');
            for k in keys {
                out.push_str(k);
                out.push('=');
                canonical_into(&t[k.as_str()], out);
                out.push(';');
            }
            out.push('}');
        }
    }
}
