//! Run configuration: a TOML file with one table per model component.
//!
//! ```toml
//! convention = "ordinary"          # or "angular"
//!
//! [ensemble]
//! d = 1900.0
//! gamma_mhz = 16.0
//! detuning_ghz = 15.0
//! stokes_shift_ghz = 9.2
//!
//! [pulse]
//! shape = "gaussian"               # gaussian | square | sech2
//! fwhm_ns = 0.3
//! energy_ghz = 30.0
//!
//! [grid]
//! nz = 200
//! ntau = 800
//!
//! [noise]
//! p_sat_mw = 84.0
//! kappa = 0.12
//! filter_passes_antistokes = true
//!
//! [field]
//! b_gauss = 0.13
//! theta_deg = 30.0
//! phi_deg = 25.0
//! polarization = "control-vertical"
//!
//! [dephasing]
//! scale = 0.3
//! t_max_us = 4.0
//! n_points = 401
//!
//! [output]
//! dir = "."
//! ```
//!
//! Every key is optional and falls back to the value shown. Unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use ramanmem::mbsolver::MIN_POINTS_PER_FWHM;
use ramanmem::{
    EnsembleParams, FrequencyConvention, Grid, MagneticField, NoiseModelParams, PolarizationConfig, PulseShape,
    PulseSpec, Unit,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub d: f64,
    pub gamma_mhz: f64,
    pub detuning_ghz: f64,
    pub stokes_shift_ghz: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            d: 1900.0,
            gamma_mhz: 16.0,
            detuning_ghz: 15.0,
            stokes_shift_ghz: 9.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    pub shape: PulseShape,
    pub fwhm_ns: f64,
    /// W = ∫|Ω|² dτ, quoted in GHz like the other frequencies.
    pub energy_ghz: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            shape: PulseShape::Gaussian,
            fwhm_ns: 0.3,
            energy_ghz: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nz: usize,
    pub ntau: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            nz: Grid::DEFAULT_NZ,
            ntau: Grid::DEFAULT_NTAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub p_sat_mw: f64,
    pub kappa: f64,
    pub filter_passes_antistokes: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let r = NoiseModelParams::reference();
        Self {
            p_sat_mw: r.p_sat,
            kappa: r.kappa,
            filter_passes_antistokes: r.filter_passes_antistokes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    pub b_gauss: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub polarization: PolarizationConfig,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            b_gauss: 0.13,
            theta_deg: 30.0,
            phi_deg: 25.0,
            polarization: PolarizationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DephasingSection {
    /// Efficiency at zero storage time.
    pub scale: f64,
    pub t_max_us: f64,
    pub n_points: usize,
}

impl Default for DephasingSection {
    fn default() -> Self {
        Self {
            scale: 0.30,
            t_max_us: 4.0,
            n_points: 401,
        }
    }
}

/// Where commands write their tables when no explicit `--out` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub noise: String,
    pub fractions: String,
    pub dephasing: String,
    pub sweep: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            noise: "noise.csv".into(),
            fractions: "noise_fractions.csv".into(),
            dephasing: "dephasing.csv".into(),
            sweep: "sweep.csv".into(),
        }
    }
}

impl OutputSection {
    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub convention: FrequencyConvention,
    pub ensemble: EnsembleSection,
    pub pulse: PulseSection,
    pub grid: GridSection,
    pub noise: NoiseSection,
    pub field: FieldSection,
    pub dephasing: DephasingSection,
    pub output: OutputSection,
}

/// Command-line replacements for individual ensemble and pulse values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub d: Option<f64>,
    pub gamma_mhz: Option<f64>,
    pub detuning_ghz: Option<f64>,
    pub stokes_shift_ghz: Option<f64>,
    pub pulse_energy_ghz: Option<f64>,
}

/// Validated model objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub convention: FrequencyConvention,
    pub params: EnsembleParams,
    pub pulse: PulseSpec,
    pub grid: Grid,
    pub noise: NoiseModelParams,
    pub field: MagneticField,
    pub polarization: PolarizationConfig,
    pub scale: f64,
    pub t_max_us: f64,
    pub n_points: usize,
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("field `{field}`: {msg}"))
}

fn finite(field: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(field_error(field, format!("must be finite, got {v}")))
    }
}

fn at_least(field: &str, v: f64, min: f64) -> Result<f64, CliError> {
    if finite(field, v)? < min {
        return Err(field_error(field, format!("must be >= {min}, got {v}")));
    }
    Ok(v)
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if finite(field, v)? <= 0.0 {
        return Err(field_error(field, format!("must be positive, got {v}")));
    }
    Ok(v)
}

impl RunConfig {
    /// Reads a config file. Syntax errors carry the line and column reported
    /// by the TOML parser.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.d {
            self.ensemble.d = v;
        }
        if let Some(v) = o.gamma_mhz {
            self.ensemble.gamma_mhz = v;
        }
        if let Some(v) = o.detuning_ghz {
            self.ensemble.detuning_ghz = v;
        }
        if let Some(v) = o.stokes_shift_ghz {
            self.ensemble.stokes_shift_ghz = v;
        }
        if let Some(v) = o.pulse_energy_ghz {
            self.pulse.energy_ghz = v;
        }
    }

    /// Checks every field and builds the model objects. Nothing is computed
    /// before this succeeds.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let conv = self.convention;
        let e = &self.ensemble;
        let d = at_least("ensemble.d", e.d, 0.0)?;
        let gamma = at_least("ensemble.gamma_mhz", e.gamma_mhz, 0.0)?;
        let delta = at_least("ensemble.detuning_ghz", e.detuning_ghz, 0.0)?;
        let shift = at_least("ensemble.stokes_shift_ghz", e.stokes_shift_ghz, 0.0)?;
        if gamma == 0.0 && delta == 0.0 {
            return Err(field_error(
                "ensemble.detuning_ghz",
                "a zero detuning with gamma_mhz = 0 makes the optical response singular",
            ));
        }
        let params =
            EnsembleParams::from_quoted(d, gamma, delta, shift, conv).map_err(|x| field_error("ensemble", x))?;

        let fwhm = positive("pulse.fwhm_ns", self.pulse.fwhm_ns)?;
        let energy = at_least("pulse.energy_ghz", self.pulse.energy_ghz, 0.0)?;
        let w = conv
            .quoted_to_rad_per_ns(energy, Unit::GHz)
            .map_err(|x| field_error("pulse.energy_ghz", x))?;
        let pulse = PulseSpec::new(self.pulse.shape, fwhm, w).map_err(|x| field_error("pulse", x))?;

        if self.grid.nz < 2 {
            return Err(field_error(
                "grid.nz",
                format!("need at least 2 points, got {}", self.grid.nz),
            ));
        }
        if self.grid.ntau < 2 {
            return Err(field_error(
                "grid.ntau",
                format!("need at least 2 points, got {}", self.grid.ntau),
            ));
        }
        let grid = pulse.grid_with(self.grid.nz, self.grid.ntau);
        grid.validate().map_err(|x| field_error("grid", x))?;
        let per_fwhm = fwhm / grid.dtau();
        if per_fwhm < MIN_POINTS_PER_FWHM as f64 {
            return Err(field_error(
                "grid.ntau",
                format!("{per_fwhm:.1} points across the pulse FWHM, need at least {MIN_POINTS_PER_FWHM}"),
            ));
        }

        let n = &self.noise;
        positive("noise.p_sat_mw", n.p_sat_mw)?;
        let kappa = finite("noise.kappa", n.kappa)?;
        if !(0.0..=1.0).contains(&kappa) {
            return Err(field_error("noise.kappa", format!("must lie in [0, 1], got {kappa}")));
        }
        let noise = NoiseModelParams::new(n.p_sat_mw, kappa, n.filter_passes_antistokes)
            .map_err(|x| field_error("noise", x))?;

        let f = &self.field;
        at_least("field.b_gauss", f.b_gauss, 0.0)?;
        finite("field.theta_deg", f.theta_deg)?;
        finite("field.phi_deg", f.phi_deg)?;
        let field =
            MagneticField::from_degrees(f.b_gauss, f.theta_deg, f.phi_deg).map_err(|x| field_error("field", x))?;

        let dp = &self.dephasing;
        let scale = positive("dephasing.scale", dp.scale)?;
        let t_max_us = positive("dephasing.t_max_us", dp.t_max_us)?;
        if dp.n_points < 2 {
            return Err(field_error(
                "dephasing.n_points",
                format!("need at least 2, got {}", dp.n_points),
            ));
        }

        Ok(Resolved {
            convention: conv,
            params,
            pulse,
            grid,
            noise,
            field,
            polarization: f.polarization,
            scale,
            t_max_us,
            n_points: dp.n_points,
        })
    }

    /// Canonical TOML text of the model settings. Output locations are left
    /// out so the same physics hashes the same wherever it is written.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSection::default();
        toml::to_string(&c).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn to_value(&self) -> toml::Value {
        toml::Value::try_from(self).expect("config serialises")
    }

    pub fn from_value(value: toml::Value) -> Result<Self, CliError> {
        value
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string().trim_end().to_string()))
    }

    /// Returns a copy with the dotted `key` (e.g. `ensemble.d`) set to `raw`,
    /// which is read as a TOML literal and otherwise taken as a string.
    pub fn with_key(&self, key: &str, raw: &str) -> Result<Self, CliError> {
        let mut root = self.to_value();
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| CliError::Usage(format!("unknown config key `{key}`")))?;
        }
        if slot.is_table() {
            return Err(CliError::Usage(format!("`{key}` is a table, not a value")));
        }
        *slot = parse_literal(raw);
        Self::from_value(root).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{key} = {raw}: {msg}")),
            other => other,
        })
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let raw = raw.trim();
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    match toml::from_str::<Probe>(&format!("v = {raw}")) {
        Ok(p) => p.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
