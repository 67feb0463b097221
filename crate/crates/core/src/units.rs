//! Fixed unit set and conversions.
//!
//! Internally every rate, detuning and Rabi frequency is an angular
//! frequency in rad/ns, every time is in ns and the propagation coordinate
//! is normalised to `[0, 1]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bohr magneton over Planck's constant, in MHz per gauss.
pub const BOHR_MHZ_PER_GAUSS: f64 = 1.399_624;

/// Larmor angular frequency per gauss for a unit g-factor, in rad/ns.
pub const LARMOR_RAD_PER_NS_PER_GAUSS: f64 = 2.0 * PI * BOHR_MHZ_PER_GAUSS * 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    MHz,
    GHz,
    RadPerNs,
    Ns,
    Us,
    Gauss,
    MilliWatt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Frequency,
    Time,
    Field,
    Power,
}

impl Unit {
    fn dimension(self) -> Dimension {
        match self {
            Unit::MHz | Unit::GHz | Unit::RadPerNs => Dimension::Frequency,
            Unit::Ns | Unit::Us => Dimension::Time,
            Unit::Gauss => Dimension::Field,
            Unit::MilliWatt => Dimension::Power,
        }
    }

    /// Factor to the base unit of the dimension (GHz, ns, G, mW).
    fn to_base(self) -> f64 {
        match self {
            Unit::MHz => 1e-3,
            Unit::GHz => 1.0,
            Unit::RadPerNs => 1.0 / (2.0 * PI),
            Unit::Ns => 1.0,
            Unit::Us => 1e3,
            Unit::Gauss => 1.0,
            Unit::MilliWatt => 1.0,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::MHz => "MHz",
            Unit::GHz => "GHz",
            Unit::RadPerNs => "rad/ns",
            Unit::Ns => "ns",
            Unit::Us => "us",
            Unit::Gauss => "G",
            Unit::MilliWatt => "mW",
        };
        f.write_str(s)
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "MHz" | "mhz" => Unit::MHz,
            "GHz" | "ghz" => Unit::GHz,
            "rad/ns" => Unit::RadPerNs,
            "ns" => Unit::Ns,
            "us" | "µs" | "μs" => Unit::Us,
            "G" | "Gauss" | "gauss" => Unit::Gauss,
            "mW" | "mw" => Unit::MilliWatt,
            other => {
                return Err(Error::UnsupportedConversion {
                    from: other.to_string(),
                    to: "?".into(),
                })
            }
        })
    }
}

/// Converts `value` between two units of the supported set.
///
/// Frequencies convert exactly (`1 GHz = 2π rad/ns`). A field strength in
/// gauss converts to a frequency through the Larmor relation for a unit
/// g-factor, `µ_B/h = 1.399624 MHz/G`.
pub fn unit_convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    use Dimension::*;
    let unsupported = || Error::UnsupportedConversion {
        from: from.to_string(),
        to: to.to_string(),
    };
    match (from.dimension(), to.dimension()) {
        (a, b) if a == b => Ok(value * from.to_base() / to.to_base()),
        (Field, Frequency) => {
            let ghz = value * BOHR_MHZ_PER_GAUSS * 1e-3;
            Ok(ghz / to.to_base())
        }
        (Frequency, Field) => {
            let ghz = value * from.to_base();
            Ok(ghz / (BOHR_MHZ_PER_GAUSS * 1e-3))
        }
        _ => Err(unsupported()),
    }
}

/// How quoted frequency values ("16 MHz", "30 GHz") map onto rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyConvention {
    /// Quoted values are ordinary frequencies; multiply by 2π.
    #[default]
    Ordinary,
    /// Quoted values already are angular frequencies (rad/ns per "GHz").
    Angular,
}

impl FrequencyConvention {
    /// Converts a quoted frequency in `unit` (MHz or GHz) to rad/ns.
    pub fn quoted_to_rad_per_ns(self, value: f64, unit: Unit) -> Result<f64> {
        let ghz = unit_convert(value, unit, Unit::GHz)?;
        Ok(match self {
            FrequencyConvention::Ordinary => 2.0 * PI * ghz,
            FrequencyConvention::Angular => ghz,
        })
    }

    /// Inverse of [`quoted_to_rad_per_ns`](Self::quoted_to_rad_per_ns).
    pub fn rad_per_ns_to_quoted(self, value: f64, unit: Unit) -> Result<f64> {
        let ghz = match self {
            FrequencyConvention::Ordinary => value / (2.0 * PI),
            FrequencyConvention::Angular => value,
        };
        unit_convert(ghz, Unit::GHz, unit)
    }
}

impl fmt::Display for FrequencyConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrequencyConvention::Ordinary => f.write_str("ordinary"),
            FrequencyConvention::Angular => f.write_str("angular"),
        }
    }
}
