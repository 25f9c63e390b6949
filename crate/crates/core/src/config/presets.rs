//! Built-in device technologies and bitcell geometries.
//!
//! Resistance windows are nominal low/high device states for four published
//! resistive memory technologies. Bitcell footprints are expressed in units
//! of the technology feature size λ so one preset scales across nodes; the
//! access-device series resistance depends on the cell style (the
//! transmission-gate cell conducts through two parallel devices, halving it).

use serde::Serialize;

use super::ConfigError;

/// A two-state resistive device technology.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceTech {
    pub name: String,
    /// Low-resistance state, ohms.
    pub r_low: f64,
    /// High-resistance state, ohms.
    pub r_high: f64,
    /// Lognormal sigma (natural-log space) of per-device conductance
    /// variation; 0 disables variation.
    pub variation_sigma: f64,
}

/// Bitcell style: how the resistive element is accessed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BitcellKind {
    /// One NMOS access transistor per device.
    OneT1R,
    /// Two stacked access transistors per device.
    TwoT1R,
    /// One transmission gate (NMOS + PMOS in parallel) per device.
    OneTg1R,
}

impl BitcellKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "1t1r" => Some(Self::OneT1R),
            "2t1r" => Some(Self::TwoT1R),
            "1tg1r" => Some(Self::OneTg1R),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::OneT1R => "1t1r",
            Self::TwoT1R => "2t1r",
            Self::OneTg1R => "1tg1r",
        }
    }
}

/// Physical bitcell geometry plus the access-device series resistance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitcellGeometry {
    pub kind: BitcellKind,
    /// Feature size λ, meters.
    pub lambda: f64,
    /// Cell extent along a row (horizontal wire pitch), meters.
    pub length: f64,
    /// Cell extent along a column (vertical wire pitch), meters.
    pub width: f64,
    /// On-resistance of the access path in series with the device, ohms.
    pub access_resistance: f64,
}

/// Default feature size, meters.
pub const DEFAULT_LAMBDA: f64 = 9e-9;

struct DeviceRow {
    name: &'static str,
    r_low: f64,
    r_high: f64,
}

const DEVICE_ROWS: &[DeviceRow] = &[
    DeviceRow { name: "mram", r_low: 8.5e3, r_high: 25.5e3 },
    DeviceRow { name: "rram", r_low: 2.5e3, r_high: 100e3 },
    DeviceRow { name: "cbram", r_low: 10e3, r_high: 1e6 },
    DeviceRow { name: "pcm", r_low: 78e3, r_high: 202e3 },
];

struct BitcellRow {
    kind: BitcellKind,
    length_lambda: f64,
    width_lambda: f64,
    access_resistance: f64,
}

const BITCELL_ROWS: &[BitcellRow] = &[
    BitcellRow { kind: BitcellKind::OneT1R, length_lambda: 15.0, width_lambda: 12.0, access_resistance: 5e3 },
    BitcellRow { kind: BitcellKind::TwoT1R, length_lambda: 15.0, width_lambda: 12.0, access_resistance: 5e3 },
    BitcellRow { kind: BitcellKind::OneTg1R, length_lambda: 15.0, width_lambda: 12.0, access_resistance: 2.5e3 },
];

/// Look up a built-in device technology by name (case-insensitive).
pub fn device_preset(name: &str) -> Option<DeviceTech> {
    let lower = name.to_ascii_lowercase();
    DEVICE_ROWS.iter().find(|row| row.name == lower).map(|row| DeviceTech {
        name: row.name.to_string(),
        r_low: row.r_low,
        r_high: row.r_high,
        variation_sigma: 0.0,
    })
}

/// Look up a built-in bitcell geometry by kind name, scaled to `lambda`.
pub fn bitcell_preset(name: &str, lambda: f64) -> Option<BitcellGeometry> {
    let kind = BitcellKind::parse(name)?;
    let row = BITCELL_ROWS.iter().find(|row| row.kind == kind)?;
    Some(BitcellGeometry {
        kind,
        lambda,
        length: row.length_lambda * lambda,
        width: row.width_lambda * lambda,
        access_resistance: row.access_resistance,
    })
}

/// Any built-in preset: either a device technology or a bitcell geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Device(DeviceTech),
    Bitcell(BitcellGeometry),
}

/// Look up any built-in preset by name. Bitcell geometries are returned at
/// the default feature size.
pub fn preset(name: &str) -> Result<Preset, ConfigError> {
    if let Some(dev) = device_preset(name) {
        return Ok(Preset::Device(dev));
    }
    if let Some(cell) = bitcell_preset(name, DEFAULT_LAMBDA) {
        return Ok(Preset::Bitcell(cell));
    }
    Err(ConfigError::KeyNotFound {
        key: format!("preset `{name}`"),
    })
}

/// Names of all built-in device presets, in definition order.
pub fn device_preset_names() -> Vec<&'static str> {
    DEVICE_ROWS.iter().map(|r| r.name).collect()
}

/// Names of all built-in bitcell presets, in definition order.
pub fn bitcell_preset_names() -> Vec<&'static str> {
    BITCELL_ROWS.iter().map(|r| r.kind.as_str()).collect()
}
