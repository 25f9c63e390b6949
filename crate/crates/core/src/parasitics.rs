//! Interconnect parasitics: wire resistance with size-effect resistivity
//! scaling, and wire capacitance from a closed-form field model.
//!
//! At deeply scaled metal pitches the effective resistivity of a copper wire
//! exceeds the bulk value because electrons scatter at the wire surfaces
//! (Fuchs–Sondheimer) and at grain boundaries (Mayadas–Shatzkes). Both
//! effects are combined multiplicatively with the bulk resistivity:
//!
//! ```text
//! ρ/ρ_bulk = (3/4)·(1−p)·(l0/W)                            (surface)
//!          + [1 − 3α/2 + 3α² − 3α³·ln(1 + 1/α)]⁻¹          (grain boundary)
//! with α = (l0/d)·R/(1−R)
//! ```
//!
//! where `p` is the specular reflection fraction, `l0` the bulk mean free
//! path, `W` the wire width, `d` the grain size, and `R` the grain-boundary
//! reflection coefficient.
//!
//! Capacitance per unit length uses the Sakurai–Tamaru fit for a wire of
//! width `W` and thickness `T` at height `H` over a plane, with a coupling
//! term to a parallel neighbor at spacing `S`:
//!
//! ```text
//! C/len = (ε/2)·[1.15·(W/H) + 2.8·(W/H)^0.222]
//!       + 2ε·(S/H)^−1.34 · [0.03·(W/H) + 0.83·(T/H) − 0.07·(T/H)^0.222]
//! ```

use thiserror::Error;

use crate::config::InterconnectSpec;

/// Vacuum permittivity, farads per meter.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

#[derive(Debug, Error)]
pub enum ParasiticsError {
    #[error("degenerate interconnect geometry: {detail}")]
    DegenerateGeometry { detail: String },
}

/// Series resistance and shunt capacitance of one wire segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParasiticPair {
    /// Ohms.
    pub resistance: f64,
    /// Farads.
    pub capacitance: f64,
}

/// Ratio of effective to bulk resistivity from surface and grain-boundary
/// scattering. Dimensionless, ≥ 1 for physical inputs.
pub fn resistivity_scale_factor(spec: &InterconnectSpec) -> Result<f64, ParasiticsError> {
    let surface = 0.75 * (1.0 - spec.specularity) * (spec.mean_free_path / spec.width);
    let alpha = (spec.mean_free_path / spec.grain_size) * spec.grain_reflectivity
        / (1.0 - spec.grain_reflectivity);
    // α → 0 makes the α³·ln(1+1/α) term 0·∞ in IEEE arithmetic; its limit is 0.
    let grain_bracket = if alpha == 0.0 {
        1.0
    } else {
        1.0 - 1.5 * alpha + 3.0 * alpha * alpha
            - 3.0 * alpha.powi(3) * (1.0 + 1.0 / alpha).ln()
    };
    if !(grain_bracket.is_finite() && grain_bracket > 0.0) {
        return Err(ParasiticsError::DegenerateGeometry {
            detail: format!("grain-boundary factor is non-positive (α = {alpha:.6e})"),
        });
    }
    Ok(surface + 1.0 / grain_bracket)
}

/// Effective wire resistivity in ohm-meters. With `spec.scaling` disabled the
/// bulk value is returned unchanged.
pub fn effective_resistivity(spec: &InterconnectSpec) -> Result<f64, ParasiticsError> {
    if !spec.scaling {
        return Ok(spec.bulk_resistivity);
    }
    Ok(spec.bulk_resistivity * resistivity_scale_factor(spec)?)
}

/// Series resistance of a wire segment of the given length, ohms.
/// `rho` is the (already scaled) resistivity so per-segment calls don't
/// re-derive the scale factor.
pub fn wire_resistance(length: f64, spec: &InterconnectSpec, rho: f64) -> f64 {
    rho * length / (spec.width * spec.thickness)
}

/// Wire capacitance per unit length, farads per meter.
pub fn wire_capacitance_per_length(spec: &InterconnectSpec) -> f64 {
    let eps = spec.relative_permittivity * EPSILON_0;
    let w_h = spec.width / spec.dielectric_height;
    let t_h = spec.thickness / spec.dielectric_height;
    let s_h = spec.spacing / spec.dielectric_height;
    let plate = 0.5 * eps * (1.15 * w_h + 2.8 * w_h.powf(0.222));
    let coupling = 2.0 * eps
        * s_h.powf(-1.34)
        * (0.03 * w_h + 0.83 * t_h - 0.07 * t_h.powf(0.222));
    plate + coupling
}

/// Resistance and capacitance of one wire segment of the given length.
pub fn segment_parasitics(
    length: f64,
    spec: &InterconnectSpec,
) -> Result<ParasiticPair, ParasiticsError> {
    let rho = effective_resistivity(spec)?;
    Ok(ParasiticPair {
        resistance: wire_resistance(length, spec, rho),
        capacitance: wire_capacitance_per_length(spec) * length,
    })
}
