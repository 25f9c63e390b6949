//! Device-to-device process variation.
//!
//! Programmed memristive conductances are perturbed by a multiplicative
//! lognormal factor with median 1: `g' = g * exp(sigma * z)` with
//! `z ~ N(0, 1)`. Only the memristive part of each bitcell branch varies;
//! the access resistance is a fixed layout property.
//!
//! Each draw is keyed by the device's logical position (stage, row, column,
//! branch polarity) rather than by element order, so the same seed produces
//! the same physical device sample no matter how the array is partitioned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::mapping::branch_conductance;
use super::{CircuitGraph, Element, ResistorRole};

/// SplitMix64 scrambling step; a bijection on `u64` with good avalanche.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold the run seed and a device's logical coordinates into one RNG key.
fn position_key(seed: u64, stage: u32, row: u32, col: u32, positive: bool) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ u64::from(stage));
    h = splitmix64(h ^ u64::from(row));
    h = splitmix64(h ^ u64::from(col));
    splitmix64(h ^ u64::from(positive))
}

/// Lognormal conductance factor for one device position.
fn variation_factor(sigma: f64, seed: u64, stage: u32, row: u32, col: u32, positive: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(position_key(seed, stage, row, col, positive));
    let z: f64 = rng.sample(StandardNormal);
    (sigma * z).exp()
}

/// Returns a copy of `graph` with every memristive device conductance
/// multiplied by its own seeded lognormal factor.
///
/// `sigma` is the standard deviation of the factor's natural log; 0 returns
/// an unmodified clone. Wire parasitics, sources, and neurons are untouched,
/// and each device's nominal decomposition stays in its role so variation is
/// always applied relative to the programmed value, never compounded.
///
/// # Panics
///
/// Panics if `sigma` is negative or non-finite (callers validate config
/// values before building).
pub fn apply_variation(graph: &CircuitGraph, sigma: f64, seed: u64) -> CircuitGraph {
    assert!(
        sigma.is_finite() && sigma >= 0.0,
        "variation sigma must be finite and non-negative, got {sigma}"
    );
    let mut out = graph.clone();
    if sigma == 0.0 {
        return out;
    }
    for element in &mut out.elements {
        if let Element::Resistor { ohms, role, .. } = element {
            if let ResistorRole::Device {
                r_memristor,
                r_access,
                stage,
                row,
                col,
                positive,
            } = *role
            {
                let factor = variation_factor(sigma, seed, stage, row, col, positive);
                // Scale the memristive conductance; the series access
                // resistance and the open/short clamps follow the same
                // rules as nominal weight mapping.
                *ohms = 1.0 / branch_conductance(r_memristor / factor, r_access);
            }
        }
    }
    out
}
