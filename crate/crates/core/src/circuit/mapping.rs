//! Weight-to-conductance mapping for differential bitcell pairs.
//!
//! Every logical weight occupies one bitcell holding two resistive devices:
//! one on the positive column line, one on the negative. The differential
//! conductance `g_pos − g_neg` carries the signed weight. The access device
//! in series is folded into each branch, so the mapped values are effective
//! branch conductances between the row line and the column line.

use crate::config::{DeviceTech, WeightScheme};

use super::{G_OPEN, R_SHORT};

/// Effective conductances of one differential bitcell, siemens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductancePair {
    pub g_pos: f64,
    pub g_neg: f64,
}

impl ConductancePair {
    pub fn differential(&self) -> f64 {
        self.g_pos - self.g_neg
    }
}

/// Conductance of a device programmed to `r_device` behind `r_access` of
/// series access resistance, clamped to the numerical floors.
pub(super) fn branch_conductance(r_device: f64, r_access: f64) -> f64 {
    let r = (r_device + r_access).max(R_SHORT);
    (1.0 / r).max(G_OPEN)
}

/// Map one weight onto a differential conductance pair.
///
/// * `Binary`: sign selects which branch gets the low-resistance state;
///   the magnitude is ignored (two-state devices).
/// * `Linear`: the magnitude, normalized by `w_max` (the largest |weight|
///   in the stage), interpolates the stronger branch's conductance between
///   the high- and low-resistance states; the weaker branch stays at the
///   high-resistance state.
pub fn map_weight(
    w: f64,
    w_max: f64,
    device: &DeviceTech,
    r_access: f64,
    scheme: WeightScheme,
) -> ConductancePair {
    let g_strong = branch_conductance(device.r_low, r_access);
    let g_weak = branch_conductance(device.r_high, r_access);
    match scheme {
        WeightScheme::Binary => {
            if w >= 0.0 {
                ConductancePair { g_pos: g_strong, g_neg: g_weak }
            } else {
                ConductancePair { g_pos: g_weak, g_neg: g_strong }
            }
        }
        WeightScheme::Linear => {
            let f = if w_max > 0.0 { (w.abs() / w_max).min(1.0) } else { 0.0 };
            let g = g_weak + f * (g_strong - g_weak);
            if w >= 0.0 {
                ConductancePair { g_pos: g, g_neg: g_weak }
            } else {
                ConductancePair { g_pos: g_weak, g_neg: g }
            }
        }
    }
}
