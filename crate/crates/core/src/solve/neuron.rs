//! Behavioral neuron transfer functions with analytic derivatives.
//!
//! Each activation maps an input voltage to an output voltage between the
//! rails `v_low..v_high`, crossing the midpoint `v_mid = (v_high + v_low)/2`
//! with slope `gain`. The derivative is returned alongside the value so the
//! Newton loop can linearize the neuron's controlled output stage exactly.

use crate::config::{NeuronKind, NeuronModel};

/// Overflow-safe logistic function.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the neuron's voltage transfer at `v_in`, returning
/// `(v_out, dv_out/dv_in)`.
///
/// - Sigmoid: `v_out = v_low + (v_high − v_low) · σ(k (v_in − v_mid))` with
///   `k = 4·gain / (v_high − v_low)`, so the slope at `v_mid` equals `gain`.
/// - Tanh: `v_out = v_mid + (swing/2) · tanh(k (v_in − v_mid))` with
///   `k = 2·gain / swing`; same midpoint slope.
/// - Relu: the line through `v_mid` with slope `gain`, clamped at the rails
///   (derivative 0 in the clamped regions).
pub fn neuron_transfer(v_in: f64, model: &NeuronModel) -> (f64, f64) {
    let swing = model.v_high - model.v_low;
    let v_mid = model.v_mid();
    let u = v_in - v_mid;
    match model.kind {
        NeuronKind::Sigmoid => {
            let k = 4.0 * model.gain / swing;
            let s = logistic(k * u);
            (model.v_low + swing * s, swing * k * s * (1.0 - s))
        }
        NeuronKind::Tanh => {
            let k = 2.0 * model.gain / swing;
            let t = (k * u).tanh();
            (v_mid + 0.5 * swing * t, 0.5 * swing * k * (1.0 - t * t))
        }
        NeuronKind::Relu => {
            let lin = v_mid + model.gain * u;
            if lin >= model.v_high {
                (model.v_high, 0.0)
            } else if lin <= model.v_low {
                (model.v_low, 0.0)
            } else {
                (lin, model.gain)
            }
        }
    }
}
