//! Simulation configuration: typed settings, built-in presets, and the flat
//! key-value file format.
//!
//! A [`SimConfig`] is resolved from a [`KvMap`] in layers: built-in defaults,
//! then preset expansion (`device.name`, `bitcell.kind`), then explicit keys,
//! then command-line `--set` overrides. Resolution consumes keys as it reads
//! them and rejects anything left over, so misspelled keys fail loudly instead
//! of silently falling back to defaults.
//!
//! All quantities are SI: ohms, meters, seconds, volts, farads.

mod kv;
mod presets;

use std::collections::BTreeSet;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use kv::{parse_value, KvMap, Value};
pub use presets::{
    bitcell_preset, bitcell_preset_names, device_preset, device_preset_names, preset,
    BitcellGeometry, BitcellKind, DeviceTech, Preset, DEFAULT_LAMBDA,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bad override `{pair}`: {message}")]
    BadOverride { pair: String, message: String },
    #[error("{key} not found")]
    KeyNotFound { key: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("key `{key}`: expected {expected}, got {got}")]
    WrongType {
        key: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// How real-valued weights map onto the two-state resistance window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightScheme {
    /// Sign-only mapping: w ≥ 0 → (r_low, r_high), w < 0 → (r_high, r_low).
    Binary,
    /// Magnitude-proportional conductance interpolation inside the window.
    Linear,
}

/// Parasitic capacitance placement along a wire segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CapModel {
    /// Series R with the full segment capacitance lumped at the far node.
    L,
    /// Series R with half the capacitance at each end (π segment).
    Pi,
}

/// How datasets with more features than the first layer are adapted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResizeMode {
    /// Center-crop square images to the target side length.
    Crop,
    /// Bilinear downsample to the target side length.
    Bilinear,
}

/// Activation shape of the behavioral neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NeuronKind {
    Sigmoid,
    Tanh,
    /// Linear with slope `gain`, clamped at the output rails.
    Relu,
}

/// Behavioral neuron: differential front-end, saturating activation,
/// resistive output stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronModel {
    pub kind: NeuronKind,
    /// Small-signal voltage gain at the midpoint of the transfer curve.
    pub gain: f64,
    /// Output saturation rails, volts.
    pub v_high: f64,
    pub v_low: f64,
    /// Each differential input loads its column with this resistance to the
    /// mid-rail reference, ohms.
    pub input_resistance: f64,
    /// Thevenin resistance of the output driver, ohms.
    pub output_resistance: f64,
}

impl NeuronModel {
    /// Midpoint of the output swing, volts.
    pub fn v_mid(&self) -> f64 {
        0.5 * (self.v_high + self.v_low)
    }
}

/// Interconnect geometry and material parameters for parasitic extraction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterconnectSpec {
    /// Bulk resistivity of the wire material, ohm-meters.
    pub bulk_resistivity: f64,
    /// Wire width W, meters.
    pub width: f64,
    /// Wire thickness T, meters.
    pub thickness: f64,
    /// Dielectric height H to the plane below, meters.
    pub dielectric_height: f64,
    /// Lateral spacing S to the neighboring wire, meters.
    pub spacing: f64,
    /// Fraction p of electrons reflected specularly at the surfaces, 0..=1.
    pub specularity: f64,
    /// Grain-boundary reflection coefficient R, 0..<1.
    pub grain_reflectivity: f64,
    /// Electron mean free path l0 in the bulk material, meters.
    pub mean_free_path: f64,
    /// Average grain size d, meters (defaults to the wire width).
    pub grain_size: f64,
    /// Relative permittivity of the surrounding dielectric.
    pub relative_permittivity: f64,
    /// Apply surface/grain-boundary resistivity scaling to the bulk value.
    pub scaling: bool,
}

/// Fully resolved simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Neurons per network layer, input layer first. N entries define N−1
    /// crossbar stages.
    pub topology: Vec<usize>,
    pub device: DeviceTech,
    pub bitcell: BitcellGeometry,
    pub interconnect: InterconnectSpec,
    /// Positive supply rail, volts. Also drives the bias rows.
    pub vdd: f64,
    /// Negative supply rail, volts.
    pub vss: f64,
    /// Horizontal (row) partition count per crossbar stage.
    pub horizontal: Vec<usize>,
    /// Vertical (column) partition count per crossbar stage.
    pub vertical: Vec<usize>,
    pub neuron: NeuronModel,
    pub weight_scheme: WeightScheme,
    /// Input hold time per batched sample, seconds.
    pub t_sampling: f64,
    /// Transient integration step, seconds.
    pub dt: f64,
    /// Samples grouped into one solver lifetime (warm starts, shared
    /// factorization structure, one PWL window in transient mode).
    pub batch_size: usize,
    /// Include interconnect parasitics in built circuits.
    pub parasitics: bool,
    /// Master RNG seed for variation, noise, and synthetic instances.
    pub seed: u64,
    /// Additive Gaussian noise on encoded input voltages, volts.
    pub input_noise_sigma: f64,
    /// Settling band as a fraction of the output swing.
    pub settle_band: f64,
    pub cap_model: CapModel,
    pub resize: ResizeMode,
}

impl SimConfig {
    /// Parse a config file and resolve it with `--set` style overrides.
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut map = KvMap::parse_str(&text)?;
        for pair in overrides {
            map.set_pair(pair)?;
        }
        Self::resolve(&map)
    }

    /// Resolve a config with the topology supplied programmatically
    /// (used by the timing harness and tests).
    pub fn resolve_with_topology(map: &KvMap, topology: &[usize]) -> Result<Self, ConfigError> {
        let mut map = map.clone();
        map.set(
            "topology",
            Value::Array(topology.iter().map(|&n| Value::Int(n as i64)).collect()),
        );
        Self::resolve(&map)
    }

    /// Minimal valid config for a given topology, everything else default.
    pub fn defaults_for(topology: &[usize]) -> Self {
        Self::resolve_with_topology(&KvMap::new(), topology)
            .expect("default config must resolve")
    }

    /// Resolve and validate a raw key-value map into a typed config.
    pub fn resolve(map: &KvMap) -> Result<Self, ConfigError> {
        let mut ctx = Ctx {
            map,
            used: BTreeSet::new(),
        };

        let topology = ctx.usize_array_req("topology")?;
        if topology.len() < 2 {
            return Err(invalid("topology", "need at least an input and an output layer"));
        }
        if topology.iter().any(|&n| n == 0) {
            return Err(invalid("topology", "layer sizes must be positive"));
        }
        let n_stages = topology.len() - 1;

        // Device technology: preset by name, individual keys override.
        let name = ctx.str_or("device.name", "mram")?;
        let preset = device_preset(&name);
        let r_low = match (ctx.f64_opt("device.r_low")?, &preset) {
            (Some(v), _) => v,
            (None, Some(p)) => p.r_low,
            (None, None) => {
                return Err(invalid(
                    "device.name",
                    &format!("`{name}` is not a built-in preset; set device.r_low and device.r_high"),
                ))
            }
        };
        let r_high = match (ctx.f64_opt("device.r_high")?, &preset) {
            (Some(v), _) => v,
            (None, Some(p)) => p.r_high,
            (None, None) => unreachable!("guarded by the r_low arm"),
        };
        if r_low <= 0.0 || r_high <= 0.0 {
            return Err(invalid("device.r_low", "resistances must be positive"));
        }
        let variation_sigma = ctx.f64_or("device.variation_sigma", 0.0)?;
        if variation_sigma < 0.0 {
            return Err(invalid("device.variation_sigma", "must be >= 0"));
        }
        let device = DeviceTech {
            name: name.to_ascii_lowercase(),
            r_low,
            r_high,
            variation_sigma,
        };

        // Bitcell geometry.
        let kind_name = ctx.str_or("bitcell.kind", "1t1r")?;
        let lambda = ctx.pos_f64_or("bitcell.lambda", DEFAULT_LAMBDA)?;
        let mut bitcell = bitcell_preset(&kind_name, lambda)
            .ok_or_else(|| invalid("bitcell.kind", &format!("unknown bitcell kind `{kind_name}`")))?;
        if let Some(v) = ctx.f64_opt("bitcell.length")? {
            bitcell.length = v;
        }
        if let Some(v) = ctx.f64_opt("bitcell.width")? {
            bitcell.width = v;
        }
        if let Some(v) = ctx.f64_opt("bitcell.access_resistance")? {
            bitcell.access_resistance = v;
        }
        if bitcell.length <= 0.0 || bitcell.width <= 0.0 {
            return Err(invalid("bitcell.length", "cell dimensions must be positive"));
        }
        if bitcell.access_resistance < 0.0 {
            return Err(invalid("bitcell.access_resistance", "must be >= 0"));
        }

        // Interconnect.
        let width = ctx.pos_f64_or("interconnect.width", 36e-9)?;
        let spacing = match ctx.f64_opt("interconnect.s")? {
            Some(v) if v > 0.0 => v,
            Some(_) => return Err(invalid("interconnect.s", "must be > 0")),
            None => {
                let s = bitcell.width - width;
                if s <= 0.0 {
                    return Err(invalid(
                        "interconnect.s",
                        "bitcell width does not exceed wire width; set interconnect.s explicitly",
                    ));
                }
                s
            }
        };
        let specularity = ctx.f64_or("interconnect.p", 0.25)?;
        if !(0.0..=1.0).contains(&specularity) {
            return Err(invalid("interconnect.p", "must be within [0, 1]"));
        }
        let grain_reflectivity = ctx.f64_or("interconnect.r", 0.3)?;
        if !(0.0..1.0).contains(&grain_reflectivity) {
            return Err(invalid("interconnect.r", "must be within [0, 1)"));
        }
        let interconnect = InterconnectSpec {
            bulk_resistivity: ctx.pos_f64_or("interconnect.rho", 1.9e-9)?,
            width,
            thickness: ctx.pos_f64_or("interconnect.thickness", 22e-9)?,
            dielectric_height: ctx.pos_f64_or("interconnect.h", 20e-9)?,
            spacing,
            specularity,
            grain_reflectivity,
            mean_free_path: ctx.pos_f64_or("interconnect.l0", 39e-9)?,
            grain_size: match ctx.f64_opt("interconnect.d")? {
                Some(v) if v > 0.0 => v,
                Some(_) => return Err(invalid("interconnect.d", "must be > 0")),
                None => width,
            },
            relative_permittivity: ctx.pos_f64_or("interconnect.epsilon_r", 20.0)?,
            scaling: ctx.bool_or("interconnect.scaling", true)?,
        };

        // Rails.
        let vdd = ctx.f64_or("voltages.vdd", 0.8)?;
        let vss = ctx.f64_or("voltages.vss", -0.8)?;
        if vdd <= vss {
            return Err(invalid("voltages.vdd", "vdd must exceed vss"));
        }

        // Partition plan.
        let subarray = ctx.usize_array_opt("partitions.subarray")?;
        let horizontal_explicit = ctx.usize_array_opt("partitions.horizontal")?;
        let vertical_explicit = ctx.usize_array_opt("partitions.vertical")?;
        let (horizontal, vertical) = match subarray {
            Some(dims) => {
                if horizontal_explicit.is_some() || vertical_explicit.is_some() {
                    return Err(invalid(
                        "partitions.subarray",
                        "conflicts with partitions.horizontal / partitions.vertical",
                    ));
                }
                let (max_rows, max_cols) = match dims.as_slice() {
                    [n] => (*n, *n),
                    [r, c] => (*r, *c),
                    _ => {
                        return Err(invalid(
                            "partitions.subarray",
                            "expected [size] or [max_rows, max_cols]",
                        ))
                    }
                };
                if max_rows == 0 || max_cols == 0 {
                    return Err(invalid("partitions.subarray", "sizes must be positive"));
                }
                crate::partition::plan_for_subarray(&topology, max_rows, max_cols)
            }
            None => {
                let horizontal = horizontal_explicit.unwrap_or_else(|| vec![1; n_stages]);
                let vertical = vertical_explicit.unwrap_or_else(|| vec![1; n_stages]);
                (horizontal, vertical)
            }
        };
        for (key, list) in [("partitions.horizontal", &horizontal), ("partitions.vertical", &vertical)] {
            if list.len() != n_stages {
                return Err(ConfigError::DimensionMismatch {
                    context: format!(
                        "{key} has {} entries but the topology defines {n_stages} crossbar stages",
                        list.len()
                    ),
                });
            }
            if list.iter().any(|&n| n == 0) {
                return Err(invalid(key, "partition counts must be >= 1"));
            }
        }

        // Neuron.
        let neuron_kind = match ctx.str_or("neuron.kind", "sigmoid")?.as_str() {
            "sigmoid" => NeuronKind::Sigmoid,
            "tanh" => NeuronKind::Tanh,
            "relu" => NeuronKind::Relu,
            other => return Err(invalid("neuron.kind", &format!("unknown neuron kind `{other}`"))),
        };
        let v_high = ctx.f64_or("neuron.v_high", vdd)?;
        let v_low = ctx.f64_or("neuron.v_low", vss)?;
        if v_high <= v_low {
            return Err(invalid("neuron.v_high", "v_high must exceed v_low"));
        }
        let neuron = NeuronModel {
            kind: neuron_kind,
            gain: ctx.pos_f64_or("neuron.gain", 5.0)?,
            v_high,
            v_low,
            input_resistance: ctx.pos_f64_or("neuron.r_in", 10e3)?,
            output_resistance: ctx.pos_f64_or("neuron.r_out", 100.0)?,
        };

        // Simulation controls.
        let weight_scheme = match ctx.str_or("sim.weight_scheme", "binary")?.as_str() {
            "binary" => WeightScheme::Binary,
            "linear" => WeightScheme::Linear,
            other => {
                return Err(invalid(
                    "sim.weight_scheme",
                    &format!("unknown weight scheme `{other}`"),
                ))
            }
        };
        let t_sampling = ctx.pos_f64_or("sim.t_sampling", 1e-9)?;
        let dt = ctx.pos_f64_or("sim.dt", t_sampling / 100.0)?;
        if dt > t_sampling {
            return Err(invalid("sim.dt", "dt must not exceed sim.t_sampling"));
        }
        let batch_size = ctx.usize_or("sim.batch_size", 50)?;
        if batch_size == 0 {
            return Err(invalid("sim.batch_size", "must be >= 1"));
        }
        let input_noise_sigma = ctx.f64_or("sim.input_noise_sigma", 0.0)?;
        if input_noise_sigma < 0.0 {
            return Err(invalid("sim.input_noise_sigma", "must be >= 0"));
        }
        let settle_band = ctx.f64_or("sim.settle_band", 0.02)?;
        if !(settle_band > 0.0 && settle_band < 1.0) {
            return Err(invalid("sim.settle_band", "must be within (0, 1)"));
        }
        let cap_model = match ctx.str_or("sim.cap_model", "l")?.as_str() {
            "l" => CapModel::L,
            "pi" => CapModel::Pi,
            other => return Err(invalid("sim.cap_model", &format!("unknown cap model `{other}`"))),
        };
        let resize = match ctx.str_or("sim.resize", "crop")?.as_str() {
            "crop" => ResizeMode::Crop,
            "bilinear" => ResizeMode::Bilinear,
            other => return Err(invalid("sim.resize", &format!("unknown resize mode `{other}`"))),
        };
        let seed = ctx.u64_or("sim.seed", 1)?;
        let parasitics = ctx.bool_or("sim.parasitics", true)?;

        // Anything not consumed above is a typo or an unsupported key.
        for key in map.keys() {
            if !ctx.used.contains(key) {
                return Err(ConfigError::UnknownKey { key: key.to_string() });
            }
        }

        Ok(SimConfig {
            topology,
            device,
            bitcell,
            interconnect,
            vdd,
            vss,
            horizontal,
            vertical,
            neuron,
            weight_scheme,
            t_sampling,
            dt,
            batch_size,
            parasitics,
            seed,
            input_noise_sigma,
            settle_band,
            cap_model,
            resize,
        })
    }

    /// Number of crossbar stages (layers of the network minus one).
    pub fn n_stages(&self) -> usize {
        self.topology.len() - 1
    }

    /// True when the configured resistance window cannot represent weights
    /// (high state at or below the low state). Such configs are evaluated as
    /// failed-by-construction rather than rejected, so sweeps can chart the
    /// failure boundary.
    pub fn resistance_window_inverted(&self) -> bool {
        self.device.r_high <= self.device.r_low
    }
}

fn invalid(key: &str, message: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

/// Typed getters over a KvMap that record which keys were consumed.
struct Ctx<'a> {
    map: &'a KvMap,
    used: BTreeSet<String>,
}

impl<'a> Ctx<'a> {
    fn get(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.map.get(key)
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| ConfigError::WrongType {
                key: key.to_string(),
                expected: "number",
                got: v.type_name(),
            }),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn pos_f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(invalid(key, "must be > 0"))
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| ConfigError::WrongType {
                key: key.to_string(),
                expected: "bool",
                got: v.type_name(),
            }),
        }
    }

    fn str_or(&mut self, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.get(key) {
            None => Ok(default.to_string()),
            Some(v) => v
                .as_str()
                .map(|s| s.to_ascii_lowercase())
                .ok_or_else(|| ConfigError::WrongType {
                    key: key.to_string(),
                    expected: "string",
                    got: v.type_name(),
                }),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => match v.as_i64() {
                Some(i) if i >= 0 => Ok(i as usize),
                Some(_) => Err(invalid(key, "must be >= 0")),
                None => Err(ConfigError::WrongType {
                    key: key.to_string(),
                    expected: "int",
                    got: v.type_name(),
                }),
            },
        }
    }

    fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => match v.as_i64() {
                Some(i) if i >= 0 => Ok(i as u64),
                Some(_) => Err(invalid(key, "must be >= 0")),
                None => Err(ConfigError::WrongType {
                    key: key.to_string(),
                    expected: "int",
                    got: v.type_name(),
                }),
            },
        }
    }

    fn usize_array_opt(&mut self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                let items = v.as_array().ok_or_else(|| ConfigError::WrongType {
                    key: key.to_string(),
                    expected: "int array",
                    got: v.type_name(),
                })?;
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item.as_i64() {
                        Some(i) if i >= 0 => out.push(i as usize),
                        _ => {
                            return Err(ConfigError::WrongType {
                                key: key.to_string(),
                                expected: "non-negative int array",
                                got: item.type_name(),
                            })
                        }
                    }
                }
                Ok(Some(out))
            }
        }
    }

    fn usize_array_req(&mut self, key: &str) -> Result<Vec<usize>, ConfigError> {
        self.usize_array_opt(key)?.ok_or_else(|| ConfigError::KeyNotFound {
            key: format!("required key `{key}`"),
        })
    }
}
