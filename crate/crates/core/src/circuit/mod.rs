//! The electrical network: node/element graph, conductance mapping, network
//! construction, and process-variation injection.
//!
//! A [`CircuitGraph`] is a flat list of nodes and two-terminal (or, for the
//! neuron, three-terminal) elements plus metadata locating the functional
//! structure (input nodes, per-stage column merge nodes, neuron outputs).
//! Node 0 is always ground. Graphs are immutable once built; per-sample
//! input values are supplied at solve time so one graph can be shared across
//! worker threads.

mod build;
mod mapping;
mod variation;

pub use build::{build_layer, build_network, build_sense_crossbar, expected_counts, ColumnTermination};
pub use mapping::{map_weight, ConductancePair};
pub use variation::apply_variation;

use thiserror::Error;

use crate::config::NeuronModel;
use crate::parasitics::ParasiticsError;
use crate::partition::PartitionError;

/// Index into [`CircuitGraph::nodes`]. Node 0 is ground.
pub type NodeId = usize;

/// Ground node id.
pub const GROUND: NodeId = 0;

/// Floor for any modeled resistance, ohms. A defect or degenerate config
/// that would produce a near-zero resistance is represented as this value
/// instead of a hard short.
pub const R_SHORT: f64 = 1.0;

/// Floor conductance, siemens. Doubles as the node-to-ground leak the solver
/// adds to keep the system matrix well conditioned.
pub const G_OPEN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("non-finite weight at stage {stage}, output {output}, input {input}")]
    NonFiniteWeight {
        stage: usize,
        output: usize,
        input: usize,
    },
    #[error(transparent)]
    Parasitics(#[from] ParasiticsError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// What a node is for; used by validation, export, and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Ground,
    /// Supply or reference rail (bias, mid-rail).
    Rail,
    /// Driven network input.
    Input,
    /// Wire tap along a row line.
    RowTap,
    /// Wire tap along a column line.
    ColTap,
    /// Column merge point where partition column lines rejoin.
    Merge,
    /// Neuron output (hidden activation or network output).
    NeuronOut,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

/// What role a voltage source plays; determines which sources the solver
/// overrides with per-sample values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Network input `k`; its value is replaced per sample.
    Input(usize),
    /// Bias rail at vdd.
    Bias,
    /// Mid-swing reference rail for neuron front-ends (only present when the
    /// neuron midpoint is not 0 V).
    MidRail,
    /// 0 V virtual-ground column sense source (current-mode readout).
    Sense {
        stage: usize,
        col: usize,
        positive: bool,
    },
}

/// Why a resistor exists; device resistors carry their decomposition so
/// variation can re-derive the combined value from the memristive part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResistorRole {
    /// Programmed memristive device plus its access path. `ohms` on the
    /// element is the combined series value; the fields keep the nominal
    /// decomposition and the device's logical position, which seeds its
    /// process-variation draw independently of partition layout.
    Device {
        r_memristor: f64,
        r_access: f64,
        stage: u32,
        /// Crossbar row (0 = bias row).
        row: u32,
        /// Logical output column.
        col: u32,
        /// True for the positive column branch of the differential pair.
        positive: bool,
    },
    /// Interconnect wire segment.
    Wire,
}

#[derive(Debug, Clone)]
pub enum Element {
    Resistor {
        a: NodeId,
        b: NodeId,
        /// Ohms, finite and > 0.
        ohms: f64,
        role: ResistorRole,
    },
    Capacitor {
        a: NodeId,
        b: NodeId,
        /// Farads, ≥ 0.
        farads: f64,
    },
    VSource {
        pos: NodeId,
        neg: NodeId,
        /// Volts (DC value; input sources are overridden per sample).
        volts: f64,
        kind: SourceKind,
    },
    Neuron {
        /// Positive column merge node.
        pos_in: NodeId,
        /// Negative column merge node.
        neg_in: NodeId,
        /// Mid-swing reference the front-end resistances tie to (ground for
        /// symmetric rails).
        ref_node: NodeId,
        out: NodeId,
        model: NeuronModel,
    },
}

/// Element tallies by role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ElementCounts {
    pub devices: usize,
    pub wire_resistors: usize,
    pub wire_capacitors: usize,
    pub neurons: usize,
    pub sources: usize,
}

/// Locations of one stage's functional nodes.
#[derive(Debug, Clone)]
pub struct StageMeta {
    /// Driving node of each row: index 0 is the bias rail, row `r ≥ 1` is
    /// input `r − 1` of the stage.
    pub row_nodes: Vec<NodeId>,
    /// Positive column merge node per logical output column.
    pub pos_merge: Vec<NodeId>,
    /// Negative column merge node per logical output column.
    pub neg_merge: Vec<NodeId>,
    /// Neuron output node per column (empty in sense mode).
    pub neuron_out: Vec<NodeId>,
    /// Contiguous range of this stage's elements in the element list.
    pub element_range: std::ops::Range<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct GraphMeta {
    /// Network topology this graph realizes (layer sizes).
    pub topology: Vec<usize>,
    /// Nodes driven by the network's input sources, in input order.
    pub input_nodes: Vec<NodeId>,
    /// Final-stage neuron outputs (empty in sense mode).
    pub output_nodes: Vec<NodeId>,
    pub stages: Vec<StageMeta>,
    pub counts: ElementCounts,
}

#[derive(Debug, Clone)]
pub struct CircuitGraph {
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    pub meta: GraphMeta,
}

impl CircuitGraph {
    /// Empty graph containing only the ground node.
    pub fn new() -> Self {
        Self {
            nodes: vec![Node {
                name: "0".into(),
                kind: NodeKind::Ground,
            }],
            elements: Vec::new(),
            meta: GraphMeta::default(),
        }
    }

    pub fn add_node(&mut self, name: String, kind: NodeKind) -> NodeId {
        self.nodes.push(Node { name, kind });
        self.nodes.len() - 1
    }

    pub fn add_resistor(&mut self, a: NodeId, b: NodeId, ohms: f64, role: ResistorRole) {
        match role {
            ResistorRole::Device { .. } => self.meta.counts.devices += 1,
            ResistorRole::Wire => self.meta.counts.wire_resistors += 1,
        }
        self.elements.push(Element::Resistor { a, b, ohms, role });
    }

    pub fn add_capacitor(&mut self, a: NodeId, b: NodeId, farads: f64) {
        self.meta.counts.wire_capacitors += 1;
        self.elements.push(Element::Capacitor { a, b, farads });
    }

    pub fn add_vsource(&mut self, pos: NodeId, neg: NodeId, volts: f64, kind: SourceKind) {
        self.meta.counts.sources += 1;
        self.elements.push(Element::VSource { pos, neg, volts, kind });
    }

    pub fn add_neuron(
        &mut self,
        pos_in: NodeId,
        neg_in: NodeId,
        ref_node: NodeId,
        out: NodeId,
        model: NeuronModel,
    ) {
        self.meta.counts.neurons += 1;
        self.elements.push(Element::Neuron { pos_in, neg_in, ref_node, out, model });
    }

    /// Number of independent voltage sources.
    pub fn n_sources(&self) -> usize {
        self.meta.counts.sources
    }

    /// Structural sanity check: every element references existing nodes,
    /// resistances are positive and finite, capacitances non-negative.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.nodes.len();
        for (idx, el) in self.elements.iter().enumerate() {
            let check = |node: NodeId| -> Result<(), String> {
                if node >= n {
                    Err(format!("element {idx} references missing node {node}"))
                } else {
                    Ok(())
                }
            };
            match el {
                Element::Resistor { a, b, ohms, .. } => {
                    check(*a)?;
                    check(*b)?;
                    if !(ohms.is_finite() && *ohms > 0.0) {
                        return Err(format!("element {idx}: resistance {ohms} out of range"));
                    }
                    if a == b {
                        return Err(format!("element {idx}: resistor shorted to itself"));
                    }
                }
                Element::Capacitor { a, b, farads } => {
                    check(*a)?;
                    check(*b)?;
                    if !(farads.is_finite() && *farads >= 0.0) {
                        return Err(format!("element {idx}: capacitance {farads} out of range"));
                    }
                }
                Element::VSource { pos, neg, volts, .. } => {
                    check(*pos)?;
                    check(*neg)?;
                    if !volts.is_finite() {
                        return Err(format!("element {idx}: source voltage {volts} not finite"));
                    }
                }
                Element::Neuron { pos_in, neg_in, ref_node, out, model } => {
                    check(*pos_in)?;
                    check(*neg_in)?;
                    check(*ref_node)?;
                    check(*out)?;
                    if model.input_resistance <= 0.0 || model.output_resistance <= 0.0 {
                        return Err(format!("element {idx}: neuron resistances must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Indices of the input voltage sources, ordered by input index.
    pub fn input_source_order(&self) -> Vec<usize> {
        let mut ordered: Vec<(usize, usize)> = self
            .elements
            .iter()
            .enumerate()
            .filter_map(|(idx, el)| match el {
                Element::VSource { kind: SourceKind::Input(k), .. } => Some((*k, idx)),
                _ => None,
            })
            .collect();
        ordered.sort_unstable();
        ordered.into_iter().map(|(_, idx)| idx).collect()
    }
}

impl Default for CircuitGraph {
    fn default() -> Self {
        Self::new()
    }
}
