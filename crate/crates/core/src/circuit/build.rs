//! Construction of crossbar networks as electrical graphs.
//!
//! Layout of one stage (`L_in` inputs → `L_out` outputs), per partition:
//!
//! ```text
//! row r  ──[seg]──t(r,c0)──[seg]──t(r,c1)──...          horizontal wire
//!                  │  │
//!             g_pos│  │g_neg                             one bitcell
//!                  ▼  ▼
//!               p(r,c)  n(r,c)                           vertical wires
//!                  │  │
//!                [seg][seg]  ... down the partition's rows, then exit
//!                  ▼  ▼
//!               mp(c)  mn(c)   merge nodes shared by all partitions
//!                  └──► neuron c (or 0 V sense sources)
//! ```
//!
//! Row 0 of every stage is the bias row, driven by the vdd rail. Horizontal
//! segments are one bitcell length, vertical segments one bitcell width.
//! With parasitics disabled no tap nodes exist: devices connect the row
//! driver straight to the merge nodes, which makes partitioning electrically
//! invisible — the property the partition-invariance suite pins down.

use crate::config::{CapModel, SimConfig};
use crate::parasitics::{self, ParasiticPair};
use crate::partition::{PartitionGrid, PartitionPlan};
use crate::weights::{LayerWeights, WeightMatrices};

use super::{
    map_weight, BuildError, CircuitGraph, ElementCounts, NodeId, NodeKind, ResistorRole,
    SourceKind, StageMeta, GROUND,
};

/// How a stage's column merge nodes are terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnTermination {
    /// Behavioral neurons producing the stage's output voltages.
    Neuron,
    /// 0 V sources to ground per column line (current-mode readout used by
    /// the matrix-vector oracle tests).
    VirtualGround,
}

/// Build the full network: every stage of `weights` under `plan`, neuron
/// terminated, with input voltage sources for the first layer.
pub fn build_network(
    cfg: &SimConfig,
    weights: &WeightMatrices,
    plan: &PartitionPlan,
) -> Result<CircuitGraph, BuildError> {
    if plan.grids.len() != weights.layers.len() {
        return Err(BuildError::DimensionMismatch {
            context: format!(
                "plan covers {} stages, weights define {}",
                plan.grids.len(),
                weights.layers.len()
            ),
        });
    }
    let mut graph = CircuitGraph::new();
    let rails = add_rails(&mut graph, cfg);
    let n_inputs = weights.layers[0].inputs();
    let mut row_drivers = Vec::with_capacity(n_inputs + 1);
    row_drivers.push(rails.vbias);
    for k in 0..n_inputs {
        let node = graph.add_node(format!("in{k}"), NodeKind::Input);
        graph.add_vsource(node, GROUND, 0.0, SourceKind::Input(k));
        graph.meta.input_nodes.push(node);
        row_drivers.push(node);
    }

    let last = weights.layers.len() - 1;
    for (stage, layer) in weights.layers.iter().enumerate() {
        let out_prefix = if stage == last {
            "out".to_string()
        } else {
            format!("h{}_", stage + 1)
        };
        let meta = append_stage(
            &mut graph,
            cfg,
            stage,
            layer,
            &plan.grids[stage],
            row_drivers.clone(),
            ColumnTermination::Neuron,
            &out_prefix,
            rails,
        )?;
        row_drivers = Vec::with_capacity(meta.neuron_out.len() + 1);
        row_drivers.push(rails.vbias);
        row_drivers.extend_from_slice(&meta.neuron_out);
        if stage == last {
            graph.meta.output_nodes = meta.neuron_out.clone();
        }
        graph.meta.stages.push(meta);
    }
    graph.meta.topology = weights.topology();
    debug_assert_eq!(graph.validate(), Ok(()));
    Ok(graph)
}

/// Build a standalone single-stage graph with its own input sources.
pub fn build_layer(
    cfg: &SimConfig,
    layer: &LayerWeights,
    grid: &PartitionGrid,
    termination: ColumnTermination,
) -> Result<CircuitGraph, BuildError> {
    let mut graph = CircuitGraph::new();
    let rails = add_rails(&mut graph, cfg);
    let mut row_drivers = Vec::with_capacity(layer.inputs() + 1);
    row_drivers.push(rails.vbias);
    for k in 0..layer.inputs() {
        let node = graph.add_node(format!("in{k}"), NodeKind::Input);
        graph.add_vsource(node, GROUND, 0.0, SourceKind::Input(k));
        graph.meta.input_nodes.push(node);
        row_drivers.push(node);
    }
    let meta = append_stage(
        &mut graph, cfg, 0, layer, grid, row_drivers, termination, "out", rails,
    )?;
    graph.meta.output_nodes = meta.neuron_out.clone();
    graph.meta.stages.push(meta);
    graph.meta.topology = vec![layer.inputs(), layer.outputs()];
    debug_assert_eq!(graph.validate(), Ok(()));
    Ok(graph)
}

/// Single unpartitioned crossbar with virtual-ground column sensing: the
/// configuration whose differential column currents equal the ideal
/// matrix-vector product when parasitics are off.
pub fn build_sense_crossbar(
    cfg: &SimConfig,
    layer: &LayerWeights,
) -> Result<CircuitGraph, BuildError> {
    let grid = PartitionGrid {
        horizontal: 1,
        vertical: 1,
        row_counts: vec![layer.inputs() + 1],
        col_counts: vec![layer.outputs()],
    };
    build_layer(cfg, layer, &grid, ColumnTermination::VirtualGround)
}

#[derive(Clone, Copy)]
struct Rails {
    vbias: NodeId,
    /// Reference node for neuron front-ends: ground when the neuron midpoint
    /// is 0 V, otherwise a dedicated rail.
    vref: NodeId,
}

fn add_rails(graph: &mut CircuitGraph, cfg: &SimConfig) -> Rails {
    let vbias = graph.add_node("vbias".into(), NodeKind::Rail);
    graph.add_vsource(vbias, GROUND, cfg.vdd, SourceKind::Bias);
    let v_mid = cfg.neuron.v_mid();
    let vref = if v_mid == 0.0 {
        GROUND
    } else {
        let node = graph.add_node("vmid".into(), NodeKind::Rail);
        graph.add_vsource(node, GROUND, v_mid, SourceKind::MidRail);
        node
    };
    Rails { vbias, vref }
}

/// Append one crossbar stage to the graph. `row_drivers[0]` must be the bias
/// rail, `row_drivers[r]` the driver of input `r − 1`. Output nodes are named
/// `{out_prefix}{col}`.
#[allow(clippy::too_many_arguments)]
fn append_stage(
    graph: &mut CircuitGraph,
    cfg: &SimConfig,
    stage: usize,
    layer: &LayerWeights,
    grid: &PartitionGrid,
    row_drivers: Vec<NodeId>,
    termination: ColumnTermination,
    out_prefix: &str,
    rails: Rails,
) -> Result<StageMeta, BuildError> {
    let rows = layer.inputs() + 1;
    let cols = layer.outputs();
    if grid.rows() != rows || grid.cols() != cols {
        return Err(BuildError::DimensionMismatch {
            context: format!(
                "stage {}: grid is {}x{} but weights need {rows}x{cols}",
                stage + 1,
                grid.rows(),
                grid.cols()
            ),
        });
    }
    if row_drivers.len() != rows {
        return Err(BuildError::DimensionMismatch {
            context: format!(
                "stage {}: {} row drivers for {rows} rows",
                stage + 1,
                row_drivers.len()
            ),
        });
    }
    for (out, row) in layer.weights.iter().enumerate() {
        for (inp, w) in row.iter().enumerate() {
            if !w.is_finite() {
                return Err(BuildError::NonFiniteWeight { stage, output: out, input: inp });
            }
        }
        if !layer.bias[out].is_finite() {
            return Err(BuildError::NonFiniteWeight { stage, output: out, input: layer.inputs() });
        }
    }

    // Largest |weight| of the stage, only consulted by the linear scheme.
    let w_max = layer
        .weights
        .iter()
        .flatten()
        .chain(layer.bias.iter())
        .fold(0.0f64, |m, w| m.max(w.abs()));
    // Weight seen by row r, column c: bias for the bias row, else w[c][r-1].
    let weight_at = |r: usize, c: usize| -> f64 {
        if r == 0 {
            layer.bias[c]
        } else {
            layer.weights[c][r - 1]
        }
    };

    let seg = if cfg.parasitics {
        let row_seg = parasitics::segment_parasitics(cfg.bitcell.length, &cfg.interconnect)?;
        let col_seg = parasitics::segment_parasitics(cfg.bitcell.width, &cfg.interconnect)?;
        Some((row_seg, col_seg))
    } else {
        None
    };

    let element_start = graph.elements.len();
    let sid = stage + 1; // 1-based in node names, matching subcircuit instances

    let mut pos_merge = Vec::with_capacity(cols);
    let mut neg_merge = Vec::with_capacity(cols);
    for c in 0..cols {
        pos_merge.push(graph.add_node(format!("x{sid}.mp{c}"), NodeKind::Merge));
        neg_merge.push(graph.add_node(format!("x{sid}.mn{c}"), NodeKind::Merge));
    }

    for (ih, row_range) in grid.row_ranges().into_iter().enumerate() {
        for (iv, col_range) in grid.col_ranges().into_iter().enumerate() {
            match seg {
                None => {
                    // Ideal wires: devices connect row drivers straight to
                    // the merge nodes; partition boundaries vanish.
                    for r in row_range.clone() {
                        for c in col_range.clone() {
                            add_bitcell(
                                graph, cfg, weight_at(r, c), w_max,
                                row_drivers[r], pos_merge[c], neg_merge[c],
                                (stage, r, c),
                            );
                        }
                    }
                }
                Some((row_seg, col_seg)) => {
                    let nr = row_range.len();
                    let nc = col_range.len();
                    // Tap nodes per bitcell: one on the row line, one on each
                    // column line.
                    let mut t = vec![vec![0 as NodeId; nc]; nr];
                    let mut p = vec![vec![0 as NodeId; nc]; nr];
                    let mut n = vec![vec![0 as NodeId; nc]; nr];
                    for (lr, r) in row_range.clone().enumerate() {
                        for (lc, c) in col_range.clone().enumerate() {
                            let base = format!("x{sid}.b{ih}_{iv}.");
                            t[lr][lc] = graph.add_node(format!("{base}t{r}_{c}"), NodeKind::RowTap);
                            p[lr][lc] = graph.add_node(format!("{base}p{r}_{c}"), NodeKind::ColTap);
                            n[lr][lc] = graph.add_node(format!("{base}n{r}_{c}"), NodeKind::ColTap);
                        }
                    }
                    // Horizontal wire chains, one per row.
                    for (lr, r) in row_range.clone().enumerate() {
                        let mut prev = row_drivers[r];
                        for lc in 0..nc {
                            add_segment(graph, prev, t[lr][lc], row_seg, cfg.cap_model);
                            prev = t[lr][lc];
                        }
                    }
                    // Bitcells hang off the row taps.
                    for (lr, r) in row_range.clone().enumerate() {
                        for (lc, c) in col_range.clone().enumerate() {
                            add_bitcell(
                                graph, cfg, weight_at(r, c), w_max,
                                t[lr][lc], p[lr][lc], n[lr][lc],
                                (stage, r, c),
                            );
                        }
                    }
                    // Vertical wire chains, one per column line, exiting to
                    // the merge nodes after the partition's last row.
                    for (lc, c) in col_range.clone().enumerate() {
                        for lr in 0..nr {
                            let (pn, nn) = if lr + 1 < nr {
                                (p[lr + 1][lc], n[lr + 1][lc])
                            } else {
                                (pos_merge[c], neg_merge[c])
                            };
                            add_segment(graph, p[lr][lc], pn, col_seg, cfg.cap_model);
                            add_segment(graph, n[lr][lc], nn, col_seg, cfg.cap_model);
                        }
                    }
                }
            }
        }
    }

    let mut neuron_out = Vec::new();
    match termination {
        ColumnTermination::Neuron => {
            for c in 0..cols {
                let out = graph.add_node(format!("{out_prefix}{c}"), NodeKind::NeuronOut);
                graph.add_neuron(pos_merge[c], neg_merge[c], rails.vref, out, cfg.neuron.clone());
                neuron_out.push(out);
            }
        }
        ColumnTermination::VirtualGround => {
            for c in 0..cols {
                graph.add_vsource(pos_merge[c], GROUND, 0.0, SourceKind::Sense { stage, col: c, positive: true });
                graph.add_vsource(neg_merge[c], GROUND, 0.0, SourceKind::Sense { stage, col: c, positive: false });
            }
        }
    }

    Ok(StageMeta {
        row_nodes: row_drivers,
        pos_merge,
        neg_merge,
        neuron_out,
        element_range: element_start..graph.elements.len(),
    })
}

/// One differential bitcell: two device resistors from the row tap to the
/// column lines.
#[allow(clippy::too_many_arguments)]
fn add_bitcell(
    graph: &mut CircuitGraph,
    cfg: &SimConfig,
    w: f64,
    w_max: f64,
    row: NodeId,
    pos: NodeId,
    neg: NodeId,
    place: (usize, usize, usize),
) {
    let r_access = cfg.bitcell.access_resistance;
    let pair = map_weight(w, w_max, &cfg.device, r_access, cfg.weight_scheme);
    for (g, col, positive) in [(pair.g_pos, pos, true), (pair.g_neg, neg, false)] {
        let ohms = 1.0 / g;
        let role = ResistorRole::Device {
            r_memristor: (ohms - r_access).max(0.0),
            r_access,
            stage: place.0 as u32,
            row: place.1 as u32,
            col: place.2 as u32,
            positive,
        };
        graph.add_resistor(row, col, ohms, role);
    }
}

/// One wire segment from `a` to `b`: series resistance plus shunt
/// capacitance, lumped at the far node (L model) or split across both ends
/// (π model).
fn add_segment(graph: &mut CircuitGraph, a: NodeId, b: NodeId, seg: ParasiticPair, model: CapModel) {
    graph.add_resistor(a, b, seg.resistance, ResistorRole::Wire);
    match model {
        CapModel::L => graph.add_capacitor(b, GROUND, seg.capacitance),
        CapModel::Pi => {
            graph.add_capacitor(a, GROUND, 0.5 * seg.capacitance);
            graph.add_capacitor(b, GROUND, 0.5 * seg.capacitance);
        }
    }
}

/// Element tallies a network build must produce for a given config: a pure
/// function of topology, termination, and the parasitics/cap-model switches.
/// Partitioning changes wire lengths and connectivity but not counts.
pub fn expected_counts(cfg: &SimConfig, topology: &[usize]) -> ElementCounts {
    let mut counts = ElementCounts::default();
    counts.sources = 1 + topology[0]; // bias rail + inputs
    if cfg.neuron.v_mid() != 0.0 {
        counts.sources += 1;
    }
    for pair in topology.windows(2) {
        let cells = (pair[0] + 1) * pair[1];
        counts.devices += 2 * cells;
        if cfg.parasitics {
            counts.wire_resistors += 3 * cells;
            counts.wire_capacitors += match cfg.cap_model {
                CapModel::L => 3 * cells,
                CapModel::Pi => 6 * cells,
            };
        }
        counts.neurons += pair[1];
    }
    counts
}
