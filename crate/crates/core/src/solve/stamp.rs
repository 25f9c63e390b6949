//! Modified nodal analysis: assembling the sparse system from a circuit
//! graph.
//!
//! Unknowns are the voltages of all non-ground nodes followed by one branch
//! current per voltage source; the matrix therefore has dimension
//! `node count + source count`. Linear stamps (resistors, source couplings,
//! neuron front-end and output-stage conductances) are accumulated once into
//! a base value array; the per-iteration work is limited to copying that base
//! and writing the handful of slots that actually change (capacitor
//! companions and neuron linearizations).

use std::collections::HashSet;

use crate::circuit::{CircuitGraph, Element, NodeId, SourceKind, GROUND};
use crate::config::NeuronModel;

use super::SolveError;

/// Capacitor stamp positions: the four matrix slots its companion
/// conductance writes (entries involving ground are absent).
#[derive(Debug, Clone)]
pub(super) struct CapStamp {
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub slot_aa: Option<usize>,
    pub slot_bb: Option<usize>,
    pub slot_ab: Option<usize>,
    pub slot_ba: Option<usize>,
    pub farads: f64,
}

/// Neuron stamp: constant conductances live in the base values; the two
/// transconductance slots and the output-row source term are rewritten at
/// every Newton iteration.
#[derive(Debug, Clone)]
pub(super) struct NeuronStamp {
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub o: usize,
    pub slot_op: Option<usize>,
    pub slot_on: Option<usize>,
    pub g_out: f64,
    pub v_mid: f64,
    pub model: NeuronModel,
}

/// Voltage source bookkeeping: branch row plus terminal rows.
#[derive(Debug, Clone)]
pub(super) struct SourceStamp {
    pub branch_row: usize,
    pub pos: Option<usize>,
    pub neg: Option<usize>,
    pub volts: f64,
    pub kind: SourceKind,
}

/// The stamped sparse system in compressed-sparse-column form.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub(super) n_node_rows: usize,
    pub(super) n_branches: usize,
    pub(super) col_ptr: Vec<usize>,
    pub(super) row_idx: Vec<usize>,
    pub(super) base_vals: Vec<f64>,
    pub(super) rhs_base: Vec<f64>,
    /// Matrix slot of each node row's diagonal (for the gmin leak).
    pub(super) diag_slots: Vec<usize>,
    pub(super) cap_stamps: Vec<CapStamp>,
    pub(super) neuron_stamps: Vec<NeuronStamp>,
    pub(super) sources: Vec<SourceStamp>,
    /// Source index per network input, ordered by input position.
    pub(super) input_sources: Vec<usize>,
    /// Row pre-permutation for the factorization: each branch row trades
    /// places with one of its terminal node rows so every diagonal is
    /// structurally nonzero under diagonal pivoting.
    pub(super) row_pre: Vec<usize>,
    /// Matrix row of each node (`None` for ground).
    pub(super) node_rows: Vec<Option<usize>>,
}

impl MnaSystem {
    /// Matrix dimension: non-ground node count plus source branch count.
    pub fn size(&self) -> usize {
        self.n_node_rows + self.n_branches
    }

    pub fn n_nodes(&self) -> usize {
        self.n_node_rows
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    /// Matrix row of a node, `None` for ground.
    pub fn node_row(&self, node: NodeId) -> Option<usize> {
        self.node_rows.get(node).copied().flatten()
    }

    /// Base matrix entry (linear stamps only; structural slots that are
    /// rewritten per iteration read as their constant part).
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.slot(row, col).map_or(0.0, |s| self.base_vals[s])
    }

    /// Value array index of entry `(row, col)`, if present in the pattern.
    pub(super) fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.col_ptr[col];
        let hi = self.col_ptr[col + 1];
        self.row_idx[lo..hi].binary_search(&row).ok().map(|k| lo + k)
    }

    /// Updates one source's programmed voltage.
    pub fn set_source(&mut self, source_idx: usize, volts: f64) {
        let row = self.sources[source_idx].branch_row;
        self.sources[source_idx].volts = volts;
        self.rhs_base[row] = volts;
    }

    /// Currently programmed source voltage.
    pub fn source_volts(&self, source_idx: usize) -> f64 {
        self.sources[source_idx].volts
    }
}

/// Row index for a node on the matrix, `None` when it is ground.
fn row_of(node_rows: &[Option<usize>], node: NodeId) -> Option<usize> {
    node_rows[node]
}

/// Builds the MNA system for a circuit graph.
///
/// Node ordering is the graph's own node order (deterministic by
/// construction), so stamping the same graph twice yields an identical
/// structure. Fails with [`SolveError::FloatingNode`] if any node has no
/// conductive element at all (capacitors alone cannot fix a DC voltage), and
/// with [`SolveError::DegenerateSource`] for a voltage source that cannot be
/// paired with a terminal node row (both terminals grounded, or every
/// terminal already claimed by another source).
pub fn stamp(graph: &CircuitGraph) -> Result<MnaSystem, SolveError> {
    graph
        .validate()
        .map_err(|message| SolveError::InvalidGraph { message })?;

    let n_nodes_total = graph.nodes.len();
    let n_node_rows = n_nodes_total - 1;
    let node_rows: Vec<Option<usize>> = (0..n_nodes_total)
        .map(|k| if k == GROUND { None } else { Some(k - 1) })
        .collect();

    // A node is floating if nothing conductive touches it.
    let mut conductive = vec![false; n_nodes_total];
    conductive[GROUND] = true;
    for el in &graph.elements {
        match el {
            Element::Resistor { a, b, .. } => {
                conductive[*a] = true;
                conductive[*b] = true;
            }
            Element::Capacitor { .. } => {}
            Element::VSource { pos, neg, .. } => {
                conductive[*pos] = true;
                conductive[*neg] = true;
            }
            Element::Neuron { pos_in, neg_in, ref_node, out, .. } => {
                conductive[*pos_in] = true;
                conductive[*neg_in] = true;
                conductive[*ref_node] = true;
                conductive[*out] = true;
            }
        }
    }
    if let Some(node) = conductive.iter().position(|&c| !c) {
        return Err(SolveError::FloatingNode {
            node: graph.nodes[node].name.clone(),
        });
    }

    let n_branches = graph.n_sources();
    let size = n_node_rows + n_branches;

    // Structural triplets; values are the constant (linear) stamps.
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    // Every node row keeps a structural diagonal for the gmin leak.
    for r in 0..n_node_rows {
        trips.push((r, r, 0.0));
    }

    let stamp_conductance = |trips: &mut Vec<(usize, usize, f64)>,
                                 a: Option<usize>,
                                 b: Option<usize>,
                                 g: f64| {
        if let Some(ra) = a {
            trips.push((ra, ra, g));
        }
        if let Some(rb) = b {
            trips.push((rb, rb, g));
        }
        if let (Some(ra), Some(rb)) = (a, b) {
            trips.push((ra, rb, -g));
            trips.push((rb, ra, -g));
        }
    };

    let mut cap_specs: Vec<(Option<usize>, Option<usize>, f64)> = Vec::new();
    let mut neuron_specs: Vec<(Option<usize>, Option<usize>, usize, NeuronModel)> = Vec::new();
    let mut sources: Vec<SourceStamp> = Vec::new();

    for el in &graph.elements {
        match el {
            Element::Resistor { a, b, ohms, .. } => {
                let ra = row_of(&node_rows, *a);
                let rb = row_of(&node_rows, *b);
                stamp_conductance(&mut trips, ra, rb, 1.0 / ohms);
            }
            Element::Capacitor { a, b, farads } => {
                let ra = row_of(&node_rows, *a);
                let rb = row_of(&node_rows, *b);
                // Structural slots only; the companion conductance is
                // written per transient step.
                if let Some(r) = ra {
                    trips.push((r, r, 0.0));
                }
                if let Some(r) = rb {
                    trips.push((r, r, 0.0));
                }
                if let (Some(r1), Some(r2)) = (ra, rb) {
                    trips.push((r1, r2, 0.0));
                    trips.push((r2, r1, 0.0));
                }
                cap_specs.push((ra, rb, *farads));
            }
            Element::VSource { pos, neg, volts, kind } => {
                let branch_row = n_node_rows + sources.len();
                let rp = row_of(&node_rows, *pos);
                let rn = row_of(&node_rows, *neg);
                if let Some(r) = rp {
                    trips.push((r, branch_row, 1.0));
                    trips.push((branch_row, r, 1.0));
                }
                if let Some(r) = rn {
                    trips.push((r, branch_row, -1.0));
                    trips.push((branch_row, r, -1.0));
                }
                sources.push(SourceStamp {
                    branch_row,
                    pos: rp,
                    neg: rn,
                    volts: *volts,
                    kind: *kind,
                });
            }
            Element::Neuron { pos_in, neg_in, ref_node, out, model } => {
                let rp = row_of(&node_rows, *pos_in);
                let rn = row_of(&node_rows, *neg_in);
                let rr = row_of(&node_rows, *ref_node);
                let ro = row_of(&node_rows, *out).ok_or_else(|| SolveError::InvalidGraph {
                    message: format!(
                        "neuron output tied to ground at node `{}`",
                        graph.nodes[*out].name
                    ),
                })?;
                let g_in = 1.0 / model.input_resistance;
                let g_out = 1.0 / model.output_resistance;
                stamp_conductance(&mut trips, rp, rr, g_in);
                stamp_conductance(&mut trips, rn, rr, g_in);
                trips.push((ro, ro, g_out));
                // Transconductance slots, rewritten each iteration.
                if let Some(r) = rp {
                    trips.push((ro, r, 0.0));
                }
                if let Some(r) = rn {
                    trips.push((ro, r, 0.0));
                }
                neuron_specs.push((rp, rn, ro, model.clone()));
            }
        }
    }

    // Triplets -> CSC with duplicate accumulation.
    trips.sort_unstable_by_key(|&(r, c, _)| (c, r));
    let mut col_ptr = Vec::with_capacity(size + 1);
    let mut row_idx: Vec<usize> = Vec::with_capacity(trips.len());
    let mut base_vals: Vec<f64> = Vec::with_capacity(trips.len());
    col_ptr.push(0);
    let mut next = 0usize;
    for c in 0..size {
        while next < trips.len() && trips[next].1 == c {
            let (r, _, v) = trips[next];
            next += 1;
            if row_idx.len() > col_ptr[c] && *row_idx.last().unwrap() == r {
                *base_vals.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                base_vals.push(v);
            }
        }
        col_ptr.push(row_idx.len());
    }

    let sys_slot = |row: usize, col: usize| -> Option<usize> {
        let lo = col_ptr[col];
        let hi = col_ptr[col + 1];
        row_idx[lo..hi].binary_search(&row).ok().map(|k| lo + k)
    };

    let diag_slots: Vec<usize> = (0..n_node_rows)
        .map(|r| sys_slot(r, r).expect("node diagonal is always stamped"))
        .collect();

    let cap_stamps: Vec<CapStamp> = cap_specs
        .into_iter()
        .map(|(a, b, farads)| CapStamp {
            a,
            b,
            slot_aa: a.and_then(|r| sys_slot(r, r)),
            slot_bb: b.and_then(|r| sys_slot(r, r)),
            slot_ab: a.and_then(|ra| b.and_then(|rb| sys_slot(ra, rb))),
            slot_ba: a.and_then(|ra| b.and_then(|rb| sys_slot(rb, ra))),
            farads,
        })
        .collect();

    let neuron_stamps: Vec<NeuronStamp> = neuron_specs
        .into_iter()
        .map(|(p, n, o, model)| NeuronStamp {
            p,
            n,
            o,
            slot_op: p.and_then(|rp| sys_slot(o, rp)),
            slot_on: n.and_then(|rn| sys_slot(o, rn)),
            g_out: 1.0 / model.output_resistance,
            v_mid: model.v_mid(),
            model,
        })
        .collect();

    // Right-hand side: programmed source voltages at the branch rows.
    let mut rhs_base = vec![0.0; size];
    for s in &sources {
        rhs_base[s.branch_row] = s.volts;
    }

    // Pair each branch row with a terminal node row so the factorization
    // sees a structurally nonzero diagonal everywhere.
    let mut row_pre: Vec<usize> = (0..size).collect();
    let mut claimed: HashSet<usize> = HashSet::new();
    for (m, s) in sources.iter().enumerate() {
        let partner = [s.pos, s.neg]
            .into_iter()
            .flatten()
            .find(|r| !claimed.contains(r));
        let Some(partner) = partner else {
            return Err(SolveError::DegenerateSource {
                message: format!(
                    "source {m} ({:?}) has no free terminal node to pivot on",
                    s.kind
                ),
            });
        };
        claimed.insert(partner);
        row_pre.swap(s.branch_row, partner);
    }

    // Input source lookup, ordered by input index.
    let mut inputs: Vec<(usize, usize)> = sources
        .iter()
        .enumerate()
        .filter_map(|(m, s)| match s.kind {
            SourceKind::Input(k) => Some((k, m)),
            _ => None,
        })
        .collect();
    inputs.sort_unstable();
    for (expect, &(k, _)) in inputs.iter().enumerate() {
        if k != expect {
            return Err(SolveError::InvalidGraph {
                message: format!("input source indices must be 0..n, missing {expect}, got {k}"),
            });
        }
    }
    let input_sources: Vec<usize> = inputs.into_iter().map(|(_, m)| m).collect();

    Ok(MnaSystem {
        n_node_rows,
        n_branches,
        col_ptr,
        row_idx,
        base_vals,
        rhs_base,
        diag_slots,
        cap_stamps,
        neuron_stamps,
        sources,
        input_sources,
        row_pre,
        node_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_sense_crossbar, NodeKind, ResistorRole};
    use crate::config::SimConfig;
    use crate::weights::WeightMatrices;

    fn two_node_graph() -> (CircuitGraph, NodeId, NodeId) {
        let mut g = CircuitGraph::new();
        let a = g.add_node("a".into(), NodeKind::Merge);
        let b = g.add_node("b".into(), NodeKind::Merge);
        (g, a, b)
    }

    #[test]
    fn single_resistor_gives_the_textbook_stamp() {
        let (mut g, a, b) = two_node_graph();
        g.add_resistor(a, b, 50.0, ResistorRole::Wire);
        // Anchor both nodes conductively; the source also exercises the
        // branch bookkeeping.
        g.add_vsource(a, GROUND, 1.0, SourceKind::Bias);
        let sys = stamp(&g).unwrap();
        let (ra, rb) = (sys.node_row(a).unwrap(), sys.node_row(b).unwrap());
        let gval = 1.0 / 50.0;
        assert_eq!(sys.entry(ra, ra), gval);
        assert_eq!(sys.entry(rb, rb), gval);
        assert_eq!(sys.entry(ra, rb), -gval);
        assert_eq!(sys.entry(rb, ra), -gval);
    }

    #[test]
    fn each_source_adds_exactly_one_row_and_column() {
        let (mut g, a, b) = two_node_graph();
        g.add_resistor(a, b, 50.0, ResistorRole::Wire);
        g.add_vsource(a, GROUND, 1.0, SourceKind::Bias);
        let before = stamp(&g).unwrap().size();
        g.add_vsource(b, GROUND, -1.0, SourceKind::MidRail);
        let after = stamp(&g).unwrap().size();
        assert_eq!(after, before + 1);
        // Branch coupling entries are ±1.
        let sys = stamp(&g).unwrap();
        let rb = sys.node_row(b).unwrap();
        let branch = sys.sources[1].branch_row;
        assert_eq!(sys.entry(rb, branch), 1.0);
        assert_eq!(sys.entry(branch, rb), 1.0);
    }

    #[test]
    fn crossbar_stamp_is_structurally_symmetric() {
        let topo = [4, 4];
        let cfg = SimConfig::defaults_for(&topo);
        let weights = WeightMatrices::random(&topo, 5);
        let graph = build_sense_crossbar(&cfg, &weights.layers[0]).unwrap();
        let sys = stamp(&graph).unwrap();
        let n = sys.size();
        for r in 0..n {
            for c in 0..n {
                let here = sys.slot(r, c).is_some();
                let there = sys.slot(c, r).is_some();
                assert_eq!(here, there, "pattern asymmetric at ({r}, {c})");
            }
        }
    }

    #[test]
    fn restamping_yields_identical_structure() {
        let topo = [6, 3];
        let cfg = SimConfig::defaults_for(&topo);
        let weights = WeightMatrices::random(&topo, 2);
        let graph = build_sense_crossbar(&cfg, &weights.layers[0]).unwrap();
        let s1 = stamp(&graph).unwrap();
        let s2 = stamp(&graph).unwrap();
        assert_eq!(s1.col_ptr, s2.col_ptr);
        assert_eq!(s1.row_idx, s2.row_idx);
        assert_eq!(s1.base_vals, s2.base_vals);
        assert_eq!(s1.row_pre, s2.row_pre);
    }

    #[test]
    fn capacitor_only_nodes_are_reported_floating() {
        let (mut g, a, b) = two_node_graph();
        g.add_resistor(a, GROUND, 10.0, ResistorRole::Wire);
        g.add_vsource(a, GROUND, 1.0, SourceKind::Bias);
        g.add_capacitor(a, b, 1e-12);
        let err = stamp(&g).unwrap_err();
        match err {
            SolveError::FloatingNode { node } => assert_eq!(node, "b"),
            other => panic!("expected floating node, got {other:?}"),
        }
    }

    #[test]
    fn grounded_source_pairs_its_terminal_row() {
        let (mut g, a, b) = two_node_graph();
        g.add_resistor(a, b, 50.0, ResistorRole::Wire);
        g.add_resistor(b, GROUND, 50.0, ResistorRole::Wire);
        g.add_vsource(a, GROUND, 1.0, SourceKind::Bias);
        let sys = stamp(&g).unwrap();
        let ra = sys.node_row(a).unwrap();
        let branch = sys.sources[0].branch_row;
        // The permutation swaps the branch row with node a's row.
        assert_eq!(sys.row_pre[ra], branch);
        assert_eq!(sys.row_pre[branch], ra);
    }

    #[test]
    fn source_across_ground_is_degenerate() {
        let mut g = CircuitGraph::new();
        let a = g.add_node("a".into(), NodeKind::Merge);
        g.add_resistor(a, GROUND, 10.0, ResistorRole::Wire);
        g.add_vsource(GROUND, GROUND, 0.0, SourceKind::MidRail);
        match stamp(&g).unwrap_err() {
            SolveError::DegenerateSource { .. } => {}
            other => panic!("expected degenerate source, got {other:?}"),
        }
    }

    #[test]
    fn input_sources_are_ordered_by_input_index() {
        let mut g = CircuitGraph::new();
        let a = g.add_node("in0".into(), NodeKind::Input);
        let b = g.add_node("in1".into(), NodeKind::Input);
        g.add_resistor(a, GROUND, 10.0, ResistorRole::Wire);
        g.add_resistor(b, GROUND, 10.0, ResistorRole::Wire);
        // Register them out of order.
        g.add_vsource(b, GROUND, 0.0, SourceKind::Input(1));
        g.add_vsource(a, GROUND, 0.0, SourceKind::Input(0));
        let sys = stamp(&g).unwrap();
        assert_eq!(sys.input_sources, vec![1, 0]);
    }
}
