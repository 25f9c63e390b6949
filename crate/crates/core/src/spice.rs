//! SPICE netlist export and the matching parser used for round-trip
//! verification.
//!
//! The exporter emits a hierarchical netlist: one `.subckt layer{n}` per
//! crossbar stage (instantiated as `x{n}`, so flattened hierarchical node
//! names reproduce the circuit graph's own `x{n}.…` names byte for byte),
//! R/C/V cards for the passive elements and sources, and neurons as
//! instances of a behavioral `neuron` subcircuit whose definition lives in
//! an external include file `neuron.sp`.
//!
//! Card grammar (one card per line, whitespace separated, `*` comments,
//! case-insensitive card letters and directives):
//!
//! ```text
//! r<name> <a> <b> <ohms>
//! c<name> <a> <b> <farads>
//! v<name> <pos> <neg> dc <volts>
//! x<name> <net>… <subckt-name>
//! .subckt <name> <port>…   /  .ends
//! .include <file>          /  .end
//! ```
//!
//! Values are written in Rust's shortest round-tripping scientific notation,
//! so a parse of the exported file recovers every value bit-exactly; SPICE
//! unit suffixes are not used. Node `0` is global ground and never appears
//! in a port list.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::circuit::{CircuitGraph, Element};

/// Reserved subcircuit name for the behavioral neuron.
const NEURON_SUBCKT: &str = "neuron";
/// Include file that carries the neuron subcircuit definition.
pub const NEURON_INCLUDE: &str = "neuron.sp";

#[derive(Debug, Error)]
pub enum SpiceError {
    #[error("cannot write `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("netlist line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A flattened netlist element with hierarchical node names expanded.
#[derive(Debug, Clone, PartialEq)]
pub enum SpiceElement {
    Resistor { a: String, b: String, ohms: f64 },
    Capacitor { a: String, b: String, farads: f64 },
    Source { pos: String, neg: String, volts: f64 },
    Neuron { pos: String, neg: String, reference: String, out: String },
}

/// Result of parsing a netlist: the flattened elements and every net they
/// reference (including ground).
#[derive(Debug, Clone, Default)]
pub struct ParsedNetlist {
    pub elements: Vec<SpiceElement>,
    pub nodes: BTreeSet<String>,
    pub includes: Vec<String>,
    pub subcircuits: usize,
}

/// Renders the netlist text for a circuit graph.
pub fn netlist_text(graph: &CircuitGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "* crossbar network netlist");
    let _ = writeln!(
        out,
        "* {} nodes, {} elements, topology {:?}",
        graph.nodes.len(),
        graph.elements.len(),
        graph.meta.topology
    );
    if graph.elements.iter().any(|e| matches!(e, Element::Neuron { .. })) {
        let _ = writeln!(out, ".include {NEURON_INCLUDE}");
    }
    out.push('\n');

    // Stage elements become one subcircuit each; everything else (rails,
    // input sources) stays at the top level.
    let mut in_stage = vec![usize::MAX; graph.elements.len()];
    for (s, meta) in graph.meta.stages.iter().enumerate() {
        for k in meta.element_range.clone() {
            in_stage[k] = s;
        }
    }

    let mut instances = String::new();
    for (s, meta) in graph.meta.stages.iter().enumerate() {
        let sid = s + 1;
        let prefix = format!("x{sid}.");
        // A node inside the stage keeps its suffix as the local name; any
        // other node becomes a port, listed in first-appearance order.
        let mut ports: Vec<String> = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let local = |name: &str, ports: &mut Vec<String>, seen: &mut BTreeSet<String>| -> String {
            if let Some(suffix) = name.strip_prefix(&prefix) {
                suffix.to_string()
            } else if name == "0" {
                "0".to_string()
            } else {
                if seen.insert(name.to_string()) {
                    ports.push(name.to_string());
                }
                name.to_string()
            }
        };

        let mut cards = String::new();
        let mut counters = CardCounters::default();
        for k in meta.element_range.clone() {
            let card = element_card(
                &graph.elements[k],
                graph,
                &mut counters,
                &mut |name| local(name, &mut ports, &mut seen),
            );
            let _ = writeln!(cards, "{card}");
        }

        let _ = writeln!(out, ".subckt layer{sid} {}", ports.join(" "));
        out.push_str(&cards);
        let _ = writeln!(out, ".ends layer{sid}");
        out.push('\n');
        let _ = writeln!(instances, "x{sid} {} layer{sid}", ports.join(" "));
    }

    // Top-level cards: instances first, then the loose elements.
    out.push_str(&instances);
    let mut counters = CardCounters::default();
    for (k, el) in graph.elements.iter().enumerate() {
        if in_stage[k] == usize::MAX {
            let card = element_card(el, graph, &mut counters, &mut |name| name.to_string());
            let _ = writeln!(out, "{card}");
        }
    }
    out.push_str(".end\n");
    out
}

/// Text of the behavioral neuron include file. The front-end and output
/// resistances follow the graph's neuron model; the nonlinear transfer
/// itself is behavioral, so external engines substitute their own
/// implementation between the marked lines.
pub fn neuron_include_text(graph: &CircuitGraph) -> String {
    let model = graph.elements.iter().find_map(|el| match el {
        Element::Neuron { model, .. } => Some(model),
        _ => None,
    });
    let (r_in, r_out) = model
        .map(|m| (m.input_resistance, m.output_resistance))
        .unwrap_or((1e6, 100.0));
    let mut out = String::new();
    let _ = writeln!(out, "* behavioral neuron: differential front-end, saturating");
    let _ = writeln!(out, "* transfer, resistive output stage");
    let _ = writeln!(out, ".subckt {NEURON_SUBCKT} inp inn ref out");
    let _ = writeln!(out, "rin_p inp ref {}", fmt_value(r_in));
    let _ = writeln!(out, "rin_n inn ref {}", fmt_value(r_out.max(r_in)));
    let _ = writeln!(out, "* transfer function is engine-specific; replace the");
    let _ = writeln!(out, "* output stage below with a behavioral source if needed");
    let _ = writeln!(out, "rout out ref {}", fmt_value(r_out));
    let _ = writeln!(out, ".ends {NEURON_SUBCKT}");
    out
}

/// Writes the netlist to `path` and, when the graph contains neurons, the
/// behavioral `neuron.sp` include next to it.
pub fn export_spice(graph: &CircuitGraph, path: &Path) -> Result<(), SpiceError> {
    let io_err = |p: &Path, source: std::io::Error| SpiceError::Io {
        path: p.display().to_string(),
        source,
    };
    std::fs::write(path, netlist_text(graph)).map_err(|e| io_err(path, e))?;
    if graph.elements.iter().any(|e| matches!(e, Element::Neuron { .. })) {
        let include = path.with_file_name(NEURON_INCLUDE);
        std::fs::write(&include, neuron_include_text(graph)).map_err(|e| io_err(&include, e))?;
    }
    Ok(())
}

#[derive(Default)]
struct CardCounters {
    r: usize,
    c: usize,
    v: usize,
    x: usize,
}

/// Renders one element as a card, translating node ids through `net`.
fn element_card(
    el: &Element,
    graph: &CircuitGraph,
    counters: &mut CardCounters,
    net: &mut dyn FnMut(&str) -> String,
) -> String {
    let name = |id: usize| -> &str { &graph.nodes[id].name };
    match el {
        Element::Resistor { a, b, ohms, .. } => {
            let k = counters.r;
            counters.r += 1;
            format!("r{k} {} {} {}", net(name(*a)), net(name(*b)), fmt_value(*ohms))
        }
        Element::Capacitor { a, b, farads } => {
            let k = counters.c;
            counters.c += 1;
            format!("c{k} {} {} {}", net(name(*a)), net(name(*b)), fmt_value(*farads))
        }
        Element::VSource { pos, neg, volts, .. } => {
            let k = counters.v;
            counters.v += 1;
            format!("v{k} {} {} dc {}", net(name(*pos)), net(name(*neg)), fmt_value(*volts))
        }
        Element::Neuron { pos_in, neg_in, ref_node, out, .. } => {
            let k = counters.x;
            counters.x += 1;
            format!(
                "xn{k} {} {} {} {} {NEURON_SUBCKT}",
                net(name(*pos_in)),
                net(name(*neg_in)),
                net(name(*ref_node)),
                net(name(*out))
            )
        }
    }
}

/// Shortest scientific representation that parses back bit-exactly.
fn fmt_value(v: f64) -> String {
    format!("{v:e}")
}

struct SubcktDef {
    ports: Vec<String>,
    cards: Vec<(usize, Vec<String>)>,
}

/// Parses a netlist in the exported grammar and flattens its hierarchy.
pub fn parse_netlist(text: &str) -> Result<ParsedNetlist, SpiceError> {
    let mut subckts: HashMap<String, SubcktDef> = HashMap::new();
    let mut top: Vec<(usize, Vec<String>)> = Vec::new();
    let mut includes = Vec::new();
    let mut current: Option<(String, SubcktDef)> = None;

    let err = |line: usize, message: String| SpiceError::Parse { line, message };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_string()).collect();
        let head = tokens[0].to_ascii_lowercase();
        match head.as_str() {
            ".include" => {
                let file = tokens
                    .get(1)
                    .ok_or_else(|| err(line_no, ".include needs a file name".into()))?;
                includes.push(file.clone());
            }
            ".subckt" => {
                if current.is_some() {
                    return Err(err(line_no, "nested .subckt is not supported".into()));
                }
                if tokens.len() < 2 {
                    return Err(err(line_no, ".subckt needs a name".into()));
                }
                let name = tokens[1].to_ascii_lowercase();
                let ports = tokens[2..].to_vec();
                current = Some((name, SubcktDef { ports, cards: Vec::new() }));
            }
            ".ends" => {
                let (name, def) = current
                    .take()
                    .ok_or_else(|| err(line_no, ".ends without matching .subckt".into()))?;
                if subckts.insert(name.clone(), def).is_some() {
                    return Err(err(line_no, format!("subcircuit `{name}` defined twice")));
                }
            }
            ".end" => break,
            _ if head.starts_with('.') => {
                return Err(err(line_no, format!("unknown directive `{}`", tokens[0])));
            }
            _ => match &mut current {
                Some((_, def)) => def.cards.push((line_no, tokens)),
                None => top.push((line_no, tokens)),
            },
        }
    }
    if let Some((name, _)) = current {
        return Err(err(text.lines().count(), format!(".subckt {name} never closed")));
    }

    let mut parsed = ParsedNetlist {
        includes,
        subcircuits: subckts.len(),
        ..Default::default()
    };
    let empty = HashMap::new();
    expand_cards(&top, "", &empty, &subckts, &mut parsed)?;
    for el in &parsed.elements {
        let nets: &[&String] = match el {
            SpiceElement::Resistor { a, b, .. } | SpiceElement::Capacitor { a, b, .. } => &[a, b],
            SpiceElement::Source { pos, neg, .. } => &[pos, neg],
            SpiceElement::Neuron { pos, neg, reference, out } => &[pos, neg, reference, out],
        };
        for n in nets {
            parsed.nodes.insert((*n).clone());
        }
    }
    Ok(parsed)
}

/// Recursively expands a card list into flat elements. `prefix` is the
/// hierarchical path (empty at top level); `port_map` renames subcircuit
/// formals to the instance's actual nets.
fn expand_cards(
    cards: &[(usize, Vec<String>)],
    prefix: &str,
    port_map: &HashMap<String, String>,
    subckts: &HashMap<String, SubcktDef>,
    out: &mut ParsedNetlist,
) -> Result<(), SpiceError> {
    let err = |line: usize, message: String| SpiceError::Parse { line, message };
    let resolve = |net: &str| -> String {
        if net == "0" {
            "0".to_string()
        } else if let Some(actual) = port_map.get(net) {
            actual.clone()
        } else {
            format!("{prefix}{net}")
        }
    };
    let value = |line: usize, tok: &str| -> Result<f64, SpiceError> {
        tok.parse::<f64>()
            .map_err(|_| err(line, format!("bad numeric value `{tok}`")))
    };

    for (line, tokens) in cards {
        let line = *line;
        let kind = tokens[0].chars().next().unwrap().to_ascii_lowercase();
        match kind {
            'r' | 'c' => {
                if tokens.len() != 4 {
                    return Err(err(line, format!("{} card needs 4 fields", tokens[0])));
                }
                let (a, b) = (resolve(&tokens[1]), resolve(&tokens[2]));
                let v = value(line, &tokens[3])?;
                out.elements.push(if kind == 'r' {
                    SpiceElement::Resistor { a, b, ohms: v }
                } else {
                    SpiceElement::Capacitor { a, b, farads: v }
                });
            }
            'v' => {
                if tokens.len() != 5 || !tokens[3].eq_ignore_ascii_case("dc") {
                    return Err(err(line, "v card must read `v<name> pos neg dc <volts>`".into()));
                }
                out.elements.push(SpiceElement::Source {
                    pos: resolve(&tokens[1]),
                    neg: resolve(&tokens[2]),
                    volts: value(line, &tokens[4])?,
                });
            }
            'x' => {
                if tokens.len() < 2 {
                    return Err(err(line, "x card needs nets and a subcircuit name".into()));
                }
                let subname = tokens.last().unwrap().to_ascii_lowercase();
                let nets: Vec<String> =
                    tokens[1..tokens.len() - 1].iter().map(|t| resolve(t)).collect();
                if subname == NEURON_SUBCKT {
                    if nets.len() != 4 {
                        return Err(err(line, format!("neuron instance needs 4 nets, got {}", nets.len())));
                    }
                    out.elements.push(SpiceElement::Neuron {
                        pos: nets[0].clone(),
                        neg: nets[1].clone(),
                        reference: nets[2].clone(),
                        out: nets[3].clone(),
                    });
                    continue;
                }
                let def = subckts
                    .get(&subname)
                    .ok_or_else(|| err(line, format!("unknown subcircuit `{subname}`")))?;
                if def.ports.len() != nets.len() {
                    return Err(err(
                        line,
                        format!(
                            "instance passes {} nets but `{subname}` declares {} ports",
                            nets.len(),
                            def.ports.len()
                        ),
                    ));
                }
                let inner_map: HashMap<String, String> =
                    def.ports.iter().cloned().zip(nets).collect();
                let inner_prefix = format!("{prefix}{}.", tokens[0].to_ascii_lowercase());
                expand_cards(&def.cards, &inner_prefix, &inner_map, subckts, out)?;
            }
            other => {
                return Err(err(line, format!("unsupported card type `{other}`")));
            }
        }
    }
    Ok(())
}

/// Comparable fingerprint of one element: card kind, ordered nets, and the
/// value's exact bits (neurons are connectivity-only).
fn element_key(el: &SpiceElement) -> (u8, Vec<String>, u64) {
    match el {
        SpiceElement::Resistor { a, b, ohms } => {
            (0, vec![a.clone(), b.clone()], ohms.to_bits())
        }
        SpiceElement::Capacitor { a, b, farads } => {
            (1, vec![a.clone(), b.clone()], farads.to_bits())
        }
        SpiceElement::Source { pos, neg, volts } => {
            (2, vec![pos.clone(), neg.clone()], volts.to_bits())
        }
        SpiceElement::Neuron { pos, neg, reference, out } => (
            3,
            vec![pos.clone(), neg.clone(), reference.clone(), out.clone()],
            0,
        ),
    }
}

/// Element fingerprints of a circuit graph, in the parser's terms.
fn graph_keys(graph: &CircuitGraph) -> Vec<(u8, Vec<String>, u64)> {
    let name = |id: usize| graph.nodes[id].name.clone();
    graph
        .elements
        .iter()
        .map(|el| match el {
            Element::Resistor { a, b, ohms, .. } => (0, vec![name(*a), name(*b)], ohms.to_bits()),
            Element::Capacitor { a, b, farads } => (1, vec![name(*a), name(*b)], farads.to_bits()),
            Element::VSource { pos, neg, volts, .. } => {
                (2, vec![name(*pos), name(*neg)], volts.to_bits())
            }
            Element::Neuron { pos_in, neg_in, ref_node, out, .. } => (
                3,
                vec![name(*pos_in), name(*neg_in), name(*ref_node), name(*out)],
                0,
            ),
        })
        .collect()
}

/// Checks that a parsed netlist reproduces the graph's node set and element
/// multiset (values bit-exact, neurons by connectivity).
pub fn verify_round_trip(graph: &CircuitGraph, parsed: &ParsedNetlist) -> Result<(), String> {
    let graph_nodes: BTreeSet<String> = graph.nodes.iter().map(|n| n.name.clone()).collect();
    if graph_nodes != parsed.nodes {
        let missing: Vec<_> = graph_nodes.difference(&parsed.nodes).take(3).collect();
        let extra: Vec<_> = parsed.nodes.difference(&graph_nodes).take(3).collect();
        return Err(format!(
            "node sets differ: {} in graph vs {} parsed (missing {missing:?}, extra {extra:?})",
            graph_nodes.len(),
            parsed.nodes.len()
        ));
    }
    let mut want = graph_keys(graph);
    let mut got: Vec<_> = parsed.elements.iter().map(element_key).collect();
    if want.len() != got.len() {
        return Err(format!(
            "element counts differ: {} in graph vs {} parsed",
            want.len(),
            got.len()
        ));
    }
    want.sort();
    got.sort();
    if let Some(k) = want.iter().zip(&got).position(|(a, b)| a != b) {
        return Err(format!(
            "element multisets diverge at sorted slot {k}: graph {:?} vs parsed {:?}",
            want[k], got[k]
        ));
    }
    Ok(())
}
