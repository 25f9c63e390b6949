//! Wall-clock scaling harness: times evaluation of square synthetic
//! crossbars across array sizes, batch sizes, and parasitics on/off, to
//! chart how batching and parasitic extraction change per-sample cost.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{KvMap, SimConfig, Value};
use crate::pipeline::dataset::Dataset;
use crate::pipeline::{evaluate, EvalMode, PipelineError};
use crate::solve::CircuitSolver;
use crate::weights::WeightMatrices;

/// One measured combination.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    /// Side length of the square synthetic crossbar (inputs = outputs).
    pub size: usize,
    pub batch: usize,
    pub parasitics: bool,
    /// Samples evaluated per repetition.
    pub samples: usize,
    /// Repetitions averaged.
    pub reps: usize,
    pub mean_seconds_per_sample: f64,
}

/// Synthetic dataset for an `n`-input network: uniform features, labels
/// cycling through the classes. Seeded, so every run times the same work.
fn synthetic_dataset(n: usize, samples: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7431_u64.wrapping_mul(n as u64 + 1));
    let unit = Uniform::new_inclusive(0.0, 1.0);
    let features = (0..samples)
        .map(|_| (0..n).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let labels = (0..samples).map(|i| i % n).collect();
    Dataset::new(features, labels, n).expect("synthetic data is valid by construction")
}

/// Times DC evaluation of square `size x size` crossbars for every
/// combination of size, batch size, and parasitics flag. `base` supplies
/// all other configuration. Runs single-worker so the numbers measure
/// solver cost, not scheduling.
pub fn run_timing(
    base: &KvMap,
    sizes: &[usize],
    batches: &[usize],
    samples: usize,
    reps: usize,
) -> Result<Vec<TimingRow>, PipelineError> {
    assert!(samples >= 1, "need at least one sample to time");
    assert!(reps >= 1, "need at least one repetition");
    let mut rows = Vec::with_capacity(sizes.len() * batches.len() * 2);
    for &size in sizes {
        for &parasitics in &[false, true] {
            for &batch in batches {
                let mut map = base.clone();
                map.set("sim.parasitics", Value::Bool(parasitics));
                map.set("sim.batch_size", Value::Int(batch as i64));
                let cfg = SimConfig::resolve_with_topology(&map, &[size, size])?;
                let weights = WeightMatrices::random(&[size, size], cfg.seed);
                let dataset = synthetic_dataset(size, samples, cfg.seed);

                log_structure(&cfg, &weights, size, parasitics);

                let mut total = 0.0;
                for _ in 0..reps {
                    let started = std::time::Instant::now();
                    evaluate(&cfg, &weights, &dataset, samples, EvalMode::Dc, 1)?;
                    total += started.elapsed().as_secs_f64();
                }
                rows.push(TimingRow {
                    size,
                    batch,
                    parasitics,
                    samples,
                    reps,
                    mean_seconds_per_sample: total / (reps as f64 * samples as f64),
                });
            }
        }
    }
    Ok(rows)
}

/// Logs the factored-matrix size once per (size, parasitics) combination,
/// a direct proxy for per-solve cost.
fn log_structure(cfg: &SimConfig, weights: &WeightMatrices, size: usize, parasitics: bool) {
    if !log::log_enabled!(log::Level::Debug) {
        return;
    }
    let plan = crate::partition::plan_partitions(&cfg.topology, &cfg.horizontal, &cfg.vertical);
    let graph = plan
        .ok()
        .and_then(|p| crate::circuit::build_network(cfg, weights, &p).ok());
    if let Some(graph) = graph {
        if let Ok(solver) = CircuitSolver::new(&graph) {
            log::debug!(
                "timing {size}x{size} parasitics={parasitics}: {} nodes, {} LU nonzeros",
                graph.nodes.len(),
                solver.factor_nonzeros()
            );
        }
    }
}

/// CSV projection of timing rows.
pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("array_size,batch_size,parasitics,reps,samples,mean_seconds_per_sample\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.size, r.batch, r.parasitics, r.reps, r.samples, r.mean_seconds_per_sample
        ));
    }
    out
}
