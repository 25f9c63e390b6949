//! End-to-end network evaluation: input encoding, batched scheduling,
//! per-sample classification, accuracy/power/latency accounting, and
//! config sweeps over a parameter grid.

pub mod dataset;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{apply_variation, build_network, BuildError, CircuitGraph};
use crate::config::{ConfigError, KvMap, SimConfig, Value};
use crate::partition::{plan_partitions, PartitionError};
use crate::pipeline::dataset::Dataset;
use crate::solve::{
    settling_time, CircuitSolver, Pwl, SolveError, TransientOpts, TransientResult,
};
use crate::weights::WeightMatrices;

/// How samples are solved: one operating point each, or batched
/// piecewise-linear transients sampled at window ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Dc,
    Transient,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Dc => "dc",
            EvalMode::Transient => "transient",
        })
    }
}

/// Whether a run produced real measurements or was doomed by its config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// The resistance window is inverted (`r_high <= r_low`): no weight can
    /// be represented, so every sample is counted as an error without
    /// simulating.
    FailedByConstruction,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "ok",
            RunStatus::FailedByConstruction => "failed_by_construction",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("empty run: need at least one sample")]
    EmptyRun,
    #[error("requested {requested} samples but the dataset holds {available}")]
    NotEnoughSamples { requested: usize, available: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("feature {index} = {value} is outside [0, 1]")]
    RangeError { index: usize, value: f64 },
    #[error("worker pool: {message}")]
    WorkerPool { message: String },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// One evaluated sample. `predicted` is `None` when the solver failed hard
/// for the sample and produced no voltages at all.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub index: usize,
    pub predicted: Option<usize>,
    pub actual: usize,
    /// Delivered power attributed to this sample, watts (windowed energy
    /// over the sampling interval in transient mode).
    pub power: f64,
    pub converged: bool,
    /// Settling time of the slowest output for this sample (transient mode
    /// only; `None` in DC mode or when an output never settles).
    pub latency: Option<f64>,
}

/// Aggregate result of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub status: RunStatus,
    pub mode: EvalMode,
    pub n_samples: usize,
    /// Misclassified or non-converged samples.
    pub errors: usize,
    /// Exactly `errors / n_samples`.
    pub error_rate: f64,
    /// Mean per-sample delivered power, watts (`None` when nothing ran).
    pub average_power: Option<f64>,
    /// Worst settling time over samples and outputs (transient mode only).
    pub latency: Option<f64>,
    pub samples: Vec<SampleRecord>,
}

/// Affine map from a [0, 1] feature to the input rails:
/// `v = vss + f * (vdd - vss)`.
pub fn encode_input(features: &[f64], cfg: &SimConfig) -> Result<Vec<f64>, PipelineError> {
    for (index, &f) in features.iter().enumerate() {
        if !f.is_finite() || !(0.0..=1.0).contains(&f) {
            return Err(PipelineError::RangeError { index, value: f });
        }
    }
    let span = cfg.vdd - cfg.vss;
    Ok(features.iter().map(|f| cfg.vss + f * span).collect())
}

/// Argmax class with ties broken toward the lowest index.
pub fn classify(output_voltages: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in output_voltages.iter().enumerate().skip(1) {
        if v > output_voltages[best] {
            best = i;
        }
    }
    best
}

/// Splits `0..n_samples` into consecutive windows of at most `batch_size`.
pub fn batch_windows(n_samples: usize, batch_size: usize) -> Vec<Range<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    (0..n_samples)
        .step_by(batch_size)
        .map(|start| start..(start + batch_size).min(n_samples))
        .collect()
}

/// SplitMix64 finalizer; decorrelates consecutive seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Encoded input voltages for one sample, with additive Gaussian noise when
/// configured. The noise stream is keyed by `(cfg.seed, sample index)` so
/// results never depend on batching or worker count; noisy voltages are
/// clamped to the rail interval.
fn noisy_input(
    features: &[f64],
    cfg: &SimConfig,
    sample_index: usize,
) -> Result<Vec<f64>, PipelineError> {
    let mut volts = encode_input(features, cfg)?;
    if cfg.input_noise_sigma > 0.0 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ splitmix64(sample_index as u64)));
        let noise = Normal::new(0.0, cfg.input_noise_sigma)
            .expect("sigma is finite and positive by config validation");
        let (lo, hi) = (cfg.vss.min(cfg.vdd), cfg.vss.max(cfg.vdd));
        for v in &mut volts {
            *v = (*v + noise.sample(&mut rng)).clamp(lo, hi);
        }
    }
    Ok(volts)
}

/// A sample whose solve failed outright: flagged, counted as an error.
fn failed_record(index: usize, actual: usize) -> SampleRecord {
    SampleRecord {
        index,
        predicted: None,
        actual,
        power: 0.0,
        converged: false,
        latency: None,
    }
}

fn check_dimensions(cfg: &SimConfig, ds: &Dataset) -> Result<(), PipelineError> {
    let inputs = cfg.topology[0];
    let outputs = *cfg.topology.last().expect("topology is never empty");
    if ds.n_features != inputs {
        return Err(PipelineError::DimensionMismatch {
            context: format!(
                "dataset has {} features but the input layer has {inputs}",
                ds.n_features
            ),
        });
    }
    if ds.n_classes > outputs {
        return Err(PipelineError::DimensionMismatch {
            context: format!(
                "dataset has {} classes but the output layer has only {outputs} neurons",
                ds.n_classes
            ),
        });
    }
    Ok(())
}

/// Evaluates `n_samples` from the dataset on the configured network.
///
/// The network is built once; samples are grouped into windows of
/// `cfg.batch_size`, each window getting a fresh solver workspace (warm
/// starts inside the window). Windows run in parallel on `workers` threads
/// (0 = one per core) and merge in order, so the report is byte-identical
/// regardless of worker count. Non-converged samples count as errors and
/// are flagged, never silently used.
pub fn evaluate(
    cfg: &SimConfig,
    weights: &WeightMatrices,
    dataset: &Dataset,
    n_samples: usize,
    mode: EvalMode,
    workers: usize,
) -> Result<EvalReport, PipelineError> {
    if n_samples == 0 {
        return Err(PipelineError::EmptyRun);
    }
    if n_samples > dataset.len() {
        return Err(PipelineError::NotEnoughSamples {
            requested: n_samples,
            available: dataset.len(),
        });
    }
    check_dimensions(cfg, dataset)?;

    if cfg.resistance_window_inverted() {
        return Ok(EvalReport {
            status: RunStatus::FailedByConstruction,
            mode,
            n_samples,
            errors: n_samples,
            error_rate: 1.0,
            average_power: None,
            latency: None,
            samples: Vec::new(),
        });
    }

    let plan = plan_partitions(&cfg.topology, &cfg.horizontal, &cfg.vertical)?;
    let mut graph = build_network(cfg, weights, &plan)?;
    if cfg.device.variation_sigma > 0.0 {
        graph = apply_variation(&graph, cfg.device.variation_sigma, cfg.seed);
    }

    let windows = batch_windows(n_samples, cfg.batch_size);
    let run_window = |range: &Range<usize>| -> Result<Vec<SampleRecord>, PipelineError> {
        match mode {
            EvalMode::Dc => eval_window_dc(&graph, cfg, dataset, range.clone()),
            EvalMode::Transient => eval_window_transient(&graph, cfg, dataset, range.clone()),
        }
    };

    let window_records: Vec<Result<Vec<SampleRecord>, PipelineError>> = if workers == 1 {
        windows.iter().map(run_window).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PipelineError::WorkerPool {
                message: e.to_string(),
            })?;
        pool.install(|| {
            use rayon::prelude::*;
            windows.par_iter().map(run_window).collect()
        })
    };

    let mut samples = Vec::with_capacity(n_samples);
    for chunk in window_records {
        samples.extend(chunk?);
    }

    let errors = samples
        .iter()
        .filter(|s| !s.converged || s.predicted != Some(s.actual))
        .count();
    let total_power: f64 = samples.iter().map(|s| s.power).sum();
    let latency = match mode {
        EvalMode::Dc => None,
        EvalMode::Transient => {
            let worst = samples.iter().map(|s| s.latency).collect::<Vec<_>>();
            if worst.iter().any(Option::is_none) {
                None
            } else {
                worst.into_iter().flatten().fold(None, |acc: Option<f64>, l| {
                    Some(acc.map_or(l, |a| a.max(l)))
                })
            }
        }
    };

    Ok(EvalReport {
        status: RunStatus::Ok,
        mode,
        n_samples,
        errors,
        error_rate: errors as f64 / n_samples as f64,
        average_power: Some(total_power / n_samples as f64),
        latency,
        samples,
    })
}

/// One operating point per sample, warm-started inside the window.
fn eval_window_dc(
    graph: &CircuitGraph,
    cfg: &SimConfig,
    dataset: &Dataset,
    range: Range<usize>,
) -> Result<Vec<SampleRecord>, PipelineError> {
    let mut solver = CircuitSolver::new(graph)?;
    let outputs = &graph.meta.output_nodes;
    let mut records = Vec::with_capacity(range.len());
    for index in range {
        let actual = dataset.labels[index];
        let volts = noisy_input(&dataset.features[index], cfg, index)?;
        solver.set_inputs(&volts)?;
        match solver.solve_dc() {
            Ok(res) => {
                let outs: Vec<f64> =
                    outputs.iter().map(|&n| res.node_voltages[n]).collect();
                records.push(SampleRecord {
                    index,
                    predicted: Some(classify(&outs)),
                    actual,
                    power: res.total_power,
                    converged: res.converged,
                    latency: None,
                });
            }
            Err(_) => {
                records.push(failed_record(index, actual));
                solver.reset_warm_start();
            }
        }
    }
    Ok(records)
}

/// One piecewise-linear transient across the whole window, sampled at the
/// end of each per-sample hold interval.
fn eval_window_transient(
    graph: &CircuitGraph,
    cfg: &SimConfig,
    dataset: &Dataset,
    range: Range<usize>,
) -> Result<Vec<SampleRecord>, PipelineError> {
    let n_inputs = cfg.topology[0];
    let chunk: Vec<usize> = range.collect();
    let period = cfg.t_sampling;
    let dt = cfg.dt;

    // Per-input step levels across the window.
    let mut levels: Vec<Vec<f64>> = vec![Vec::with_capacity(chunk.len()); n_inputs];
    for &index in &chunk {
        let volts = noisy_input(&dataset.features[index], cfg, index)?;
        for (k, v) in volts.into_iter().enumerate() {
            levels[k].push(v);
        }
    }

    let mut solver = CircuitSolver::new(graph)?;
    let outputs = &graph.meta.output_nodes;

    // Per-sample steady states, for settling-time measurement.
    let mut targets: Vec<Option<Vec<f64>>> = Vec::with_capacity(chunk.len());
    for (i, &_index) in chunk.iter().enumerate() {
        let volts: Vec<f64> = levels.iter().map(|l| l[i]).collect();
        solver.set_inputs(&volts)?;
        match solver.solve_dc() {
            Ok(res) if res.converged => {
                targets.push(Some(
                    outputs.iter().map(|&n| res.node_voltages[n]).collect(),
                ));
            }
            _ => {
                targets.push(None);
                solver.reset_warm_start();
            }
        }
    }

    // Input transitions ramp over one integration step (capped well inside
    // the hold interval so a window of one sample stays constant).
    let ramp = dt.min(period / 100.0);
    let pwls: Vec<Pwl> = levels
        .iter()
        .map(|l| Pwl::step_schedule(l, period, ramp))
        .collect::<Result<_, _>>()?;
    let t_end = chunk.len() as f64 * period;
    let band = cfg.settle_band * (cfg.neuron.v_high - cfg.neuron.v_low);
    let opts = TransientOpts {
        settle_band_volts: Some(band),
    };

    solver.reset_warm_start();
    let tr = match solver.solve_transient_opts(&pwls, t_end, dt, &opts) {
        Ok(tr) => tr,
        // A failed window dooms exactly its own samples; the run continues.
        Err(SolveError::StepNonConvergence { .. }) => {
            return Ok(chunk
                .iter()
                .map(|&index| failed_record(index, dataset.labels[index]))
                .collect());
        }
        Err(other) => return Err(other.into()),
    };

    Ok(score_transient_window(
        &tr, &chunk, dataset, &targets, period, dt, band,
    ))
}

/// Converts one solved transient window into per-sample records.
fn score_transient_window(
    tr: &TransientResult,
    chunk: &[usize],
    dataset: &Dataset,
    targets: &[Option<Vec<f64>>],
    period: f64,
    dt: f64,
    band: f64,
) -> Vec<SampleRecord> {
    let n_steps = tr.times.len() - 1;
    let step_of = |t: f64| ((t / dt).round() as usize).min(n_steps);
    let mut records = Vec::with_capacity(chunk.len());
    let mut k_prev = 0usize;
    for (i, &index) in chunk.iter().enumerate() {
        let window_start = i as f64 * period;
        let k = step_of((i + 1) as f64 * period);
        let sampled: Vec<f64> = tr.outputs.iter().map(|w| w[k]).collect();

        // Windowed energy over the hold interval, as a mean power.
        let mut energy = 0.0;
        for j in k_prev..k {
            energy += 0.5 * (tr.step_power[j] + tr.step_power[j + 1]) * dt;
        }
        let power = energy / ((k - k_prev) as f64 * dt);

        // Settling is judged inside the sample's own hold window; the next
        // sample's transition must not count against this one.
        let latency = targets[i].as_ref().and_then(|target| {
            let window_times = &tr.times[k_prev..=k];
            let mut worst: Option<f64> = None;
            for (o, waveform) in tr.outputs.iter().enumerate() {
                let window_wave = &waveform[k_prev..=k];
                let settled =
                    settling_time(window_times, window_wave, target[o], band, window_start)?;
                let rel = settled - window_start;
                worst = Some(worst.map_or(rel, |w| w.max(rel)));
            }
            worst
        });

        records.push(SampleRecord {
            index,
            predicted: Some(classify(&sampled)),
            actual: dataset.labels[index],
            power,
            converged: true,
            latency,
        });
        k_prev = k;
    }
    records
}

/// Status of one sweep grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    FailedByConstruction,
    /// The grid point does not resolve to a valid config.
    ConfigError,
    /// The evaluation itself failed.
    RunError,
}

impl fmt::Display for PointStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PointStatus::Ok => "ok",
            PointStatus::FailedByConstruction => "failed_by_construction",
            PointStatus::ConfigError => "config_error",
            PointStatus::RunError => "run_error",
        })
    }
}

/// One point of a sweep: the config deltas applied, and either a report or
/// the error that prevented one.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    /// Grid settings for this point, key → canonical value text.
    pub settings: BTreeMap<String, String>,
    pub status: PointStatus,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    /// Wall-clock seconds spent on this point. Excluded from serialized
    /// reports so repeated runs stay byte-identical.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Grid axes in canonical order: keys sorted, values in written order.
/// A scalar value is treated as a one-element axis.
pub fn grid_axes(grid: &KvMap) -> Vec<(String, Vec<Value>)> {
    grid.iter()
        .map(|(k, v)| {
            let values = match v {
                Value::Array(items) => items.clone(),
                scalar => vec![scalar.clone()],
            };
            (k.to_string(), values)
        })
        .collect()
}

/// Evaluates every point of the Cartesian grid over `base`. Failures are
/// recorded per point; the sweep itself never aborts. An empty grid yields
/// the single base point.
pub fn sweep(
    base: &KvMap,
    grid: &KvMap,
    weights: &WeightMatrices,
    dataset: &Dataset,
    n_samples: usize,
    mode: EvalMode,
    workers: usize,
) -> Vec<SweepPoint> {
    let axes = grid_axes(grid);
    let n_points: usize = axes.iter().map(|(_, v)| v.len().max(1)).product();

    let mut points = Vec::with_capacity(n_points);
    for flat in 0..n_points {
        // Row-major odometer: the last axis varies fastest.
        let mut residue = flat;
        let mut settings = KvMap::new();
        let mut labels = BTreeMap::new();
        for (key, values) in axes.iter().rev() {
            let pick = residue % values.len();
            residue /= values.len();
            settings.set(key, values[pick].clone());
            labels.insert(key.clone(), values[pick].to_string());
        }

        let started = std::time::Instant::now();
        let overlaid = base.overlaid_with(&settings);
        let point = match SimConfig::resolve(&overlaid) {
            Err(e) => SweepPoint {
                settings: labels,
                status: PointStatus::ConfigError,
                report: None,
                error: Some(e.to_string()),
                wall_seconds: started.elapsed().as_secs_f64(),
            },
            Ok(cfg) => {
                // Feature adaptation tracks the point's own input layer.
                let adapted = dataset.adapt_features(cfg.topology[0], cfg.resize);
                let outcome = adapted
                    .map_err(|e| e.to_string())
                    .and_then(|ds| {
                        evaluate(&cfg, weights, &ds, n_samples, mode, workers)
                            .map_err(|e| e.to_string())
                    });
                match outcome {
                    Ok(report) => SweepPoint {
                        settings: labels,
                        status: match report.status {
                            RunStatus::Ok => PointStatus::Ok,
                            RunStatus::FailedByConstruction => PointStatus::FailedByConstruction,
                        },
                        report: Some(report),
                        error: None,
                        wall_seconds: started.elapsed().as_secs_f64(),
                    },
                    Err(message) => SweepPoint {
                        settings: labels,
                        status: PointStatus::RunError,
                        report: None,
                        error: Some(message),
                        wall_seconds: started.elapsed().as_secs_f64(),
                    },
                }
            }
        };
        points.push(point);
    }
    points
}

/// Convenience used by `ConfigError` conversions in callers.
impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::DimensionMismatch {
            context: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WeightScheme;
    use crate::weights::LayerWeights;
    use approx::assert_relative_eq;

    fn toy_config(topology: &[usize]) -> SimConfig {
        let mut cfg = SimConfig::defaults_for(topology);
        cfg.parasitics = false;
        cfg.batch_size = 2;
        cfg
    }

    /// Two features, two classes, decided by the sign of f0 - f1.
    fn separable_setup() -> (SimConfig, WeightMatrices, Dataset) {
        let cfg = {
            let mut cfg = toy_config(&[2, 2]);
            cfg.weight_scheme = WeightScheme::Linear;
            cfg
        };
        let weights = WeightMatrices {
            layers: vec![LayerWeights {
                weights: vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
                bias: vec![0.0, 0.0],
            }],
        };
        let features = vec![
            vec![0.9, 0.1],
            vec![0.2, 0.8],
            vec![1.0, 0.0],
            vec![0.3, 0.7],
            vec![0.8, 0.4],
        ];
        let labels = vec![0, 1, 0, 1, 0];
        let dataset = Dataset::new(features, labels, 2).unwrap();
        (cfg, weights, dataset)
    }

    #[test]
    fn encoding_maps_the_unit_interval_onto_the_rails() {
        let cfg = toy_config(&[3, 2]);
        let v = encode_input(&[0.0, 1.0, 0.5], &cfg).unwrap();
        assert_relative_eq!(v[0], cfg.vss, max_relative = 1e-15);
        assert_relative_eq!(v[1], cfg.vdd, max_relative = 1e-15);
        assert_relative_eq!(v[2], 0.5 * (cfg.vdd + cfg.vss), epsilon = 1e-15);
    }

    #[test]
    fn encoding_rejects_features_off_the_unit_interval() {
        let cfg = toy_config(&[2, 2]);
        let err = encode_input(&[0.5, 1.2], &cfg).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::RangeError { index: 1, .. }
        ));
    }

    #[test]
    fn classify_takes_the_argmax_with_ties_to_the_lowest_index() {
        assert_eq!(classify(&[0.1, 0.7, -0.2]), 1);
        assert_eq!(classify(&[0.5, 0.5]), 0);
        // Positive affine rescaling never moves the argmax.
        let outs = [0.3, -0.1, 0.9, 0.2];
        let scaled: Vec<f64> = outs.iter().map(|v| 2.5 * v + 0.4).collect();
        assert_eq!(classify(&outs), classify(&scaled));
    }

    #[test]
    fn batch_windows_cover_every_sample_in_order() {
        let w = batch_windows(5, 2);
        assert_eq!(w, vec![0..2, 2..4, 4..5]);
        assert_eq!(batch_windows(3, 50), vec![0..3]); // clamped to the set
    }

    #[test]
    fn separable_toy_problem_scores_zero_error() {
        let (cfg, weights, dataset) = separable_setup();
        let report = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();
        assert_eq!(report.status, RunStatus::Ok);
        assert_eq!(report.errors, 0);
        assert_eq!(report.error_rate, 0.0);
        assert!(report.average_power.unwrap() > 0.0);
        assert_eq!(report.latency, None, "DC mode reports no latency");
        assert_eq!(report.samples.len(), 5);
        for (i, s) in report.samples.iter().enumerate() {
            assert_eq!(s.index, i);
            assert_eq!(s.predicted, Some(s.actual));
            assert!(s.converged);
        }
    }

    #[test]
    fn error_rate_is_exactly_errors_over_samples() {
        let (cfg, weights, mut dataset) = separable_setup();
        dataset.labels[0] = 1; // mislabel one sample on purpose
        let report = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();
        assert_eq!(report.errors, 1);
        assert_eq!(report.error_rate, 1.0 / 5.0);
    }

    #[test]
    fn empty_runs_are_rejected() {
        let (cfg, weights, dataset) = separable_setup();
        let err = evaluate(&cfg, &weights, &dataset, 0, EvalMode::Dc, 1).unwrap_err();
        assert!(matches!(err, PipelineError::EmptyRun));
    }

    #[test]
    fn oversized_sample_requests_are_rejected() {
        let (cfg, weights, dataset) = separable_setup();
        let err = evaluate(&cfg, &weights, &dataset, 6, EvalMode::Dc, 1).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::NotEnoughSamples {
                requested: 6,
                available: 5
            }
        ));
    }

    #[test]
    fn feature_count_must_match_the_input_layer() {
        let (cfg, weights, _) = separable_setup();
        let ds = Dataset::new(vec![vec![0.1, 0.2, 0.3]], vec![0], 2).unwrap();
        let err = evaluate(&cfg, &weights, &ds, 1, EvalMode::Dc, 1).unwrap_err();
        assert!(matches!(err, PipelineError::DimensionMismatch { .. }));
    }

    #[test]
    fn inverted_resistance_window_fails_by_construction() {
        let (mut cfg, weights, dataset) = separable_setup();
        cfg.device.r_high = cfg.device.r_low; // window collapsed
        let report = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();
        assert_eq!(report.status, RunStatus::FailedByConstruction);
        assert_eq!(report.error_rate, 1.0);
        assert_eq!(report.errors, 5);
        assert_eq!(report.average_power, None);
        assert!(report.samples.is_empty());
    }

    #[test]
    fn transient_batches_classify_like_dc() {
        let (mut cfg, weights, dataset) = separable_setup();
        cfg.parasitics = true; // gives the transient real capacitance
        let dc = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();
        let tr = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Transient, 1).unwrap();
        for (a, b) in dc.samples.iter().zip(&tr.samples) {
            assert_eq!(a.predicted, b.predicted, "sample {}", a.index);
        }
        assert!(tr.latency.is_some(), "batched transients report latency");
        assert!(tr.latency.unwrap() > 0.0);
        assert!(tr.average_power.unwrap() > 0.0);
        for s in &tr.samples {
            assert!(s.latency.is_some());
            assert!(s.latency.unwrap() <= cfg.t_sampling);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_report() {
        let (mut cfg, weights, dataset) = separable_setup();
        cfg.input_noise_sigma = 0.01; // exercise the noise path too
        cfg.batch_size = 2;
        let one = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();
        let four = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Dc, 4).unwrap();
        assert_eq!(one, four);
        assert_eq!(
            serde_json::to_string(&one).unwrap(),
            serde_json::to_string(&four).unwrap()
        );
    }

    #[test]
    fn noise_depends_on_the_seed_but_not_on_batching() {
        let (mut cfg, weights, dataset) = separable_setup();
        cfg.input_noise_sigma = 0.05;
        let a = evaluate(&cfg, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();

        let mut rebatched = cfg.clone();
        rebatched.batch_size = 5;
        let b = evaluate(&rebatched, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();
        assert_eq!(a, b, "noise keyed by sample index ignores batching");

        let mut reseeded = cfg.clone();
        reseeded.seed = cfg.seed.wrapping_add(1);
        let c = evaluate(&reseeded, &weights, &dataset, 5, EvalMode::Dc, 1).unwrap();
        let power = |r: &EvalReport| -> Vec<f64> { r.samples.iter().map(|s| s.power).collect() };
        assert_ne!(power(&a), power(&c), "a new seed draws new noise");
    }

    #[test]
    fn sweep_covers_the_cartesian_product_in_row_major_order() {
        let (_, weights, dataset) = separable_setup();
        let base = {
            let mut m = KvMap::new();
            m.set("topology", Value::Array(vec![Value::Int(2), Value::Int(2)]));
            m.set("sim.parasitics", Value::Bool(false));
            m
        };
        let grid = {
            let mut g = KvMap::new();
            g.set(
                "device.r_low",
                Value::Array(vec![Value::Float(1e3), Value::Float(2e3), Value::Float(3e3)]),
            );
            g.set(
                "sim.weight_scheme",
                Value::Array(vec![
                    Value::Str("binary".into()),
                    Value::Str("linear".into()),
                ]),
            );
            g
        };
        let points = sweep(&base, &grid, &weights, &dataset, 2, EvalMode::Dc, 1);
        assert_eq!(points.len(), 6);
        // Keys sorted: device.r_low is the slow axis, sim.weight_scheme fast.
        assert_eq!(points[0].settings["device.r_low"], "1000");
        assert_eq!(points[0].settings["sim.weight_scheme"], "binary");
        assert_eq!(points[1].settings["device.r_low"], "1000");
        assert_eq!(points[1].settings["sim.weight_scheme"], "linear");
        assert_eq!(points[5].settings["device.r_low"], "3000");
        assert!(points.iter().all(|p| p.status == PointStatus::Ok));
    }

    #[test]
    fn sweep_records_failures_without_aborting() {
        let (_, weights, dataset) = separable_setup();
        let base = {
            let mut m = KvMap::new();
            m.set("topology", Value::Array(vec![Value::Int(2), Value::Int(2)]));
            m
        };
        let grid = {
            let mut g = KvMap::new();
            g.set(
                "device.r_high",
                Value::Array(vec![Value::Float(500.0), Value::Float(25e3)]),
            );
            g.set("device.r_low", Value::Float(1e3)); // scalar axis
            g
        };
        let points = sweep(&base, &grid, &weights, &dataset, 2, EvalMode::Dc, 1);
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].status, PointStatus::FailedByConstruction);
        assert_eq!(points[0].report.as_ref().unwrap().error_rate, 1.0);
        assert_eq!(points[1].status, PointStatus::Ok);

        let bad_grid = {
            let mut g = KvMap::new();
            g.set("nonsense.key", Value::Array(vec![Value::Int(1)]));
            g
        };
        let points = sweep(&base, &bad_grid, &weights, &dataset, 2, EvalMode::Dc, 1);
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].status, PointStatus::ConfigError);
        assert!(points[0].error.as_ref().unwrap().contains("unknown config key"));
    }

    #[test]
    fn empty_grid_evaluates_the_base_config_once() {
        let (_, weights, dataset) = separable_setup();
        let mut base = KvMap::new();
        base.set("topology", Value::Array(vec![Value::Int(2), Value::Int(2)]));
        let points = sweep(&base, &KvMap::new(), &weights, &dataset, 2, EvalMode::Dc, 1);
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].status, PointStatus::Ok);
        assert!(points[0].settings.is_empty());
    }
}
