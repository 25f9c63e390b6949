//! `xbarsim`: evaluate resistive-crossbar networks, sweep configuration
//! grids, export SPICE netlists, and time solver scaling.
//!
//! Exit codes: 0 success; 1 runtime failure (simulation, data files,
//! writing artifacts); 2 usage failure (bad flags, unparseable or invalid
//! config/grid, unknown config keys).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Prints one line to stdout, tolerating a closed pipe (e.g. `| head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

use xbarsim_core::circuit::{apply_variation, build_network};
use xbarsim_core::config::{
    bitcell_preset, bitcell_preset_names, device_preset, device_preset_names, ConfigError, KvMap,
    SimConfig,
};
use xbarsim_core::partition::plan_partitions;
use xbarsim_core::pipeline::dataset::{load_dataset, Dataset, DatasetFormat};
use xbarsim_core::pipeline::report::{
    self, dataset_digest, weights_digest, RunManifest,
};
use xbarsim_core::pipeline::{evaluate, grid_axes, sweep, EvalMode, EvalReport, PointStatus};
use xbarsim_core::spice;
use xbarsim_core::timing::{run_timing, timing_csv};
use xbarsim_core::WeightMatrices;

#[derive(Parser)]
#[command(
    name = "xbarsim",
    version,
    about = "Circuit-level simulator for resistive crossbar networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a dataset on one configuration; write report and manifest.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Evaluate every point of a config grid; write sweep tables.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        io: IoArgs,
        /// Grid file: config keys mapped to value lists (same syntax as the
        /// config file; `key = [a, b, c]`).
        #[arg(long, value_name = "FILE")]
        grid: PathBuf,
    },
    /// Write the configured network as a SPICE netlist.
    ExportSpice {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Network weights: JSON manifest listing per-layer CSV files.
        #[arg(long, value_name = "FILE")]
        weights: PathBuf,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Time evaluation of synthetic square arrays across batch sizes.
    Timing {
        /// Base config file (optional; defaults apply).
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Override one config key (`key=value`). Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// RNG seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Square array side lengths to time, e.g. 16,32,64.
        #[arg(long, value_delimiter = ',', required = true)]
        array_sizes: Vec<usize>,
        /// Batch sizes to time, e.g. 1,10,50.
        #[arg(long, value_delimiter = ',', required = true)]
        batch_sizes: Vec<usize>,
        /// Repetitions to average.
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Samples evaluated per repetition.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[command(flatten)]
        io: IoArgs,
    },
    /// List built-in device and bitcell presets.
    Presets,
}

#[derive(Args)]
struct ConfigArgs {
    /// Simulation config file (`key = value` lines).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override one config key (`key=value`). Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// RNG seed override (wins over the config file).
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    /// `--set` pairs with the `--seed` override appended last.
    fn overrides(&self) -> Vec<String> {
        let mut pairs = self.set.clone();
        if let Some(seed) = self.seed {
            pairs.push(format!("sim.seed = {seed}"));
        }
        pairs
    }
}

#[derive(Args)]
struct DataArgs {
    /// Network weights: JSON manifest listing per-layer CSV files.
    #[arg(long, value_name = "FILE")]
    weights: PathBuf,
    /// Evaluation data: a CSV file, or an `images,labels` IDX pair.
    #[arg(long, value_name = "PATH")]
    dataset: String,
    /// Dataset file format.
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Samples to evaluate (default: the whole dataset).
    #[arg(long)]
    samples: Option<usize>,
    /// Per-sample solve mode.
    #[arg(long, value_enum, default_value_t = ModeArg::Dc)]
    mode: ModeArg,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct IoArgs {
    /// Directory for output artifacts.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Suppress progress output; metrics still print.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Idx,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => DatasetFormat::Csv,
            FormatArg::Idx => DatasetFormat::IdxPair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Dc,
    Transient,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dc => EvalMode::Dc,
            ModeArg::Transient => EvalMode::Transient,
        }
    }
}

/// A command failure, carrying its exit category.
enum Failure {
    /// Bad invocation: flags, config/grid syntax, unknown keys. Exit 2.
    Usage(String),
    /// The run itself failed: data files, simulation, writing. Exit 1.
    Runtime(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }
    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logger(&cli.command);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn init_logger(command: &Command) {
    let quiet = match command {
        Command::Eval { io, .. }
        | Command::Sweep { io, .. }
        | Command::ExportSpice { io, .. }
        | Command::Timing { io, .. } => io.quiet,
        Command::Presets => false,
    };
    let default = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Eval { cfg, data, io } => cmd_eval(&cfg, &data, &io),
        Command::Sweep {
            cfg,
            data,
            io,
            grid,
        } => cmd_sweep(&cfg, &data, &io, &grid),
        Command::ExportSpice { cfg, weights, io } => cmd_export_spice(&cfg, &weights, &io),
        Command::Timing {
            config,
            set,
            seed,
            array_sizes,
            batch_sizes,
            reps,
            samples,
            io,
        } => cmd_timing(
            config.as_deref(),
            &set,
            seed,
            &array_sizes,
            &batch_sizes,
            reps,
            samples,
            &io,
        ),
        Command::Presets => cmd_presets(),
    }
}

/// The invocation as typed, recorded in manifests.
fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn ensure_out_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::runtime(format!("cannot create `{}`: {e}", dir.display())))
}

fn load_weights(path: &Path, cfg: &SimConfig) -> Result<WeightMatrices, Failure> {
    let weights = WeightMatrices::load_manifest(path).map_err(Failure::runtime)?;
    weights
        .validate_topology(&cfg.topology)
        .map_err(Failure::runtime)?;
    Ok(weights)
}

fn load_data(data: &DataArgs, n_classes: usize) -> Result<Dataset, Failure> {
    load_dataset(&data.dataset, data.format.into(), n_classes).map_err(Failure::runtime)
}

fn print_metrics(report: &EvalReport) {
    // Summary lines are rounded for reading; report.json keeps full precision.
    out!("error_rate = {}", report.error_rate);
    match report.average_power {
        Some(p) => out!("average_power = {p:.4e} W"),
        None => out!("average_power = n/a"),
    }
    match report.latency {
        Some(l) => out!("latency = {l:.4e} s"),
        None => out!("latency = n/a"),
    }
}

fn cmd_eval(cfg_args: &ConfigArgs, data: &DataArgs, io: &IoArgs) -> Result<(), Failure> {
    let cfg = SimConfig::from_file(&cfg_args.config, &cfg_args.overrides())
        .map_err(Failure::usage)?;
    let mut manifest = RunManifest::new(command_line(), &cfg);

    let started = Instant::now();
    let weights = load_weights(&data.weights, &cfg)?;
    let n_classes = *cfg.topology.last().expect("topology is never empty");
    let dataset = load_data(data, n_classes)?;
    let dataset = dataset
        .adapt_features(cfg.topology[0], cfg.resize)
        .map_err(Failure::runtime)?;
    manifest.weights_digest = weights_digest(&weights);
    manifest.dataset_digest = dataset_digest(&dataset);
    manifest.timings.insert("load".into(), started.elapsed().as_secs_f64());

    let n_samples = data.samples.unwrap_or(dataset.len());
    log::info!(
        "evaluating {n_samples} samples in {} mode on topology {:?}",
        EvalMode::from(data.mode),
        cfg.topology
    );
    let started = Instant::now();
    let report = evaluate(
        &cfg,
        &weights,
        &dataset,
        n_samples,
        data.mode.into(),
        data.workers,
    )
    .map_err(Failure::runtime)?;
    manifest
        .timings
        .insert("evaluate".into(), started.elapsed().as_secs_f64());

    let started = Instant::now();
    ensure_out_dir(&io.out_dir)?;
    report::write_json(&io.out_dir.join("report.json"), &report).map_err(Failure::runtime)?;
    manifest
        .timings
        .insert("report".into(), started.elapsed().as_secs_f64());
    report::write_json(&io.out_dir.join("manifest.json"), &manifest).map_err(Failure::runtime)?;

    log::info!(
        "{} of {} samples misclassified ({} flagged non-converged)",
        report.errors,
        report.n_samples,
        report.samples.iter().filter(|s| !s.converged).count()
    );
    print_metrics(&report);
    Ok(())
}

fn cmd_sweep(
    cfg_args: &ConfigArgs,
    data: &DataArgs,
    io: &IoArgs,
    grid_path: &Path,
) -> Result<(), Failure> {
    let config_text = std::fs::read_to_string(&cfg_args.config).map_err(|e| {
        Failure::usage(format!("cannot read `{}`: {e}", cfg_args.config.display()))
    })?;
    let mut base = KvMap::parse_str(&config_text).map_err(Failure::usage)?;
    for pair in cfg_args.overrides() {
        base.set_pair(&pair).map_err(Failure::usage)?;
    }
    let base_cfg = SimConfig::resolve(&base).map_err(Failure::usage)?;

    let grid_text = std::fs::read_to_string(grid_path)
        .map_err(|e| Failure::usage(format!("cannot read `{}`: {e}", grid_path.display())))?;
    let grid = KvMap::parse_str(&grid_text).map_err(Failure::usage)?;

    // Unknown keys poison every point identically; catch them up front so
    // the command fails fast with usage semantics instead of burying the
    // mistake in per-point errors.
    let axes = grid_axes(&grid);
    {
        let mut probe = KvMap::new();
        for (key, values) in &axes {
            if let Some(first) = values.first() {
                probe.set(key, first.clone());
            }
        }
        if let Err(ConfigError::UnknownKey { key }) = SimConfig::resolve(&base.overlaid_with(&probe))
        {
            return Err(Failure::Usage(format!("grid uses unknown config key `{key}`")));
        }
    }

    let mut manifest = RunManifest::new(command_line(), &base_cfg);
    let started = Instant::now();
    let weights = load_weights(&data.weights, &base_cfg)?;
    let n_classes = *base_cfg.topology.last().expect("topology is never empty");
    let dataset = load_data(data, n_classes)?;
    manifest.weights_digest = weights_digest(&weights);
    manifest.dataset_digest = dataset_digest(&dataset);
    manifest.timings.insert("load".into(), started.elapsed().as_secs_f64());

    let n_samples = data.samples.unwrap_or(dataset.len());
    let n_points: usize = axes.iter().map(|(_, v)| v.len().max(1)).product();
    log::info!(
        "sweeping {n_points} grid points over {:?}",
        axes.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>()
    );

    let started = Instant::now();
    let points = sweep(
        &base,
        &grid,
        &weights,
        &dataset,
        n_samples,
        data.mode.into(),
        data.workers,
    );
    manifest
        .timings
        .insert("sweep".into(), started.elapsed().as_secs_f64());

    for point in &points {
        let label: Vec<String> = point
            .settings
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        match &point.report {
            Some(r) => log::info!(
                "point [{}]: {} error_rate={}",
                label.join(" "),
                point.status,
                r.error_rate
            ),
            None => log::info!(
                "point [{}]: {} ({})",
                label.join(" "),
                point.status,
                point.error.as_deref().unwrap_or("no detail")
            ),
        }
    }

    let grid_keys: Vec<String> = axes.iter().map(|(k, _)| k.clone()).collect();
    ensure_out_dir(&io.out_dir)?;
    let write = |name: &str, text: String| -> Result<(), Failure> {
        std::fs::write(io.out_dir.join(name), text)
            .map_err(|e| Failure::runtime(format!("cannot write `{name}`: {e}")))
    };
    write("sweep.csv", report::sweep_csv(&points, &grid_keys))?;
    write("sweep_long.csv", report::sweep_long_csv(&points, &grid_keys))?;
    report::write_json(&io.out_dir.join("sweep.json"), &points).map_err(Failure::runtime)?;
    report::write_json(&io.out_dir.join("manifest.json"), &manifest).map_err(Failure::runtime)?;

    let ok = points.iter().filter(|p| p.status == PointStatus::Ok).count();
    out!("points = {}", points.len());
    out!("ok = {ok}");
    out!("failed = {}", points.len() - ok);
    Ok(())
}

fn cmd_export_spice(cfg_args: &ConfigArgs, weights: &Path, io: &IoArgs) -> Result<(), Failure> {
    let cfg = SimConfig::from_file(&cfg_args.config, &cfg_args.overrides())
        .map_err(Failure::usage)?;
    let weights = load_weights(weights, &cfg)?;
    let plan = plan_partitions(&cfg.topology, &cfg.horizontal, &cfg.vertical)
        .map_err(Failure::runtime)?;
    let mut graph = build_network(&cfg, &weights, &plan).map_err(Failure::runtime)?;
    if cfg.device.variation_sigma > 0.0 {
        // Export the same perturbed network evaluation would simulate.
        graph = apply_variation(&graph, cfg.device.variation_sigma, cfg.seed);
    }

    ensure_out_dir(&io.out_dir)?;
    let netlist = io.out_dir.join("netlist.sp");
    spice::export_spice(&graph, &netlist).map_err(Failure::runtime)?;

    let counts = &graph.meta.counts;
    out!("netlist = {}", netlist.display());
    out!("nodes = {}", graph.nodes.len());
    out!("devices = {}", counts.devices);
    out!("wire_resistors = {}", counts.wire_resistors);
    out!("wire_capacitors = {}", counts.wire_capacitors);
    out!("neurons = {}", counts.neurons);
    out!("sources = {}", counts.sources);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_timing(
    config: Option<&Path>,
    set: &[String],
    seed: Option<u64>,
    array_sizes: &[usize],
    batch_sizes: &[usize],
    reps: usize,
    samples: usize,
    io: &IoArgs,
) -> Result<(), Failure> {
    if array_sizes.is_empty() || batch_sizes.is_empty() {
        return Err(Failure::Usage(
            "need at least one array size and one batch size".into(),
        ));
    }
    if reps == 0 || samples == 0 {
        return Err(Failure::Usage("reps and samples must be at least 1".into()));
    }
    let mut base = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::usage(format!("cannot read `{}`: {e}", path.display())))?;
            KvMap::parse_str(&text).map_err(Failure::usage)?
        }
        None => KvMap::new(),
    };
    for pair in set {
        base.set_pair(pair).map_err(Failure::usage)?;
    }
    if let Some(seed) = seed {
        base.set_pair(&format!("sim.seed = {seed}"))
            .map_err(Failure::usage)?;
    }

    log::info!(
        "timing sizes {array_sizes:?} x batches {batch_sizes:?}, {reps} reps of {samples} samples"
    );
    let rows = run_timing(&base, array_sizes, batch_sizes, samples, reps)
        .map_err(Failure::runtime)?;
    let csv = timing_csv(&rows);

    ensure_out_dir(&io.out_dir)?;
    std::fs::write(io.out_dir.join("timing.csv"), &csv)
        .map_err(|e| Failure::runtime(format!("cannot write `timing.csv`: {e}")))?;
    { use std::io::Write as _; let _ = std::io::stdout().write_all(csv.as_bytes()); }
    Ok(())
}

fn cmd_presets() -> Result<(), Failure> {
    out!("device presets (resistance window):");
    for name in device_preset_names() {
        let dev = device_preset(name).expect("listed presets always resolve");
        out!("  {name:<8} r_low = {} ohm, r_high = {} ohm", dev.r_low, dev.r_high);
    }
    out!("bitcell presets (geometry at default lambda):");
    for name in bitcell_preset_names() {
        let cell = bitcell_preset(name, xbarsim_core::config::DEFAULT_LAMBDA)
            .expect("listed presets always resolve");
        out!(
            "  {name:<8} length = {:.1} nm, width = {:.1} nm, access resistance = {} ohm",
            cell.length * 1e9,
            cell.width * 1e9,
            cell.access_resistance
        );
    }
    Ok(())
}
