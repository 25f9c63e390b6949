//! Run artifacts: pretty JSON reports, the run manifest (inputs, digests,
//! timings), and CSV projections of sweep results for tables and plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::SimConfig;
use crate::pipeline::dataset::Dataset;
use crate::pipeline::SweepPoint;
use crate::weights::WeightMatrices;

/// Crate version recorded in every manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to reproduce a run: the exact config, digests of the
/// numeric inputs, and wall-clock timings. Timings and timestamps live only
/// here — the reports themselves stay byte-reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// The command line that produced the run.
    pub command: String,
    pub version: String,
    pub created_utc: String,
    pub seed: u64,
    /// Fully resolved configuration snapshot.
    pub config: SimConfig,
    /// SHA-256 of the loaded weight matrices (canonical bit-level form).
    pub weights_digest: String,
    /// SHA-256 of the loaded dataset (canonical bit-level form).
    pub dataset_digest: String,
    /// Named wall-clock phases, seconds.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: String, cfg: &SimConfig) -> Self {
        Self {
            command,
            version: VERSION.to_string(),
            created_utc: utc_timestamp(),
            seed: cfg.seed,
            config: cfg.clone(),
            weights_digest: String::new(),
            dataset_digest: String::new(),
            timings: BTreeMap::new(),
        }
    }
}

/// Serializes any report value as pretty JSON with a trailing newline.
pub fn to_json_text<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types always serialize");
    text.push('\n');
    text
}

/// Writes pretty JSON to `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    std::fs::write(path, to_json_text(value))
}

fn hex_digest(hasher: Sha256) -> String {
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// SHA-256 over a canonical bit-level serialization of the weights:
/// per layer, the dimensions then every value as little-endian `f64` bits.
pub fn weights_digest(weights: &WeightMatrices) -> String {
    let mut hasher = Sha256::new();
    hasher.update((weights.layers.len() as u64).to_le_bytes());
    for layer in &weights.layers {
        hasher.update((layer.outputs() as u64).to_le_bytes());
        hasher.update((layer.inputs() as u64).to_le_bytes());
        for row in &layer.weights {
            for &w in row {
                hasher.update(w.to_bits().to_le_bytes());
            }
        }
        for &b in &layer.bias {
            hasher.update(b.to_bits().to_le_bytes());
        }
    }
    hex_digest(hasher)
}

/// SHA-256 over a canonical bit-level serialization of the dataset.
pub fn dataset_digest(dataset: &Dataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update((dataset.len() as u64).to_le_bytes());
    hasher.update((dataset.n_features as u64).to_le_bytes());
    hasher.update((dataset.n_classes as u64).to_le_bytes());
    for (row, &label) in dataset.features.iter().zip(&dataset.labels) {
        hasher.update((label as u64).to_le_bytes());
        for &f in row {
            hasher.update(f.to_bits().to_le_bytes());
        }
    }
    hex_digest(hasher)
}

/// Escapes one CSV cell (RFC-4180 quoting when needed).
fn csv_cell(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn push_row(out: &mut String, cells: &[String]) {
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&csv_cell(cell));
    }
    out.push('\n');
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Wide sweep table: one row per grid point with the swept settings, the
/// headline metrics, and the measured wall time. The `wall_time` column is
/// the one intentionally non-reproducible field.
pub fn sweep_csv(points: &[SweepPoint], grid_keys: &[String]) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = grid_keys.to_vec();
    header.extend(
        ["status", "error_rate", "average_power", "latency", "wall_time"]
            .iter()
            .map(|s| s.to_string()),
    );
    push_row(&mut out, &header);

    for point in points {
        let mut cells: Vec<String> = grid_keys
            .iter()
            .map(|k| point.settings.get(k).cloned().unwrap_or_default())
            .collect();
        cells.push(point.status.to_string());
        match &point.report {
            Some(r) => {
                cells.push(r.error_rate.to_string());
                cells.push(opt_num(r.average_power));
                cells.push(opt_num(r.latency));
            }
            None => cells.extend([String::new(), String::new(), String::new()]),
        }
        cells.push(point.wall_seconds.to_string());
        push_row(&mut out, &cells);
    }
    out
}

/// Long-format sweep table for plotting: one row per point and metric.
/// Fully reproducible (no wall times).
pub fn sweep_long_csv(points: &[SweepPoint], grid_keys: &[String]) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = grid_keys.to_vec();
    header.extend(["status", "metric", "value"].iter().map(|s| s.to_string()));
    push_row(&mut out, &header);

    for point in points {
        let settings: Vec<String> = grid_keys
            .iter()
            .map(|k| point.settings.get(k).cloned().unwrap_or_default())
            .collect();
        let Some(report) = &point.report else {
            continue;
        };
        let metrics = [
            ("error_rate", Some(report.error_rate)),
            ("average_power", report.average_power),
            ("latency", report.latency),
        ];
        for (name, value) in metrics {
            let Some(value) = value else { continue };
            let mut cells = settings.clone();
            cells.push(point.status.to_string());
            cells.push(name.to_string());
            cells.push(value.to_string());
            push_row(&mut out, &cells);
        }
    }
    out
}

/// Current time as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn utc_timestamp() -> String {
    let seconds = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format_utc(seconds)
}

/// Formats a Unix timestamp as an ISO-8601 UTC instant.
fn format_utc(unix_seconds: u64) -> String {
    let days = (unix_seconds / 86_400) as i64;
    let tod = unix_seconds % 86_400;
    let (y, m, d) = civil_from_days(days);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        tod / 3600,
        (tod % 3600) / 60,
        tod % 60
    )
}

/// Proleptic Gregorian date from days since 1970-01-01 (era decomposition).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1_460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = (if mp < 10 { mp + 3 } else { mp - 9 }) as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}
