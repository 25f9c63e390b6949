//! Trained network weights: per-stage weight matrices and bias vectors.
//!
//! On disk a network is a JSON manifest naming one weight CSV and one bias
//! CSV per crossbar stage:
//!
//! ```json
//! { "layers": [ { "weights": "w1.csv", "bias": "b1.csv" },
//!               { "weights": "w2.csv", "bias": "b2.csv" } ] }
//! ```
//!
//! File paths are resolved relative to the manifest. A weight CSV is
//! row-major with one row per output neuron (`L_{j+1}` rows of `L_j` comma
//! separated values); a bias CSV is a single row of `L_{j+1}` values (one
//! value per line is also accepted).

use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest `{path}`: {message}")]
    Manifest { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// Weights of one crossbar stage. `weights[out][in]`, `bias[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LayerWeights {
    pub fn outputs(&self) -> usize {
        self.weights.len()
    }

    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// All stages of a network, input side first.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrices {
    pub layers: Vec<LayerWeights>,
}

#[derive(Deserialize)]
struct ManifestFile {
    layers: Vec<ManifestLayer>,
}

#[derive(Deserialize)]
struct ManifestLayer {
    weights: String,
    bias: String,
}

impl WeightMatrices {
    /// Load a network from its JSON manifest.
    pub fn load_manifest(path: &Path) -> Result<Self, WeightsError> {
        let text = std::fs::read_to_string(path).map_err(|source| WeightsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: ManifestFile =
            serde_json::from_str(&text).map_err(|e| WeightsError::Manifest {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        if manifest.layers.is_empty() {
            return Err(WeightsError::Manifest {
                path: path.display().to_string(),
                message: "manifest lists no layers".into(),
            });
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut layers = Vec::with_capacity(manifest.layers.len());
        for entry in &manifest.layers {
            let weights = read_matrix_csv(&base.join(&entry.weights))?;
            let bias = read_vector_csv(&base.join(&entry.bias))?;
            let layer = LayerWeights { weights, bias };
            if layer.bias.len() != layer.outputs() {
                return Err(WeightsError::DimensionMismatch {
                    context: format!(
                        "`{}` has {} bias values for {} output rows in `{}`",
                        entry.bias,
                        layer.bias.len(),
                        layer.outputs(),
                        entry.weights
                    ),
                });
            }
            layers.push(layer);
        }
        let net = Self { layers };
        net.check_chain()?;
        Ok(net)
    }

    /// The topology these weights imply: `[L_1, L_2, ..., L_n]`.
    pub fn topology(&self) -> Vec<usize> {
        let mut topo = Vec::with_capacity(self.layers.len() + 1);
        topo.push(self.layers[0].inputs());
        topo.extend(self.layers.iter().map(LayerWeights::outputs));
        topo
    }

    /// Check that consecutive stages chain (outputs of j feed inputs of j+1).
    pub fn check_chain(&self) -> Result<(), WeightsError> {
        for layer in &self.layers {
            if layer.outputs() == 0 || layer.inputs() == 0 {
                return Err(WeightsError::DimensionMismatch {
                    context: "empty weight matrix".into(),
                });
            }
            if layer.weights.iter().any(|row| row.len() != layer.inputs()) {
                return Err(WeightsError::DimensionMismatch {
                    context: "ragged weight matrix rows".into(),
                });
            }
        }
        for (j, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(WeightsError::DimensionMismatch {
                    context: format!(
                        "stage {} produces {} outputs but stage {} expects {} inputs",
                        j + 1,
                        pair[0].outputs(),
                        j + 2,
                        pair[1].inputs()
                    ),
                });
            }
        }
        Ok(())
    }

    /// Check these weights against a configured topology.
    pub fn validate_topology(&self, topology: &[usize]) -> Result<(), WeightsError> {
        self.check_chain()?;
        if self.topology() != topology {
            return Err(WeightsError::DimensionMismatch {
                context: format!(
                    "weights imply topology {:?} but the config says {:?}",
                    self.topology(),
                    topology
                ),
            });
        }
        Ok(())
    }

    /// Random weights and biases, uniform in [−1, 1], for synthetic
    /// workloads (timing studies, solver exercises).
    pub fn random(topology: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-1.0, 1.0);
        let layers = topology
            .windows(2)
            .map(|pair| LayerWeights {
                weights: (0..pair[1])
                    .map(|_| (0..pair[0]).map(|_| dist.sample(&mut rng)).collect())
                    .collect(),
                bias: (0..pair[1]).map(|_| dist.sample(&mut rng)).collect(),
            })
            .collect();
        Self { layers }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, WeightsError> {
    let text = std::fs::read_to_string(path).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<Vec<f64>, WeightsError> {
    line.split(',')
        .map(|cell| {
            cell.trim().parse::<f64>().map_err(|_| WeightsError::Parse {
                path: path.display().to_string(),
                line: line_no,
                message: format!("not a number: `{}`", cell.trim()),
            })
        })
        .collect()
}

fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>, WeightsError> {
    let mut rows = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_row(path, idx + 1, line)?);
    }
    if rows.is_empty() {
        return Err(WeightsError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "empty matrix".into(),
        });
    }
    Ok(rows)
}

fn read_vector_csv(path: &Path) -> Result<Vec<f64>, WeightsError> {
    let rows = read_matrix_csv(path)?;
    if rows.len() == 1 {
        return Ok(rows.into_iter().next().unwrap());
    }
    if rows.iter().all(|r| r.len() == 1) {
        return Ok(rows.into_iter().map(|r| r[0]).collect());
    }
    Err(WeightsError::Parse {
        path: path.display().to_string(),
        line: 1,
        message: "bias file must be a single row or a single column".into(),
    })
}
