//! Test-set ingestion: labelled feature vectors from CSV rows or from an
//! IDX image/label file pair, with square-image resizing to fit a network's
//! input layer.

use std::path::Path;

use thiserror::Error;

use crate::config::ResizeMode;

/// How a dataset is stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Two binary IDX files (images then labels), given as one
    /// comma-separated `images,labels` path argument.
    IdxPair,
    /// Headerless text rows `label,f0,f1,...` with features in [0, 1].
    Csv,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("`{path}`: {message}")]
    Format { path: String, message: String },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// Labelled evaluation samples. Features are reals in [0, 1]; labels are
/// class indices below `n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `features[sample][feature]`.
    pub features: Vec<Vec<f64>>,
    /// One class index per sample.
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Dataset {
    /// Validates lengths, ranges, and labels, then assembles the dataset.
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self, DatasetError> {
        let fail = |message: String| DatasetError::Format {
            path: "<memory>".into(),
            message,
        };
        if features.is_empty() {
            return Err(fail("dataset has no samples".into()));
        }
        if features.len() != labels.len() {
            return Err(DatasetError::DimensionMismatch {
                context: format!(
                    "{} feature rows but {} labels",
                    features.len(),
                    labels.len()
                ),
            });
        }
        let n_features = features[0].len();
        if n_features == 0 {
            return Err(fail("samples have no features".into()));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != n_features {
                return Err(fail(format!(
                    "sample {i} has {} features, expected {n_features}",
                    row.len()
                )));
            }
            for (j, &f) in row.iter().enumerate() {
                if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                    return Err(fail(format!(
                        "sample {i} feature {j} = {f} is outside [0, 1]"
                    )));
                }
            }
        }
        for (i, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(fail(format!(
                    "sample {i} label {label} is not below n_classes = {n_classes}"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Adapts square-image features to `n_features` pixels by center crop or
    /// bilinear downsampling. A no-op when the sizes already agree; both
    /// sizes must be perfect squares and the target must not be larger.
    pub fn adapt_features(
        &self,
        n_features: usize,
        mode: ResizeMode,
    ) -> Result<Self, DatasetError> {
        if n_features == self.n_features {
            return Ok(self.clone());
        }
        let side_in = int_sqrt(self.n_features).ok_or_else(|| DatasetError::DimensionMismatch {
            context: format!(
                "cannot resize: {} features is not a square image",
                self.n_features
            ),
        })?;
        let side_out = int_sqrt(n_features).ok_or_else(|| DatasetError::DimensionMismatch {
            context: format!("cannot resize: target {n_features} features is not a square image"),
        })?;
        if side_out > side_in {
            return Err(DatasetError::DimensionMismatch {
                context: format!(
                    "cannot grow a {side_in}x{side_in} image to {side_out}x{side_out}; \
                     only downsampling is supported"
                ),
            });
        }
        let features = self
            .features
            .iter()
            .map(|row| match mode {
                ResizeMode::Crop => center_crop(row, side_in, side_out),
                ResizeMode::Bilinear => bilinear_resize(row, side_in, side_out),
            })
            .collect();
        Ok(Self {
            features,
            labels: self.labels.clone(),
            n_features,
            n_classes: self.n_classes,
        })
    }
}

/// Exact integer square root, if `n` is a perfect square.
fn int_sqrt(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

/// Keeps the centered `side_out` x `side_out` window of a row-major image.
fn center_crop(pixels: &[f64], side_in: usize, side_out: usize) -> Vec<f64> {
    let off = (side_in - side_out) / 2;
    let mut out = Vec::with_capacity(side_out * side_out);
    for r in 0..side_out {
        let base = (r + off) * side_in + off;
        out.extend_from_slice(&pixels[base..base + side_out]);
    }
    out
}

/// Bilinear downsample with the half-pixel-center convention: output pixel
/// centers map to `(i + 0.5) * side_in / side_out - 0.5` in source
/// coordinates, clamped at the borders.
fn bilinear_resize(pixels: &[f64], side_in: usize, side_out: usize) -> Vec<f64> {
    let scale = side_in as f64 / side_out as f64;
    let coord = |i: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (side_in - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(side_in - 1);
        (lo, hi, x - lo as f64)
    };
    let mut out = Vec::with_capacity(side_out * side_out);
    for r in 0..side_out {
        let (r0, r1, fr) = coord(r);
        for c in 0..side_out {
            let (c0, c1, fc) = coord(c);
            let top = pixels[r0 * side_in + c0] * (1.0 - fc) + pixels[r0 * side_in + c1] * fc;
            let bot = pixels[r1 * side_in + c0] * (1.0 - fc) + pixels[r1 * side_in + c1] * fc;
            out.push(top * (1.0 - fr) + bot * fr);
        }
    }
    out
}

/// Loads a dataset from disk. `n_classes` comes from the network the set
/// will be evaluated on; labels are validated against it here.
pub fn load_dataset(
    path: &str,
    format: DatasetFormat,
    n_classes: usize,
) -> Result<Dataset, DatasetError> {
    match format {
        DatasetFormat::Csv => load_csv(Path::new(path), n_classes),
        DatasetFormat::IdxPair => {
            let (images, labels) = path.split_once(',').ok_or_else(|| DatasetError::Format {
                path: path.into(),
                message: "idx-pair datasets are given as `images-file,labels-file`".into(),
            })?;
            load_idx_pair(Path::new(images.trim()), Path::new(labels.trim()), n_classes)
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, DatasetError> {
    std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_csv(path: &Path, n_classes: usize) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let fail = |line: usize, message: String| DatasetError::Format {
        path: path.display().to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_text = fields.next().expect("split yields at least one field");
        let label: usize = label_text
            .trim()
            .parse()
            .map_err(|_| fail(line_no, format!("bad label `{}`", label_text.trim())))?;
        let mut row = Vec::new();
        for field in fields {
            let f: f64 = field
                .trim()
                .parse()
                .map_err(|_| fail(line_no, format!("bad feature `{}`", field.trim())))?;
            row.push(f);
        }
        if row.is_empty() {
            return Err(fail(line_no, "row has a label but no features".into()));
        }
        if let Some(first) = features.first() {
            let want: &Vec<f64> = first;
            if row.len() != want.len() {
                return Err(fail(
                    line_no,
                    format!("row has {} features, expected {}", row.len(), want.len()),
                ));
            }
        }
        features.push(row);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(DatasetError::Format {
            path: path.display().to_string(),
            message: "file contains no samples".into(),
        });
    }
    Dataset::new(features, labels, n_classes).map_err(|e| rehome(e, path))
}

/// IDX image magic: two zero bytes, type 0x08 (unsigned byte), 3 dimensions.
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// IDX label magic: unsigned byte, 1 dimension.
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn load_idx_pair(
    images_path: &Path,
    labels_path: &Path,
    n_classes: usize,
) -> Result<Dataset, DatasetError> {
    let images = read_bytes(images_path)?;
    let labels = read_bytes(labels_path)?;
    let ifail = |message: String| DatasetError::Format {
        path: images_path.display().to_string(),
        message,
    };
    let lfail = |message: String| DatasetError::Format {
        path: labels_path.display().to_string(),
        message,
    };

    let word = |buf: &[u8], at: usize| -> Option<u32> {
        buf.get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    };

    let magic = word(&images, 0).ok_or_else(|| ifail("file is too short for a header".into()))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(ifail(format!(
            "bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x} (u8 images)"
        )));
    }
    let n = word(&images, 4).ok_or_else(|| ifail("missing image count".into()))? as usize;
    let rows = word(&images, 8).ok_or_else(|| ifail("missing row count".into()))? as usize;
    let cols = word(&images, 12).ok_or_else(|| ifail("missing column count".into()))? as usize;
    let pixels = &images[16..];
    let need = n
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .ok_or_else(|| ifail("image dimensions overflow".into()))?;
    if pixels.len() != need {
        return Err(ifail(format!(
            "payload holds {} bytes but {n} images of {rows}x{cols} need {need}",
            pixels.len()
        )));
    }

    let lmagic = word(&labels, 0).ok_or_else(|| lfail("file is too short for a header".into()))?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(lfail(format!(
            "bad magic {lmagic:#010x}, expected {IDX_LABELS_MAGIC:#010x} (u8 labels)"
        )));
    }
    let ln = word(&labels, 4).ok_or_else(|| lfail("missing label count".into()))? as usize;
    let label_bytes = &labels[8..];
    if label_bytes.len() != ln {
        return Err(lfail(format!(
            "payload holds {} bytes but header promises {ln} labels",
            label_bytes.len()
        )));
    }
    if ln != n {
        return Err(DatasetError::DimensionMismatch {
            context: format!("{n} images but {ln} labels"),
        });
    }

    let per_image = rows * cols;
    let features: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            pixels[i * per_image..(i + 1) * per_image]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect()
        })
        .collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    Dataset::new(features, labels, n_classes).map_err(|e| rehome(e, labels_path))
}

/// Replaces the `<memory>` placeholder in validation errors with the file
/// the data actually came from.
fn rehome(err: DatasetError, path: &Path) -> DatasetError {
    match err {
        DatasetError::Format { message, .. } => DatasetError::Format {
            path: path.display().to_string(),
            message,
        },
        other => other,
    }
}
