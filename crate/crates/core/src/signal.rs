//! Signal ingestion and the hankelised data matrix.

use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::linalg;

/// A single-channel real-valued time series.
#[derive(Debug, Clone)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: Option<f64>,
}

impl Signal {
    /// Builds a signal, rejecting empty input, non-finite samples and
    /// non-positive sample rates.
    pub fn new(samples: Vec<f64>, sample_rate_hz: Option<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteSample { index, value });
            }
        }
        if let Some(fs) = sample_rate_hz {
            if !(fs.is_finite() && fs > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "sample rate must be positive, got {fs}"
                )));
            }
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> Option<f64> {
        self.sample_rate_hz
    }
}

/// On-disk signal encodings accepted by [`load_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    /// One float per line, or a single comma-separated row (or a mix).
    Csv,
    /// Raw little-endian `f32`, no header.
    F32Binary,
    /// Raw little-endian `f64`, no header.
    F64Binary,
}

impl FromStr for SignalFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "f32" => Ok(Self::F32Binary),
            "f64" => Ok(Self::F64Binary),
            other => Err(Error::InvalidConfig(format!(
                "unknown signal format {other:?}, expected csv, f32 or f64"
            ))),
        }
    }
}

/// Reads a signal from disk.
pub fn load_signal(
    path: &Path,
    format: SignalFormat,
    sample_rate_hz: Option<f64>,
) -> Result<Signal> {
    let samples = match format {
        SignalFormat::Csv => parse_csv(path)?,
        SignalFormat::F32Binary => parse_binary(path, 4, |b| {
            f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        })?,
        SignalFormat::F64Binary => parse_binary(path, 8, |b| {
            f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
        })?,
    };
    Signal::new(samples, sample_rate_hz)
}

fn parse_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut samples = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for token in line.split(',') {
            let token = token.trim();
            if token.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_idx + 1,
                    message: "empty field".to_string(),
                });
            }
            let value: f64 = token.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: line_idx + 1,
                message: format!("cannot parse {token:?} as a number"),
            })?;
            samples.push(value);
        }
    }
    Ok(samples)
}

fn parse_binary(path: &Path, width: usize, decode: impl Fn(&[u8]) -> f64) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() % width != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!(
                "file length {} is not a multiple of the {width}-byte sample width",
                bytes.len()
            ),
        });
    }
    Ok(bytes.chunks_exact(width).map(decode).collect())
}

/// Window length and shift for hankelisation.
///
/// The default shift of 1 makes every component vector act as an FIR filter
/// over the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HankelConfig {
    pub window_length: usize,
    pub shift: usize,
}

impl HankelConfig {
    /// Window of `window_length` samples with shift 1.
    pub fn new(window_length: usize) -> Result<Self> {
        Self::with_shift(window_length, 1)
    }

    pub fn with_shift(window_length: usize, shift: usize) -> Result<Self> {
        if window_length == 0 {
            return Err(Error::InvalidConfig(
                "window length must be at least 1".to_string(),
            ));
        }
        if shift == 0 {
            return Err(Error::InvalidConfig("shift must be at least 1".to_string()));
        }
        Ok(Self {
            window_length,
            shift,
        })
    }

    /// Row count of the hankelised matrix for a signal of length `len`.
    pub fn row_count(&self, len: usize) -> Result<usize> {
        if self.window_length > len {
            return Err(Error::WindowTooLong {
                window: self.window_length,
                signal: len,
            });
        }
        Ok((len - self.window_length) / self.shift + 1)
    }
}

/// The hankelised observation matrix together with the centering and scaling
/// parameters that were applied to it.
#[derive(Debug)]
pub struct DataMatrix {
    values: Array2<f64>,
    mean: Array1<f64>,
    scale: Option<Array1<f64>>,
    zero_variance: Vec<usize>,
    covariance: OnceLock<Array2<f64>>,
}

impl Clone for DataMatrix {
    fn clone(&self) -> Self {
        Self {
            values: self.values.clone(),
            mean: self.mean.clone(),
            scale: self.scale.clone(),
            zero_variance: self.zero_variance.clone(),
            covariance: OnceLock::new(),
        }
    }
}

impl DataMatrix {
    /// Wraps an existing matrix as uncentered data (zero stored mean).
    pub fn from_rows(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyInput);
        }
        let cols = values.ncols();
        Ok(Self {
            values,
            mean: Array1::zeros(cols),
            scale: None,
            zero_variance: Vec::new(),
            covariance: OnceLock::new(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Per-column mean subtracted by [`DataMatrix::center`] (zeros before
    /// centering).
    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    /// Per-column standard deviation divided out, when scaling was requested.
    pub fn scale(&self) -> Option<&Array1<f64>> {
        self.scale.as_ref()
    }

    /// Columns flagged as zero-variance during scaling (left unscaled).
    pub fn zero_variance_columns(&self) -> &[usize] {
        &self.zero_variance
    }

    /// Sample covariance `X^T X / L_H` of the current values, computed once
    /// and cached.
    pub fn covariance(&self) -> &Array2<f64> {
        self.covariance.get_or_init(|| {
            let n = self.values.nrows() as f64;
            self.values.t().dot(&self.values) / n
        })
    }

    /// Subtracts the per-column mean, optionally dividing columns by their
    /// sample standard deviation. Zero-variance columns are flagged and left
    /// unscaled rather than failing.
    pub fn center(&self, scale: bool) -> Result<DataMatrix> {
        if scale && self.nrows() < 2 {
            return Err(Error::InvalidConfig(
                "variance scaling needs at least 2 rows".to_string(),
            ));
        }
        let mean = self
            .values
            .mean_axis(Axis(0))
            .expect("non-empty by construction");
        let mut values = &self.values - &mean.view().insert_axis(Axis(0));
        let mut zero_variance = Vec::new();
        let scale_vec = if scale {
            let std = values.std_axis(Axis(0), 1.0);
            let mut divisors = Array1::ones(std.len());
            for (c, &s) in std.iter().enumerate() {
                let floor = 1e-12 * mean[c].abs().max(1.0);
                if s <= floor {
                    zero_variance.push(c);
                } else {
                    divisors[c] = s;
                }
            }
            for (mut col, &d) in values.columns_mut().into_iter().zip(divisors.iter()) {
                if d != 1.0 {
                    col.mapv_inplace(|v| v / d);
                }
            }
            Some(divisors)
        } else {
            None
        };
        Ok(DataMatrix {
            values,
            mean,
            scale: scale_vec,
            zero_variance,
            covariance: OnceLock::new(),
        })
    }

    /// Copies a subset of rows (batch view). Stored mean and scale carry over.
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        let rows: Vec<_> = indices.iter().map(|&i| self.values.row(i)).collect();
        let values = ndarray::stack(Axis(0), &rows).expect("rows share a length");
        DataMatrix {
            values,
            mean: self.mean.clone(),
            scale: self.scale.clone(),
            zero_variance: self.zero_variance.clone(),
            covariance: OnceLock::new(),
        }
    }

    /// ZCA whitening via an eigendecomposition of the sample covariance.
    /// Returns the whitened matrix and the symmetric whitening map `K` with
    /// `X_white = X K`. Eigenvalues below `1e-12 * max` are clamped.
    pub fn whiten(&self) -> Result<(DataMatrix, Array2<f64>)> {
        let cov = self.covariance();
        let (eigenvalues, vectors) = linalg::eigh_symmetric(cov);
        let max = eigenvalues.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::InvalidConfig(
                "cannot whiten a zero-variance matrix".to_string(),
            ));
        }
        let floor = 1e-12 * max;
        let inv_sqrt = eigenvalues.mapv(|l| 1.0 / l.max(floor).sqrt());
        // K = V diag(1/sqrt(l)) V^T
        let scaled = &vectors * &inv_sqrt.view().insert_axis(Axis(0));
        let k = scaled.dot(&vectors.t());
        let values = self.values.dot(&k);
        Ok((
            DataMatrix {
                values,
                mean: self.mean.clone(),
                scale: self.scale.clone(),
                zero_variance: self.zero_variance.clone(),
                covariance: OnceLock::new(),
            },
            k,
        ))
    }
}

/// Embeds the signal into overlapping windows: row `r` holds samples
/// `r*shift .. r*shift + window_length` (0-based), giving
/// `floor((L - L_w)/L_sft) + 1` rows.
pub fn hankelise(signal: &Signal, config: &HankelConfig) -> Result<DataMatrix> {
    let rows = config.row_count(signal.len())?;
    let cols = config.window_length;
    let samples = signal.samples();
    let mut values = Array2::zeros((rows, cols));
    for r in 0..rows {
        let start = r * config.shift;
        values
            .row_mut(r)
            .iter_mut()
            .zip(&samples[start..start + cols])
            .for_each(|(dst, &src)| *dst = src);
    }
    DataMatrix::from_rows(values)
}
