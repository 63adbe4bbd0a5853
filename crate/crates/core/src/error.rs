use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the fitting pipeline and its I/O surfaces.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse failure in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("non-finite value {value} at sample index {index}")]
    NonFiniteSample { index: usize, value: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("window length {window} exceeds signal length {signal}")]
    WindowTooLong { window: usize, signal: usize },

    #[error("non-finite input in {context}")]
    NonFiniteInput { context: &'static str },

    #[error("non-finite function evaluation at coordinate {coordinate}")]
    NonFiniteEvaluation { coordinate: usize },

    #[error("residual norm {norm:.3e} is below 1e-12: vector lies in the span of the basis")]
    DegenerateResidual { norm: f64 },

    #[error("batch size {batch} out of range 1..={max}")]
    BatchSize { batch: usize, max: usize },

    #[error("component count {d} out of range 1..={max}")]
    ComponentCount { d: usize, max: usize },

    #[error("linear system is singular after damping (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("non-finite step for component {component} at iteration {iteration}")]
    NonFiniteStep { component: usize, iteration: usize },

    #[error("component {component} failed at iteration {iteration}: {message}")]
    ComponentFailed {
        component: usize,
        iteration: usize,
        message: String,
        /// Rows solved before the failure, in extraction order.
        solved: Vec<Vec<f64>>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("model file {path}: {message}")]
    ModelSchema { path: PathBuf, message: String },

    #[error("unsupported schema_version {found}, expected {expected}")]
    SchemaVersion { found: u64, expected: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
