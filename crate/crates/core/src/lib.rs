//! Linear latent variable models for single-channel time series, with a
//! spectral regulariser that keeps the extracted components spectrally
//! disjoint.
//!
//! A single-channel signal is embedded into a data matrix by hankelisation
//! (sliding windows), centered, and decomposed one component at a time. Each
//! component direction `w` minimises a user-chosen model objective plus a
//! penalty on the dot product between the power spectrum of `w` and the power
//! spectra of the components extracted before it, so later components are
//! pushed into unused frequency bands instead of duplicating earlier ones.
//! The penalty weight is escalated over a fixed schedule (SUMT) while the
//! unit-norm constraint is handled by renormalising after every update step.
//!
//! The crate provides:
//!
//! - [`signal`]: signal loading, hankelisation, centering and scaling.
//! - [`objectives`]: the objective contract (value / gradient / Hessian),
//!   built-in variance and negentropy objectives, and finite-difference
//!   fallbacks.
//! - [`spectral`]: power spectra of component vectors and the spectral
//!   penalty with its exact derivatives.
//! - [`optim`]: the deflation fitter with steepest-descent, Newton and BFGS
//!   update strategies.
//! - [`model`]: the fitted model with `transform` / `inverse_transform`,
//!   latent source spectra and JSON persistence.

pub mod error;
pub mod linalg;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod signal;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{diagonal_average, FittedModel, PreprocessOptions, SourceSpectrum};
pub use objectives::{
    finite_difference_gradient, finite_difference_hessian, GFunc, NegentropyConfig,
    NegentropyObjective, Objective, PcaObjective, ValueOnlyObjective,
};
pub use optim::{
    fit_all, fit_component, ComponentDiagnostics, FitDiagnostics, OptimConfig, Strategy,
};
pub use signal::{hankelise, load_signal, DataMatrix, HankelConfig, Signal, SignalFormat};
pub use spectral::{power_spectrum, SpectralState, SpectrumVector};
