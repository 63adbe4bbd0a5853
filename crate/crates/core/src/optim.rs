//! Deflation fitting of component vectors.
//!
//! Components are extracted one at a time. Each one minimises the penalised
//! objective `L_model(w) + L_sr(w)` over the unit sphere: the inner strategy
//! (steepest descent, damped Newton with an eigenvalue flip, or BFGS) steps
//! against the tangent-projected gradient and the iterate is renormalised
//! after every step, which handles the norm constraint by projection. The
//! penalty weight escalates geometrically across SUMT stages, warm-starting
//! each stage from the previous solution.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objectives::Objective;
use crate::signal::DataMatrix;
use crate::spectral::{power_spectrum, SpectralState};

/// Inner update strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SteepestDescent,
    Newton,
    Bfgs,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sd" | "steepest_descent" => Ok(Self::SteepestDescent),
            "newton" => Ok(Self::Newton),
            "bfgs" => Ok(Self::Bfgs),
            other => Err(Error::InvalidConfig(format!(
                "unknown optimiser {other:?}, expected sd, newton or bfgs"
            ))),
        }
    }
}

/// Fit configuration shared by all components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimConfig {
    pub strategy: Strategy,
    /// Step length for steepest descent.
    pub learning_rate: f64,
    /// Convergence tolerance on the tangent-projected gradient norm.
    pub tol: f64,
    /// Iteration cap per SUMT stage.
    pub max_inner_iters: usize,
    /// Initial penalty weight.
    pub sumt_alpha0: f64,
    /// Geometric escalation factor per stage (> 1).
    pub sumt_scale: f64,
    /// Number of SUMT stages.
    pub sumt_iters: usize,
    pub seed: u64,
    /// Rows sampled per inner iteration; full batch when absent.
    pub batch_size: Option<usize>,
    /// Orthogonalise each iterate against the previously extracted
    /// components.
    pub gram_schmidt: bool,
    /// Damping added to the flipped Hessian in Newton steps.
    pub hessian_damping: f64,
    /// When false the spectral penalty is forced to zero (single stage,
    /// alpha = 0); used by ablation runs.
    pub regularise: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::SteepestDescent,
            learning_rate: 1e-2,
            tol: 1e-6,
            max_inner_iters: 500,
            sumt_alpha0: 1.0,
            sumt_scale: 10.0,
            sumt_iters: 5,
            seed: 0,
            batch_size: None,
            gram_schmidt: false,
            hessian_damping: 1e-6,
            regularise: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_inner_iters == 0 {
            return bad("max inner iterations must be at least 1".to_string());
        }
        if !(self.sumt_alpha0.is_finite() && self.sumt_alpha0 > 0.0) {
            return bad(format!("sumt alpha0 must be positive, got {}", self.sumt_alpha0));
        }
        if !(self.sumt_scale.is_finite() && self.sumt_scale > 1.0) {
            return bad(format!("sumt scale must exceed 1, got {}", self.sumt_scale));
        }
        if self.sumt_iters == 0 {
            return bad("sumt stage count must be at least 1".to_string());
        }
        if !(self.hessian_damping.is_finite() && self.hessian_damping >= 0.0) {
            return bad(format!(
                "hessian damping must be non-negative, got {}",
                self.hessian_damping
            ));
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be at least 1".to_string());
        }
        Ok(())
    }

    fn alpha_schedule(&self) -> Vec<f64> {
        if !self.regularise {
            return vec![0.0];
        }
        (0..self.sumt_iters)
            .map(|s| self.sumt_alpha0 * self.sumt_scale.powi(s as i32))
            .collect()
    }
}

/// Per-component fit record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    /// Update steps attempted across all SUMT stages.
    pub iterations: usize,
    /// Model objective at the accepted component (penalty excluded).
    pub final_objective: f64,
    /// Spectral penalty at the accepted component and final alpha.
    pub final_penalty: f64,
    /// Tangent-projected gradient norm of the penalised objective,
    /// full batch.
    pub final_gradient_norm: f64,
    pub converged: bool,
    /// Penalty weight per SUMT stage.
    pub alpha_trace: Vec<f64>,
    /// Penalised objective at each accepted iterate, one list per stage.
    /// Not persisted.
    #[serde(skip)]
    pub stage_traces: Vec<Vec<f64>>,
}

/// Diagnostics for a whole fit, in extraction order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub components: Vec<ComponentDiagnostics>,
}

/// Orthogonalises `w` against an orthonormal basis and renormalises.
pub fn gram_schmidt_step(w: &Array1<f64>, basis: &[Array1<f64>]) -> Result<Array1<f64>> {
    let mut residual = w.clone();
    for b in basis {
        let coeff = residual.dot(b);
        residual.scaled_add(-coeff, b);
    }
    let norm = linalg::norm(&residual);
    if norm < 1e-12 {
        return Err(Error::DegenerateResidual { norm });
    }
    Ok(residual / norm)
}

/// Uniform sample of `batch_size` distinct row indices.
pub fn sample_batch<R: Rng + ?Sized>(
    l_h: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if batch_size == 0 || batch_size > l_h {
        return Err(Error::BatchSize {
            batch: batch_size,
            max: l_h,
        });
    }
    Ok(rand::seq::index::sample(rng, l_h, batch_size).into_vec())
}

/// Solves `(H~ + damping I) step = -grad` where `H~` has the eigenvalues of
/// `hess` flipped to their absolute values, so the step is a descent
/// direction even where the objective is non-convex.
pub fn newton_step(
    grad: &Array1<f64>,
    hess: &Array2<f64>,
    damping: f64,
) -> Result<Array1<f64>> {
    let (eigenvalues, vectors) = linalg::eigh_symmetric(hess);
    let flipped = eigenvalues.mapv(|l| l.abs() + damping);
    let max = flipped.iter().cloned().fold(0.0, f64::max);
    let min = flipped.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= f64::EPSILON * max || !min.is_finite() || min == 0.0 {
        return Err(Error::SingularSystem {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    let projected = vectors.t().dot(grad);
    let scaled = &projected / &flipped;
    Ok(-vectors.dot(&scaled))
}

/// Inverse-Hessian BFGS update. Skipped when the curvature `s . y` is not
/// safely positive.
pub fn bfgs_update(h_inv: &mut Array2<f64>, s: &Array1<f64>, y: &Array1<f64>) {
    let sy = s.dot(y);
    if sy <= 1e-10 {
        return;
    }
    let rho = 1.0 / sy;
    let hy = h_inv.dot(y);
    let yhy = y.dot(&hy);
    let n = s.len();
    for i in 0..n {
        for j in 0..n {
            h_inv[[i, j]] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

enum StageExit {
    Converged,
    Stabilised,
    Stalled,
    MaxIters,
}

struct Workspace<'a> {
    objective: &'a dyn Objective,
    state: &'a SpectralState,
}

impl Workspace<'_> {
    fn value(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<f64> {
        let slice = w.as_slice().expect("contiguous");
        Ok(self.objective.value(w, x)? + self.state.penalty(slice)?)
    }

    fn gradient(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array1<f64>> {
        let slice = w.as_slice().expect("contiguous");
        Ok(self.objective.gradient(w, x)? + self.state.penalty_gradient(slice)?)
    }

    fn hessian(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array2<f64>> {
        let slice = w.as_slice().expect("contiguous");
        Ok(self.objective.hessian(w, x)? + self.state.penalty_hessian(slice)?)
    }
}

fn project(w: &Array1<f64>, previous: &[Array1<f64>], orthogonalise: bool) -> Result<Array1<f64>> {
    if orthogonalise && !previous.is_empty() {
        gram_schmidt_step(w, previous)
    } else {
        let norm = linalg::norm(w);
        if norm < 1e-12 {
            return Err(Error::DegenerateResidual { norm });
        }
        Ok(w / norm)
    }
}

fn tangent(
    grad: &Array1<f64>,
    w: &Array1<f64>,
    previous: &[Array1<f64>],
    orthogonalise: bool,
) -> Array1<f64> {
    let mut t = grad - &(w * w.dot(grad));
    if orthogonalise {
        for b in previous {
            let coeff = t.dot(b);
            t.scaled_add(-coeff, b);
        }
    }
    t
}

/// Fits one component by SUMT over the penalised objective.
///
/// `state` supplies the spectra of previously extracted components and is
/// left at the final stage's penalty weight. `previous` holds the extracted
/// component vectors for Gram-Schmidt orthogonalisation.
pub fn fit_component(
    x: &DataMatrix,
    objective: &dyn Objective,
    state: &mut SpectralState,
    config: &OptimConfig,
    previous: &[Array1<f64>],
) -> Result<(Array1<f64>, ComponentDiagnostics)> {
    config.validate()?;
    let lw = x.ncols();
    let component = state.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(component as u64);

    // seeded init, re-drawn if it collapses under orthogonalisation
    let mut w = None;
    for _ in 0..32 {
        let draw = Array1::from_iter(
            (0..lw).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng)),
        );
        match project(&draw, previous, config.gram_schmidt) {
            Ok(v) => {
                w = Some(v);
                break;
            }
            Err(Error::DegenerateResidual { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut w = w.ok_or(Error::DegenerateResidual { norm: 0.0 })?;

    let alphas = config.alpha_schedule();
    let mut iterations = 0usize;
    let mut stage_traces = Vec::with_capacity(alphas.len());
    let mut last_exit = StageExit::MaxIters;

    for &alpha in &alphas {
        state.set_alpha(alpha)?;
        let ws = Workspace { objective, state };
        let mut h_inv = Array2::eye(lw);
        let mut f_cur = ws.value(&w, x)?;
        let g0 = ws.gradient(&w, x)?;
        let mut g_tan = tangent(&g0, &w, previous, config.gram_schmidt);
        let mut trace = vec![f_cur];
        let mut exit = StageExit::MaxIters;

        for _ in 0..config.max_inner_iters {
            if linalg::norm(&g_tan) <= config.tol {
                exit = StageExit::Converged;
                break;
            }

            // step quantities, on a row subset when batching is enabled
            let batch = match config.batch_size {
                Some(b) => {
                    let idx = sample_batch(x.nrows(), b, &mut rng)?;
                    Some(x.select_rows(&idx))
                }
                None => None,
            };
            let (f_base, g_tan_step) = match &batch {
                Some(xb) => {
                    let fb = ws.value(&w, xb)?;
                    let gb = ws.gradient(&w, xb)?;
                    (fb, tangent(&gb, &w, previous, config.gram_schmidt))
                }
                None => (f_cur, g_tan.clone()),
            };

            let mut direction = match config.strategy {
                Strategy::SteepestDescent => &g_tan_step * -config.learning_rate,
                Strategy::Bfgs => -h_inv.dot(&g_tan_step),
                Strategy::Newton => {
                    let h = match &batch {
                        Some(xb) => ws.hessian(&w, xb)?,
                        None => ws.hessian(&w, x)?,
                    };
                    newton_step(&g_tan_step, &h, config.hessian_damping)?
                }
            };
            if direction.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteStep {
                    component,
                    iteration: iterations,
                });
            }
            let mut slope = direction.dot(&g_tan_step);
            if slope >= 0.0 {
                // curvature model went bad; fall back to plain descent
                direction = &g_tan_step * -config.learning_rate;
                slope = direction.dot(&g_tan_step);
                if config.strategy == Strategy::Bfgs {
                    h_inv = Array2::eye(lw);
                }
            }

            iterations += 1;
            let mut accepted: Option<(Array1<f64>, f64)> = None;
            let mut tau = 1.0;
            for _ in 0..60 {
                let raw = &w + &(&direction * tau);
                match project(&raw, previous, config.gram_schmidt) {
                    Ok(cand) => {
                        let fc = match &batch {
                            Some(xb) => ws.value(&cand, xb)?,
                            None => ws.value(&cand, x)?,
                        };
                        if fc.is_finite() && fc <= f_base + 1e-4 * tau * slope {
                            accepted = Some((cand, fc));
                            break;
                        }
                    }
                    Err(Error::DegenerateResidual { .. }) => {}
                    Err(e) => return Err(e),
                }
                tau *= 0.5;
            }

            let Some((cand, fc)) = accepted else {
                exit = StageExit::Stalled;
                break;
            };

            let (f_new, g_new) = match &batch {
                Some(_) => (ws.value(&cand, x)?, ws.gradient(&cand, x)?),
                None => (fc, ws.gradient(&cand, x)?),
            };
            let g_tan_new = tangent(&g_new, &cand, previous, config.gram_schmidt);

            if config.strategy == Strategy::Bfgs {
                let y = match &batch {
                    Some(xb) => {
                        let gb_new = ws.gradient(&cand, xb)?;
                        tangent(&gb_new, &cand, previous, config.gram_schmidt) - &g_tan_step
                    }
                    None => &g_tan_new - &g_tan,
                };
                let s = &cand - &w;
                bfgs_update(&mut h_inv, &s, &y);
            }

            let stabilised = 1.0 - cand.dot(&w).abs() <= config.tol * config.tol;
            w = cand;
            f_cur = f_new;
            g_tan = g_tan_new;
            trace.push(f_cur);
            if stabilised {
                exit = StageExit::Stabilised;
                break;
            }
        }

        stage_traces.push(trace);
        last_exit = exit;
    }

    let norm = linalg::norm(&w);
    if (norm - 1.0).abs() > 1e-12 {
        w = &w / norm;
    }

    let final_objective = objective.value(&w, x)?;
    let final_penalty = state.penalty(w.as_slice().expect("contiguous"))?;
    let g_full = objective.gradient(&w, x)?
        + state.penalty_gradient(w.as_slice().expect("contiguous"))?;
    let final_gradient_norm = linalg::norm(&tangent(&g_full, &w, previous, config.gram_schmidt));
    let converged = matches!(last_exit, StageExit::Converged | StageExit::Stabilised)
        || final_gradient_norm <= config.tol;

    Ok((
        w,
        ComponentDiagnostics {
            iterations,
            final_objective,
            final_penalty,
            final_gradient_norm,
            converged,
            alpha_trace: alphas,
            stage_traces,
        },
    ))
}

/// Extracts `d` components by deflation: after each accepted component its
/// power spectrum joins the penalty state, so every later component is
/// penalised against all predecessors. Rows of the returned matrix are in
/// extraction order.
pub fn fit_all(
    x: &DataMatrix,
    objective: &dyn Objective,
    d: usize,
    config: &OptimConfig,
) -> Result<(Array2<f64>, FitDiagnostics)> {
    config.validate()?;
    let lw = x.ncols();
    if d < 1 || d > lw {
        return Err(Error::ComponentCount { d, max: lw });
    }
    let mut state = SpectralState::new(if config.regularise {
        config.sumt_alpha0
    } else {
        0.0
    })?;
    let mut previous: Vec<Array1<f64>> = Vec::new();
    let mut components = Vec::with_capacity(d);

    for i in 0..d {
        match fit_component(x, objective, &mut state, config, &previous) {
            Ok((w, diag)) => {
                state.push(power_spectrum(w.as_slice().expect("contiguous"))?)?;
                previous.push(w);
                components.push(diag);
            }
            Err(e) => {
                let iteration = match &e {
                    Error::NonFiniteStep { iteration, .. } => *iteration,
                    _ => 0,
                };
                return Err(Error::ComponentFailed {
                    component: i,
                    iteration,
                    message: e.to_string(),
                    solved: previous.iter().map(|w| w.to_vec()).collect(),
                });
            }
        }
    }

    let mut w = Array2::zeros((d, lw));
    for (i, row) in previous.iter().enumerate() {
        w.row_mut(i).assign(row);
    }
    Ok((w, FitDiagnostics { components }))
}
