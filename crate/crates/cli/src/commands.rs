//! The five pipeline commands.

use std::fmt::Write as _;
use std::path::PathBuf;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spectral_lvm::{
    finite_difference_gradient, finite_difference_hessian, hankelise, power_spectrum,
    DataMatrix, Error, FittedModel, Objective, PreprocessOptions, Result, SpectralState,
};

use crate::config::{Collapse, RunConfig};
use crate::svg;

/// Exit status used by `main`: 0 success, 1 error, 2 ran but did not
/// converge.
pub type ExitStatus = u8;

fn write_output(path: Option<&PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|source| Error::Write {
            path: p.clone(),
            source,
        }),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn csv_row(values: impl Iterator<Item = f64>) -> String {
    let mut line = String::new();
    for (i, v) in values.enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "{v}");
    }
    line
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<ExitStatus> {
    let signal = cfg.load_input()?;
    let hankel = cfg.hankel()?;
    let d = cfg.require_components()?;
    let objective = cfg.build_objective()?;
    let optim = cfg.optim_config();
    let pre = PreprocessOptions {
        scale: cfg.scale,
        whiten: cfg.whiten,
    };

    let model = FittedModel::fit(&signal, &hankel, objective.as_ref(), d, &optim, &pre)?;

    let default_out = PathBuf::from("model.json");
    let out = cfg.out.as_ref().unwrap_or(&default_out);
    model.save(out)?;

    println!("wrote {}", out.display());
    println!(
        "{:>9}  {:>10}  {:>14}  {:>14}  {:>12}  converged",
        "component", "iterations", "objective", "penalty", "grad_norm"
    );
    let mut all_converged = true;
    for (i, diag) in model.diagnostics().components.iter().enumerate() {
        all_converged &= diag.converged;
        println!(
            "{:>9}  {:>10}  {:>14.6e}  {:>14.6e}  {:>12.3e}  {}",
            i + 1,
            diag.iterations,
            diag.final_objective,
            diag.final_penalty,
            diag.final_gradient_norm,
            if diag.converged { "yes" } else { "no" }
        );
    }
    Ok(if all_converged { 0 } else { 2 })
}

pub fn cmd_transform(cfg: &RunConfig) -> Result<ExitStatus> {
    let model = FittedModel::load(cfg.require_model()?)?;
    let signal = cfg.load_input()?;
    let z = model.transform(&signal)?;

    let mut out = String::new();
    let header: Vec<String> = (1..=z.ncols()).map(|i| format!("z{i}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in z.rows() {
        out.push_str(&csv_row(row.iter().cloned()));
        out.push('\n');
    }
    write_output(cfg.out.as_ref(), &out)?;
    Ok(0)
}

pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<ExitStatus> {
    let model = FittedModel::load(cfg.require_model()?)?;
    let signal = cfg.load_input()?;
    let z = model.transform(&signal)?;
    let rows = model.inverse_transform(&z)?;

    let mut out = String::new();
    match cfg.collapse {
        Collapse::Diagonal => {
            let collapsed = spectral_lvm::model::diagonal_average(&rows, model.hankel().shift);
            out.push_str("x\n");
            for v in collapsed {
                let _ = writeln!(out, "{v}");
            }
        }
        Collapse::None => {
            let header: Vec<String> = (1..=rows.ncols()).map(|i| format!("x{i}")).collect();
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows.rows() {
                out.push_str(&csv_row(row.iter().cloned()));
                out.push('\n');
            }
        }
    }
    write_output(cfg.out.as_ref(), &out)?;
    Ok(0)
}

pub fn cmd_spectra(cfg: &RunConfig) -> Result<ExitStatus> {
    let model = FittedModel::load(cfg.require_model()?)?;
    let signal = cfg.load_input()?;
    let spectra = model.source_spectra(&signal)?;

    let mut out = String::new();
    out.push_str("component,bin,frequency_hz,power\n");
    for (i, spectrum) in spectra.iter().enumerate() {
        for (k, &p) in spectrum.power.iter().enumerate() {
            let freq = match &spectrum.frequency_hz {
                Some(f) => format!("{}", f[k]),
                None => String::new(),
            };
            let _ = writeln!(out, "{},{k},{freq},{p}", i + 1);
        }
    }
    write_output(cfg.out.as_ref(), &out)?;

    if let Some(svg_path) = &cfg.svg {
        let chart = svg::render_spectra(&spectra);
        std::fs::write(svg_path, chart).map_err(|source| Error::Write {
            path: svg_path.clone(),
            source,
        })?;
    }
    Ok(0)
}

/// Objective wrapper with a deliberately wrong gradient and Hessian; the
/// negative-control fixture for the derivative checker.
struct CorruptedObjective {
    inner: Box<dyn Objective>,
}

impl Objective for CorruptedObjective {
    fn name(&self) -> String {
        format!("{} (corrupted)", self.inner.name())
    }

    fn value(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<f64> {
        self.inner.value(w, x)
    }

    fn gradient(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array1<f64>> {
        let mut g = self.inner.gradient(w, x)?;
        g[0] += 1e-3;
        Ok(g)
    }

    fn hessian(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array2<f64>> {
        let mut h = self.inner.hessian(w, x)?;
        h[[0, 0]] += 1e-2;
        Ok(h)
    }
}

fn rel_l2(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let norm = b.mapv(|x| x * x).sum().sqrt();
    diff / norm.max(1e-300)
}

fn rel_frob(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let norm = b.mapv(|x| x * x).sum().sqrt();
    diff / norm.max(1e-300)
}

const GRAD_THRESHOLD: f64 = 1e-5;
const HESS_THRESHOLD: f64 = 1e-3;

pub fn cmd_check_grad(cfg: &RunConfig, points: usize, corrupt: bool) -> Result<ExitStatus> {
    let lw = cfg.window.unwrap_or(16);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let x = match &cfg.input {
        Some(_) => {
            let signal = cfg.load_input()?;
            let hankel = cfg.hankel()?;
            hankelise(&signal, &hankel)?.center(false)?
        }
        None => {
            let values = Array2::from_shape_fn((256, lw), |_| {
                Distribution::<f64>::sample(&StandardNormal, &mut rng)
            });
            DataMatrix::from_rows(values)?.center(false)?
        }
    };
    let lw = x.ncols();

    let mut objective = cfg.build_objective()?;
    if corrupt {
        objective = Box::new(CorruptedObjective { inner: objective });
    }

    let mut random_unit = |rng: &mut ChaCha8Rng| {
        let v = Array1::from_iter(
            (0..lw).map(|_| Distribution::<f64>::sample(&StandardNormal, rng)),
        );
        let norm = v.dot(&v).sqrt();
        v / norm
    };

    let mut max_obj_grad = 0.0f64;
    let mut max_obj_hess = 0.0f64;
    for _ in 0..points {
        let w = random_unit(&mut rng);
        let analytic = objective.gradient(&w, &x)?;
        let fd = finite_difference_gradient(|v| objective.value(v, &x), &w, 1e-6)?;
        max_obj_grad = max_obj_grad.max(rel_l2(&analytic, &fd));
        let analytic_h = objective.hessian(&w, &x)?;
        let fd_h = finite_difference_hessian(|v| objective.value(v, &x), &w, 1e-4)?;
        max_obj_hess = max_obj_hess.max(rel_frob(&analytic_h, &fd_h));
    }

    let priors: Vec<_> = (0..3)
        .map(|_| {
            let v = random_unit(&mut rng);
            power_spectrum(v.as_slice().expect("contiguous"))
        })
        .collect::<Result<_>>()?;
    let state = SpectralState::with_spectra(cfg.alpha0, priors)?;
    let mut max_pen_grad = 0.0f64;
    let mut max_pen_hess = 0.0f64;
    for _ in 0..points {
        let w = random_unit(&mut rng);
        let analytic = state.penalty_gradient(w.as_slice().expect("contiguous"))?;
        let fd = finite_difference_gradient(
            |v| state.penalty(v.as_slice().expect("contiguous")),
            &w,
            1e-6,
        )?;
        max_pen_grad = max_pen_grad.max(rel_l2(&analytic, &fd));
        let analytic_h = state.penalty_hessian(w.as_slice().expect("contiguous"))?;
        let fd_h = finite_difference_hessian(
            |v| state.penalty(v.as_slice().expect("contiguous")),
            &w,
            1e-4,
        )?;
        max_pen_hess = max_pen_hess.max(rel_frob(&analytic_h, &fd_h));
    }

    println!(
        "objective {}: max gradient error {max_obj_grad:.3e}, max hessian error {max_obj_hess:.3e}",
        objective.name()
    );
    println!(
        "spectral penalty: max gradient error {max_pen_grad:.3e}, max hessian error {max_pen_hess:.3e}"
    );
    let pass = max_obj_grad <= GRAD_THRESHOLD
        && max_pen_grad <= GRAD_THRESHOLD
        && max_obj_hess <= HESS_THRESHOLD
        && max_pen_hess <= HESS_THRESHOLD;
    println!(
        "{} (gradient threshold {GRAD_THRESHOLD:.0e}, hessian threshold {HESS_THRESHOLD:.0e})",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(if pass { 0 } else { 1 })
}
