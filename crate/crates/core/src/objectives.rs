//! Model objectives: value, gradient and Hessian of `L_model(w)` over the
//! rows of a centered data matrix, plus finite-difference fallbacks for
//! value-only objectives.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::signal::DataMatrix;

/// The objective contract consumed by the fitter.
///
/// Implementations must be pure in `(w, x)` and reentrant. `value` is the
/// quantity minimised; `gradient` and `hessian` are its exact derivatives in
/// `w` (or consistent approximations, see [`ValueOnlyObjective`]).
pub trait Objective {
    /// Identifier stored in persisted models and printed by diagnostics.
    fn name(&self) -> String;

    fn value(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<f64>;

    fn gradient(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array1<f64>>;

    fn hessian(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array2<f64>>;
}

fn check_dims(w: &Array1<f64>, x: &DataMatrix) -> Result<()> {
    if w.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            context: "objective evaluation",
            expected: x.ncols(),
            got: w.len(),
        });
    }
    Ok(())
}

/// Negated latent variance, `-(1/N) sum_j (w^T x_j)^2 = -w^T C w`.
///
/// Minimising it drives `w` toward the dominant variance direction of the
/// (zero-mean) data.
#[derive(Debug, Clone, Copy, Default)]
pub struct PcaObjective;

impl Objective for PcaObjective {
    fn name(&self) -> String {
        "pca".to_string()
    }

    fn value(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<f64> {
        check_dims(w, x)?;
        let cw = x.covariance().dot(w);
        Ok(-w.dot(&cw))
    }

    fn gradient(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array1<f64>> {
        check_dims(w, x)?;
        Ok(x.covariance().dot(w) * -2.0)
    }

    fn hessian(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array2<f64>> {
        check_dims(w, x)?;
        Ok(x.covariance() * -2.0)
    }
}

/// Non-quadratic contrast functions for the negentropy approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GFunc {
    /// `G(u) = log cosh(a u) / a`, `a` in `[1, 2]`.
    Logcosh { a: f64 },
    /// `G(u) = -exp(-u^2/2)`.
    Exp,
    /// `G(u) = u^4 / 4`.
    Quartic,
}

impl GFunc {
    /// `G(u)`. The logcosh branch uses
    /// `log cosh(v) = |v| + log(1 + e^{-2|v|}) - log 2`, finite for any `v`.
    pub fn g(&self, u: f64) -> f64 {
        match self {
            GFunc::Logcosh { a } => {
                let v = (a * u).abs();
                (v + (-2.0 * v).exp().ln_1p() - std::f64::consts::LN_2) / a
            }
            GFunc::Exp => -(-0.5 * u * u).exp(),
            GFunc::Quartic => 0.25 * u.powi(4),
        }
    }

    /// First derivative `g = G'`.
    pub fn g_prime(&self, u: f64) -> f64 {
        match self {
            GFunc::Logcosh { a } => (a * u).tanh(),
            GFunc::Exp => u * (-0.5 * u * u).exp(),
            GFunc::Quartic => u.powi(3),
        }
    }

    /// Second derivative `g' = G''`.
    pub fn g_second(&self, u: f64) -> f64 {
        match self {
            GFunc::Logcosh { a } => {
                let t = (a * u).tanh();
                a * (1.0 - t * t)
            }
            GFunc::Exp => (1.0 - u * u) * (-0.5 * u * u).exp(),
            GFunc::Quartic => 3.0 * u * u,
        }
    }

    /// `E[G(nu)]` for standard-normal `nu`. Closed forms for the exp and
    /// quartic contrasts; Simpson quadrature on `[-12, 12]` for logcosh.
    pub fn gaussian_reference(&self) -> f64 {
        match self {
            GFunc::Exp => -std::f64::consts::FRAC_1_SQRT_2,
            GFunc::Quartic => 0.75,
            GFunc::Logcosh { .. } => {
                let n = 801; // even interval count for Simpson
                let (lo, hi) = (-12.0, 12.0);
                let h = (hi - lo) / (n - 1) as f64;
                let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                let f = |u: f64| self.g(u) * norm * (-0.5 * u * u).exp();
                let mut acc = f(lo) + f(hi);
                for i in 1..n - 1 {
                    let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += weight * f(lo + h * i as f64);
                }
                acc * h / 3.0
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let GFunc::Logcosh { a } = self {
            if !(*a >= 1.0 && *a <= 2.0) {
                return Err(Error::InvalidConfig(format!(
                    "logcosh parameter a must lie in [1, 2], got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Contrast function plus its precomputed Gaussian reference.
#[derive(Debug, Clone, Copy)]
pub struct NegentropyConfig {
    pub g_function: GFunc,
    pub gaussian_reference: f64,
}

impl NegentropyConfig {
    pub fn new(g_function: GFunc) -> Result<Self> {
        g_function.validate()?;
        Ok(Self {
            g_function,
            gaussian_reference: g_function.gaussian_reference(),
        })
    }

    /// Overrides the stored reference (it must stay within 1e-4 of the
    /// analytic/quadrature value for the chosen contrast).
    pub fn with_reference(g_function: GFunc, reference: f64) -> Result<Self> {
        g_function.validate()?;
        let expected = g_function.gaussian_reference();
        if (reference - expected).abs() > 1e-4 {
            return Err(Error::InvalidConfig(format!(
                "gaussian reference {reference} deviates from {expected} by more than 1e-4"
            )));
        }
        Ok(Self {
            g_function,
            gaussian_reference: reference,
        })
    }
}

/// Negated squared negentropy approximation,
/// `-(E[G(w^T x)] - E[G(nu)])^2`.
#[derive(Debug, Clone, Copy)]
pub struct NegentropyObjective {
    config: NegentropyConfig,
}

impl NegentropyObjective {
    pub fn new(config: NegentropyConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &NegentropyConfig {
        &self.config
    }

    fn contrast_gap(&self, w: &Array1<f64>, x: &DataMatrix) -> (f64, Array1<f64>) {
        let g = &self.config.g_function;
        let n = x.nrows() as f64;
        let u = x.values().dot(w);
        let m = u.iter().map(|&v| g.g(v)).sum::<f64>() / n - self.config.gaussian_reference;
        let weights = u.mapv(|v| g.g_prime(v));
        let dm = x.values().t().dot(&weights) / n;
        (m, dm)
    }
}

impl Objective for NegentropyObjective {
    fn name(&self) -> String {
        match self.config.g_function {
            GFunc::Logcosh { a } => format!("negentropy(logcosh,a={a})"),
            GFunc::Exp => "negentropy(exp)".to_string(),
            GFunc::Quartic => "negentropy(quartic)".to_string(),
        }
    }

    fn value(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<f64> {
        check_dims(w, x)?;
        let g = &self.config.g_function;
        let n = x.nrows() as f64;
        let u = x.values().dot(w);
        let m = u.iter().map(|&v| g.g(v)).sum::<f64>() / n - self.config.gaussian_reference;
        Ok(-m * m)
    }

    fn gradient(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array1<f64>> {
        check_dims(w, x)?;
        let (m, dm) = self.contrast_gap(w, x);
        Ok(dm * (-2.0 * m))
    }

    fn hessian(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array2<f64>> {
        check_dims(w, x)?;
        let g = &self.config.g_function;
        let n = x.nrows() as f64;
        let (m, dm) = self.contrast_gap(w, x);
        let u = x.values().dot(w);
        let curv = u.mapv(|v| g.g_second(v));
        // sum_j g'(u_j) x_j x_j^T / N
        let weighted = x.values() * &curv.view().insert_axis(Axis(1));
        let d2m = x.values().t().dot(&weighted) / n;
        let outer = outer_product(&dm, &dm);
        Ok((outer + d2m * m) * -2.0)
    }
}

fn outer_product(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (n, m) = (a.len(), b.len());
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            out[[i, j]] = a[i] * b[j];
        }
    }
    out
}

/// Central finite differences `(f(w + h e_k) - f(w - h e_k)) / 2h`.
pub fn finite_difference_gradient<F>(f: F, w: &Array1<f64>, h: f64) -> Result<Array1<f64>>
where
    F: Fn(&Array1<f64>) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut grad = Array1::zeros(w.len());
    let mut probe = w.clone();
    for k in 0..w.len() {
        probe[k] = w[k] + h;
        let plus = f(&probe)?;
        probe[k] = w[k] - h;
        let minus = f(&probe)?;
        probe[k] = w[k];
        let slope = (plus - minus) / (2.0 * h);
        if !slope.is_finite() {
            return Err(Error::NonFiniteEvaluation { coordinate: k });
        }
        grad[k] = slope;
    }
    Ok(grad)
}

/// Second-order central stencil on value evaluations, symmetrised as
/// `(H + H^T)/2`.
pub fn finite_difference_hessian<F>(f: F, w: &Array1<f64>, h: f64) -> Result<Array2<f64>>
where
    F: Fn(&Array1<f64>) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let n = w.len();
    let f0 = f(w)?;
    let mut hess = Array2::zeros((n, n));
    let mut probe = w.clone();
    for k in 0..n {
        probe[k] = w[k] + h;
        let plus = f(&probe)?;
        probe[k] = w[k] - h;
        let minus = f(&probe)?;
        probe[k] = w[k];
        let second = (plus - 2.0 * f0 + minus) / (h * h);
        if !second.is_finite() {
            return Err(Error::NonFiniteEvaluation { coordinate: k });
        }
        hess[[k, k]] = second;
        for l in k + 1..n {
            probe[k] = w[k] + h;
            probe[l] = w[l] + h;
            let pp = f(&probe)?;
            probe[l] = w[l] - h;
            let pm = f(&probe)?;
            probe[k] = w[k] - h;
            probe[l] = w[l] + h;
            let mp = f(&probe)?;
            probe[l] = w[l] - h;
            let mm = f(&probe)?;
            probe[k] = w[k];
            probe[l] = w[l];
            let mixed = (pp - pm - mp + mm) / (4.0 * h * h);
            if !mixed.is_finite() {
                return Err(Error::NonFiniteEvaluation { coordinate: l });
            }
            hess[[k, l]] = mixed;
            hess[[l, k]] = mixed;
        }
    }
    Ok(hess)
}

/// Wraps a value-only objective with finite-difference derivatives
/// (default steps: 1e-6 for gradients, 1e-4 for Hessians).
pub struct ValueOnlyObjective<F>
where
    F: Fn(&Array1<f64>, &DataMatrix) -> Result<f64>,
{
    name: String,
    value_fn: F,
    gradient_step: f64,
    hessian_step: f64,
}

impl<F> ValueOnlyObjective<F>
where
    F: Fn(&Array1<f64>, &DataMatrix) -> Result<f64>,
{
    pub fn new(name: impl Into<String>, value_fn: F) -> Self {
        Self {
            name: name.into(),
            value_fn,
            gradient_step: 1e-6,
            hessian_step: 1e-4,
        }
    }

    pub fn with_steps(mut self, gradient_step: f64, hessian_step: f64) -> Self {
        self.gradient_step = gradient_step;
        self.hessian_step = hessian_step;
        self
    }
}

impl<F> Objective for ValueOnlyObjective<F>
where
    F: Fn(&Array1<f64>, &DataMatrix) -> Result<f64>,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn value(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<f64> {
        check_dims(w, x)?;
        (self.value_fn)(w, x)
    }

    fn gradient(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array1<f64>> {
        check_dims(w, x)?;
        finite_difference_gradient(|v| (self.value_fn)(v, x), w, self.gradient_step)
    }

    fn hessian(&self, w: &Array1<f64>, x: &DataMatrix) -> Result<Array2<f64>> {
        check_dims(w, x)?;
        finite_difference_hessian(|v| (self.value_fn)(v, x), w, self.hessian_step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;

    /// Rows {(1,0),(-1,0),(2,0),(-2,0)}: covariance diag(2.5, 0).
    fn axis_data() -> DataMatrix {
        DataMatrix::from_rows(ndarray::arr2(&[
            [1.0, 0.0],
            [-1.0, 0.0],
            [2.0, 0.0],
            [-2.0, 0.0],
        ]))
        .unwrap()
    }

    #[test]
    fn pca_value_on_axis_data() {
        let x = axis_data();
        let pca = PcaObjective;
        assert_abs_diff_eq!(
            pca.value(&arr1(&[1.0, 0.0]), &x).unwrap(),
            -2.5,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            pca.value(&arr1(&[0.0, 1.0]), &x).unwrap(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn pca_gradient_and_hessian_on_axis_data() {
        let x = axis_data();
        let pca = PcaObjective;
        let g = pca.gradient(&arr1(&[1.0, 0.0]), &x).unwrap();
        assert_abs_diff_eq!(g[0], -5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-14);
        let h = pca.hessian(&arr1(&[1.0, 0.0]), &x).unwrap();
        assert_abs_diff_eq!(h[[0, 0]], -5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h[[1, 1]], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(h[[0, 1]], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pca_value_is_scale_quadratic() {
        let x = axis_data();
        let pca = PcaObjective;
        let w = arr1(&[0.6, 0.8]);
        let base = pca.value(&w, &x).unwrap();
        for c in [0.5, 2.0, -3.0] {
            let scaled = pca.value(&(&w * c), &x).unwrap();
            assert_abs_diff_eq!(scaled, c * c * base, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_references() {
        assert_abs_diff_eq!(GFunc::Quartic.gaussian_reference(), 0.75);
        assert_abs_diff_eq!(
            GFunc::Exp.gaussian_reference(),
            -0.7071067811865476,
            epsilon = 1e-15
        );
        // quadrature oracle values computed independently before the build
        assert_abs_diff_eq!(
            GFunc::Logcosh { a: 1.0 }.gaussian_reference(),
            0.374567207491438,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            GFunc::Logcosh { a: 1.5 }.gaussian_reference(),
            0.4672872417324351,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            GFunc::Logcosh { a: 2.0 }.gaussian_reference(),
            0.5283297831164206,
            epsilon = 1e-12
        );
    }

    #[test]
    fn logcosh_is_finite_for_huge_arguments() {
        let g = GFunc::Logcosh { a: 1.0 };
        for u in [1e4, 1e6, 1e8, -1e8] {
            let v = g.g(u);
            assert!(v.is_finite(), "G({u}) = {v}");
            assert_abs_diff_eq!(v, u.abs() - std::f64::consts::LN_2, epsilon = 1e-9);
            assert!(g.g_prime(u).is_finite());
            assert!(g.g_second(u).is_finite());
        }
    }

    #[test]
    fn logcosh_parameter_bounds() {
        assert!(NegentropyConfig::new(GFunc::Logcosh { a: 0.5 }).is_err());
        assert!(NegentropyConfig::new(GFunc::Logcosh { a: 2.5 }).is_err());
        assert!(NegentropyConfig::new(GFunc::Logcosh { a: 1.0 }).is_ok());
        assert!(NegentropyConfig::with_reference(GFunc::Quartic, 0.7).is_err());
        assert!(NegentropyConfig::with_reference(GFunc::Quartic, 0.750001).is_ok());
    }

    #[test]
    fn negentropy_value_is_never_positive() {
        let x = axis_data();
        for g in [GFunc::Logcosh { a: 1.0 }, GFunc::Exp, GFunc::Quartic] {
            let obj = NegentropyObjective::new(NegentropyConfig::new(g).unwrap());
            for w in [arr1(&[1.0, 0.0]), arr1(&[0.6, -0.8]), arr1(&[0.0, 1.0])] {
                assert!(obj.value(&w, &x).unwrap() <= 0.0);
            }
        }
    }

    #[test]
    fn negentropy_vanishes_on_gaussian_data() {
        // 1e5 standard-normal samples in one dimension: the contrast gap m is
        // O(1/sqrt(N)), so the value -m^2 sits within 5e-3 of zero.
        use rand::SeedableRng;
        use rand_distr::Distribution;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::StandardNormal;
        let rows: Vec<f64> = (0..100_000)
            .map(|_| Distribution::<f64>::sample(&normal, &mut rng))
            .collect();
        let x = DataMatrix::from_rows(Array2::from_shape_vec((100_000, 1), rows).unwrap())
            .unwrap();
        let obj = NegentropyObjective::new(
            NegentropyConfig::new(GFunc::Logcosh { a: 1.0 }).unwrap(),
        );
        let v = obj.value(&arr1(&[1.0]), &x).unwrap();
        assert!(v.abs() <= 5e-3, "value {v}");
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let f = |w: &Array1<f64>| Ok(w.dot(w));
        let g = finite_difference_gradient(f, &arr1(&[1.0, 2.0]), 1e-5).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-8);
    }

    #[test]
    fn fd_gradient_of_constant_is_zero() {
        let f = |_: &Array1<f64>| Ok(3.25);
        let g = finite_difference_gradient(f, &arr1(&[1.0, -1.0, 4.0]), 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fd_gradient_matches_pca_gradient() {
        let x = axis_data();
        let pca = PcaObjective;
        let w = arr1(&[1.0, 0.0]);
        let g = finite_difference_gradient(|v| pca.value(v, &x), &w, 1e-6).unwrap();
        assert_abs_diff_eq!(g[0], -5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_gradient_reports_non_finite_coordinate() {
        // finite along coordinate 0, NaN as soon as coordinate 1 goes negative
        let f = |w: &Array1<f64>| Ok(w[0] + w[1].sqrt());
        let err = finite_difference_gradient(f, &arr1(&[0.0, 0.0]), 1e-6).unwrap_err();
        match err {
            Error::NonFiniteEvaluation { coordinate } => assert_eq!(coordinate, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fd_hessian_of_quadratic() {
        let f = |w: &Array1<f64>| Ok(w.dot(w));
        let h = finite_difference_hessian(f, &arr1(&[0.3, -1.2, 0.7]), 1e-4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 } else { 0.0 };
                assert_abs_diff_eq!(h[[i, j]], expect, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn fd_hessian_matches_pca_hessian() {
        let x = axis_data();
        let pca = PcaObjective;
        let w = arr1(&[0.8, 0.6]);
        let h = finite_difference_hessian(|v| pca.value(v, &x), &w, 1e-4).unwrap();
        let exact = pca.hessian(&w, &x).unwrap();
        for (a, b) in h.iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-4);
        }
    }

    #[test]
    fn fd_hessian_of_linear_is_zero() {
        let f = |w: &Array1<f64>| Ok(3.0 * w[0] - 2.0 * w[1]);
        let h = finite_difference_hessian(f, &arr1(&[1.0, 1.0]), 1e-4).unwrap();
        for v in h.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn value_only_wrapper_approximates_pca() {
        let x = axis_data();
        let pca = PcaObjective;
        let wrapped = ValueOnlyObjective::new("pca-by-value", move |w, x| pca.value(w, x));
        let w = arr1(&[0.6, 0.8]);
        let g = wrapped.gradient(&w, &x).unwrap();
        let exact = PcaObjective.gradient(&w, &x).unwrap();
        for (a, b) in g.iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        let h = wrapped.hessian(&w, &x).unwrap();
        let exact_h = PcaObjective.hessian(&w, &x).unwrap();
        for (a, b) in h.iter().zip(exact_h.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-4);
        }
    }
}
