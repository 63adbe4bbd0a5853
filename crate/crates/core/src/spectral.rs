//! Power spectra of component vectors and the spectral penalty.
//!
//! The spectrum of a component vector `w` of length `N` is the squared
//! modulus of its unnormalised DFT, `b(w)_k = |sum_n w_n e^{-2 pi i k n / N}|^2`.
//! The penalty against previously extracted components is
//! `alpha * sum_j b(w)^T b(w_j)`, a quadratic form `alpha w^T B w` in `w`
//! with `B = sum_k c_k M_k`, `c_k = sum_j b(w_j)_k`, `M_k = Re(f_k f_k^H)`.
//! The gradient `2 alpha B w` is applied matrix-free through the DFT; the
//! Hessian `2 alpha B` materialises `B` by direct trigonometric sums, which
//! doubles as an independent route for cross-checking the gradient.

use std::cell::RefCell;

use ndarray::{Array1, Array2};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn dft_forward(w: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = w.iter().map(|&x| Complex::new(x, 0.0)).collect();
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_forward(w.len());
        fft.process(&mut buf);
    });
    buf
}

/// Unnormalised inverse DFT (plain conjugate-exponent sum, no 1/N).
fn dft_inverse(buf: &mut [Complex<f64>]) {
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_inverse(buf.len());
        fft.process(buf);
    });
}

/// The power spectrum `b(w)` of a component vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumVector {
    bins: Vec<f64>,
}

impl SpectrumVector {
    pub fn from_bins(bins: Vec<f64>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::EmptyInput);
        }
        if bins.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::NonFiniteInput {
                context: "spectrum bins",
            });
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Total power, `sum_k b_k` (equals `N w^T w` by Parseval).
    pub fn total_power(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn dot(&self, other: &SpectrumVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                context: "spectrum dot product",
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(self
            .bins
            .iter()
            .zip(&other.bins)
            .map(|(a, b)| a * b)
            .sum())
    }
}

/// Squared modulus of the unnormalised DFT of `w`.
pub fn power_spectrum(w: &[f64]) -> Result<SpectrumVector> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput {
            context: "power_spectrum input",
        });
    }
    let spectrum = dft_forward(w);
    SpectrumVector::from_bins(spectrum.iter().map(|c| c.norm_sqr()).collect())
}

/// Accumulated spectra of the components already extracted, plus the current
/// penalty weight.
#[derive(Debug, Clone)]
pub struct SpectralState {
    prior_spectra: Vec<SpectrumVector>,
    summed: Vec<f64>,
    alpha: f64,
}

impl SpectralState {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_spectra(alpha, Vec::new())
    }

    pub fn with_spectra(alpha: f64, spectra: Vec<SpectrumVector>) -> Result<Self> {
        let mut state = Self {
            prior_spectra: Vec::new(),
            summed: Vec::new(),
            alpha: 0.0,
        };
        state.set_alpha(alpha)?;
        for s in spectra {
            state.push(s)?;
        }
        Ok(state)
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "penalty weight must be non-negative, got {alpha}"
            )));
        }
        self.alpha = alpha;
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of components already extracted.
    pub fn len(&self) -> usize {
        self.prior_spectra.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior_spectra.is_empty()
    }

    pub fn spectra(&self) -> &[SpectrumVector] {
        &self.prior_spectra
    }

    /// Appends the spectrum of a newly accepted component.
    pub fn push(&mut self, spectrum: SpectrumVector) -> Result<()> {
        if let Some(first) = self.prior_spectra.first() {
            if spectrum.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    context: "spectral state push",
                    expected: first.len(),
                    got: spectrum.len(),
                });
            }
        } else {
            self.summed = vec![0.0; spectrum.len()];
        }
        for (acc, b) in self.summed.iter_mut().zip(spectrum.bins()) {
            *acc += b;
        }
        self.prior_spectra.push(spectrum);
        Ok(())
    }

    fn check_len(&self, w_len: usize) -> Result<()> {
        if !self.is_empty() && self.summed.len() != w_len {
            return Err(Error::DimensionMismatch {
                context: "penalty input",
                expected: self.summed.len(),
                got: w_len,
            });
        }
        Ok(())
    }

    /// `alpha * sum_j b(w)^T b(w_j)`; exactly 0 for the first component.
    pub fn penalty(&self, w: &[f64]) -> Result<f64> {
        self.check_len(w.len())?;
        if self.is_empty() {
            return Ok(0.0);
        }
        let b = power_spectrum(w)?;
        Ok(self.alpha
            * b.bins()
                .iter()
                .zip(&self.summed)
                .map(|(x, c)| x * c)
                .sum::<f64>())
    }

    /// Gradient `2 alpha B w`, applied matrix-free:
    /// `B w = Re(idft(c .* dft(w)))` with the unnormalised inverse DFT.
    pub fn penalty_gradient(&self, w: &[f64]) -> Result<Array1<f64>> {
        self.check_len(w.len())?;
        if self.is_empty() || self.alpha == 0.0 {
            return Ok(Array1::zeros(w.len()));
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: "penalty_gradient input",
            });
        }
        let mut buf = dft_forward(w);
        for (v, c) in buf.iter_mut().zip(&self.summed) {
            *v *= *c;
        }
        dft_inverse(&mut buf);
        Ok(Array1::from_iter(
            buf.iter().map(|c| 2.0 * self.alpha * c.re),
        ))
    }

    /// Gradient computed through the dense `B` route; used to cross-check the
    /// matrix-free evaluation.
    pub fn penalty_gradient_dense(&self, w: &[f64]) -> Result<Array1<f64>> {
        self.check_len(w.len())?;
        if self.is_empty() || self.alpha == 0.0 {
            return Ok(Array1::zeros(w.len()));
        }
        let b = self.dense_b(w.len());
        let wv = Array1::from_iter(w.iter().cloned());
        Ok(b.dot(&wv) * (2.0 * self.alpha))
    }

    /// Exact Hessian `2 alpha B`; the penalty is a quadratic form so this is
    /// never finite-differenced.
    pub fn penalty_hessian(&self, w: &[f64]) -> Result<Array2<f64>> {
        self.check_len(w.len())?;
        if self.is_empty() || self.alpha == 0.0 {
            return Ok(Array2::zeros((w.len(), w.len())));
        }
        Ok(self.dense_b(w.len()) * (2.0 * self.alpha))
    }

    /// Materialises `B = sum_k c_k M_k` by direct trigonometric sums.
    /// `B` is circulant: `B[m][n] = rho_{(m-n) mod N}` with
    /// `rho_t = sum_k c_k cos(2 pi k t / N)`. Kept free of the FFT so the two
    /// gradient routes stay independent.
    fn dense_b(&self, n: usize) -> Array2<f64> {
        let mut rho = vec![0.0; n];
        for (t, r) in rho.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, c) in self.summed.iter().enumerate() {
                acc += c * (2.0 * std::f64::consts::PI * (k as f64) * (t as f64) / n as f64).cos();
            }
            *r = acc;
        }
        let mut b = Array2::zeros((n, n));
        for m in 0..n {
            for t in 0..n {
                b[[m, t]] = rho[(m + n - t) % n];
            }
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Naive quadratic-time DFT, the oracle for the FFT-backed spectrum.
    fn naive_power_spectrum(w: &[f64]) -> Vec<f64> {
        let n = w.len();
        (0..n)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &x) in w.iter().enumerate() {
                    let angle = -2.0 * std::f64::consts::PI * (k as f64) * (i as f64) / n as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let b = power_spectrum(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for &bin in b.bins() {
            assert_abs_diff_eq!(bin, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dc_vector_spectrum() {
        let b = power_spectrum(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(b.bins()[0], 4.0, epsilon = 1e-12);
        for &bin in &b.bins()[1..] {
            assert_abs_diff_eq!(bin, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bin_one_cosine_concentrates_in_bins_1_and_7() {
        let n = 8;
        let scale = (2.0 / n as f64).sqrt();
        let w: Vec<f64> = (0..n)
            .map(|i| scale * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let b = power_spectrum(&w).unwrap();
        let oracle = naive_power_spectrum(&w);
        for (x, y) in b.bins().iter().zip(&oracle) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(b.bins()[1], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.bins()[7], 4.0, epsilon = 1e-12);
        for k in [0, 2, 3, 4, 5, 6] {
            assert_abs_diff_eq!(b.bins()[k], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_state_penalty_is_exactly_zero() {
        let state = SpectralState::new(3.5).unwrap();
        let w = [0.3, -0.7, 1.1];
        assert_eq!(state.penalty(&w).unwrap(), 0.0);
        assert!(state.penalty_gradient(&w).unwrap().iter().all(|&g| g == 0.0));
        assert!(state.penalty_hessian(&w).unwrap().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn impulse_state_penalty() {
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let mut state = SpectralState::new(1.0).unwrap();
        state.push(power_spectrum(&e1).unwrap()).unwrap();
        assert_abs_diff_eq!(state.penalty(&e1).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn disjoint_cosines_have_zero_penalty() {
        let n = 8;
        let scale = (2.0 / n as f64).sqrt();
        let cos_k = |k: usize| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    scale * (2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64).cos()
                })
                .collect()
        };
        let mut state = SpectralState::new(1.0).unwrap();
        state.push(power_spectrum(&cos_k(1)).unwrap()).unwrap();
        assert_abs_diff_eq!(state.penalty(&cos_k(2)).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn gradient_matches_quadratic_form_identity() {
        // penalty is quadratic, so hessian * w must equal the gradient
        let mut state = SpectralState::new(2.25).unwrap();
        let priors = [
            vec![0.4, -0.2, 0.8, 0.1, -0.5],
            vec![1.0, 0.0, -1.0, 0.5, 0.25],
        ];
        for p in &priors {
            state.push(power_spectrum(p).unwrap()).unwrap();
        }
        let w = [0.3, 0.9, -0.4, 0.2, -0.6];
        let g = state.penalty_gradient(&w).unwrap();
        let h = state.penalty_hessian(&w).unwrap();
        let hw = h.dot(&Array1::from_iter(w.iter().cloned()));
        for (a, b) in g.iter().zip(hw.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // and w^T g / 2 recovers the penalty value
        let wv = Array1::from_iter(w.iter().cloned());
        assert_abs_diff_eq!(
            0.5 * wv.dot(&g),
            state.penalty(&w).unwrap(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn dense_and_matrix_free_gradients_agree() {
        for n in [4usize, 8, 64, 257] {
            let mut state = SpectralState::new(1.0).unwrap();
            let prior: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
            state.push(power_spectrum(&prior).unwrap()).unwrap();
            let w: Vec<f64> = (0..n).map(|i| ((i * 5 + 1) % 13) as f64 / 13.0 - 0.5).collect();
            let g_free = state.penalty_gradient(&w).unwrap();
            let g_dense = state.penalty_gradient_dense(&w).unwrap();
            let norm = g_dense.dot(&g_dense).sqrt();
            let diff = (&g_free - &g_dense).mapv(|x| x * x).sum().sqrt();
            assert!(
                diff <= 1e-9 * norm,
                "n={n}: relative deviation {}",
                diff / norm
            );
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut state = SpectralState::new(1.0).unwrap();
        state
            .push(power_spectrum(&[1.0, 0.0, 0.0, 0.0]).unwrap())
            .unwrap();
        assert!(state.penalty(&[1.0, 0.0]).is_err());
        assert!(state
            .push(power_spectrum(&[1.0, 0.0]).unwrap())
            .is_err());
    }

    #[test]
    fn alpha_must_be_non_negative() {
        assert!(SpectralState::new(-1.0).is_err());
        let mut s = SpectralState::new(0.0).unwrap();
        assert!(s.set_alpha(f64::NAN).is_err());
    }
}
