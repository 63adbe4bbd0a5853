//! The fitted model: preprocessing + deflation fit, latent transforms,
//! source spectra and JSON persistence.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objectives::Objective;
use crate::optim::{fit_all, FitDiagnostics, OptimConfig};
use crate::signal::{hankelise, HankelConfig, Signal};
use crate::spectral::{power_spectrum, SpectrumVector};

/// Preprocessing switches applied between hankelisation and fitting.
/// Centering is always applied; variance scaling and whitening are opt-in.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreprocessOptions {
    pub scale: bool,
    pub whiten: bool,
}

/// A fitted linear latent variable model.
///
/// Immutable after `fit`; the transform methods are pure.
#[derive(Debug, Clone)]
pub struct FittedModel {
    hankel: HankelConfig,
    d: usize,
    mean: Array1<f64>,
    scale: Option<Array1<f64>>,
    w: Array2<f64>,
    a: Array2<f64>,
    objective: String,
    optim: OptimConfig,
    diagnostics: FitDiagnostics,
    spectra: Vec<SpectrumVector>,
}

fn stage(label: &'static str) -> impl FnOnce(Error) -> Error {
    move |source| Error::Stage {
        stage: label,
        source: Box::new(source),
    }
}

impl FittedModel {
    /// Runs hankelise -> center (-> scale/whiten) -> deflation fit, then
    /// derives the reconstruction map as the Moore-Penrose pseudoinverse of
    /// the component matrix.
    ///
    /// With whitening enabled the fit runs in whitened coordinates and the
    /// whitening map is folded into the stored components (rows renormalised
    /// to unit length), so the persisted model needs no extra state.
    pub fn fit(
        signal: &Signal,
        hankel: &HankelConfig,
        objective: &dyn Objective,
        d: usize,
        optim: &OptimConfig,
        pre: &PreprocessOptions,
    ) -> Result<FittedModel> {
        optim.validate()?;
        if d < 1 || d > hankel.window_length {
            return Err(Error::ComponentCount {
                d,
                max: hankel.window_length,
            });
        }
        let raw = hankelise(signal, hankel).map_err(stage("hankelisation"))?;
        let x = raw.center(pre.scale).map_err(stage("centering"))?;
        let (x_fit, whitening) = if pre.whiten {
            let (white, k) = x.whiten().map_err(stage("whitening"))?;
            (white, Some(k))
        } else {
            (x, None)
        };

        let (mut w, diagnostics) =
            fit_all(&x_fit, objective, d, optim).map_err(stage("fitting"))?;

        if let Some(k) = whitening {
            // z = w . (K x) = (K w) . x for the symmetric whitening map
            for mut row in w.rows_mut() {
                let folded = k.dot(&row.to_owned());
                let norm = folded.dot(&folded).sqrt();
                row.assign(&(&folded / norm));
            }
        }

        let mut spectra = Vec::with_capacity(d);
        for row in w.rows() {
            spectra.push(power_spectrum(row.to_owned().as_slice().expect("contiguous"))?);
        }
        let a = linalg::pinv_rows(&w);
        let (mean, scale) = (x_fit.mean().clone(), x_fit.scale().cloned());

        Ok(FittedModel {
            hankel: *hankel,
            d,
            mean,
            scale,
            w,
            a,
            objective: objective.name(),
            optim: optim.clone(),
            diagnostics,
            spectra,
        })
    }

    pub fn hankel(&self) -> &HankelConfig {
        &self.hankel
    }

    pub fn component_count(&self) -> usize {
        self.d
    }

    pub fn window_length(&self) -> usize {
        self.hankel.window_length
    }

    /// Encoding matrix, one unit-norm component per row (d x L_w).
    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    /// Reconstruction map, the pseudoinverse of `w` (L_w x d).
    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn scale(&self) -> Option<&Array1<f64>> {
        self.scale.as_ref()
    }

    pub fn objective_name(&self) -> &str {
        &self.objective
    }

    pub fn optim_config(&self) -> &OptimConfig {
        &self.optim
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn spectra(&self) -> &[SpectrumVector] {
        &self.spectra
    }

    fn apply_preprocessing(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.window_length() {
            return Err(Error::DimensionMismatch {
                context: "transform input",
                expected: self.window_length(),
                got: rows.ncols(),
            });
        }
        let mut centered = rows - &self.mean.view().insert_axis(Axis(0));
        if let Some(scale) = &self.scale {
            centered = centered / &scale.view().insert_axis(Axis(0));
        }
        Ok(centered)
    }

    /// Latent encoding of pre-hankelised rows: stored centering/scaling, then
    /// `Z = X W^T`.
    pub fn transform_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        let centered = self.apply_preprocessing(rows)?;
        Ok(centered.dot(&self.w.t()))
    }

    /// Latent encoding of a raw signal (hankelised with the stored window).
    pub fn transform(&self, signal: &Signal) -> Result<Array2<f64>> {
        let x = hankelise(signal, &self.hankel)?;
        self.transform_rows(x.values())
    }

    /// Decodes latent rows back to the data space: `X^ = Z A^T`, then
    /// un-scale and un-center.
    pub fn inverse_transform(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.d {
            return Err(Error::DimensionMismatch {
                context: "inverse_transform input",
                expected: self.d,
                got: z.ncols(),
            });
        }
        let mut rows = z.dot(&self.a.t());
        if let Some(scale) = &self.scale {
            rows = rows * &scale.view().insert_axis(Axis(0));
        }
        rows = rows + &self.mean.view().insert_axis(Axis(0));
        Ok(rows)
    }

    /// Power spectra of the latent source signals (one column of `Z` per
    /// component, over hankel-row time). Bins run over the one-sided range
    /// `0 ..= L_H / 2`; the frequency axis is attached when the signal knows
    /// its sample rate, with the effective rate `fs / shift`.
    pub fn source_spectra(&self, signal: &Signal) -> Result<Vec<SourceSpectrum>> {
        let z = self.transform(signal)?;
        let l_h = z.nrows();
        let half = l_h / 2;
        let mut out = Vec::with_capacity(self.d);
        for column in z.columns() {
            let col = column.to_owned();
            let full = power_spectrum(col.as_slice().expect("contiguous"))?;
            let power: Vec<f64> = full.bins()[..=half].to_vec();
            let frequency_hz = signal.sample_rate_hz().map(|fs| {
                let effective = fs / self.hankel.shift as f64;
                (0..=half).map(|k| k as f64 * effective / l_h as f64).collect()
            });
            out.push(SourceSpectrum {
                power,
                frequency_hz,
            });
        }
        Ok(out)
    }

    /// Writes the model as a JSON document.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile::from_model(self);
        let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::ModelSchema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        text.push('\n');
        std::fs::write(path, text).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a model back; the decimal round trip reproduces every matrix
    /// entry bitwise.
    pub fn load(path: &Path) -> Result<FittedModel> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        #[derive(Deserialize)]
        struct VersionProbe {
            schema_version: u64,
        }
        let probe: VersionProbe =
            serde_json::from_str(&text).map_err(|e| Error::ModelSchema {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        if probe.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: probe.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::ModelSchema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        file.into_model(path)
    }
}

/// One latent source spectrum: one-sided power bins plus the optional
/// frequency axis.
#[derive(Debug, Clone)]
pub struct SourceSpectrum {
    pub power: Vec<f64>,
    pub frequency_hz: Option<Vec<f64>>,
}

/// Collapses a reconstructed hankel matrix back to a signal by averaging the
/// entries that came from the same sample position. Positions never covered
/// by a window (possible when `shift > window`) come back as NaN.
pub fn diagonal_average(rows: &Array2<f64>, shift: usize) -> Vec<f64> {
    let (l_h, l_w) = (rows.nrows(), rows.ncols());
    if l_h == 0 {
        return Vec::new();
    }
    let len = shift * (l_h - 1) + l_w;
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for (r, row) in rows.rows().into_iter().enumerate() {
        let start = r * shift;
        for (c, &v) in row.iter().enumerate() {
            sums[start + c] += v;
            counts[start + c] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { f64::NAN })
        .collect()
}

const SCHEMA_VERSION: u64 = 1;

/// Wire format of a persisted model.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u64,
    window_length: usize,
    shift: usize,
    d: usize,
    mean: Vec<f64>,
    scale: Option<Vec<f64>>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    objective: String,
    optim_config: OptimConfig,
    diagnostics: FitDiagnostics,
    spectra: Vec<Vec<f64>>,
}

impl ModelFile {
    fn from_model(model: &FittedModel) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            window_length: model.hankel.window_length,
            shift: model.hankel.shift,
            d: model.d,
            mean: model.mean.to_vec(),
            scale: model.scale.as_ref().map(|s| s.to_vec()),
            w: model.w.rows().into_iter().map(|r| r.to_vec()).collect(),
            a: model.a.rows().into_iter().map(|r| r.to_vec()).collect(),
            objective: model.objective.clone(),
            optim_config: model.optim.clone(),
            diagnostics: model.diagnostics.clone(),
            spectra: model.spectra.iter().map(|s| s.bins().to_vec()).collect(),
        }
    }

    fn into_model(self, path: &Path) -> Result<FittedModel> {
        let schema_err = |message: String| Error::ModelSchema {
            path: path.to_path_buf(),
            message,
        };
        let hankel = HankelConfig::with_shift(self.window_length, self.shift)?;
        let lw = self.window_length;
        if self.d == 0 || self.d > lw {
            return Err(schema_err(format!(
                "component count {} out of range 1..={lw}",
                self.d
            )));
        }
        if self.mean.len() != lw {
            return Err(schema_err(format!(
                "mean has {} entries, expected {lw}",
                self.mean.len()
            )));
        }
        if let Some(scale) = &self.scale {
            if scale.len() != lw {
                return Err(schema_err(format!(
                    "scale has {} entries, expected {lw}",
                    scale.len()
                )));
            }
        }
        let to_matrix = |rows: &[Vec<f64>], nrows: usize, ncols: usize, name: &str| {
            if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
                return Err(schema_err(format!("{name} is not a {nrows}x{ncols} matrix")));
            }
            let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(schema_err(format!("{name} contains non-finite entries")));
            }
            Array2::from_shape_vec((nrows, ncols), flat)
                .map_err(|e| schema_err(format!("{name}: {e}")))
        };
        let w = to_matrix(&self.w, self.d, lw, "W")?;
        let a = to_matrix(&self.a, lw, self.d, "A")?;
        for (i, row) in w.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(schema_err(format!("W row {i} has norm {norm}, expected 1")));
            }
        }
        if self.spectra.len() != self.d {
            return Err(schema_err(format!(
                "spectra holds {} rows, expected {}",
                self.spectra.len(),
                self.d
            )));
        }
        let mut spectra = Vec::with_capacity(self.d);
        for (i, bins) in self.spectra.into_iter().enumerate() {
            if bins.len() != lw {
                return Err(schema_err(format!(
                    "spectrum {i} has {} bins, expected {lw}",
                    bins.len()
                )));
            }
            spectra.push(SpectrumVector::from_bins(bins)?);
        }
        Ok(FittedModel {
            hankel,
            d: self.d,
            mean: Array1::from_vec(self.mean),
            scale: self.scale.map(Array1::from_vec),
            w,
            a,
            objective: self.objective,
            optim: self.optim_config,
            diagnostics: self.diagnostics,
            spectra,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::PcaObjective;
    use crate::optim::Strategy;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn test_signal(len: usize) -> Signal {
        let samples: Vec<f64> = (0..len)
            .map(|n| {
                let t = n as f64;
                (0.3 * t).sin() + 0.5 * (0.11 * t).cos() + 0.1 * ((t * 0.71).sin() * (0.05 * t).cos())
            })
            .collect();
        Signal::new(samples, Some(100.0)).unwrap()
    }

    fn fit_full_rank(lw: usize) -> FittedModel {
        let config = OptimConfig {
            strategy: Strategy::Bfgs,
            tol: 1e-10,
            gram_schmidt: true,
            regularise: false,
            ..OptimConfig::default()
        };
        FittedModel::fit(
            &test_signal(512),
            &HankelConfig::new(lw).unwrap(),
            &PcaObjective,
            lw,
            &config,
            &PreprocessOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn full_rank_pca_gives_orthogonal_w() {
        let model = fit_full_rank(8);
        let wwt = model.w().dot(&model.w().t());
        let mut frob = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j { 1.0 } else { 0.0 };
                frob += (wwt[[i, j]] - expect).powi(2);
            }
        }
        assert!(frob.sqrt() <= 1e-6, "|WW^T - I|_F = {}", frob.sqrt());
        // hence A agrees with W^T
        for (x, y) in model.a().iter().zip(model.w().t().iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn w_a_product_is_identity() {
        let model = fit_full_rank(6);
        let wa = model.w().dot(model.a());
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(wa[[i, j]], expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn stored_spectra_match_rows() {
        let model = fit_full_rank(6);
        for (row, spec) in model.w().rows().into_iter().zip(model.spectra()) {
            let fresh = power_spectrum(row.to_owned().as_slice().unwrap()).unwrap();
            for (a, b) in fresh.bins().iter().zip(spec.bins()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn single_component_fit() {
        let config = OptimConfig {
            strategy: Strategy::Bfgs,
            regularise: false,
            ..OptimConfig::default()
        };
        let model = FittedModel::fit(
            &test_signal(256),
            &HankelConfig::new(12).unwrap(),
            &PcaObjective,
            1,
            &config,
            &PreprocessOptions::default(),
        )
        .unwrap();
        assert_eq!(model.w().nrows(), 1);
        assert_eq!(model.spectra().len(), 1);
    }

    #[test]
    fn too_many_components_fails_before_computation() {
        let err = FittedModel::fit(
            &test_signal(64),
            &HankelConfig::new(8).unwrap(),
            &PcaObjective,
            9,
            &OptimConfig::default(),
            &PreprocessOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ComponentCount { d: 9, max: 8 }));
    }

    #[test]
    fn transform_of_mean_row_is_zero() {
        let model = fit_full_rank(6);
        let row = model
            .mean()
            .clone()
            .into_shape_with_order((1, 6))
            .unwrap();
        let z = model.transform_rows(&row).unwrap();
        for v in z.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_shape_contract() {
        let model = fit_full_rank(6);
        let signal = test_signal(64);
        let z = model.transform(&signal).unwrap();
        assert_eq!(z.nrows(), 64 - 6 + 1);
        assert_eq!(z.ncols(), 6);
    }

    #[test]
    fn round_trip_through_latent_space() {
        let model = fit_full_rank(8);
        let signal = test_signal(512);
        let x = hankelise(&signal, model.hankel()).unwrap();
        let z = model.transform(&signal).unwrap();
        let back = model.inverse_transform(&z).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in back.iter().zip(x.values().iter()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        assert!((num / den).sqrt() <= 1e-8, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn zero_latent_reconstructs_the_mean() {
        let model = fit_full_rank(5);
        let z = Array2::zeros((3, 5));
        let back = model.inverse_transform(&z).unwrap();
        for row in back.rows() {
            for (v, m) in row.iter().zip(model.mean().iter()) {
                assert_abs_diff_eq!(v, m, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_round_trip_is_the_projection() {
        // d < L_w: the round trip equals the rank-d projection of the
        // centered data; checked against a projector from an SVD oracle.
        let lw = 8;
        let d = 3;
        let config = OptimConfig {
            strategy: Strategy::Bfgs,
            tol: 1e-10,
            gram_schmidt: true,
            regularise: false,
            ..OptimConfig::default()
        };
        let signal = test_signal(512);
        let model = FittedModel::fit(
            &signal,
            &HankelConfig::new(lw).unwrap(),
            &PcaObjective,
            d,
            &config,
            &PreprocessOptions::default(),
        )
        .unwrap();
        let x = hankelise(&signal, model.hankel()).unwrap();
        let centered = x.values() - &model.mean().view().insert_axis(Axis(0));

        let z = model.transform(&signal).unwrap();
        let back = model.inverse_transform(&z).unwrap();
        let back_centered = &back - &model.mean().view().insert_axis(Axis(0));

        // independent projector: pinv(W) W through nalgebra's SVD
        let wmat = nalgebra::DMatrix::from_row_iterator(
            d,
            lw,
            model.w().rows().into_iter().flat_map(|r| r.to_vec()),
        );
        let pinv = wmat.clone().svd(true, true).pseudo_inverse(1e-12).unwrap();
        let projector = pinv * wmat; // L_w x L_w
        let mut expected = Array2::zeros((centered.nrows(), lw));
        for (i, row) in centered.rows().into_iter().enumerate() {
            for j in 0..lw {
                let mut acc = 0.0;
                for k in 0..lw {
                    acc += row[k] * projector[(k, j)];
                }
                expected[[i, j]] = acc;
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in back_centered.iter().zip(expected.iter()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        assert!((num / den).sqrt() <= 1e-8, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let model = fit_full_rank(6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = FittedModel::load(&path).unwrap();
        assert_eq!(model.w(), loaded.w());
        assert_eq!(model.a(), loaded.a());
        assert_eq!(model.mean(), loaded.mean());

        let signal = test_signal(128);
        let z1 = model.transform(&signal).unwrap();
        let z2 = loaded.transform(&signal).unwrap();
        for (a, b) in z1.iter().zip(z2.iter()) {
            assert_eq!(a, b);
        }

        // saving the loaded model reproduces the file byte for byte
        let path2 = dir.path().join("model2.json");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn load_missing_w_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        let model = fit_full_rank(4);
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut map = value.as_object().unwrap().clone();
        map.remove("W");
        std::fs::write(&path, serde_json::to_string(&map).unwrap()).unwrap();
        let err = FittedModel::load(&path).unwrap_err();
        match err {
            Error::ModelSchema { message, .. } => {
                assert!(message.contains('W'), "message does not name W: {message}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_future_schema_version_is_a_version_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("future.json");
        let model = fit_full_rank(4);
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"schema_version\": 1", "\"schema_version\": 2"))
            .unwrap();
        let err = FittedModel::load(&path).unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { found: 2, expected: 1 }));
    }

    #[test]
    fn load_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.json");
        let model = fit_full_rank(4);
        model.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(
            &path,
            text.replacen('{', "{\n  \"surprise\": 3,", 1),
        )
        .unwrap();
        let err = FittedModel::load(&path).unwrap_err();
        assert!(matches!(err, Error::ModelSchema { .. }), "got {err:?}");
    }

    #[test]
    fn identity_model_transform_is_identity() {
        // hand-built model file with W = I and zero mean
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("identity.json");
        let eye: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let spectra: Vec<Vec<f64>> = (0..3).map(|_| vec![1.0, 1.0, 1.0]).collect();
        let file = serde_json::json!({
            "schema_version": 1,
            "window_length": 3,
            "shift": 1,
            "d": 3,
            "mean": [0.0, 0.0, 0.0],
            "scale": null,
            "W": eye,
            "A": eye,
            "objective": "pca",
            "optim_config": serde_json::to_value(OptimConfig::default()).unwrap(),
            "diagnostics": { "components": [] },
            "spectra": spectra,
        });
        std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
        let model = FittedModel::load(&path).unwrap();
        let x = arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let z = model.transform_rows(&x).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn transform_dimension_mismatch() {
        let model = fit_full_rank(6);
        let err = model.transform_rows(&Array2::zeros((2, 5))).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = model.inverse_transform(&Array2::zeros((2, 5))).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn diagonal_average_inverts_hankelisation() {
        let signal = test_signal(64);
        for shift in [1usize, 2, 3] {
            let cfg = HankelConfig::with_shift(5, shift).unwrap();
            let x = hankelise(&signal, &cfg).unwrap();
            let back = diagonal_average(x.values(), shift);
            let covered = shift * (x.nrows() - 1) + 5;
            assert_eq!(back.len(), covered);
            for (a, b) in back.iter().zip(signal.samples()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn source_spectra_match_naive_dft() {
        let model = fit_full_rank(6);
        let signal = test_signal(128);
        let z = model.transform(&signal).unwrap();
        let spectra = model.source_spectra(&signal).unwrap();
        let l_h = z.nrows();
        for (i, spec) in spectra.iter().enumerate() {
            assert_eq!(spec.power.len(), l_h / 2 + 1);
            let col: Vec<f64> = z.column(i).to_vec();
            for (k, &p) in spec.power.iter().enumerate() {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &v) in col.iter().enumerate() {
                    let angle =
                        -2.0 * std::f64::consts::PI * (k as f64) * (n as f64) / l_h as f64;
                    re += v * angle.cos();
                    im += v * angle.sin();
                }
                let oracle = re * re + im * im;
                assert!(
                    (p - oracle).abs() <= 1e-9 * oracle.max(1.0),
                    "component {i} bin {k}: {p} vs {oracle}"
                );
            }
            let freqs = spec.frequency_hz.as_ref().unwrap();
            assert_abs_diff_eq!(freqs[1], 100.0 / l_h as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn source_spectra_of_zero_signal_need_zero_power() {
        // an all-zero signal cannot be fitted (zero variance), so build the
        // model on a real signal and transform zeros through it
        let model = fit_full_rank(6);
        let zero = Signal::new(vec![0.0; 64], None).unwrap();
        let spectra = model.source_spectra(&zero).unwrap();
        // after centering, transformed zeros are constant rows; all power
        // sits in the DC bin
        for spec in &spectra {
            assert!(spec.frequency_hz.is_none());
            for &p in &spec.power[1..] {
                assert_abs_diff_eq!(p, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn whitened_fit_keeps_unit_rows_and_round_trips() {
        let config = OptimConfig {
            strategy: Strategy::Bfgs,
            regularise: false,
            ..OptimConfig::default()
        };
        let model = FittedModel::fit(
            &test_signal(512),
            &HankelConfig::new(6).unwrap(),
            &PcaObjective,
            6,
            &config,
            &PreprocessOptions {
                scale: false,
                whiten: true,
            },
        )
        .unwrap();
        for row in model.w().rows() {
            assert_abs_diff_eq!(row.dot(&row).sqrt(), 1.0, epsilon = 1e-12);
        }
        let wa = model.w().dot(model.a());
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(wa[[i, j]], expect, epsilon = 1e-6);
            }
        }
    }
}
