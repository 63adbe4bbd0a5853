//! Flag and config-file handling. A TOML file supplies base values, flags
//! override them, and anything still unset falls back to the defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use spectral_lvm::{
    Error, GFunc, HankelConfig, NegentropyConfig, NegentropyObjective, Objective, OptimConfig,
    PcaObjective, Result, Signal, SignalFormat, Strategy,
};

/// The shared flag set. Booleans are presence flags: giving them turns the
/// switch on, omitting them defers to the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Input signal path
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Signal encoding: csv, f32 or f64
    #[arg(long)]
    pub format: Option<String>,
    /// Sample rate in Hz
    #[arg(long = "sample-rate")]
    pub sample_rate: Option<f64>,
    /// Window length in samples
    #[arg(long)]
    pub window: Option<usize>,
    /// Window shift in samples
    #[arg(long)]
    pub shift: Option<usize>,
    /// Number of components to extract
    #[arg(long)]
    pub components: Option<usize>,
    /// Model objective: pca or negentropy
    #[arg(long)]
    pub objective: Option<String>,
    /// Negentropy contrast: logcosh, exp or quartic
    #[arg(long)]
    pub gfunc: Option<String>,
    /// logcosh parameter a (in [1, 2])
    #[arg(long)]
    pub ga: Option<f64>,
    /// Initial penalty weight
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Penalty escalation factor per stage
    #[arg(long = "alpha-scale")]
    pub alpha_scale: Option<f64>,
    /// Number of penalty escalation stages
    #[arg(long = "sumt-iters")]
    pub sumt_iters: Option<usize>,
    /// Disable the spectral penalty (ablation)
    #[arg(long = "no-regularisation")]
    pub no_regularisation: bool,
    /// Update strategy: sd, newton or bfgs
    #[arg(long)]
    pub optimiser: Option<String>,
    /// Steepest-descent learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Convergence tolerance on the tangent gradient norm
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap per penalty stage
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Rows sampled per iteration (full batch when omitted)
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Orthogonalise each component against its predecessors
    #[arg(long = "gram-schmidt")]
    pub gram_schmidt: bool,
    /// Whiten the data before fitting
    #[arg(long)]
    pub whiten: bool,
    /// Divide columns by their standard deviation
    #[arg(long)]
    pub scale: bool,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML config file (flags win on conflicts)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also render an SVG chart to this path
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Reconstruction output: none (matrix) or diagonal (signal)
    #[arg(long)]
    pub collapse: Option<String>,
}

/// Config-file mirror of the flag set (dashes become underscores).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    input: Option<PathBuf>,
    format: Option<String>,
    sample_rate: Option<f64>,
    window: Option<usize>,
    shift: Option<usize>,
    components: Option<usize>,
    objective: Option<String>,
    gfunc: Option<String>,
    ga: Option<f64>,
    alpha0: Option<f64>,
    alpha_scale: Option<f64>,
    sumt_iters: Option<usize>,
    no_regularisation: Option<bool>,
    optimiser: Option<String>,
    lr: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    batch_size: Option<usize>,
    gram_schmidt: Option<bool>,
    whiten: Option<bool>,
    scale: Option<bool>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    svg: Option<PathBuf>,
    collapse: Option<String>,
    model: Option<PathBuf>,
}

fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Pca,
    Negentropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collapse {
    None,
    Diagonal,
}

/// Fully merged run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub format: SignalFormat,
    pub sample_rate: Option<f64>,
    pub window: Option<usize>,
    pub shift: usize,
    pub components: Option<usize>,
    pub objective: ObjectiveKind,
    pub gfunc: GFunc,
    pub alpha0: f64,
    pub alpha_scale: f64,
    pub sumt_iters: usize,
    pub no_regularisation: bool,
    pub optimiser: Strategy,
    pub lr: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub batch_size: Option<usize>,
    pub gram_schmidt: bool,
    pub whiten: bool,
    pub scale: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub collapse: Collapse,
    pub model: Option<PathBuf>,
}

impl RunConfig {
    /// Merges flags over the config file (when given) over defaults.
    pub fn merge(args: &CommonArgs, model_flag: Option<&PathBuf>) -> Result<RunConfig> {
        let file = match &args.config {
            Some(path) => load_file_config(path)?,
            None => FileConfig::default(),
        };

        let format = match args.format.clone().or(file.format) {
            Some(s) => SignalFormat::from_str(&s)?,
            None => SignalFormat::Csv,
        };
        let objective = match args
            .objective
            .clone()
            .or(file.objective)
            .as_deref()
            .unwrap_or("pca")
        {
            "pca" => ObjectiveKind::Pca,
            "negentropy" => ObjectiveKind::Negentropy,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown objective {other:?}, expected pca or negentropy"
                )))
            }
        };
        let ga = args.ga.or(file.ga).unwrap_or(1.0);
        let gfunc = match args
            .gfunc
            .clone()
            .or(file.gfunc)
            .as_deref()
            .unwrap_or("logcosh")
        {
            "logcosh" => GFunc::Logcosh { a: ga },
            "exp" => GFunc::Exp,
            "quartic" => GFunc::Quartic,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown contrast {other:?}, expected logcosh, exp or quartic"
                )))
            }
        };
        let optimiser = match args.optimiser.clone().or(file.optimiser) {
            Some(s) => Strategy::from_str(&s)?,
            None => Strategy::SteepestDescent,
        };
        let collapse = match args
            .collapse
            .clone()
            .or(file.collapse)
            .as_deref()
            .unwrap_or("none")
        {
            "none" => Collapse::None,
            "diagonal" => Collapse::Diagonal,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown collapse mode {other:?}, expected none or diagonal"
                )))
            }
        };

        Ok(RunConfig {
            input: args.input.clone().or(file.input),
            format,
            sample_rate: args.sample_rate.or(file.sample_rate),
            window: args.window.or(file.window),
            shift: args.shift.or(file.shift).unwrap_or(1),
            components: args.components.or(file.components),
            objective,
            gfunc,
            alpha0: args.alpha0.or(file.alpha0).unwrap_or(1.0),
            alpha_scale: args.alpha_scale.or(file.alpha_scale).unwrap_or(10.0),
            sumt_iters: args.sumt_iters.or(file.sumt_iters).unwrap_or(5),
            no_regularisation: args.no_regularisation
                || file.no_regularisation.unwrap_or(false),
            optimiser,
            lr: args.lr.or(file.lr).unwrap_or(1e-2),
            tol: args.tol.or(file.tol).unwrap_or(1e-6),
            max_iter: args.max_iter.or(file.max_iter).unwrap_or(500),
            batch_size: args.batch_size.or(file.batch_size),
            gram_schmidt: args.gram_schmidt || file.gram_schmidt.unwrap_or(false),
            whiten: args.whiten || file.whiten.unwrap_or(false),
            scale: args.scale || file.scale.unwrap_or(false),
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out),
            svg: args.svg.clone().or(file.svg),
            collapse,
            model: model_flag.cloned().or(file.model),
        })
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            strategy: self.optimiser,
            learning_rate: self.lr,
            tol: self.tol,
            max_inner_iters: self.max_iter,
            sumt_alpha0: self.alpha0,
            sumt_scale: self.alpha_scale,
            sumt_iters: self.sumt_iters,
            seed: self.seed,
            batch_size: self.batch_size,
            gram_schmidt: self.gram_schmidt,
            hessian_damping: 1e-6,
            regularise: !self.no_regularisation,
        }
    }

    pub fn build_objective(&self) -> Result<Box<dyn Objective>> {
        match self.objective {
            ObjectiveKind::Pca => Ok(Box::new(PcaObjective)),
            ObjectiveKind::Negentropy => Ok(Box::new(NegentropyObjective::new(
                NegentropyConfig::new(self.gfunc)?,
            ))),
        }
    }

    pub fn load_input(&self) -> Result<Signal> {
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("--input is required".to_string()))?;
        spectral_lvm::load_signal(path, self.format, self.sample_rate)
    }

    pub fn hankel(&self) -> Result<HankelConfig> {
        let window = self
            .window
            .ok_or_else(|| Error::InvalidConfig("--window is required".to_string()))?;
        HankelConfig::with_shift(window, self.shift)
    }

    pub fn require_components(&self) -> Result<usize> {
        self.components
            .ok_or_else(|| Error::InvalidConfig("--components is required".to_string()))
    }

    pub fn require_model(&self) -> Result<&PathBuf> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("--model is required".to_string()))
    }
}
