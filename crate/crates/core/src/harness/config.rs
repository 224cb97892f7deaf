use crate::entropy::AtomLaw;
use crate::model::DEFAULT_MAX_DENSE;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LogdetIdentity,
    LogdetLimit,
    Esd,
    LsvTail,
    Rigidity,
    MdeCompare,
    Concentration,
    Ginibre,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant serializes");
        write!(f, "{}", s.as_str().unwrap_or_default())
    }
}

impl FromStr for ExperimentKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| ConfigError::Invalid(format!("unknown experiment '{s}'")))
    }
}

fn default_n() -> usize {
    8
}
fn default_ell() -> usize {
    4
}
fn default_law() -> String {
    "real-gaussian".into()
}
fn default_trials() -> u64 {
    1
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_dense() -> usize {
    DEFAULT_MAX_DENSE
}
fn default_workers() -> usize {
    1
}
fn default_xi() -> [f64; 2] {
    [2.0, 1.0]
}
fn default_rigidity_exponent() -> f64 {
    50.0
}

/// One experiment run. Fields that an experiment does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_ell")]
    pub ell: usize,
    #[serde(default)]
    pub z_re: f64,
    #[serde(default)]
    pub z_im: f64,
    /// Atom law in the `real-gaussian | complex-gaussian | real-uniform |
    /// smoothed-rademacher[:C]` notation.
    #[serde(default = "default_law")]
    pub law: String,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    /// Tolerance for identity checks.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Cap on dense matrix dimension.
    #[serde(default = "default_max_dense")]
    pub max_dense: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Output path prefix; `<out>.csv` and `<out>.json` are written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Block counts swept by `concentration`.
    #[serde(default)]
    pub ns: Vec<usize>,
    /// Block sizes swept by `mde-compare`.
    #[serde(default)]
    pub ells: Vec<usize>,
    /// Spectral parameter `[re, im]` for `mde-compare`.
    #[serde(default = "default_xi")]
    pub xi: [f64; 2],
    /// Singular values below `(nℓ)^(−exponent)` are counted by `rigidity`.
    #[serde(default = "default_rigidity_exponent")]
    pub rigidity_exponent: f64,
    /// Thresholds for the `lsv-tail` profile; chosen from the data when empty.
    #[serde(default)]
    pub thresholds: Vec<f64>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            n: default_n(),
            ell: default_ell(),
            z_re: 0.0,
            z_im: 0.0,
            law: default_law(),
            trials: default_trials(),
            seed: 0,
            tol: default_tol(),
            max_dense: default_max_dense(),
            workers: default_workers(),
            out: None,
            ns: Vec::new(),
            ells: Vec::new(),
            xi: default_xi(),
            rigidity_exponent: default_rigidity_exponent(),
            thresholds: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.z_re, self.z_im)
    }

    pub fn xi(&self) -> Complex64 {
        Complex64::new(self.xi[0], self.xi[1])
    }

    pub fn atom_law(&self) -> Result<AtomLaw, ConfigError> {
        let law: AtomLaw = self.law.parse().map_err(ConfigError::Invalid)?;
        law.validate().map_err(ConfigError::Invalid)?;
        Ok(law)
    }

    /// Block counts for `concentration`; defaults to `[n, 2n, 4n]`.
    pub fn sweep_ns(&self) -> Vec<usize> {
        if self.ns.is_empty() {
            vec![self.n, 2 * self.n, 4 * self.n]
        } else {
            self.ns.clone()
        }
    }

    /// Block sizes for `mde-compare`; defaults to `[ℓ]`.
    pub fn sweep_ells(&self) -> Vec<usize> {
        if self.ells.is_empty() {
            vec![self.ell]
        } else {
            self.ells.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n == 0 || self.ell == 0 {
            return invalid("n and ell must be positive".into());
        }
        if self.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if self.workers == 0 {
            return invalid("workers must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return invalid("tol must be positive".into());
        }
        if !self.z_re.is_finite() || !self.z_im.is_finite() {
            return invalid("z must be finite".into());
        }
        self.atom_law()?;
        if self.ns.contains(&0) || self.ells.contains(&0) {
            return invalid("sweep sizes must be positive".into());
        }
        match self.experiment {
            ExperimentKind::MdeCompare if !(self.xi[1] > 0.0) => invalid("xi must have positive imaginary part".into()),
            ExperimentKind::Concentration if self.trials < 2 => invalid("concentration needs at least 2 trials".into()),
            ExperimentKind::Rigidity if !(self.rigidity_exponent > 0.0) => invalid("rigidity-exponent must be positive".into()),
            ExperimentKind::LsvTail if self.thresholds.iter().any(|t| !(*t > 0.0)) => invalid("thresholds must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub n: Option<usize>,
    pub ell: Option<usize>,
    pub z_re: Option<f64>,
    pub z_im: Option<f64>,
    pub law: Option<String>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_dense: Option<usize>,
    pub workers: Option<usize>,
}

impl Overrides {
    /// Merges onto `base` (or a fresh config when there is none) and validates.
    pub fn resolve(self, base: Option<ExperimentConfig>) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match (base, self.experiment) {
            (Some(mut cfg), Some(kind)) => {
                cfg.experiment = kind;
                cfg
            }
            (Some(cfg), None) => cfg,
            (None, Some(kind)) => ExperimentConfig::new(kind),
            (None, None) => return Err(ConfigError::Invalid("no experiment given (use --experiment or --config)".into())),
        };
        macro_rules! apply {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        apply!(n, ell, z_re, z_im, law, trials, seed, tol, max_dense, workers);
        if self.out.is_some() {
            cfg.out = self.out;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
