//! JSON run configurations. Every record rejects unknown keys, and every
//! numeric parameter is checked before any computation starts.

use std::path::{Path, PathBuf};

use pathcopula::robustness::{ExperimentConfig, RobustnessParams};
use pathcopula::{CopulaModel, MarginalFamily, Mixing, ProcessEnsemble, TimeFn, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Uniform grid `start = t_1 < … < t_m = end`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub end: f64,
    pub m: usize,
}

impl GridSpec {
    pub fn build(&self, key: &str) -> Result<TimeGrid, CliError> {
        TimeGrid::uniform(self.start, self.end, self.m).map_err(|e| CliError::config(key, e))
    }
}

fn zero() -> TimeFn {
    TimeFn::constant(0.0)
}

/// A marginal family `t ↦ F_t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Uniform,
    Gaussian {
        #[serde(default = "zero")]
        mean: TimeFn,
        sigma: TimeFn,
    },
    /// `N(0, t^{2H})`
    FbmGaussian { hurst: f64, t0: f64 },
    Exponential { scale: TimeFn },
    /// `Exp` with mean `t^H`
    FbmExponential { hurst: f64, t0: f64 },
    Pareto { x_min: f64, alpha: TimeFn },
    ScaleMixture { sigma: TimeFn, mixing: Mixing },
    /// Per-column empirical laws of a process CSV; the path is relative to
    /// the config file.
    Empirical { path: PathBuf },
}

impl FamilySpec {
    pub fn build(&self, key: &str, base: &Path) -> Result<MarginalFamily, CliError> {
        let err = |e| CliError::config(key, e);
        let fam = match self {
            FamilySpec::Uniform => MarginalFamily::uniform(),
            FamilySpec::Gaussian { mean, sigma } => {
                check_timefn(sigma, &format!("{key}.sigma"), true)?;
                check_timefn(mean, &format!("{key}.mean"), false)?;
                MarginalFamily::gaussian(mean.clone(), sigma.clone())
            }
            FamilySpec::FbmGaussian { hurst, t0 } => MarginalFamily::fbm_gaussian(*hurst, *t0).map_err(err)?,
            FamilySpec::Exponential { scale } => {
                check_timefn(scale, &format!("{key}.scale"), true)?;
                MarginalFamily::exponential_scale(scale.clone())
            }
            FamilySpec::FbmExponential { hurst, t0 } => MarginalFamily::fbm_exponential(*hurst, *t0).map_err(err)?,
            FamilySpec::Pareto { x_min, alpha } => MarginalFamily::pareto(*x_min, alpha.clone()).map_err(err)?,
            FamilySpec::ScaleMixture { sigma, mixing } => {
                check_timefn(sigma, &format!("{key}.sigma"), true)?;
                MarginalFamily::scale_mixture(sigma.clone(), mixing).map_err(err)?
            }
            FamilySpec::Empirical { path } => {
                let ens = read_process(&base.join(path), &format!("{key}.path"))?;
                MarginalFamily::empirical_from_ensemble(&ens).map_err(err)?
            }
        };
        Ok(fam)
    }

    /// Input files read by this family.
    pub fn inputs(&self, base: &Path) -> Vec<PathBuf> {
        match self {
            FamilySpec::Empirical { path } => vec![base.join(path)],
            _ => Vec::new(),
        }
    }
}

fn check_timefn(f: &TimeFn, key: &str, positive: bool) -> Result<(), CliError> {
    let values: Vec<f64> = match f {
        TimeFn::Constant { value } => vec![*value],
        TimeFn::Power { coef, exponent } => vec![*coef, *exponent],
        TimeFn::Table { times, values } => {
            TimeFn::table(times.clone(), values.clone()).map_err(|e| CliError::config(key, e))?;
            values.clone()
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::config(key, "values must be finite"));
    }
    let sign_ok = match f {
        TimeFn::Constant { value } => *value >= 0.0,
        TimeFn::Power { coef, .. } => *coef >= 0.0,
        TimeFn::Table { values, .. } => values.iter().all(|&v| v >= 0.0),
    };
    if positive && !sign_ok {
        return Err(CliError::config(key, "must be nonnegative"));
    }
    Ok(())
}

pub fn read_process(path: &Path, key: &str) -> Result<ProcessEnsemble, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::config(key, format!("{}: {e}", path.display())))?;
    ProcessEnsemble::read_csv(std::io::BufReader::new(file))
        .map_err(|e| CliError::config(key, format!("{}: {e}", path.display())))
}

pub fn check_copula(model: &CopulaModel, grid: &TimeGrid, key: &str) -> Result<(), CliError> {
    model.validate(grid).map_err(|e| CliError::config(key, e))
}

pub fn check_paths(n: usize, min: usize, key: &str) -> Result<(), CliError> {
    if n < min {
        return Err(CliError::config(key, format!("must be at least {min}, got {n}")));
    }
    Ok(())
}

pub fn check_order(p: u32, key: &str) -> Result<(), CliError> {
    if !(1..=4).contains(&p) {
        return Err(CliError::config(key, format!("must lie in 1..=4, got {p}")));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    pub grid: GridSpec,
    pub copula: CopulaModel,
    /// When present the merged process is written too.
    #[serde(default)]
    pub marginal: Option<FamilySpec>,
    pub n_paths: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    pub copula: CopulaModel,
    pub n_paths: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WassersteinConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    pub grid: GridSpec,
    pub a: FamilySpec,
    pub b: FamilySpec,
    pub p: u32,
    /// Optional check of the closed form against the optimal coupling.
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloSpec>,
}

/// Robustness inequality on a simulated pair sharing (or not) a copula.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub grid: GridSpec,
    pub n_paths: usize,
    pub copula: CopulaModel,
    /// Copula of `Y`; when absent `Y` reuses the copula sample of `X`.
    #[serde(default)]
    pub copula_y: Option<CopulaModel>,
    pub family_x: FamilySpec,
    pub family_y: FamilySpec,
    pub params: RobustnessParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RobustnessMode {
    /// Pareto marginals on an elliptical copula with KL truncation.
    Experiment(ExperimentConfig),
    Pair(Box<PairSpec>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    pub mode: RobustnessMode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSource {
    Fbm { grid: GridSpec, n_paths: usize, hurst: f64 },
    Elliptical { grid: GridSpec, n_paths: usize, hurst: f64, mixing: Mixing },
    Merged { grid: GridSpec, n_paths: usize, copula: CopulaModel, marginal: FamilySpec },
    /// A process CSV, relative to the config file.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    pub source: ProcessSource,
    #[serde(default)]
    pub n_keep: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    pub grid: GridSpec,
    pub family: FamilySpec,
    /// Order of the moment condition `∫_T E|Y_t|^p dt < ∞`.
    #[serde(default)]
    pub moment_p: Option<u32>,
    /// Density minorant assumption; `K` is reported when it holds.
    #[serde(default)]
    pub assumption: Option<RobustnessParams>,
}

/// Fields every command config carries.
pub trait RunConfig: Serialize + for<'de> Deserialize<'de> {
    fn seed_mut(&mut self) -> &mut u64;
    fn output_dir(&self) -> Option<&Path>;
    fn format(&self) -> Format;
}

macro_rules! run_config {
    ($($t:ty),*) => {$(
        impl RunConfig for $t {
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
            fn output_dir(&self) -> Option<&Path> {
                self.output_dir.as_deref()
            }
            fn format(&self) -> Format {
                self.format
            }
        }
    )*};
}

run_config!(SimulateConfig, WassersteinConfig, RobustnessConfig, KlConfig, CheckConfig);
