//! Declarative experiment configuration (TOML) and the built-in presets.
//!
//! A file may start from a preset with `preset = "paper"` and override any
//! nested key; tables are merged key by key, arrays and scalars replace.

use std::path::{Path, PathBuf};

use mfpg_core::estimator::RadiusMode;
use mfpg_core::presets;
use mfpg_core::{CostWeights, DMatrix, EpochPlan, Estimator, LinearSystem, Method, PgmConfig, Policy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Row-major matrix as written in the config file.
pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub weights: WeightsSpec,
    pub data: DataSpec,
    pub estimator: EstimatorSpec,
    pub pgm: PgmSpec,
    #[serde(default)]
    pub theory: TheorySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Rows,
    pub b: Rows,
    pub sigma_w: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    pub q: Rows,
    pub r: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub samples: usize,
    pub sigma_x: Rows,
    pub sigma_u: Rows,
    pub seeds: Vec<u64>,
    /// Directory of `dataset_seed<seed>.csv` files written by `collect`;
    /// datasets are generated in memory when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    /// Estimators compared on the same datasets.
    pub kinds: Vec<Estimator>,
    pub ball_radius: f64,
    pub schedule_scale: f64,
    pub epoch_sizes: Vec<usize>,
    pub d0: f64,
    #[serde(default)]
    pub radius_mode: RadiusMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    /// `"dare:<factor>Q"` or `"zero"`.
    Rule(String),
    Explicit(Rows),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgmSpec {
    pub method: Method,
    pub step: f64,
    pub iterations: usize,
    pub initial_gain: GainSpec,
    #[serde(default = "default_guard")]
    pub stability_guard: bool,
}

fn default_guard() -> bool {
    true
}

/// Inputs of the theoretical calculators used by `constants`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySpec {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub d_y: f64,
}

impl Default for TheorySpec {
    fn default() -> Self {
        TheorySpec {
            delta: 0.05,
            c1: 1.0,
            c2: 1.0,
            epsilon: 0.01,
            sigma: mfpg_core::pgm::DEFAULT_SIGMA,
            d_y: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
        }
    }
}

pub const PRESETS: [&str; 2] = ["paper", "paper-gnm"];

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Every experiment value pinned; `paper` is the natural-gradient comparison,
/// `paper-gnm` the Gauss-Newton one.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (method, kinds) = match name {
        "paper" => (Method::Npg, vec![Estimator::Cspd, Estimator::Ls]),
        "paper-gnm" => (
            Method::Gnm,
            vec![Estimator::Cspd, Estimator::MultiEpoch, Estimator::Sysid],
        ),
        other => {
            return Err(CliError::Config(format!(
                "unknown preset {other:?} (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    let sys = presets::paper_system();
    let w = presets::paper_weights();
    let (sx, su) = presets::paper_exploration();
    Ok(ExperimentConfig {
        system: SystemSpec {
            a: rows(&sys.a),
            b: rows(&sys.b),
            sigma_w: rows(&sys.sigma_w),
        },
        weights: WeightsSpec {
            q: rows(&w.q),
            r: rows(&w.r),
        },
        data: DataSpec {
            samples: presets::PAPER_SAMPLES,
            sigma_x: rows(&sx),
            sigma_u: rows(&su),
            seeds: (0..presets::PAPER_TRIALS as u64).collect(),
            dataset_dir: None,
        },
        estimator: EstimatorSpec {
            kinds,
            ball_radius: presets::PAPER_BALL_RADIUS,
            schedule_scale: presets::PAPER_SCHEDULE_SCALE,
            epoch_sizes: presets::PAPER_EPOCH_SIZES.to_vec(),
            d0: presets::PAPER_D0,
            radius_mode: RadiusMode::Squared,
        },
        pgm: PgmSpec {
            method,
            step: presets::PAPER_STEP,
            iterations: presets::PAPER_ITERATIONS,
            initial_gain: GainSpec::Rule("dare:100Q".into()),
            stability_guard: true,
        },
        theory: TheorySpec::default(),
        output: OutputSpec::default(),
    })
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let cfg = match table.remove("preset") {
            Some(toml::Value::String(name)) => {
                let mut base = toml::Table::try_from(preset(&name)?).map_err(|e| CliError::Config(e.to_string()))?;
                merge(&mut base, table);
                base.try_into()
            }
            Some(other) => return Err(CliError::Config(format!("preset must be a string, got {other}"))),
            None => table.try_into(),
        };
        let cfg: ExperimentConfig = cfg.map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Builds and validates every numerical object the commands need.
    pub fn resolve(&self) -> Result<Experiment> {
        let sys = LinearSystem::new(
            matrix("system.a", &self.system.a)?,
            matrix("system.b", &self.system.b)?,
            matrix("system.sigma_w", &self.system.sigma_w)?,
        )
        .map_err(config_error)?;
        let w = CostWeights::new(
            matrix("weights.q", &self.weights.q)?,
            matrix("weights.r", &self.weights.r)?,
        )
        .map_err(config_error)?;
        if w.q.nrows() != sys.n_x() || w.r.nrows() != sys.n_u() {
            return Err(CliError::Config(format!(
                "weights are {}x{} and {}x{} for a system with n_x = {}, n_u = {}",
                w.q.nrows(),
                w.q.ncols(),
                w.r.nrows(),
                w.r.ncols(),
                sys.n_x(),
                sys.n_u()
            )));
        }
        let sigma_x = matrix("data.sigma_x", &self.data.sigma_x)?;
        let sigma_u = matrix("data.sigma_u", &self.data.sigma_u)?;
        if sigma_x.shape() != (sys.n_x(), sys.n_x()) || sigma_u.shape() != (sys.n_u(), sys.n_u()) {
            return Err(CliError::Config(
                "exploration covariances do not match the system".into(),
            ));
        }
        if self.data.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        if self.data.samples == 0 {
            return Err(CliError::Config("data.samples must be positive".into()));
        }
        let kinds = &self.estimator.kinds;
        if kinds.is_empty() {
            return Err(CliError::Config("estimator.kinds is empty".into()));
        }
        if (1..kinds.len()).any(|i| kinds[..i].contains(&kinds[i])) {
            return Err(CliError::Config("estimator.kinds lists an estimator twice".into()));
        }
        let epoch_plan = EpochPlan::new(
            self.estimator.epoch_sizes.clone(),
            self.estimator.d0,
            self.estimator.radius_mode,
        )
        .map_err(config_error)?;
        let pgm = PgmConfig {
            method: self.pgm.method,
            step: self.pgm.step,
            max_iters: self.pgm.iterations,
            estimator: kinds[0],
            stability_guard: self.pgm.stability_guard,
            ball_radius: self.estimator.ball_radius,
            schedule_scale: self.estimator.schedule_scale,
            epoch_plan,
        };
        pgm.validate().map_err(config_error)?;
        let k0 = match &self.pgm.initial_gain {
            GainSpec::Explicit(r) => Policy::new(matrix("pgm.initial_gain", r)?),
            GainSpec::Rule(rule) => gain_rule(rule, &sys, &w)?,
        };
        if k0.gain.shape() != (sys.n_u(), sys.n_x()) {
            return Err(CliError::Config(format!(
                "initial gain is {}x{}, expected {}x{}",
                k0.gain.nrows(),
                k0.gain.ncols(),
                sys.n_u(),
                sys.n_x()
            )));
        }
        Ok(Experiment {
            sys,
            w,
            k0,
            sigma_x,
            sigma_u,
            samples: self.data.samples,
            seeds: self.data.seeds.clone(),
            estimators: kinds.clone(),
            pgm,
            dataset_dir: self.data.dataset_dir.clone(),
        })
    }
}

fn config_error(e: mfpg_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn matrix(name: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(CliError::Config(format!("{name} is empty")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != m) {
        return Err(CliError::Config(format!(
            "{name}: row {bad} has {} entries, row 0 has {m}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn gain_rule(rule: &str, sys: &LinearSystem, w: &CostWeights) -> Result<Policy> {
    if rule == "zero" {
        return Ok(Policy::zeros(sys.n_u(), sys.n_x()));
    }
    let factor = rule.strip_prefix("dare:").and_then(|s| s.strip_suffix('Q')).map(|s| {
        if s.is_empty() {
            Ok(1.0)
        } else {
            s.parse::<f64>()
        }
    });
    match factor {
        Some(Ok(f)) if f > 0.0 => Ok(presets::dare_initial_gain(sys, w, f)?),
        _ => Err(CliError::Config(format!(
            "initial gain rule {rule:?} is not \"zero\" or \"dare:<factor>Q\""
        ))),
    }
}

/// Parses `"0,3,7"`, `"0..30"` (half-open) or a mix such as `"0..5,9"`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let bad = |part: &str| CliError::Config(format!("invalid seed list entry {part:?}"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo.trim().parse().map_err(|_| bad(part))?;
            let hi: u64 = hi.trim().parse().map_err(|_| bad(part))?;
            if hi <= lo {
                return Err(bad(part));
            }
            seeds.extend(lo..hi);
        } else {
            seeds.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

/// Validated numerical form of an [`ExperimentConfig`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sys: LinearSystem,
    pub w: CostWeights,
    pub k0: Policy,
    pub sigma_x: DMatrix<f64>,
    pub sigma_u: DMatrix<f64>,
    pub samples: usize,
    pub seeds: Vec<u64>,
    pub estimators: Vec<Estimator>,
    /// Shared run settings; the estimator field is set per run.
    pub pgm: PgmConfig,
    pub dataset_dir: Option<PathBuf>,
}

impl Experiment {
    pub fn run_config(&self, estimator: Estimator) -> PgmConfig {
        PgmConfig {
            estimator,
            ..self.pgm.clone()
        }
    }
}
