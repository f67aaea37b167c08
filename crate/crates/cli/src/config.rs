//! Experiment configuration: one JSON document, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use popdyn_core::dynamics::ImpartialRate;
use popdyn_core::game::war_nash_equilibrium;
use popdyn_core::{
    DiscreteMeasure, Method, PayoffKernel, PayoffVector, ReferenceMeasure, RevisionProtocol, StrategyGrid, ThetaSpec,
    TimeGrid,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub reference: ReferenceMode,
    pub protocol: ProtocolConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub feedback: FeedbackConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub refine: Option<RefineConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameConfig {
    WarOfAttrition {
        #[serde(rename = "V")]
        v: f64,
        #[serde(rename = "T", default)]
        t: Option<f64>,
    },
    ContinuousWar {
        #[serde(rename = "V")]
        v: f64,
        #[serde(rename = "T", default)]
        t: Option<f64>,
        #[serde(default)]
        theta: ThetaConfig,
    },
    Cosine,
    /// Headerless `n x n` CSV of payoffs `f(s_i, s_j)`.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaConfig {
    Logistic { alpha: f64 },
    PiecewiseLinear { x0: f64 },
}

impl Default for ThetaConfig {
    fn default() -> Self {
        ThetaConfig::Logistic { alpha: 100.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default)]
    pub lower: f64,
    /// Defaults to the game's `T`.
    #[serde(default)]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Weight `1/n` per grid point.
    #[default]
    Uniform,
    /// Weight 1 per grid point.
    Counting,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolConfig {
    Bnn,
    Smith,
    /// `phi(r) = scale * max(0, r)^exponent`.
    PowerPairwise { exponent: f64, scale: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Uniform,
    Gaussian { mean: f64, variance: f64 },
    /// Unit mass at the grid point nearest `s`.
    Dirac { s: f64 },
    /// Random weights drawn from the run seed.
    Random,
    /// Equilibrium of the war of attrition with the game's `V`.
    WarNash,
    /// Headerless CSV with one weight per grid point.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeedbackConfig {
    #[default]
    Static,
    Smoothing { lambda_s: f64, rho0: Rho0Config },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rho0Config {
    /// `rho0 = F(mu0)`.
    FromGame,
    /// `rho0(s) = -s^2`.
    Quadratic,
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

fn default_dt() -> f64 {
    0.01
}

fn default_sample_every() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodConfig {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Monotonicity,
    SignPreservation,
    Nash,
    StorageTrace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub properties: Vec<Property>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_nash_tol")]
    pub nash_tol: f64,
}

fn default_trials() -> usize {
    1000
}

fn default_nash_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    pub ns: Vec<usize>,
}

/// Everything a run needs, built and validated from a config.
pub struct Experiment {
    pub grid: Arc<StrategyGrid>,
    pub kernel: PayoffKernel,
    pub protocol: RevisionProtocol,
    pub reference: ReferenceMeasure,
    pub x0: DiscreteMeasure,
    pub time: TimeGrid,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Makes relative data paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let GameConfig::Table { path } = &mut self.game {
            fix(path);
        }
        if let InitialConfig::File { path } = &mut self.initial {
            fix(path);
        }
        if let FeedbackConfig::Smoothing {
            rho0: Rho0Config::File { path },
            ..
        } = &mut self.feedback
        {
            fix(path);
        }
    }

    fn game_t(&self) -> Option<f64> {
        match &self.game {
            GameConfig::WarOfAttrition { t, .. } | GameConfig::ContinuousWar { t, .. } => *t,
            _ => None,
        }
    }

    pub fn upper(&self) -> Result<f64, CliError> {
        match (self.grid.upper, self.game_t()) {
            (Some(u), Some(t)) if u != t => Err(CliError::invalid("game.T", format!("{t} differs from grid.upper = {u}"))),
            (Some(u), _) => Ok(u),
            (None, Some(t)) => Ok(t),
            (None, None) => Err(CliError::invalid("grid.upper", "required unless the game sets T")),
        }
    }

    pub fn make_grid(&self, n: usize) -> Result<Arc<StrategyGrid>, CliError> {
        Ok(StrategyGrid::uniform(n, self.grid.lower, self.upper()?)?)
    }

    pub fn make_kernel(&self, grid: &Arc<StrategyGrid>) -> Result<PayoffKernel, CliError> {
        Ok(match &self.game {
            GameConfig::WarOfAttrition { v, .. } => PayoffKernel::war_of_attrition(*v, grid)?,
            GameConfig::ContinuousWar { v, theta, .. } => {
                let theta = match *theta {
                    ThetaConfig::Logistic { alpha } => ThetaSpec::Logistic { alpha },
                    ThetaConfig::PiecewiseLinear { x0 } => ThetaSpec::PiecewiseLinear { x0 },
                };
                PayoffKernel::continuous_war(*v, theta, grid)?
            }
            GameConfig::Cosine => PayoffKernel::cosine(grid),
            GameConfig::Table { path } => {
                let file = fs::File::open(path).map_err(|e| CliError::invalid("game.path", format!("{}: {e}", path.display())))?;
                PayoffKernel::table_from_csv(grid, file)?
            }
        })
    }

    pub fn make_protocol(&self) -> Result<RevisionProtocol, CliError> {
        Ok(match self.protocol {
            ProtocolConfig::Bnn => RevisionProtocol::Bnn,
            ProtocolConfig::Smith => RevisionProtocol::Smith,
            ProtocolConfig::PowerPairwise { exponent, scale } => {
                RevisionProtocol::ImpartialPairwise(ImpartialRate::power(exponent, scale)?)
            }
        })
    }

    pub fn make_reference(&self, grid: &Arc<StrategyGrid>) -> ReferenceMeasure {
        match self.reference {
            ReferenceMode::Uniform => ReferenceMeasure::uniform(grid),
            ReferenceMode::Counting => ReferenceMeasure::counting(grid),
        }
    }

    pub fn make_initial(&self, grid: &Arc<StrategyGrid>, seed: u64) -> Result<DiscreteMeasure, CliError> {
        Ok(match &self.initial {
            InitialConfig::Uniform => DiscreteMeasure::uniform(grid),
            InitialConfig::Gaussian { mean, variance } => DiscreteMeasure::gaussian(grid, *mean, *variance)?,
            InitialConfig::Dirac { s } => {
                if !(s.is_finite() && *s >= grid.lower() && *s <= grid.upper()) {
                    return Err(CliError::invalid("initial.s", format!("{s} lies outside the grid")));
                }
                DiscreteMeasure::dirac(grid, grid.nearest_index(*s))?
            }
            InitialConfig::Random => DiscreteMeasure::random(grid, seed),
            InitialConfig::WarNash => {
                let v = match &self.game {
                    GameConfig::WarOfAttrition { v, .. } | GameConfig::ContinuousWar { v, .. } => *v,
                    _ => return Err(CliError::invalid("initial.kind", "war_nash needs a war-of-attrition game")),
                };
                war_nash_equilibrium(v, grid)?.measure
            }
            InitialConfig::File { path } => {
                let w = read_column(path, grid.len(), "initial.path")?;
                DiscreteMeasure::probability(grid, w)?
            }
        })
    }

    pub fn make_rho0(
        &self,
        rho0: &Rho0Config,
        grid: &Arc<StrategyGrid>,
        kernel: &PayoffKernel,
        x0: &DiscreteMeasure,
    ) -> Result<PayoffVector, CliError> {
        Ok(match rho0 {
            Rho0Config::FromGame => kernel.evaluate(x0)?,
            Rho0Config::Quadratic => PayoffVector::from_fn(grid, |s| -s * s),
            Rho0Config::File { path } => PayoffVector::new(grid, read_column(path, grid.len(), "feedback.rho0.path")?)?,
        })
    }

    pub fn make_time(&self) -> Result<TimeGrid, CliError> {
        let method = match self.time.method {
            MethodConfig::Euler => Method::Euler,
            MethodConfig::Rk4 => Method::Rk4,
        };
        Ok(TimeGrid::new(self.time.t_end, self.time.dt, method, self.time.sample_every)?)
    }

    /// Builds and validates every component of a single run.
    pub fn build(&self, seed: u64) -> Result<Experiment, CliError> {
        let grid = self.make_grid(self.grid.n)?;
        let kernel = self.make_kernel(&grid)?;
        let protocol = self.make_protocol()?;
        let reference = self.make_reference(&grid);
        let x0 = self.make_initial(&grid, seed)?;
        let time = self.make_time()?;
        Ok(Experiment {
            grid,
            kernel,
            protocol,
            reference,
            x0,
            time,
        })
    }
}

/// Reads a headerless single-column CSV of `expected` numbers.
fn read_column(path: &Path, expected: usize, key: &'static str) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::invalid(key, format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::invalid(key, format!("{}: {e}", path.display())))?;
        for field in record.iter().filter(|f| !f.is_empty()) {
            let v = field
                .parse::<f64>()
                .map_err(|e| CliError::invalid(key, format!("{}:{}: {e}", path.display(), line + 1)))?;
            out.push(v);
        }
    }
    if out.len() != expected {
        return Err(CliError::invalid(
            key,
            format!("{} holds {} values, grid has {expected}", path.display(), out.len()),
        ));
    }
    Ok(out)
}
