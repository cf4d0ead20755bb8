//! JSON run configuration and its resolution into solver inputs.

use std::path::{Path, PathBuf};

use riskdp_core::{
    normal_samples, CostSpec, IntervalSet, ProblemConfig, RiskSpec, StateGrid, SystemModel,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub cost: CostConfig,
    pub safe_set: IntervalConfig,
    pub risk: RiskConfig,
    pub horizon: usize,
    pub grid: GridConfig,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    /// Initial state for simulation; defaults to the midpoint of the safe set.
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// Defaults to on exactly when the cost is convex.
    #[serde(default)]
    pub envelope: Option<bool>,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

fn default_n_traj() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub a: f64,
    pub b: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub disturbance: Disturbance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Disturbance {
    /// Explicit support; uniform weights when `weights` is omitted.
    Samples {
        values: Vec<f64>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// `n` Box–Muller draws from ChaCha8 seeded with `seed`, equally weighted.
    Normal { mean: f64, std: f64, n: usize, seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub stage: StageCost,
    #[serde(default)]
    pub terminal: TerminalCost,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StageCost {
    /// `holding·(x + u − w)^+ + shortage·(w − x − u)^+`.
    Newsvendor { holding: f64, shortage: f64 },
    Zero,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalCost {
    #[default]
    Zero,
    /// `weight·|x − center|`.
    LinearAbs { center: f64, weight: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    pub alpha: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub sweep: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub no_envelope: bool,
}

/// A validated run: the base problem plus everything needed to sweep,
/// simulate, and write.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub source: RunConfig,
    pub problem: ProblemConfig,
    pub sweep: Vec<f64>,
    pub x0: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub out: PathBuf,
}

/// The instance as printed by `--dry-run`.
#[derive(Debug, Serialize)]
pub struct InstanceSummary<'a> {
    pub model: &'a SystemModel,
    pub cost: &'a CostConfig,
    pub safe_set: IntervalSet,
    pub alpha: f64,
    pub sweep: &'a [f64],
    pub horizon: usize,
    pub grid: GridSummary,
    pub envelope: bool,
    pub x0: f64,
    pub seed: u64,
    pub n_traj: usize,
    pub out: &'a Path,
}

#[derive(Debug, Serialize)]
pub struct GridSummary {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
    pub spacing: f64,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn resolve(self, overrides: &Overrides) -> Result<ResolvedRun, CliError> {
        let invalid = |e: riskdp_core::Error| CliError::Config(e.to_string());

        let m = &self.model;
        let model = match &m.disturbance {
            Disturbance::Samples { values, weights: None } => {
                SystemModel::uniform(m.a, m.b, values.clone(), m.u_lo, m.u_hi)
            }
            Disturbance::Samples { values, weights: Some(w) } => {
                SystemModel::new(m.a, m.b, values.clone(), w.clone(), m.u_lo, m.u_hi)
            }
            Disturbance::Normal { mean, std, n, seed } => {
                if !(std.is_finite() && *std >= 0.0) || *n == 0 {
                    return Err(CliError::Config(format!(
                        "normal disturbance needs std >= 0 and n >= 1, got std={std}, n={n}"
                    )));
                }
                SystemModel::uniform(m.a, m.b, normal_samples(*mean, *std, *n, *seed), m.u_lo, m.u_hi)
            }
        }
        .map_err(invalid)?;

        let stage = match self.cost.stage {
            StageCost::Newsvendor { holding, shortage } => {
                if !(holding >= 0.0 && shortage >= 0.0) {
                    return Err(CliError::Config("newsvendor coefficients must be nonnegative".into()));
                }
                CostSpec::newsvendor(holding, shortage)
            }
            StageCost::Zero => CostSpec::zero(),
        };
        let cost = match self.cost.terminal {
            TerminalCost::Zero => stage,
            TerminalCost::LinearAbs { center, weight } => {
                stage.with_terminal(move |x| weight * (x - center).abs(), weight >= 0.0)
            }
        };

        let safe_set = IntervalSet::new(self.safe_set.lo, self.safe_set.hi).map_err(invalid)?;
        let risk = RiskSpec::new(self.risk.alpha, self.risk.delta).map_err(invalid)?;
        let grid = StateGrid::uniform(self.grid.lo, self.grid.hi, self.grid.step).map_err(invalid)?;
        let mut problem =
            ProblemConfig::new(model, cost, safe_set, risk, self.horizon, grid).map_err(invalid)?;
        if let Some(e) = self.envelope {
            problem = problem.with_envelope(e);
        }
        if overrides.no_envelope {
            problem = problem.with_envelope(false);
        }

        let sweep = overrides
            .sweep
            .clone()
            .or_else(|| self.sweep.clone())
            .unwrap_or_else(|| vec![self.risk.delta]);
        if sweep.is_empty() {
            return Err(CliError::Config("delta sweep is empty".into()));
        }
        if sweep.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(CliError::Config("delta sweep values must be finite and >= 0".into()));
        }
        if sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("delta sweep must be strictly increasing".into()));
        }

        let n_traj = overrides.n_traj.unwrap_or(self.n_traj);
        if n_traj == 0 {
            return Err(CliError::Config("n_traj must be at least 1".into()));
        }
        let x0 = self.x0.unwrap_or(0.5 * (safe_set.lo() + safe_set.hi()));
        if !x0.is_finite() {
            return Err(CliError::Config("x0 must be finite".into()));
        }
        let out = overrides
            .out
            .clone()
            .or_else(|| self.outputs.clone())
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set outputs".into()))?;

        Ok(ResolvedRun {
            seed: overrides.seed.unwrap_or(self.seed),
            source: self,
            problem,
            sweep,
            x0,
            n_traj,
            out,
        })
    }
}

impl ResolvedRun {
    pub fn summary(&self) -> InstanceSummary<'_> {
        let grid = &self.problem.grid;
        InstanceSummary {
            model: &self.problem.model,
            cost: &self.source.cost,
            safe_set: self.problem.safe_set,
            alpha: self.problem.risk.alpha(),
            sweep: &self.sweep,
            horizon: self.problem.horizon,
            grid: GridSummary { lo: grid.lo(), hi: grid.hi(), nodes: grid.len(), spacing: grid.spacing() },
            envelope: self.problem.envelope,
            x0: self.x0,
            seed: self.seed,
            n_traj: self.n_traj,
            out: &self.out,
        }
    }
}
