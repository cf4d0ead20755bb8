//! Backward recursion over the state grid and extraction of the
//! risk-constrained safe sets `{x : v_t(x) < ∞}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::bellman::{stage_solve, StageSolution};
use crate::error::{Error, Result};
use crate::model::{IntervalSet, ProblemConfig};
use crate::value::{convex_envelope, ValueTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyEntry {
    pub u_star: Option<f64>,
    pub z_star: Option<f64>,
}

/// Markov policy on the grid, indexed `[stage][node]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTable {
    stages: Vec<Vec<PolicyEntry>>,
}

impl PolicyTable {
    pub fn stage(&self, t: usize) -> &[PolicyEntry] {
        &self.stages[t]
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub config: ProblemConfig,
    /// `values[t]` for `t = 0..=T`; `values[T]` is the terminal cost.
    pub values: Vec<ValueTable>,
    pub policy: PolicyTable,
    /// Hull of feasible nodes at each decision stage `t = 0..T-1`.
    pub safe_sets: Vec<Option<IntervalSet>>,
}

impl SolveResult {
    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Grid resolution bounding how well each safe-set boundary is known.
    pub fn resolution(&self) -> f64 {
        self.config.grid.spacing()
    }

    pub fn safe_set(&self, t: usize) -> Result<Option<IntervalSet>> {
        self.safe_sets
            .get(t)
            .copied()
            .ok_or(Error::StageOutOfRange { stage: t, horizon: self.horizon() })
    }

    pub fn value_at(&self, t: usize, x: f64) -> Result<f64> {
        self.values
            .get(t)
            .map(|v| v.eval(x))
            .ok_or(Error::StageOutOfRange { stage: t, horizon: self.horizon() })
    }
}

/// Solves the risk-constrained problem backward from the terminal cost.
pub fn backward_solve(config: &ProblemConfig) -> Result<SolveResult> {
    let horizon = config.horizon;
    if horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    let grid = &config.grid;
    let terminal: Vec<f64> = grid.points().iter().map(|&x| config.cost.terminal(x)).collect();
    if let Some(i) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(Error::DegenerateTerminal(grid.points()[i]));
    }

    let mut values = vec![ValueTable::new(grid.clone(), terminal)?];
    let mut stages = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let v_next = values.last().expect("terminal table present");
        let solutions: Vec<StageSolution> = grid
            .points()
            .par_iter()
            .map(|&x| stage_solve(config, v_next, x))
            .collect();
        let raw: Vec<f64> = solutions.iter().map(|s| s.value).collect();
        let vals = if config.envelope { convex_envelope(grid, &raw)? } else { raw };
        values.push(ValueTable::new(grid.clone(), vals)?);
        stages.push(
            solutions
                .iter()
                .map(|s| PolicyEntry { u_star: s.u_star, z_star: s.z_star })
                .collect(),
        );
    }
    values.reverse();
    stages.reverse();
    let safe_sets = values[..horizon].iter().map(ValueTable::finite_hull).collect();

    Ok(SolveResult {
        config: config.clone(),
        values,
        policy: PolicyTable { stages },
        safe_sets,
    })
}

/// `RS_{α,δ,t}(A)`: the hull of grid states with finite `v_t`.
pub fn risk_constrained_safe_set(result: &SolveResult, t: usize) -> Result<Option<IntervalSet>> {
    result.safe_set(t)
}

pub fn value_at(result: &SolveResult, t: usize, x: f64) -> Result<f64> {
    result.value_at(t, x)
}
