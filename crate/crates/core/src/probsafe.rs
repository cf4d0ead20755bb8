//! Probabilistic safe sets `S_α(A)` via the safety-probability recursion
//!
//! ```text
//! W_T(x) = 1[x ∈ A]
//! W_t(x) = max_{u ∈ U} Σ_i p_i · 1[f(x,u,w_i) ∈ A] · W_{t+1}(f(x,u,w_i))
//! ```
//!
//! and checks relating them to the risk-constrained safe sets.
//!
//! With `W_{t+1}` interpolated linearly between grid nodes, the objective in
//! `u` is piecewise linear with jumps where a successor crosses `∂A` and
//! kinks where it crosses a grid node. Because `A` is closed the objective
//! is upper semicontinuous, so its maximum is attained at one of those
//! breakpoints or at an end of `U`. The maximization enumerates exactly
//! that candidate set.

use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{backward_solve, SolveResult};
use crate::error::{Error, Result};
use crate::model::{CostSpec, IntervalSet, StateGrid, SystemModel};

/// Slack on set membership of computed successor states.
const MEMBERSHIP_TOL: f64 = 1e-9;
/// Slack on the probability threshold `W_0 >= α`.
const LEVEL_TOL: f64 = 1e-13;

/// Safety probabilities `W_t` on the grid for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyProbTable {
    grid: StateGrid,
    probs: Vec<Vec<f64>>,
}

impl SafetyProbTable {
    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn stage(&self, t: usize) -> &[f64] {
        &self.probs[t]
    }

    pub fn horizon(&self) -> usize {
        self.probs.len() - 1
    }

    /// Interpolated `W_t(x)`; zero off the grid.
    pub fn eval(&self, t: usize, x: f64) -> f64 {
        interpolate_prob(self.grid.points(), &self.probs[t], x)
    }
}

fn interpolate_prob(pts: &[f64], probs: &[f64], x: f64) -> f64 {
    let v = crate::value::interpolate(pts, probs, x);
    if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn candidate_controls(model: &SystemModel, set: &IntervalSet, grid: &StateGrid, x: f64) -> Vec<f64> {
    let (u_lo, u_hi) = (model.u_lo(), model.u_hi());
    let mut out = vec![u_lo, u_hi];
    let b = model.b();
    if b == 0.0 {
        return out;
    }
    let pts = grid.points();
    let admissible = |u: f64| u_lo <= u && u <= u_hi;
    for (&w, &p) in model.samples().iter().zip(model.weights()) {
        if p == 0.0 {
            continue;
        }
        let drift = model.a() * x - w;
        for target in [set.lo(), set.hi()] {
            let u = (target - drift) / b;
            if admissible(u) {
                out.push(u);
            }
        }
        let (y0, y1) = (drift + b * u_lo, drift + b * u_hi);
        let (ylo, yhi) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
        let first = pts.partition_point(|&g| g < ylo);
        let last = pts.partition_point(|&g| g <= yhi);
        for &g in &pts[first..last] {
            let u = ((g - drift) / b).clamp(u_lo, u_hi);
            out.push(u);
        }
    }
    out
}

fn safety_objective(model: &SystemModel, set: &IntervalSet, pts: &[f64], next: &[f64], x: f64, u: f64) -> f64 {
    model
        .samples()
        .iter()
        .zip(model.weights())
        .filter(|(_, &p)| p > 0.0)
        .map(|(&w, &p)| {
            let y = model.step(x, u, w);
            if set.contains_within(y, MEMBERSHIP_TOL) {
                p * interpolate_prob(pts, next, y)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// Maximal probability of keeping `x_1, …, x_T` in `set` from each grid node.
pub fn safety_probability_dp(
    model: &SystemModel,
    set: &IntervalSet,
    horizon: usize,
    grid: &StateGrid,
) -> Result<SafetyProbTable> {
    if horizon == 0 {
        return Err(Error::EmptyHorizon);
    }
    let pts = grid.points();
    let terminal: Vec<f64> = pts
        .iter()
        .map(|&x| if set.contains_within(x, MEMBERSHIP_TOL) { 1.0 } else { 0.0 })
        .collect();
    let mut probs = vec![terminal];
    for _ in 0..horizon {
        let next = probs.last().expect("terminal stage present");
        let stage: Vec<f64> = pts
            .par_iter()
            .map(|&x| {
                candidate_controls(model, set, grid, x)
                    .into_iter()
                    .map(|u| safety_objective(model, set, pts, next, x, u))
                    .fold(0.0, f64::max)
            })
            .collect();
        probs.push(stage);
    }
    probs.reverse();
    Ok(SafetyProbTable { grid: grid.clone(), probs })
}

/// Hull of grid nodes with `W_0 >= α`.
pub fn probabilistic_safe_set(table: &SafetyProbTable, alpha: f64) -> Result<Option<IntervalSet>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidRisk(format!("safety level must lie in (0, 1], got {alpha}")));
    }
    let pts = table.grid.points();
    let mut hit = table.probs[0]
        .iter()
        .zip(pts)
        .filter(|(&w, _)| w > 0.0 && w >= alpha - LEVEL_TOL)
        .map(|(_, &x)| x);
    let Some(lo) = hit.next() else {
        return Ok(None);
    };
    let hi = hit.next_back().unwrap_or(lo);
    IntervalSet::new(lo, hi).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    Subset,
}

/// One set relation, checked up to the grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionCheck {
    pub name: String,
    pub relation: Relation,
    pub lhs: Option<IntervalSet>,
    pub rhs: Option<IntervalSet>,
    pub holds: bool,
    /// Grid nodes witnessing a violation.
    pub offending_nodes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionReport {
    pub alpha: f64,
    pub delta: f64,
    pub horizon: usize,
    pub resolution: f64,
    pub checks: Vec<InclusionCheck>,
    pub all_hold: bool,
}

fn nodes_in(grid: &StateGrid, set: Option<IntervalSet>) -> Vec<f64> {
    match set {
        Some(s) => grid.points().iter().copied().filter(|&x| s.contains(x)).collect(),
        None => Vec::new(),
    }
}

fn outside(nodes: &[f64], set: Option<IntervalSet>, slack: f64) -> Vec<f64> {
    nodes
        .iter()
        .copied()
        .filter(|&x| set.is_none_or(|s| !s.contains_within(x, slack)))
        .collect()
}

/// Checks `lhs ⊆ rhs` (or `lhs = rhs`) allowing one grid cell of slack.
pub fn compare_sets(
    name: &str,
    relation: Relation,
    lhs: Option<IntervalSet>,
    rhs: Option<IntervalSet>,
    grid: &StateGrid,
) -> InclusionCheck {
    let slack = grid.spacing() + 1e-9;
    let mut offending = outside(&nodes_in(grid, lhs), rhs, slack);
    if relation == Relation::Equal {
        offending.extend(outside(&nodes_in(grid, rhs), lhs, slack));
        offending.sort_by(f64::total_cmp);
        offending.dedup();
    }
    InclusionCheck {
        name: name.to_string(),
        relation,
        lhs,
        rhs,
        holds: offending.is_empty(),
        offending_nodes: offending,
    }
}

/// Relates `RS_{α,δ}(A)` from `result` to probabilistic safe sets on the
/// same grid and model:
///
/// * `δ = 0`: `RS_{α,0}(A) = S_1(A)`;
/// * `δ > 0`: `RS_{α,δ}(A) ⊆ S_{α^T}(A_δ)` and `RS_{α,δ}(A_{−δ}) ⊆ S_{α^T}(A)`.
pub fn check_inclusions(result: &SolveResult) -> Result<InclusionReport> {
    let config = &result.config;
    let (alpha, delta) = (config.risk.alpha(), config.risk.delta());
    let horizon = config.horizon;
    let grid = &config.grid;
    let model = &config.model;
    let set = config.safe_set;
    let rs = result.safe_set(0)?;
    let level = alpha.powi(horizon as i32);

    let mut checks = Vec::new();
    if delta == 0.0 {
        let table = safety_probability_dp(model, &set, horizon, grid)?;
        let s1 = probabilistic_safe_set(&table, 1.0)?;
        checks.push(compare_sets("rs_equals_almost_sure_safe_set", Relation::Equal, rs, s1, grid));
    } else {
        let dilated = set.dilate(delta)?;
        let table = safety_probability_dp(model, &dilated, horizon, grid)?;
        let s_dilated = probabilistic_safe_set(&table, level)?;
        checks.push(compare_sets(
            "rs_subset_of_dilated_probabilistic_set",
            Relation::Subset,
            rs,
            s_dilated,
            grid,
        ));

        let eroded_rs = match set.erode(delta)? {
            Some(eroded) => {
                let feasibility = config.with_safe_set(eroded);
                let feasibility = crate::model::ProblemConfig {
                    cost: CostSpec::zero(),
                    envelope: false,
                    ..feasibility
                };
                backward_solve(&feasibility)?.safe_set(0)?
            }
            None => None,
        };
        let table = safety_probability_dp(model, &set, horizon, grid)?;
        let s_plain = probabilistic_safe_set(&table, level)?;
        checks.push(compare_sets(
            "eroded_rs_subset_of_probabilistic_set",
            Relation::Subset,
            eroded_rs,
            s_plain,
            grid,
        ));
    }
    let all_hold = checks.iter().all(|c| c.holds);
    Ok(InclusionReport {
        alpha,
        delta,
        horizon,
        resolution: grid.spacing(),
        checks,
        all_hold,
    })
}
