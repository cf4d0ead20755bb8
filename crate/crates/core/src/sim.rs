//! Monte Carlo evaluation of a solved policy.
//!
//! Disturbances are resampled from the solver's own finite support, so the
//! DP value is an exact target for the simulated mean. Trajectory `i` of a
//! run with seed `s` draws from ChaCha8 stream `i` of key `s`; results do
//! not depend on thread scheduling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bellman::{admissible_controls, FEASIBILITY_SLACK};
use crate::dp::SolveResult;
use crate::error::{Error, Result};
use crate::risk::{cvar_unchecked, safety_loss_cvar_unchecked, set_distance};
use crate::value::SNAP_TOL;

/// Tolerance on the exact conditional CVaR when counting violations.
pub const AUDIT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rollout {
    pub total_cost: f64,
    /// `x_0, …, x_T`.
    pub states: Vec<f64>,
    /// `u_0, …, u_{T−1}`.
    pub controls: Vec<f64>,
    /// Exact `CVaR_α[dist(x_{t+1}, A) | x_t]` under the applied control.
    pub conditional_cvar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub mean_total_cost: f64,
    pub std_error: f64,
    pub trajectories: usize,
    /// CVaR of the pooled realized `dist(x_{t+1}, A)` at each stage.
    pub per_stage_cvar_estimates: Vec<f64>,
    /// Stage visits whose exact conditional CVaR exceeded `δ`.
    pub constraint_violations: usize,
    pub seed: u64,
}

fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn sampler(result: &SolveResult) -> WeightedIndex<f64> {
    WeightedIndex::new(result.config.model.weights()).expect("validated weights")
}

/// Control applied at `(t, x)`: the stored policy interpolated linearly
/// between grid nodes, then moved into the admissible control set at `x`
/// when interpolation left it.
pub fn policy_control(result: &SolveResult, t: usize, x: f64) -> Result<f64> {
    if t >= result.horizon() {
        return Err(Error::StageOutOfRange { stage: t, horizon: result.horizon() });
    }
    if !result.values[t].eval(x).is_finite() {
        return Err(Error::InfeasibleState { stage: t, x });
    }
    let infeasible = Error::InfeasibleState { stage: t, x };
    let pts = result.config.grid.points();
    let entries = result.policy.stage(t);
    let k = pts.partition_point(|&p| p <= x);
    let node_u = |i: usize| entries[i].u_star;
    let guess = if k > 0 && x - pts[k - 1] <= SNAP_TOL {
        node_u(k - 1)
    } else if k < pts.len() && pts[k] - x <= SNAP_TOL {
        node_u(k)
    } else if k > 0 && k < pts.len() {
        match (node_u(k - 1), node_u(k)) {
            (Some(u0), Some(u1)) => Some(u0 + (x - pts[k - 1]) / (pts[k] - pts[k - 1]) * (u1 - u0)),
            (a, b) => a.or(b),
        }
    } else {
        None
    };
    let guess = guess.ok_or(infeasible.clone())?;

    let config = &result.config;
    let v_next = &result.values[t + 1];
    let admissible = safety_loss_cvar_unchecked(&config.model, &config.safe_set, x, guess, config.risk.alpha())
        <= config.risk.delta() + FEASIBILITY_SLACK
        && config
            .model
            .samples()
            .iter()
            .zip(config.model.weights())
            .all(|(&w, &p)| p == 0.0 || v_next.eval(config.model.step(x, guess, w)).is_finite());
    if admissible {
        return Ok(guess);
    }
    admissible_controls(config, v_next, x)
        .into_iter()
        .map(|(lo, hi)| guess.clamp(lo, hi))
        .min_by(|a, b| (a - guess).abs().total_cmp(&(b - guess).abs()))
        .ok_or(infeasible)
}

fn rollout_with(
    result: &SolveResult,
    x0: f64,
    rng: &mut ChaCha8Rng,
    dist: &WeightedIndex<f64>,
) -> Result<Rollout> {
    let config = &result.config;
    let model = &config.model;
    let horizon = result.horizon();
    let alpha = config.risk.alpha();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    let mut conditional_cvar = Vec::with_capacity(horizon);
    let mut total = 0.0;
    let mut x = x0;
    states.push(x);
    for t in 0..horizon {
        let u = policy_control(result, t, x)?;
        conditional_cvar.push(safety_loss_cvar_unchecked(model, &config.safe_set, x, u, alpha));
        let w = model.samples()[dist.sample(rng)];
        total += config.cost.stage(x, u, w);
        x = model.step(x, u, w);
        controls.push(u);
        states.push(x);
    }
    total += config.cost.terminal(x);
    Ok(Rollout { total_cost: total, states, controls, conditional_cvar })
}

/// Simulates one trajectory of the stored policy from `x0`.
pub fn rollout(result: &SolveResult, x0: f64, seed: u64) -> Result<Rollout> {
    rollout_with(result, x0, &mut trajectory_rng(seed, 0), &sampler(result))
}

fn simulate(result: &SolveResult, x0: f64, n_traj: usize, seed: u64) -> Result<Vec<Rollout>> {
    if n_traj == 0 {
        return Err(Error::NoTrajectories);
    }
    let dist = sampler(result);
    (0..n_traj)
        .into_par_iter()
        .map(|i| rollout_with(result, x0, &mut trajectory_rng(seed, i as u64), &dist))
        .collect()
}

/// Aggregates `n_traj` independent rollouts.
pub fn evaluate(result: &SolveResult, x0: f64, n_traj: usize, seed: u64) -> Result<SimReport> {
    let runs = simulate(result, x0, n_traj, seed)?;
    let config = &result.config;
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.total_cost).sum::<f64>() / n;
    let std_error = if runs.len() > 1 {
        let var = runs.iter().map(|r| (r.total_cost - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };

    let weights = vec![1.0 / n; runs.len()];
    let per_stage_cvar_estimates = (0..result.horizon())
        .map(|t| {
            let losses: Vec<f64> =
                runs.iter().map(|r| set_distance(r.states[t + 1], &config.safe_set)).collect();
            cvar_unchecked(&losses, &weights, config.risk.alpha()).0
        })
        .collect();
    let limit = config.risk.delta() + AUDIT_TOL;
    let constraint_violations = runs
        .iter()
        .flat_map(|r| r.conditional_cvar.iter())
        .filter(|&&c| c > limit)
        .count();

    Ok(SimReport {
        mean_total_cost: mean,
        std_error,
        trajectories: runs.len(),
        per_stage_cvar_estimates,
        constraint_violations,
        seed,
    })
}

/// Monte Carlo estimate of the conditional safety CVaR at one visited state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalAudit {
    pub stage: usize,
    pub state: f64,
    pub control: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// The same quantity computed exactly over the finite support.
    pub exact: f64,
}

impl ConditionalAudit {
    /// `estimate <= δ + k·std_error`.
    pub fn within(&self, delta: f64, k: f64) -> bool {
        self.estimate <= delta + k * self.std_error + AUDIT_TOL
    }
}

/// Re-checks the stage constraints statistically. For each stage, the
/// states visited by the first `n_paths` trajectories (seeded as in
/// [`evaluate`]) are revisited and `n_conditional` successors are drawn under
/// the policy's control there.
///
/// The estimator is the extremal objective at the sample VaR,
/// `ẑ + mean((L − ẑ)^+)/(1 − α)`, with its standard error taken from the
/// spread of the summands.
pub fn audit_constraints(
    result: &SolveResult,
    x0: f64,
    n_paths: usize,
    n_conditional: usize,
    seed: u64,
) -> Result<Vec<ConditionalAudit>> {
    let runs = simulate(result, x0, n_paths, seed)?;
    let config = &result.config;
    let model = &config.model;
    let alpha = config.risk.alpha();
    let dist = sampler(result);
    let m = n_conditional.max(2);
    let weights = vec![1.0 / m as f64; m];

    let mut jobs = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        for t in 0..result.horizon() {
            jobs.push((i, t, r.states[t], r.controls[t]));
        }
    }
    jobs.into_par_iter()
        .map(|(i, t, x, u)| {
            // Streams above 2^32 stay disjoint from the trajectory streams.
            let mut rng = trajectory_rng(seed, (1u64 << 32) + (i * result.horizon() + t) as u64);
            let losses: Vec<f64> = (0..m)
                .map(|_| set_distance(model.step(x, u, model.samples()[dist.sample(&mut rng)]), &config.safe_set))
                .collect();
            let (estimate, z) = cvar_unchecked(&losses, &weights, alpha);
            let terms: Vec<f64> = losses.iter().map(|l| z + (l - z).max(0.0) / (1.0 - alpha)).collect();
            let mean = terms.iter().sum::<f64>() / m as f64;
            let var = terms.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
            Ok(ConditionalAudit {
                stage: t,
                state: x,
                control: u,
                estimate,
                std_error: (var / m as f64).sqrt(),
                exact: safety_loss_cvar_unchecked(model, &config.safe_set, x, u, alpha),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::backward_solve;
    use crate::model::{CostSpec, IntervalSet, ProblemConfig, RiskSpec, StateGrid, SystemModel};

    fn config(samples: Vec<f64>, cost: CostSpec, delta: f64) -> ProblemConfig {
        ProblemConfig::new(
            SystemModel::inventory(samples, 0.0, 6.0).unwrap(),
            cost,
            IntervalSet::new(0.0, 10.0).unwrap(),
            RiskSpec::new(2.0 / 3.0, delta).unwrap(),
            3,
            StateGrid::uniform(-5.0, 15.0, 0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_cost_totals_zero() {
        let res = backward_solve(&config(vec![1.0, 3.0, 5.0], CostSpec::zero(), 1.0)).unwrap();
        let r = rollout(&res, 5.0, 11).unwrap();
        assert_eq!(r.total_cost, 0.0);
        assert_eq!(r.states.len(), 4);
    }

    #[test]
    fn single_sample_is_deterministic() {
        let res = backward_solve(&config(vec![3.0], CostSpec::newsvendor(1.0, 2.0), 0.0)).unwrap();
        let a = rollout(&res, 4.0, 1).unwrap();
        let b = rollout(&res, 4.0, 999).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_trajectory_report() {
        let res = backward_solve(&config(vec![1.0, 3.0, 5.0], CostSpec::newsvendor(1.0, 1.0), 1.0)).unwrap();
        let rep = evaluate(&res, 5.0, 1, 3).unwrap();
        let r = rollout(&res, 5.0, 3).unwrap();
        assert_eq!(rep.mean_total_cost, r.total_cost);
        assert_eq!(rep.std_error, 0.0);
        assert_eq!(rep.trajectories, 1);
        assert!(evaluate(&res, 5.0, 0, 3).is_err());
    }

    #[test]
    fn infeasible_start_is_an_error() {
        let res = backward_solve(&config(vec![1.0, 3.0, 5.0], CostSpec::zero(), 0.0)).unwrap();
        assert!(matches!(rollout(&res, -5.0, 0), Err(Error::InfeasibleState { stage: 0, .. })));
    }

    #[test]
    fn reports_are_bit_identical() {
        let res = backward_solve(&config(vec![1.0, 2.5, 5.0, 6.5], CostSpec::newsvendor(1.0, 1.0), 0.5)).unwrap();
        let a = evaluate(&res, 4.25, 2000, 42).unwrap();
        let b = evaluate(&res, 4.25, 2000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean_total_cost.to_bits(), b.mean_total_cost.to_bits());
        assert!(a.constraint_violations <= 3 * a.trajectories);
        assert_eq!(a.constraint_violations, 0);
    }

    #[test]
    fn policy_control_stays_admissible_between_nodes() {
        let res = backward_solve(&config(vec![1.0, 3.0, 5.0], CostSpec::newsvendor(1.0, 3.0), 0.0)).unwrap();
        let cfg = &res.config;
        let hull = res.safe_set(0).unwrap().unwrap();
        let mut x = hull.lo();
        while x <= hull.hi() {
            let u = policy_control(&res, 0, x).unwrap();
            assert!(
                safety_loss_cvar_unchecked(&cfg.model, &cfg.safe_set, x, u, cfg.risk.alpha()) <= 1e-9,
                "x={x} u={u}"
            );
            for y in cfg.model.successors(x, u) {
                assert!(res.values[1].eval(y).is_finite());
            }
            x += 0.137;
        }
    }
}
