//! Per-state Bellman step with a CVaR safety constraint.
//!
//! At a state `x` the stage problem is
//!
//! ```text
//! min_{u ∈ U, z}  E[r(x, u, w)] + E[v_next(f(x, u, w))]
//! s.t.            z + E[(dist(f(x, u, w), A) − z)^+] / (1 − α) <= δ
//! ```
//!
//! With a finite support the inner distance is attained by projecting the
//! successor onto `A`, so the auxiliary points `y_i ∈ A` never appear
//! explicitly. Minimizing over `z` inside the constraint is exactly the
//! discrete CVaR, which leaves a one-dimensional convex problem in `u`:
//! the constraint carves out an interval of controls, and the objective is
//! minimized on it by golden-section search.

use serde::Serialize;

use crate::model::{IntervalSet, ProblemConfig, RiskSpec, SystemModel};
use crate::risk::{cvar_unchecked, safety_loss_cvar_unchecked, safety_losses};
use crate::search::{bisect_boundary, golden_section_min, BISECT_TOL, GOLDEN_MAX_ITER, GOLDEN_TOL};
use crate::value::ValueTable;

/// A state is risk-feasible when its smallest attainable CVaR is within
/// `δ + FEASIBILITY_SLACK`.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Outcome of the stage problem at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageSolution {
    /// Optimal cost-to-go, `+∞` when no admissible control exists.
    pub value: f64,
    pub u_star: Option<f64>,
    /// Minimizer of the extremal CVaR objective at `u_star` (the VaR level).
    pub z_star: Option<f64>,
}

impl StageSolution {
    pub fn infeasible() -> Self {
        Self { value: f64::INFINITY, u_star: None, z_star: None }
    }

    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }
}

/// Controls in `U` whose one-step safety CVaR does not exceed `δ`.
///
/// The CVaR is convex in `u`, so the set is an interval. Its minimizer is
/// located by golden-section search and each endpoint by bisection outward.
pub fn feasible_control_interval(
    model: &SystemModel,
    safe_set: &IntervalSet,
    x: f64,
    risk: &RiskSpec,
) -> Option<IntervalSet> {
    let alpha = risk.alpha();
    let threshold = risk.delta() + FEASIBILITY_SLACK;
    let cvar_at = |u: f64| safety_loss_cvar_unchecked(model, safe_set, x, u, alpha);
    let (u_lo, u_hi) = (model.u_lo(), model.u_hi());

    let (mut center, mut least) = golden_section_min(cvar_at, u_lo, u_hi, GOLDEN_TOL, GOLDEN_MAX_ITER);
    if !(least <= threshold) {
        // The CVaR is piecewise linear in u; a minimum sitting exactly at δ
        // on a kink is only recovered by evaluating the kink itself.
        for u in cvar_kinks(model, safe_set, x) {
            if (u - center).abs() <= KINK_WINDOW && (u_lo..=u_hi).contains(&u) {
                let c = cvar_at(u);
                if c < least {
                    (center, least) = (u, c);
                }
            }
        }
        if !(least <= threshold) {
            return None;
        }
    }
    let ok = |u: f64| cvar_at(u) <= threshold;
    let left = if ok(u_lo) { u_lo } else { bisect_boundary(ok, center, u_lo, BISECT_TOL) };
    let right = if ok(u_hi) { u_hi } else { bisect_boundary(ok, center, u_hi, BISECT_TOL) };
    IntervalSet::new(left, right).ok()
}

/// Search radius around the golden-section estimate for kink polishing.
const KINK_WINDOW: f64 = 1e-6;
/// Gap tolerated when intersecting the (bisected) constraint interval with
/// the exactly known successor domains.
const INTERSECT_TOL: f64 = 2.0 * BISECT_TOL;

/// Controls where `u ↦ CVaR[dist(f(x, u, w), A)]` can change slope: a
/// successor crosses `∂A`, or two losses on opposite sides of `A` coincide.
fn cvar_kinks(model: &SystemModel, safe_set: &IntervalSet, x: f64) -> Vec<f64> {
    let b = model.b();
    if b == 0.0 {
        return Vec::new();
    }
    let drift: Vec<f64> = model.samples().iter().map(|&w| model.a() * x - w).collect();
    let mut out = Vec::with_capacity(drift.len() * (drift.len() + 3) / 2);
    for (i, &di) in drift.iter().enumerate() {
        out.push((safe_set.lo() - di) / b);
        out.push((safe_set.hi() - di) / b);
        for &dj in &drift[i + 1..] {
            out.push((safe_set.lo() + safe_set.hi() - di - dj) / (2.0 * b));
        }
    }
    out
}

/// Controls `u` for which `f(x, u, w)` lands in `[lo, hi]`, as an interval
/// of the real line (possibly unbounded when `b = 0`).
fn controls_landing_in(model: &SystemModel, x: f64, w: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let drift = model.a() * x - w;
    let b = model.b();
    if b == 0.0 {
        return (lo <= drift && drift <= hi).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let (p, q) = ((lo - drift) / b, (hi - drift) / b);
    Some(if p <= q { (p, q) } else { (q, p) })
}

/// Intersects two sorted interval lists. Near-misses up to `tol` become a
/// single point taken from `b`, whose endpoints are exact.
fn intersect(a: &[(f64, f64)], b: &[(f64, f64)], tol: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            out.push((lo, hi));
        } else if lo - hi <= tol {
            let p = if a[i].0 > b[j].1 { b[j].1 } else { b[j].0 };
            out.push((p, p));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Disjoint, sorted control intervals on which the stage problem is
/// feasible: the CVaR constraint holds and every successor with positive
/// probability lands where `v_next` is finite.
pub fn admissible_controls(config: &ProblemConfig, v_next: &ValueTable, x: f64) -> Vec<(f64, f64)> {
    let model = &config.model;
    let Some(feasible) = feasible_control_interval(model, &config.safe_set, x, &config.risk) else {
        return Vec::new();
    };
    let runs = v_next.finite_runs();
    let mut pieces = vec![(feasible.lo(), feasible.hi())];
    for (&w, &p) in model.samples().iter().zip(model.weights()) {
        if p == 0.0 {
            continue;
        }
        let mut allowed: Vec<(f64, f64)> = runs
            .iter()
            .filter_map(|&(lo, hi)| controls_landing_in(model, x, w, lo, hi))
            .collect();
        allowed.sort_by(|l, r| l.0.total_cmp(&r.0));
        pieces = intersect(&pieces, &allowed, INTERSECT_TOL);
        if pieces.is_empty() {
            break;
        }
    }
    pieces
}

/// Expected stage cost plus expected cost-to-go of control `u` at `x`.
pub fn stage_objective(config: &ProblemConfig, v_next: &ValueTable, x: f64, u: f64) -> f64 {
    let model = &config.model;
    let mut total = 0.0;
    for (&w, &p) in model.samples().iter().zip(model.weights()) {
        if p == 0.0 {
            continue;
        }
        let next = v_next.eval(model.step(x, u, w));
        if !next.is_finite() {
            return f64::INFINITY;
        }
        total += p * (config.cost.stage(x, u, w) + next);
    }
    total
}

/// Solves the stage problem at state `x` given the next-stage values.
pub fn stage_solve(config: &ProblemConfig, v_next: &ValueTable, x: f64) -> StageSolution {
    let pieces = admissible_controls(config, v_next, x);
    let mut best: Option<(f64, f64)> = None;
    for (lo, hi) in pieces {
        let (u, value) = golden_section_min(
            |u| stage_objective(config, v_next, x, u),
            lo,
            hi,
            GOLDEN_TOL,
            GOLDEN_MAX_ITER,
        );
        if value.is_finite() && best.is_none_or(|(_, b)| value < b) {
            best = Some((u, value));
        }
    }
    match best {
        Some((u, value)) => {
            let losses = safety_losses(&config.model, &config.safe_set, x, u);
            let (_, z) = cvar_unchecked(&losses, config.model.weights(), config.risk.alpha());
            StageSolution { value, u_star: Some(u), z_star: Some(z) }
        }
        None => StageSolution::infeasible(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostSpec, StateGrid};
    use crate::risk::{safety_loss_cvar, set_distance};
    use proptest::prelude::*;

    fn iv(lo: f64, hi: f64) -> IntervalSet {
        IntervalSet::new(lo, hi).unwrap()
    }

    fn toy_model() -> SystemModel {
        SystemModel::inventory(vec![10.0, 20.0, 30.0], 0.0, 32.0).unwrap()
    }

    /// Brute-force feasible set over a u-grid of step `h`.
    fn brute_feasible(model: &SystemModel, a: &IntervalSet, x: f64, alpha: f64, delta: f64, h: f64) -> Option<(f64, f64)> {
        let n = ((model.u_hi() - model.u_lo()) / h).round() as usize;
        let ok: Vec<f64> = (0..=n)
            .map(|k| model.u_lo() + k as f64 * h)
            .filter(|&u| safety_loss_cvar(model, a, x, u, alpha).unwrap() <= delta + 1e-9)
            .collect();
        Some((*ok.first()?, *ok.last()?))
    }

    #[test]
    fn feasible_interval_examples() {
        let m = toy_model();
        let a = iv(0.0, 100.0);
        let alpha = 2.0 / 3.0;

        let got = feasible_control_interval(&m, &a, 0.0, &RiskSpec::new(alpha, 0.0).unwrap()).unwrap();
        let want = brute_feasible(&m, &a, 0.0, alpha, 0.0, 1e-4).unwrap();
        assert!((want.0 - 30.0).abs() < 1e-9 && want.1 == 32.0);
        assert!((got.lo() - 30.0).abs() < 1e-8, "{got}");
        assert_eq!(got.hi(), 32.0);

        let got = feasible_control_interval(&m, &a, 0.0, &RiskSpec::new(alpha, 5.0).unwrap()).unwrap();
        let want = brute_feasible(&m, &a, 0.0, alpha, 5.0, 1e-4).unwrap();
        assert!((want.0 - 25.0).abs() < 1e-9);
        assert!((got.lo() - 25.0).abs() < 1e-8, "{got}");
        assert_eq!(got.hi(), 32.0);

        for delta in [0.0, 3.0, 50.0] {
            let got = feasible_control_interval(&m, &a, 50.0, &RiskSpec::new(alpha, delta).unwrap()).unwrap();
            assert_eq!((got.lo(), got.hi()), (0.0, 32.0));
        }

        // Even the largest order leaves a shortfall of 20 on the worst sample.
        assert!(feasible_control_interval(&m, &a, -22.0, &RiskSpec::new(alpha, 1.0).unwrap()).is_none());
    }

    fn toy_config(cost: CostSpec, delta: f64) -> ProblemConfig {
        ProblemConfig::new(
            toy_model(),
            cost,
            iv(0.0, 100.0),
            RiskSpec::new(2.0 / 3.0, delta).unwrap(),
            1,
            StateGrid::uniform(-40.0, 140.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    fn zeros(grid: &StateGrid) -> ValueTable {
        ValueTable::new(grid.clone(), vec![0.0; grid.len()]).unwrap()
    }

    #[test]
    fn terminal_stage_newsvendor() {
        let cfg = toy_config(CostSpec::newsvendor(1.0, 1.0), 0.0);
        let v = zeros(&cfg.grid);
        let sol = stage_solve(&cfg, &v, 0.0);
        // Brute force over u in [30, 32] with step 1e-4: E|u - w| = u - 20.
        let brute = (0..=20_000)
            .map(|k| 30.0 + k as f64 * 1e-4)
            .map(|u| stage_objective(&cfg, &v, 0.0, u))
            .fold(f64::INFINITY, f64::min);
        assert!((brute - 10.0).abs() < 1e-9);
        assert!((sol.value - 10.0).abs() < 1e-8, "{sol:?}");
        assert!((sol.u_star.unwrap() - 30.0).abs() < 1e-8);
        // All losses are zero at u*, so the VaR level is zero.
        assert_eq!(sol.z_star, Some(0.0));
    }

    #[test]
    fn zero_cost_interior_state() {
        let cfg = toy_config(CostSpec::zero(), 0.0);
        let sol = stage_solve(&cfg, &zeros(&cfg.grid), 50.0);
        assert_eq!(sol.value, 0.0);
        assert!(sol.u_star.is_some());
    }

    #[test]
    fn infeasible_state_is_infinite() {
        let cfg = toy_config(CostSpec::newsvendor(1.0, 1.0), 1.0);
        let sol = stage_solve(&cfg, &zeros(&cfg.grid), -22.0);
        assert_eq!(sol, StageSolution::infeasible());
    }

    #[test]
    fn successors_must_land_on_finite_values() {
        let cfg = toy_config(CostSpec::zero(), 100.0);
        let grid = cfg.grid.clone();
        // Finite only on [0, 100].
        let vals = grid.points().iter().map(|&p| if (0.0..=100.0).contains(&p) { 0.0 } else { f64::INFINITY }).collect();
        let v = ValueTable::new(grid, vals).unwrap();
        let pieces = admissible_controls(&cfg, &v, 5.0);
        // Need 5 + u - 30 >= 0 and 5 + u - 10 <= 100.
        assert_eq!(pieces.len(), 1);
        assert!((pieces[0].0 - 25.0).abs() < 1e-12 && pieces[0].1 == 32.0);
        let sol = stage_solve(&cfg, &v, 5.0);
        assert!(sol.u_star.unwrap() >= 25.0 - 1e-12);
        assert!(stage_solve(&cfg, &v, -10.0).value.is_infinite());
    }

    #[test]
    fn disconnected_next_stage_domain() {
        let cfg = toy_config(CostSpec::zero(), 100.0);
        let model = SystemModel::inventory(vec![0.0], 0.0, 10.0).unwrap();
        let cfg = ProblemConfig { model, ..cfg };
        let grid = StateGrid::uniform(0.0, 10.0, 1.0).unwrap();
        let mut vals = vec![f64::INFINITY; 11];
        vals[2] = 5.0;
        vals[7] = 1.0;
        vals[8] = 3.0;
        let v = ValueTable::new(grid, vals).unwrap();
        let pieces = admissible_controls(&cfg, &v, 0.0);
        assert_eq!(pieces, vec![(2.0, 2.0), (7.0, 8.0)]);
        let sol = stage_solve(&cfg, &v, 0.0);
        assert_eq!(sol.value, 1.0);
        assert_eq!(sol.u_star, Some(7.0));
    }

    proptest! {
        #[test]
        fn projection_attains_distance(y in -300.0f64..300.0, lo in -50.0f64..50.0, w in 0.0f64..80.0) {
            let a = iv(lo, lo + w);
            let proj = a.project(y);
            prop_assert!(a.contains(proj));
            prop_assert_eq!((y - proj).abs(), set_distance(y, &a));
            // No point of a fine grid over A does better.
            let best = (0..=400).map(|k| a.lo() + a.width() * k as f64 / 400.0)
                .map(|p| (y - p).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!(set_distance(y, &a) <= best + 1e-12);
        }

        #[test]
        fn feasibility_monotone_in_delta(x in -30.0f64..130.0, d1 in 0.0f64..15.0, extra in 0.0f64..15.0) {
            let m = toy_model();
            let a = iv(0.0, 100.0);
            let small = feasible_control_interval(&m, &a, x, &RiskSpec::new(0.9, d1).unwrap());
            let big = feasible_control_interval(&m, &a, x, &RiskSpec::new(0.9, d1 + extra).unwrap());
            if let Some(s) = small {
                let b = big.expect("larger tolerance lost feasibility");
                prop_assert!(s.is_subset_of(&b, 1e-8));
            }
            let c1 = toy_config(CostSpec::newsvendor(1.0, 2.0), d1);
            let c2 = toy_config(CostSpec::newsvendor(1.0, 2.0), d1 + extra);
            let v = zeros(&c1.grid);
            prop_assert!(stage_solve(&c1, &v, x).value >= stage_solve(&c2, &v, x).value - 1e-7);
        }

        #[test]
        fn solution_respects_constraint(x in -30.0f64..130.0, delta in 0.0f64..12.0, alpha in 0.05f64..0.95) {
            let cfg = ProblemConfig { risk: RiskSpec::new(alpha, delta).unwrap(), ..toy_config(CostSpec::newsvendor(1.0, 1.0), 0.0) };
            let sol = stage_solve(&cfg, &zeros(&cfg.grid), x);
            if let Some(u) = sol.u_star {
                prop_assert!((0.0..=32.0).contains(&u));
                let c = safety_loss_cvar(&cfg.model, &cfg.safe_set, x, u, alpha).unwrap();
                prop_assert!(c <= delta + 1e-7, "cvar {} > delta {}", c, delta);
            }
        }
    }
}
