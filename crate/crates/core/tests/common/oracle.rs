//! Brute-force reference solvers for small instances.
//!
//! Nothing here calls into the solver: the triple-level Bellman recursion is
//! evaluated directly by enumerating a control grid, a VaR-level grid, and
//! computing distances by projection onto the safe interval.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use riskdp_core::{CostSpec, IntervalSet, ProblemConfig, RiskSpec, StateGrid, SystemModel};

const SNAP: f64 = 1e-9;
const SLACK: f64 = 1e-9;

/// A small scalar instance with integer data.
#[derive(Debug, Clone)]
pub struct Toy {
    pub a: f64,
    pub b: f64,
    pub samples: Vec<f64>,
    pub weights: Vec<f64>,
    pub u_lo: f64,
    pub u_hi: f64,
    pub safe: (f64, f64),
    pub alpha: f64,
    pub delta: f64,
    pub horizon: usize,
    pub grid: Vec<f64>,
    pub holding: f64,
    pub shortage: f64,
    /// `q(x) = weight · |x − center|`.
    pub terminal: Option<(f64, f64)>,
}

impl Toy {
    pub fn random<R: Rng>(rng: &mut R) -> Toy {
        let n = rng.gen_range(2..=4usize);
        let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=6) as f64).collect();
        let safe_hi = rng.gen_range(6..=10) as f64;
        let lo = rng.gen_range(-4..=-2) as f64;
        let nodes = rng.gen_range(12..=15usize);
        let alpha = *[0.5, 2.0 / 3.0, 0.75, 0.8, 0.9].choose(rng).unwrap();
        let delta = *[0.0, 0.5, 1.0, 1.5, 2.0].choose(rng).unwrap();
        let terminal = rng.gen_bool(0.5).then(|| (safe_hi / 2.0, 0.5));
        Toy {
            a: 1.0,
            b: 1.0,
            weights: vec![1.0 / n as f64; n],
            samples,
            u_lo: 0.0,
            u_hi: rng.gen_range(4..=6) as f64,
            safe: (0.0, safe_hi),
            alpha,
            delta,
            horizon: rng.gen_range(1..=2),
            grid: (0..nodes).map(|i| lo + i as f64).collect(),
            holding: *[0.5, 1.0].choose(rng).unwrap(),
            shortage: *[0.5, 1.0, 2.0].choose(rng).unwrap(),
            terminal,
        }
    }

    pub fn config(&self) -> ProblemConfig {
        let model = SystemModel::new(
            self.a,
            self.b,
            self.samples.clone(),
            self.weights.clone(),
            self.u_lo,
            self.u_hi,
        )
        .unwrap();
        let mut cost = CostSpec::newsvendor(self.holding, self.shortage);
        if let Some((c, k)) = self.terminal {
            cost = cost.with_terminal(move |x| k * (x - c).abs(), true);
        }
        ProblemConfig::new(
            model,
            cost,
            IntervalSet::new(self.safe.0, self.safe.1).unwrap(),
            RiskSpec::new(self.alpha, self.delta).unwrap(),
            self.horizon,
            StateGrid::new(self.grid.clone()).unwrap(),
        )
        .unwrap()
    }

    fn stage_cost(&self, x: f64, u: f64, w: f64) -> f64 {
        let level = x + u - w;
        self.holding * level.max(0.0) + self.shortage * (-level).max(0.0)
    }

    fn terminal_cost(&self, x: f64) -> f64 {
        self.terminal.map_or(0.0, |(c, k)| k * (x - c).abs())
    }

    fn successor(&self, x: f64, u: f64, w: f64) -> f64 {
        self.a * x + self.b * u - w
    }

    /// `dist(y, A)` as `|y − proj_A(y)|`.
    fn distance(&self, y: f64) -> f64 {
        (y - y.clamp(self.safe.0, self.safe.1)).abs()
    }

    fn controls(&self, step: f64) -> Vec<f64> {
        let n = ((self.u_hi - self.u_lo) / step).round() as usize;
        let per_unit = (1.0 / step).round();
        (0..=n).map(|k| self.u_lo + k as f64 / per_unit).collect()
    }

    /// `∃ z` on a grid of `step` with `z + E[(d − z)^+]/(1 − α) <= δ`.
    ///
    /// The objective decreases for `z < 0` and exceeds `z` itself, so only
    /// `z ∈ [0, δ]` can certify feasibility.
    fn constraint_holds(&self, dists: &[f64], step: f64) -> bool {
        let n = (self.delta / step).floor() as usize + 1;
        let per_unit = (1.0 / step).round();
        (0..=n).map(|j| j as f64 / per_unit).any(|z| {
            let tail: f64 = dists
                .iter()
                .zip(&self.weights)
                .map(|(d, p)| p * (d - z).max(0.0))
                .sum();
            z + tail / (1.0 - self.alpha) <= self.delta + SLACK
        })
    }
}

/// Linear interpolation with the solver's conventions, written out again.
pub fn interp(grid: &[f64], vals: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x < grid[0] - SNAP || x > grid[n - 1] + SNAP {
        return f64::INFINITY;
    }
    for i in 0..n {
        if (x - grid[i]).abs() <= SNAP {
            return vals[i];
        }
    }
    for i in 0..n - 1 {
        if grid[i] < x && x < grid[i + 1] {
            if vals[i].is_infinite() || vals[i + 1].is_infinite() {
                return f64::INFINITY;
            }
            let t = (x - grid[i]) / (grid[i + 1] - grid[i]);
            return vals[i] * (1.0 - t) + vals[i + 1] * t;
        }
    }
    f64::INFINITY
}

/// Values `v_0, …, v_T` of the triple-level recursion on an exhaustive
/// `(u, z)` grid of the given step.
pub fn brute_force_values(toy: &Toy, step: f64) -> Vec<Vec<f64>> {
    let controls = toy.controls(step);
    let mut tables = vec![toy.grid.iter().map(|&x| toy.terminal_cost(x)).collect::<Vec<f64>>()];
    for _ in 0..toy.horizon {
        let next = tables.last().unwrap().clone();
        let stage = toy
            .grid
            .iter()
            .map(|&x| {
                let mut scored: Vec<(f64, f64)> = controls
                    .iter()
                    .map(|&u| {
                        let obj: f64 = toy
                            .samples
                            .iter()
                            .zip(&toy.weights)
                            .map(|(&w, &p)| {
                                p * (toy.stage_cost(x, u, w) + interp(&toy.grid, &next, toy.successor(x, u, w)))
                            })
                            .sum();
                        (obj, u)
                    })
                    .filter(|(obj, _)| obj.is_finite())
                    .collect();
                scored.sort_by(|l, r| l.0.total_cmp(&r.0));
                // The first feasible control in cost order is optimal.
                scored
                    .into_iter()
                    .find(|&(_, u)| {
                        let d: Vec<f64> =
                            toy.samples.iter().map(|&w| toy.distance(toy.successor(x, u, w))).collect();
                        toy.constraint_holds(&d, step)
                    })
                    .map_or(f64::INFINITY, |(obj, _)| obj)
            })
            .collect();
        tables.push(stage);
    }
    tables.reverse();
    tables
}

/// CVaR through the tail-mass formula: average of the worst `1 − α` of the
/// probability mass, splitting the atom at the boundary.
pub fn tail_cvar(losses: &[f64], weights: &[f64], alpha: f64) -> f64 {
    let mut pairs: Vec<(f64, f64)> = losses.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|l, r| r.0.total_cmp(&l.0));
    let mut remaining = 1.0 - alpha;
    let mut acc = 0.0;
    for (l, p) in pairs {
        let take = p.min(remaining);
        acc += take * l;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    acc / (1.0 - alpha)
}

/// Feasibility-only sweep: whether some control sequence (on a control grid
/// of `step`) meets every stage constraint, ignoring costs.
pub fn brute_force_feasible(toy: &Toy, step: f64) -> Vec<Vec<bool>> {
    let controls = toy.controls(step);
    let mut tables = vec![vec![true; toy.grid.len()]];
    for _ in 0..toy.horizon {
        let next = tables.last().unwrap().clone();
        let marks: Vec<f64> = next.iter().map(|&ok| if ok { 0.0 } else { f64::INFINITY }).collect();
        let stage = toy
            .grid
            .iter()
            .map(|&x| {
                controls.iter().any(|&u| {
                    let ys: Vec<f64> = toy.samples.iter().map(|&w| toy.successor(x, u, w)).collect();
                    let lands = ys.iter().all(|&y| interp(&toy.grid, &marks, y).is_finite());
                    let d: Vec<f64> = ys.iter().map(|&y| toy.distance(y)).collect();
                    lands && tail_cvar(&d, &toy.weights, toy.alpha) <= toy.delta + SLACK
                })
            })
            .collect();
        tables.push(stage);
    }
    tables.reverse();
    tables
}

/// Exact maximal safety probability by enumerating all `N^T` disturbance
/// paths, choosing controls from a grid at every node of the scenario tree.
/// Grid-node interpolation is not involved: the tree tracks exact states.
pub fn scenario_tree_safety(toy: &Toy, set: (f64, f64), x: f64, stages_left: usize, step: f64) -> f64 {
    if stages_left == 0 {
        return 1.0;
    }
    toy.controls(step)
        .iter()
        .map(|&u| {
            toy.samples
                .iter()
                .zip(&toy.weights)
                .map(|(&w, &p)| {
                    let y = toy.successor(x, u, w);
                    if y >= set.0 - SNAP && y <= set.1 + SNAP {
                        p * scenario_tree_safety(toy, set, y, stages_left - 1, step)
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
