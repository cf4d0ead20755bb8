//! Problem description: the safe interval, scalar affine dynamics with a
//! finitely supported disturbance, risk parameters, costs and the state grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total probability mass of a weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A compact interval `[lo, hi]` of the real line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct IntervalSet {
    lo: f64,
    hi: f64,
}

#[derive(Deserialize)]
struct RawInterval {
    lo: f64,
    hi: f64,
}

impl TryFrom<RawInterval> for IntervalSet {
    type Error = Error;

    fn try_from(raw: RawInterval) -> Result<Self> {
        IntervalSet::new(raw.lo, raw.hi)
    }
}

impl IntervalSet {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Membership with an absolute slack on both ends.
    pub fn contains_within(&self, x: f64, tol: f64) -> bool {
        self.lo - tol <= x && x <= self.hi + tol
    }

    /// `self ⊆ other`, optionally allowing `other` to be widened by `slack`.
    pub fn is_subset_of(&self, other: &IntervalSet, slack: f64) -> bool {
        other.lo - slack <= self.lo && self.hi <= other.hi + slack
    }

    /// `{x : dist(x, self) <= delta}`.
    pub fn dilate(&self, delta: f64) -> Result<IntervalSet> {
        if !(delta >= 0.0) {
            return Err(Error::NegativeRadius(delta));
        }
        IntervalSet::new(self.lo - delta, self.hi + delta)
    }

    /// `{x : dist(x, complement) >= delta}`, or `None` when nothing is left.
    pub fn erode(&self, delta: f64) -> Result<Option<IntervalSet>> {
        if !(delta >= 0.0) {
            return Err(Error::NegativeRadius(delta));
        }
        let (lo, hi) = (self.lo + delta, self.hi - delta);
        Ok(if lo > hi { None } else { Some(IntervalSet { lo, hi }) })
    }

    /// Euclidean projection onto the interval.
    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Scalar dynamics `x' = a·x + b·u − w` with `u ∈ [u_lo, u_hi]` and `w` drawn
/// from a finite support with the given probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemModel {
    a: f64,
    b: f64,
    samples: Vec<f64>,
    weights: Vec<f64>,
    u_lo: f64,
    u_hi: f64,
}

impl SystemModel {
    pub fn new(
        a: f64,
        b: f64,
        samples: Vec<f64>,
        weights: Vec<f64>,
        u_lo: f64,
        u_hi: f64,
    ) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidModel("dynamics coefficients must be finite".into()));
        }
        if !(u_lo.is_finite() && u_hi.is_finite()) || u_lo > u_hi {
            return Err(Error::InvalidModel(format!(
                "control bounds [{u_lo}, {u_hi}] do not form an interval"
            )));
        }
        validate_distribution(&samples, &weights).map_err(Error::InvalidModel)?;
        Ok(Self { a, b, samples, weights, u_lo, u_hi })
    }

    /// Equally weighted samples.
    pub fn uniform(a: f64, b: f64, samples: Vec<f64>, u_lo: f64, u_hi: f64) -> Result<Self> {
        let n = samples.len();
        let weights = vec![1.0 / n.max(1) as f64; n];
        Self::new(a, b, samples, weights, u_lo, u_hi)
    }

    /// Inventory dynamics `x' = x + u − w`.
    pub fn inventory(samples: Vec<f64>, u_lo: f64, u_hi: f64) -> Result<Self> {
        Self::uniform(1.0, 1.0, samples, u_lo, u_hi)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn u_lo(&self) -> f64 {
        self.u_lo
    }

    pub fn u_hi(&self) -> f64 {
        self.u_hi
    }

    pub fn controls(&self) -> IntervalSet {
        IntervalSet { lo: self.u_lo, hi: self.u_hi }
    }

    #[inline]
    pub fn step(&self, x: f64, u: f64, w: f64) -> f64 {
        self.a * x + self.b * u - w
    }

    /// Successor states for every disturbance sample, in sample order.
    pub fn successors(&self, x: f64, u: f64) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(move |&w| self.step(x, u, w))
    }

    pub fn with_controls(&self, u_lo: f64, u_hi: f64) -> Result<Self> {
        Self::new(self.a, self.b, self.samples.clone(), self.weights.clone(), u_lo, u_hi)
    }
}

pub(crate) fn validate_distribution(values: &[f64], weights: &[f64]) -> std::result::Result<(), String> {
    if values.is_empty() {
        return Err("support must be nonempty".into());
    }
    if values.len() != weights.len() {
        return Err(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("support values must be finite".into());
    }
    if weights.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err("weights must be finite and nonnegative".into());
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(format!("weights sum to {total}, expected 1"));
    }
    Ok(())
}

/// Draws `n` normal variates with the Box–Muller transform over a ChaCha8
/// stream seeded from `seed`. Output is stable for a given `(n, seed)`.
pub fn normal_samples(mean: f64, std: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        // 1 - U keeps the radius argument in (0, 1].
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        out.push(mean + std * r * theta.cos());
        if out.len() < n {
            out.push(mean + std * r * theta.sin());
        }
    }
    out
}

/// Confidence level `alpha` and tolerance `delta` of the per-stage CVaR
/// safety constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRisk")]
pub struct RiskSpec {
    alpha: f64,
    delta: f64,
}

#[derive(Deserialize)]
struct RawRisk {
    alpha: f64,
    delta: f64,
}

impl TryFrom<RawRisk> for RiskSpec {
    type Error = Error;

    fn try_from(raw: RawRisk) -> Result<Self> {
        RiskSpec::new(raw.alpha, raw.delta)
    }
}

impl RiskSpec {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidRisk(format!("delta must be finite and >= 0, got {delta}")));
        }
        Ok(Self { alpha, delta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.alpha, delta)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRisk(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub type StageCostFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;
pub type TerminalCostFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Stage cost `r(x, u, w)` and terminal cost `q(x)`.
///
/// `convex` records whether the caller vouches for convexity of `r` in
/// `(x, u)` and of `q`; it only selects the default for envelope enforcement.
#[derive(Clone)]
pub struct CostSpec {
    stage: Arc<StageCostFn>,
    terminal: Arc<TerminalCostFn>,
    convex: bool,
}

impl CostSpec {
    pub fn new(
        stage: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(f64) -> f64 + Send + Sync + 'static,
        convex: bool,
    ) -> Self {
        Self { stage: Arc::new(stage), terminal: Arc::new(terminal), convex }
    }

    /// Holding/shortage cost `c_o (x+u−w)^+ + c_u (w−x−u)^+` with `q ≡ 0`.
    pub fn newsvendor(holding: f64, shortage: f64) -> Self {
        Self::new(
            move |x, u, w| {
                let level = x + u - w;
                holding * level.max(0.0) + shortage * (-level).max(0.0)
            },
            |_| 0.0,
            holding >= 0.0 && shortage >= 0.0,
        )
    }

    pub fn zero() -> Self {
        Self::new(|_, _, _| 0.0, |_| 0.0, true)
    }

    pub fn with_terminal(
        self,
        terminal: impl Fn(f64) -> f64 + Send + Sync + 'static,
        convex: bool,
    ) -> Self {
        Self { terminal: Arc::new(terminal), convex: self.convex && convex, ..self }
    }

    #[inline]
    pub fn stage(&self, x: f64, u: f64, w: f64) -> f64 {
        (self.stage)(x, u, w)
    }

    #[inline]
    pub fn terminal(&self, x: f64) -> f64 {
        (self.terminal)(x)
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// `E[r(x, u, w)]` under the model's disturbance distribution.
    pub fn expected_stage(&self, model: &SystemModel, x: f64, u: f64) -> f64 {
        model
            .samples()
            .iter()
            .zip(model.weights())
            .map(|(&w, &p)| p * self.stage(x, u, w))
            .sum()
    }
}

impl fmt::Debug for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSpec").field("convex", &self.convex).finish_non_exhaustive()
    }
}

/// Strictly increasing state grid with at least two nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateGrid {
    points: Arc<[f64]>,
}

impl StateGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidGrid("nodes must be finite".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
        }
        Ok(Self { points: points.into() })
    }

    /// Nodes `lo, lo + step, …, hi`; `hi − lo` must be a whole number of steps.
    pub fn uniform(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi > lo) {
            return Err(Error::InvalidGrid(format!("bad uniform grid [{lo}, {hi}] step {step}")));
        }
        let cells = (hi - lo) / step;
        let n = cells.round();
        if (cells - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "span {} is not a multiple of step {step}",
                hi - lo
            )));
        }
        let n = n as usize;
        let points = (0..=n)
            .map(|i| if i == n { hi } else { lo + i as f64 * step })
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Widest cell; the resolution to which set boundaries are known.
    pub fn spacing(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// A complete risk-constrained control problem.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub model: SystemModel,
    pub cost: CostSpec,
    pub safe_set: IntervalSet,
    pub risk: RiskSpec,
    /// Number of decision stages `T`.
    pub horizon: usize,
    pub grid: StateGrid,
    /// Replace each stage's value vector by its lower convex envelope.
    pub envelope: bool,
}

impl ProblemConfig {
    /// Envelope enforcement defaults to on when the cost is declared convex.
    pub fn new(
        model: SystemModel,
        cost: CostSpec,
        safe_set: IntervalSet,
        risk: RiskSpec,
        horizon: usize,
        grid: StateGrid,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::EmptyHorizon);
        }
        let envelope = cost.is_convex();
        Ok(Self { model, cost, safe_set, risk, horizon, grid, envelope })
    }

    pub fn with_envelope(mut self, envelope: bool) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Ok(Self { risk: self.risk.with_delta(delta)?, ..self.clone() })
    }

    pub fn with_safe_set(&self, safe_set: IntervalSet) -> Self {
        Self { safe_set, ..self.clone() }
    }
}
