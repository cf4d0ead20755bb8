//! Set distance and empirical VaR/CVaR of finitely supported losses.
//!
//! CVaR is evaluated through the extremal formula
//!
//! ```text
//! CVaR_α(X) = min_z  z + E[(X − z)^+] / (1 − α)
//! ```
//!
//! For a discrete `X` the objective is convex and piecewise linear in `z`
//! with kinks only at the support points, so the minimum is attained at one
//! of them. Sorting the losses once and sweeping the support with suffix
//! sums gives every candidate objective in O(N log N). This formula stays
//! valid when the distribution has atoms, unlike the conditional-tail
//! expectation `E[X | X >= VaR]`.

use crate::error::{Error, Result};
use crate::model::{check_alpha, validate_distribution, IntervalSet, SystemModel};

/// Relative tolerance used to break ties between equally good `z`.
const TIE_TOL: f64 = 1e-12;

/// Distance from `x` to the interval `set`. Zero exactly on the set.
#[inline]
pub fn set_distance(x: f64, set: &IntervalSet) -> f64 {
    (set.lo() - x).max(x - set.hi()).max(0.0)
}

/// A finitely supported loss distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    losses: Vec<f64>,
    weights: Vec<f64>,
}

impl LossSample {
    pub fn new(losses: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_distribution(&losses, &weights).map_err(Error::InvalidSample)?;
        Ok(Self { losses, weights })
    }

    pub fn uniform(losses: Vec<f64>) -> Result<Self> {
        let n = losses.len();
        Self::new(losses, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.losses.iter().zip(&self.weights).map(|(l, p)| l * p).sum()
    }

    pub fn value_at_risk(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        Ok(value_at_risk_unchecked(&self.losses, &self.weights, alpha))
    }

    pub fn cvar(&self, alpha: f64) -> Result<f64> {
        self.cvar_with_argmin(alpha).map(|(c, _)| c)
    }

    /// CVaR together with the smallest minimizer `z*` of the extremal objective.
    pub fn cvar_with_argmin(&self, alpha: f64) -> Result<(f64, f64)> {
        check_alpha(alpha)?;
        Ok(cvar_unchecked(&self.losses, &self.weights, alpha))
    }
}

pub fn value_at_risk(sample: &LossSample, alpha: f64) -> Result<f64> {
    sample.value_at_risk(alpha)
}

pub fn cvar(sample: &LossSample, alpha: f64) -> Result<f64> {
    sample.cvar(alpha)
}

pub fn cvar_with_argmin(sample: &LossSample, alpha: f64) -> Result<(f64, f64)> {
    sample.cvar_with_argmin(alpha)
}

fn sorted_pairs(losses: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = losses.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

pub(crate) fn value_at_risk_unchecked(losses: &[f64], weights: &[f64], alpha: f64) -> f64 {
    let pairs = sorted_pairs(losses, weights);
    let mut cum = 0.0;
    for &(l, p) in &pairs {
        cum += p;
        if cum >= alpha - TIE_TOL {
            return l;
        }
    }
    pairs[pairs.len() - 1].0
}

/// Returns `(cvar, z*)`; inputs are assumed validated.
pub(crate) fn cvar_unchecked(losses: &[f64], weights: &[f64], alpha: f64) -> (f64, f64) {
    let pairs = sorted_pairs(losses, weights);
    let n = pairs.len();
    let scale = 1.0 / (1.0 - alpha);

    // Suffix sums of p and p·L over strictly larger losses.
    let mut objective = vec![0.0; n];
    let (mut tail_p, mut tail_pl) = (0.0, 0.0);
    let mut i = n;
    while i > 0 {
        let z = pairs[i - 1].0;
        // Group ties so that (L − z)^+ only sees strictly larger losses.
        let mut j = i;
        while j > 0 && pairs[j - 1].0 == z {
            j -= 1;
        }
        let g = z + (tail_pl - z * tail_p) * scale;
        for slot in &mut objective[j..i] {
            *slot = g;
        }
        for &(l, p) in &pairs[j..i] {
            tail_p += p;
            tail_pl += p * l;
        }
        i = j;
    }

    let best = objective.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOL * best.abs().max(1.0);
    let k = objective.iter().position(|&g| g <= best + slack).unwrap_or(0);
    (best, pairs[k].0)
}

/// Losses `dist(f(x, u, w_i), A)` of the one-step successor.
pub fn safety_losses(model: &SystemModel, set: &IntervalSet, x: f64, u: f64) -> Vec<f64> {
    model.successors(x, u).map(|y| set_distance(y, set)).collect()
}

/// `CVaR_α[dist(f(x, u, w), A)]` under the model's disturbance distribution.
pub fn safety_loss_cvar(
    model: &SystemModel,
    set: &IntervalSet,
    x: f64,
    u: f64,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(safety_loss_cvar_unchecked(model, set, x, u, alpha))
}

pub(crate) fn safety_loss_cvar_unchecked(
    model: &SystemModel,
    set: &IntervalSet,
    x: f64,
    u: f64,
    alpha: f64,
) -> f64 {
    let losses = safety_losses(model, set, x, u);
    cvar_unchecked(&losses, model.weights(), alpha).0
}
