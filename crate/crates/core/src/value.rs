//! Per-stage value samples on the state grid.
//!
//! Infeasible nodes hold `f64::INFINITY`; no finite sentinel is ever used.
//! Between two finite nodes values interpolate linearly, and anything that
//! touches an infinite node or leaves the grid is infinite.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{IntervalSet, StateGrid};

/// Queries within this distance of a node read that node's value.
pub const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTable {
    grid: StateGrid,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(grid: StateGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidGrid("values must be finite or +inf".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite_at(&self, node: usize) -> bool {
        self.values[node].is_finite()
    }

    /// Evaluates the piecewise-linear interpolant at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        interpolate(self.grid.points(), &self.values, x)
    }

    /// Maximal runs of consecutive finite nodes, as `[x_first, x_last]`.
    pub fn finite_runs(&self) -> Vec<(f64, f64)> {
        let pts = self.grid.points();
        let mut runs = Vec::new();
        let mut start = None;
        for (i, v) in self.values.iter().enumerate() {
            match (v.is_finite(), start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((pts[s], pts[i - 1]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((pts[s], pts[pts.len() - 1]));
        }
        runs
    }

    /// Interval hull of the finite nodes.
    pub fn finite_hull(&self) -> Option<IntervalSet> {
        let runs = self.finite_runs();
        let (first, last) = (runs.first()?, runs.last()?);
        IntervalSet::new(first.0, last.1).ok()
    }
}

pub(crate) fn interpolate(pts: &[f64], values: &[f64], x: f64) -> f64 {
    let n = pts.len();
    if x.is_nan() || x < pts[0] - SNAP_TOL || x > pts[n - 1] + SNAP_TOL {
        return f64::INFINITY;
    }
    // First node strictly greater than x.
    let k = pts.partition_point(|&p| p <= x);
    if k > 0 && x - pts[k - 1] <= SNAP_TOL {
        return values[k - 1];
    }
    if k < n && pts[k] - x <= SNAP_TOL {
        return values[k];
    }
    // Snapping failed, so 0 < k < n here.
    let (x0, x1) = (pts[k - 1], pts[k]);
    let (v0, v1) = (values[k - 1], values[k]);
    if !(v0.is_finite() && v1.is_finite()) {
        return f64::INFINITY;
    }
    let t = (x - x0) / (x1 - x0);
    v0 + t * (v1 - v0)
}

/// Replaces the finite values by their lower convex envelope.
///
/// The finite nodes must form one contiguous run; gaps are rejected since
/// bridging them would invent values at infeasible states.
pub fn convex_envelope(grid: &StateGrid, values: &[f64]) -> Result<Vec<f64>> {
    let pts = grid.points();
    let finite: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    if let Some(w) = finite.windows(2).find(|w| w[1] != w[0] + 1) {
        return Err(Error::NonContiguousFiniteRegion { left: w[0], right: w[1] });
    }
    let mut out = values.to_vec();
    if finite.len() < 3 {
        return Ok(out);
    }

    // Monotone chain, lower half.
    let mut hull: Vec<usize> = Vec::with_capacity(finite.len());
    for &i in &finite {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (pts[a] - pts[o]) * (values[i] - values[o])
                - (values[a] - values[o]) * (pts[i] - pts[o]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }

    for seg in hull.windows(2) {
        let (l, r) = (seg[0], seg[1]);
        let slope = (values[r] - values[l]) / (pts[r] - pts[l]);
        for i in l + 1..r {
            out[i] = values[l] + slope * (pts[i] - pts[l]);
        }
    }
    Ok(out)
}
