use serde::{Deserialize, Serialize};

use super::{MdpProblem, OccupancyMeasure, Shape, ThetaGrid};
use crate::error::{Error, Result};

/// States whose occupancy mass is at or below this are treated as unvisited.
///
/// Interior-point solutions leave mass of order 1e-9 on states the optimum
/// never reaches, and the action ratios of such entries are solver noise, so
/// those states get the deterministic fallback instead. The threshold equals
/// the tolerance the occupancy constraints are held to.
pub const VISIT_THRESHOLD: f64 = 1e-6;

const FORMAT: &str = "chillplan/policy/v1";
const SUM_TOLERANCE: f64 = 1e-6;

/// Time-indexed randomized policy `pi(a | t, i, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    shape: Shape,
    grid: ThetaGrid,
    cycle_start: i64,
    /// `[t][i][p][a]`
    probabilities: Vec<f64>,
    /// `[t][i][p]`: entry came from the fallback rule, not the occupancy.
    fallback: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct PolicyDoc {
    format: String,
    cycle_start: i64,
    shape: Shape,
    grid: ThetaGrid,
    probabilities: Vec<f64>,
    fallback: Vec<bool>,
}

/// Conditional action distribution of an occupancy measure.
pub fn extract_policy(problem: &MdpProblem, occupancy: &OccupancyMeasure) -> Result<Policy> {
    let shape = problem.shape();
    if occupancy.shape != shape || occupancy.x.len() != shape.vars() {
        return Err(Error::Dimension(format!(
            "occupancy shape {:?} does not match problem shape {shape:?}",
            occupancy.shape
        )));
    }
    let mut probabilities = Vec::with_capacity(shape.vars());
    let mut fallback = Vec::with_capacity(shape.horizon * shape.states());
    for t in 0..shape.horizon {
        for i in 0..shape.temps {
            for p in 0..shape.regimes {
                let j = shape.var(t, i, p, 0);
                let xs = &occupancy.x[j..j + shape.actions];
                let mass: f64 = xs.iter().map(|v| v.max(0.0)).sum();
                if mass > VISIT_THRESHOLD {
                    probabilities.extend(xs.iter().map(|v| v.max(0.0) / mass));
                    fallback.push(false);
                } else {
                    let a = problem.fallback_action(t, i);
                    probabilities
                        .extend((0..shape.actions).map(|b| if b == a { 1.0 } else { 0.0 }));
                    fallback.push(true);
                }
            }
        }
    }
    Ok(Policy {
        shape,
        grid: *problem.grid(),
        cycle_start: problem.cycle_start(),
        probabilities,
        fallback,
    })
}

impl Policy {
    /// Deterministic policy from one action per `(t, i, p)`.
    pub fn deterministic(
        shape: Shape,
        grid: ThetaGrid,
        cycle_start: i64,
        actions: &[usize],
    ) -> Result<Self> {
        if actions.len() != shape.horizon * shape.states() {
            return Err(Error::Dimension(format!(
                "{} actions given for {} states",
                actions.len(),
                shape.horizon * shape.states()
            )));
        }
        let mut probabilities = vec![0.0; shape.vars()];
        for (k, &a) in actions.iter().enumerate() {
            if a >= shape.actions {
                return Err(Error::Dimension(format!("action {a} out of range")));
            }
            probabilities[k * shape.actions + a] = 1.0;
        }
        Self::from_parts(
            shape,
            grid,
            cycle_start,
            probabilities,
            vec![false; actions.len()],
        )
    }

    pub fn from_parts(
        shape: Shape,
        grid: ThetaGrid,
        cycle_start: i64,
        probabilities: Vec<f64>,
        fallback: Vec<bool>,
    ) -> Result<Self> {
        let policy = Self {
            shape,
            grid,
            cycle_start,
            probabilities,
            fallback,
        };
        policy.validate()?;
        Ok(policy)
    }

    fn validate(&self) -> Result<()> {
        let s = self.shape;
        if s.horizon == 0 || s.regimes == 0 || s.actions == 0 || s.temps != self.grid.len() {
            return Err(Error::Dimension(format!(
                "policy shape {s:?} is inconsistent with its {}-level grid",
                self.grid.len()
            )));
        }
        let cells = s
            .horizon
            .checked_mul(s.temps)
            .and_then(|v| v.checked_mul(s.regimes));
        let total = cells.and_then(|c| c.checked_mul(s.actions));
        if cells != Some(self.fallback.len()) || total != Some(self.probabilities.len()) {
            return Err(Error::Dimension(format!(
                "policy tables have {} probabilities and {} flags for shape {s:?}",
                self.probabilities.len(),
                self.fallback.len()
            )));
        }
        for (k, chunk) in self.probabilities.chunks(s.actions).enumerate() {
            if chunk.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "state {k} has an invalid action probability"
                )));
            }
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "state {k} action probabilities sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn grid(&self) -> &ThetaGrid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.shape.horizon
    }

    pub fn regimes(&self) -> usize {
        self.shape.regimes
    }

    pub fn cycle_start(&self) -> i64 {
        self.cycle_start
    }

    pub fn probabilities(&self, t: usize, i: usize, p: usize) -> &[f64] {
        let j = self.shape.var(t, i, p, 0);
        &self.probabilities[j..j + self.shape.actions]
    }

    pub fn is_fallback(&self, t: usize, i: usize, p: usize) -> bool {
        self.fallback[self.shape.state_at(t, i, p)]
    }

    pub fn expected_action(&self, t: usize, i: usize, p: usize) -> f64 {
        self.probabilities(t, i, p)
            .iter()
            .enumerate()
            .map(|(a, w)| a as f64 * w)
            .sum()
    }

    /// Most probable action; ties go to the fewer chillers.
    pub fn argmax_action(&self, t: usize, i: usize, p: usize) -> usize {
        let probs = self.probabilities(t, i, p);
        let mut best = 0;
        for (a, &w) in probs.iter().enumerate() {
            if w > probs[best] {
                best = a;
            }
        }
        best
    }

    /// The single action of a deterministic entry.
    pub fn deterministic_action(&self, t: usize, i: usize, p: usize) -> Option<usize> {
        let probs = self.probabilities(t, i, p);
        let a = self.argmax_action(t, i, p);
        (probs[a] >= 1.0 - SUM_TOLERANCE).then_some(a)
    }

    /// Chooses an action given a uniform draw `u` in `[0, 1)`.
    pub fn sample_action(&self, t: usize, i: usize, p: usize, u: f64) -> usize {
        let probs = self.probabilities(t, i, p);
        if let Some(a) = self.deterministic_action(t, i, p) {
            return a;
        }
        let mut acc = 0.0;
        let mut last = 0;
        for (a, &w) in probs.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last = a;
            if u < acc {
                return a;
            }
        }
        last
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PolicyDoc {
            format: FORMAT.to_string(),
            cycle_start: self.cycle_start,
            shape: self.shape,
            grid: self.grid,
            probabilities: self.probabilities.clone(),
            fallback: self.fallback.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolicyDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT {
            return Err(Error::invalid(format!(
                "unsupported policy format {:?}",
                doc.format
            )));
        }
        let grid = ThetaGrid::with_len(doc.grid.min(), doc.grid.step(), doc.grid.len())?;
        Self::from_parts(
            doc.shape,
            grid,
            doc.cycle_start,
            doc.probabilities,
            doc.fallback,
        )
    }
}
