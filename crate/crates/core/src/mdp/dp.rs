//! Average-cost relative value iteration on the cyclic MDP, used to
//! cross-check the LP.
//!
//! One sweep applies the whole cycle's Bellman operator `T` backward from step
//! `N-1` to step `0`. For any value vector `V`, `min(TV - V)` and
//! `max(TV - V)` bracket the optimal cycle gain, so the iteration stops when
//! the bracket closes. The update is damped, `V <- V + tau (TV - V)`, which
//! removes periodicity without moving the fixed point.

use super::{MdpProblem, Policy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct DpOptions {
    pub damping: f64,
    /// Relative width of the gain bracket at which to stop.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-11,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    /// Average cost per step.
    pub gain: f64,
    /// Lower and upper bounds on the per-step gain at termination.
    pub bounds: (f64, f64),
    /// Relative values at step 0, shifted so the first state is 0.
    pub bias: Vec<f64>,
    pub policy: Policy,
    pub sweeps: usize,
}

pub fn dp_oracle(problem: &MdpProblem) -> Result<DpSolution> {
    dp_oracle_with(problem, DpOptions::default())
}

pub fn dp_oracle_with(problem: &MdpProblem, options: DpOptions) -> Result<DpSolution> {
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::invalid(format!(
            "damping {} outside (0, 1]",
            options.damping
        )));
    }
    let shape = problem.shape();
    let n = shape.horizon;
    let states = shape.states();
    let mut v = vec![0.0; states];
    let mut prev_diff: Option<Vec<f64>> = None;
    let mut stable_sweeps = 0;
    let mut span = f64::INFINITY;

    for sweep in 1..=options.max_sweeps {
        let tv = cycle_backup(problem, &v, None);
        let diff: Vec<f64> = tv.iter().zip(&v).map(|(a, b)| a - b).collect();
        let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = lo.abs().max(hi.abs()).max(1.0);
        span = hi - lo;

        // Multichain problems have a state-dependent gain; the bracket then
        // never closes but the per-state increments settle. The LP reaches
        // the best recurrent class, i.e. the minimum.
        let settled = match &prev_diff {
            Some(pd) => diff
                .iter()
                .zip(pd)
                .all(|(a, b)| (a - b).abs() <= options.tolerance * scale),
            None => false,
        };
        stable_sweeps = if settled { stable_sweeps + 1 } else { 0 };
        let closed = span <= options.tolerance * scale;

        if closed || stable_sweeps >= 10 {
            let cycle_gain = if closed { 0.5 * (lo + hi) } else { lo };
            let mut actions = vec![0usize; n * states];
            cycle_backup(problem, &v, Some(&mut actions));
            let policy =
                Policy::deterministic(shape, *problem.grid(), problem.cycle_start(), &actions)?;
            let base = v[0];
            return Ok(DpSolution {
                gain: cycle_gain / n as f64,
                bounds: (lo / n as f64, hi / n as f64),
                bias: v.iter().map(|x| x - base).collect(),
                policy,
                sweeps: sweep,
            });
        }

        let tau = options.damping;
        let shift = v[0] + tau * diff[0];
        for (vi, d) in v.iter_mut().zip(&diff) {
            *vi += tau * d - shift;
        }
        prev_diff = Some(diff);
    }
    Err(Error::NoConvergence {
        sweeps: options.max_sweeps,
        span,
    })
}

/// Applies the Bellman operator for a whole cycle to the step-0 values `v`,
/// optionally recording the minimizing action of every `(t, i, p)`.
fn cycle_backup(problem: &MdpProblem, v: &[f64], mut actions: Option<&mut [usize]>) -> Vec<f64> {
    let shape = problem.shape();
    let m = shape.regimes;
    let mut next = v.to_vec();
    let mut current = vec![0.0; shape.states()];
    let mut expected = vec![0.0; shape.states()];
    let mut q = vec![0.0; shape.actions];
    for t in (0..shape.horizon).rev() {
        let matrix = problem.transition(t);
        // expected[i * m + p] = E[next value | land on level i, leave regime p]
        for i in 0..shape.temps {
            let landing = &next[i * m..(i + 1) * m];
            for p in 0..m {
                expected[i * m + p] = matrix.row(p).iter().zip(landing).map(|(w, x)| w * x).sum();
            }
        }
        for i in 0..shape.temps {
            for p in 0..m {
                let mut best = f64::INFINITY;
                for (a, slot) in q.iter_mut().enumerate() {
                    *slot = problem.cost(t, i, p, a) + expected[problem.successor(t, i, a) * m + p];
                    best = best.min(*slot);
                }
                current[i * m + p] = best;
                if let Some(out) = actions.as_deref_mut() {
                    // Ties (up to rounding) go to the fewest chillers.
                    let eps = 1e-12 * best.abs().max(1.0);
                    out[shape.state_at(t, i, p)] =
                        q.iter().position(|&x| x <= best + eps).unwrap_or(0);
                }
            }
        }
        std::mem::swap(&mut next, &mut current);
    }
    next
}
