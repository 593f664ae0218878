use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{MdpProblem, Shape};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Tolerances};

/// The occupancy-measure LP of a cyclic MDP, with its row layout.
#[derive(Debug, Clone)]
pub struct OccupancyLp {
    pub shape: Shape,
    pub program: LinearProgram,
    /// `sum_{s,a} x[0,s,a] = 1`; the other steps follow from flow balance.
    pub normalization_rows: Range<usize>,
    /// One row per `(t, s)` except the first: inflow from step `t - 1`
    /// (cyclically) equals the mass at `(t, s)`.
    pub flow_rows: Range<usize>,
}

/// Assembles the LP. Variable `j` is `x[t, i, p, a]` at `shape.var(t, i, p, a)`.
pub fn build_lp(problem: &MdpProblem) -> Result<OccupancyLp> {
    let shape = problem.shape();
    let n = shape.horizon;
    if n == 0 || shape.states() == 0 || shape.actions == 0 {
        return Err(Error::Dimension(format!("degenerate MDP shape {shape:?}")));
    }
    let mut program = LinearProgram::new();
    let scale = 1.0 / n as f64;
    for t in 0..n {
        for i in 0..shape.temps {
            for p in 0..shape.regimes {
                for a in 0..shape.actions {
                    program.add_var(problem.cost(t, i, p, a) * scale, true);
                }
            }
        }
    }

    // Flow balance carries the unit mass of step 0 around the cycle, so the
    // other normalization rows and one flow row are implied. Leaving them in
    // makes the equality system rank-deficient, which stalls the
    // interior-point solver a few digits short of the optimum.
    let per_step = shape.states() * shape.actions;
    let norm_start = program.num_rows();
    program.add_equality((0..per_step).map(|j| (j, 1.0)).collect(), 1.0);
    let norm_end = program.num_rows();

    let mut flow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n * shape.states()];
    for t in 0..n {
        let next_t = (t + 1) % n;
        let matrix = problem.transition(t);
        for i in 0..shape.temps {
            for p in 0..shape.regimes {
                let row = matrix.row(p);
                for a in 0..shape.actions {
                    let j = shape.var(t, i, p, a);
                    flow[shape.state_at(t, i, p)].push((j, 1.0));
                    let next_i = problem.successor(t, i, a);
                    for (q, &prob) in row.iter().enumerate() {
                        if prob != 0.0 {
                            flow[shape.state_at(next_t, next_i, q)].push((j, -prob));
                        }
                    }
                }
            }
        }
    }
    let flow_start = program.num_rows();
    for coeffs in flow.into_iter().skip(1) {
        program.add_equality(coeffs, 0.0);
    }
    let flow_end = program.num_rows();

    Ok(OccupancyLp {
        shape,
        program,
        normalization_rows: norm_start..norm_end,
        flow_rows: flow_start..flow_end,
    })
}

/// Optimal occupancy measure `x[t, i, p, a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub shape: Shape,
    /// Average cost per step.
    pub objective: f64,
    pub x: Vec<f64>,
    #[serde(default)]
    pub iterations: u32,
}

/// Largest constraint violations of an occupancy measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub normalization: f64,
    pub flow: f64,
    pub min_entry: f64,
}

impl Residuals {
    pub fn within(&self, tol: f64) -> bool {
        self.normalization <= tol && self.flow <= tol && self.min_entry >= -tol
    }
}

pub fn solve_occupancy(lp: &OccupancyLp) -> Result<OccupancyMeasure> {
    solve_occupancy_with(lp, Tolerances::default())
}

pub fn solve_occupancy_with(lp: &OccupancyLp, tol: Tolerances) -> Result<OccupancyMeasure> {
    let sol = lp.program.solve_with(tol)?;
    log::debug!(
        "occupancy LP: {} vars, {} rows, {} iterations, status {}",
        lp.program.num_vars(),
        lp.program.num_rows(),
        sol.iterations,
        sol.status
    );
    Ok(OccupancyMeasure {
        shape: lp.shape,
        objective: sol.objective,
        x: sol.x,
        iterations: sol.iterations,
    })
}

impl OccupancyMeasure {
    pub fn get(&self, t: usize, i: usize, p: usize, a: usize) -> f64 {
        self.x[self.shape.var(t, i, p, a)]
    }

    /// `sum_a x[t, i, p, a]`.
    pub fn state_mass(&self, t: usize, i: usize, p: usize) -> f64 {
        let j = self.shape.var(t, i, p, 0);
        self.x[j..j + self.shape.actions].iter().sum()
    }

    /// Checks the constraints directly from the problem's dynamics, without
    /// reference to the assembled LP.
    pub fn residuals(&self, problem: &MdpProblem) -> Result<Residuals> {
        let shape = problem.shape();
        if shape != self.shape || self.x.len() != shape.vars() {
            return Err(Error::Dimension(format!(
                "occupancy shape {:?} does not match problem shape {shape:?}",
                self.shape
            )));
        }
        let n = shape.horizon;
        let mut normalization = 0.0f64;
        let mut flow = 0.0f64;
        let mut inflow = vec![0.0; shape.states()];
        for t in 0..n {
            let total: f64 = (0..shape.temps)
                .flat_map(|i| (0..shape.regimes).map(move |p| (i, p)))
                .map(|(i, p)| self.state_mass(t, i, p))
                .sum();
            normalization = normalization.max((total - 1.0).abs());

            let prev = (t + n - 1) % n;
            let matrix = problem.transition(prev);
            inflow.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..shape.temps {
                for p in 0..shape.regimes {
                    for a in 0..shape.actions {
                        let mass = self.get(prev, i, p, a);
                        if mass == 0.0 {
                            continue;
                        }
                        let next_i = problem.successor(prev, i, a);
                        for q in 0..shape.regimes {
                            inflow[next_i * shape.regimes + q] += mass * matrix.get(p, q);
                        }
                    }
                }
            }
            for i in 0..shape.temps {
                for p in 0..shape.regimes {
                    let err = (self.state_mass(t, i, p) - inflow[i * shape.regimes + p]).abs();
                    flow = flow.max(err);
                }
            }
        }
        let min_entry = self.x.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Residuals {
            normalization,
            flow,
            min_entry,
        })
    }

    /// Expected average cost of this occupancy under `problem`.
    pub fn average_cost(&self, problem: &MdpProblem) -> f64 {
        let s = self.shape;
        let mut total = 0.0;
        for t in 0..s.horizon {
            for i in 0..s.temps {
                for p in 0..s.regimes {
                    for a in 0..s.actions {
                        total += problem.cost(t, i, p, a) * self.get(t, i, p, a);
                    }
                }
            }
        }
        total / s.horizon as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
