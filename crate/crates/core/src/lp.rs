//! Sparse linear programs in equality form, solved with an interior-point
//! method (Clarabel).
//!
//! ```text
//!   min  c'x
//!   s.t. A x  = b
//!        x_j >= 0   for every j flagged non-negative
//! ```

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};

use crate::error::{Error, Result};

/// Termination tolerances for the interior-point solve.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub feasibility: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gap_abs: 1e-10,
            gap_rel: 1e-10,
            feasibility: 1e-10,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    nonnegative: Vec<bool>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the equality rows (Clarabel sign convention).
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub status: String,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self {
            objective: Vec::new(),
            nonnegative: Vec::new(),
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds a variable and returns its column index.
    pub fn add_var(&mut self, cost: f64, nonnegative: bool) -> usize {
        self.objective.push(cost);
        self.nonnegative.push(nonnegative);
        self.objective.len() - 1
    }

    /// Adds the equality row `sum coeffs . x = rhs` and returns its index.
    /// Repeated columns are summed.
    pub fn add_equality(&mut self, mut coeffs: Vec<(usize, f64)>, rhs: f64) -> usize {
        coeffs.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (j, v) in coeffs {
            match merged.last_mut() {
                Some((lj, lv)) if *lj == j => *lv += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(merged);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn is_nonnegative(&self, j: usize) -> bool {
        self.nonnegative[j]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest absolute equality-row violation at `x`.
    pub fn max_row_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| {
                let lhs: f64 = row.iter().map(|&(j, v)| v * x[j]).sum();
                (lhs - b).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        self.solve_with(Tolerances::default())
    }

    pub fn solve_with(&self, tol: Tolerances) -> Result<LpSolution> {
        let n = self.num_vars();
        let m = self.num_rows();
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(&(j, _)) = row.iter().find(|&&(j, _)| j >= n) {
                return Err(Error::Dimension(format!(
                    "row {i} references column {j} but the program has {n} variables"
                )));
            }
        }
        let bounded: Vec<usize> = (0..n).filter(|&j| self.nonnegative[j]).collect();

        let nnz = self.rows.iter().map(Vec::len).sum::<usize>() + bounded.len();
        let mut ri = Vec::with_capacity(nnz);
        let mut ci = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                ri.push(i);
                ci.push(j);
                vals.push(v);
            }
        }
        // Clarabel form is A x + s = b with s in a cone; x >= 0 becomes -x + s = 0.
        for (k, &j) in bounded.iter().enumerate() {
            ri.push(m + k);
            ci.push(j);
            vals.push(-1.0);
        }
        let a = CscMatrix::new_from_triplets(m + bounded.len(), n, ri, ci, vals);
        let mut b = self.rhs.clone();
        b.resize(m + bounded.len(), 0.0);
        let p = CscMatrix::<f64>::zeros((n, n));

        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if m > 0 {
            cones.push(ZeroConeT(m));
        }
        if !bounded.is_empty() {
            cones.push(NonnegativeConeT(bounded.len()));
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(tol.gap_abs)
            .tol_gap_rel(tol.gap_rel)
            .tol_feas(tol.feasibility)
            .max_iter(tol.max_iter)
            .build()
            .expect("static solver settings are valid");

        let mut solver = DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver {
                status: format!("setup failed: {e:?}"),
                iterations: 0,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
            })?;
        solver.solve();
        let sol = &solver.solution;
        let status = format!("{:?}", sol.status);
        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {}
            _ => {
                return Err(Error::Solver {
                    status,
                    iterations: sol.iterations,
                    primal_residual: sol.r_prim,
                    dual_residual: sol.r_dual,
                })
            }
        }
        if sol.status == SolverStatus::AlmostSolved {
            log::warn!(
                "LP solved to reduced accuracy (primal residual {:.3e}, dual residual {:.3e})",
                sol.r_prim,
                sol.r_dual
            );
        }
        let mut x = sol.x.clone();
        for &j in &bounded {
            if x[j] < 0.0 {
                x[j] = 0.0;
            }
        }
        Ok(LpSolution {
            objective: self.objective_value(&x),
            duals: sol.z[..m].to_vec(),
            x,
            iterations: sol.iterations,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            status,
        })
    }
}

impl Default for LinearProgram {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_textbook_program() {
        // min -x - 2y  s.t. x + y + s1 = 4, x + 3y + s2 = 6
        // optimum x = 3, y = 1, objective -5
        let mut lp = LinearProgram::new();
        let x = lp.add_var(-1.0, true);
        let y = lp.add_var(-2.0, true);
        let s1 = lp.add_var(0.0, true);
        let s2 = lp.add_var(0.0, true);
        lp.add_equality(vec![(x, 1.0), (y, 1.0), (s1, 1.0)], 4.0);
        lp.add_equality(vec![(x, 1.0), (y, 3.0), (s2, 1.0)], 6.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective + 5.0).abs() < 1e-7);
        assert!((sol.x[x] - 3.0).abs() < 1e-6);
        assert!((sol.x[y] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn free_variables_and_merged_coefficients() {
        // min |z - 3| via z - u + v = 3 with z free, written with a split coefficient
        let mut lp = LinearProgram::new();
        let z = lp.add_var(0.0, false);
        let u = lp.add_var(1.0, true);
        let v = lp.add_var(1.0, true);
        let row = lp.add_equality(vec![(z, 0.5), (u, -1.0), (v, 1.0), (z, 0.5)], 3.0);
        assert_eq!(lp.row(row).len(), 3);
        let sol = lp.solve().unwrap();
        assert!(sol.objective.abs() < 1e-7);
        assert!(lp.max_row_violation(&sol.x) < 1e-7);
    }

    #[test]
    fn infeasible_program_reports_status() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, true);
        lp.add_equality(vec![(x, 1.0)], -1.0);
        match lp.solve() {
            Err(Error::Solver { status, .. }) => assert!(status.contains("Infeasible"), "{status}"),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_column_is_rejected() {
        let mut lp = LinearProgram::new();
        lp.add_var(1.0, true);
        lp.add_equality(vec![(3, 1.0)], 1.0);
        assert!(matches!(lp.solve(), Err(Error::Dimension(_))));
    }
}
