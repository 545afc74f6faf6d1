//! Dense two-phase simplex for small linear programs.
//!
//! Solves `min cᵀx` subject to `A_eq x = b_eq`, `A_ub x ≤ b_ub`, `x ≥ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
/// Consecutive non-improving pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub cost: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
}

struct Tableau {
    /// rows × (cols + 1); last column is the right-hand side.
    t: DMatrix<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.t.ncols();
        let p = self.t[(row, col)];
        for j in 0..width {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for j in 0..width {
                    let v = self.t[(row, j)];
                    if v != 0.0 {
                        self.t[(i, j)] -= f * v;
                    }
                }
            }
        }
        self.basis[row] = col;
    }

    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        let mut d = cost[..allowed].to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.t[(i, j)];
                }
            }
        }
        d
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        let rhs = self.rhs_col();
        self.basis
            .iter()
            .enumerate()
            .map(|(i, &b)| cost[b] * self.t[(i, rhs)])
            .sum()
    }

    /// Runs simplex over the first `allowed` columns. Returns `false` when
    /// unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize, max_pivots: usize) -> Result<bool> {
        let rhs = self.rhs_col();
        let mut stall = 0;
        let mut last = self.objective(cost);
        for _ in 0..max_pivots {
            let d = self.reduced_costs(cost, allowed);
            let bland = stall >= STALL_LIMIT;
            let entering = if bland {
                (0..allowed).find(|&j| d[j] < -COST_TOL)
            } else {
                (0..allowed)
                    .filter(|&j| d[j] < -COST_TOL)
                    .min_by(|&a, &b| d[a].total_cmp(&d[b]))
            };
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.nrows() {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((r, best)) => {
                            ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[i] < self.basis[r])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Ok(false);
            };
            self.pivot(row, col);
            let now = self.objective(cost);
            if now < last - 1e-12 {
                stall = 0;
                last = now;
            } else {
                stall += 1;
            }
        }
        Err(Error::Lp(format!("no convergence after {max_pivots} pivots")))
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution> {
        let nv = self.cost.len();
        let (me, mu) = (self.a_eq.nrows(), self.a_ub.nrows());
        if self.a_eq.ncols() != nv && me > 0 || self.a_ub.ncols() != nv && mu > 0 {
            return Err(Error::dims("constraint width differs from cost length"));
        }
        if self.b_eq.len() != me || self.b_ub.len() != mu {
            return Err(Error::dims("right-hand side length differs from constraint rows"));
        }
        let rows = me + mu;
        // columns: originals, slacks (one per ≤ row), artificials (one per row)
        let n_struct = nv + mu;
        let width = n_struct + rows + 1;
        let mut t = DMatrix::zeros(rows, width);
        for i in 0..rows {
            let (coeffs, b, slack) = if i < me {
                (self.a_eq.row(i).clone_owned(), self.b_eq[i], None)
            } else {
                let k = i - me;
                (self.a_ub.row(k).clone_owned(), self.b_ub[k], Some(nv + k))
            };
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..nv {
                t[(i, j)] = sign * coeffs[j];
            }
            if let Some(s) = slack {
                t[(i, s)] = sign;
            }
            t[(i, n_struct + i)] = 1.0;
            t[(i, width - 1)] = sign * b;
        }
        let mut tab = Tableau {
            t,
            basis: (n_struct..n_struct + rows).collect(),
        };
        let max_pivots = 50 * (rows + width) + 1000;

        let mut phase1 = vec![0.0; n_struct + rows];
        for c in phase1.iter_mut().skip(n_struct) {
            *c = 1.0;
        }
        tab.optimize(&phase1, n_struct + rows, max_pivots)?;
        let infeasibility = tab.objective(&phase1);
        let scale = 1.0 + self.b_eq.amax().max(self.b_ub.amax());
        if infeasibility > 1e-9 * scale {
            return Err(Error::Lp(format!("infeasible (phase one residual {infeasibility:e})")));
        }

        // drive remaining artificials out of the basis; drop redundant rows
        let mut r = 0;
        while r < tab.t.nrows() {
            if tab.basis[r] >= n_struct {
                let col = (0..n_struct).find(|&j| tab.t[(r, j)].abs() > PIVOT_TOL);
                match col {
                    Some(j) => tab.pivot(r, j),
                    None => {
                        tab.t = tab.t.clone().remove_row(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }

        let mut phase2 = vec![0.0; n_struct + rows];
        phase2[..nv].copy_from_slice(self.cost.as_slice());
        if !tab.optimize(&phase2, n_struct, max_pivots)? {
            return Err(Error::Lp("unbounded".into()));
        }
        let rhs = tab.rhs_col();
        let mut x = DVector::zeros(nv);
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < nv {
                x[b] = tab.t[(i, rhs)].max(0.0);
            }
        }
        let objective = self.cost.dot(&x);
        Ok(LpSolution { x, objective })
    }
}
