//! Dense two-phase tableau simplex with Bland's anti-cycling rule.

use crate::error::{Error, Result};

/// Pivot and optimality tolerance.
pub const PIVOT_TOL: f64 = 1e-9;
/// Phase-1 optimum above which the program is declared infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize cᵀx` subject to the rows and `x ≥ 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible { residual: f64 },
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.objective.len());
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    /// Constraint rows followed by the rhs column.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    num_original: usize,
    /// Columns `>= first_artificial` are artificial.
    first_artificial: usize,
    width: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let num_slack = lp
            .rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();
        // Rows whose slack can start in the basis need no artificial.
        let needs_artificial: Vec<bool> = lp
            .rows
            .iter()
            .map(|r| !(r.relation == Relation::Le && r.rhs >= 0.0))
            .collect();
        let num_artificial = needs_artificial.iter().filter(|&&x| x).count();
        let first_artificial = n + num_slack;
        let width = first_artificial + num_artificial;

        let mut rows = Vec::with_capacity(lp.rows.len());
        let mut basis = Vec::with_capacity(lp.rows.len());
        let (mut slack, mut artificial) = (n, first_artificial);
        for (row, &needs) in lp.rows.iter().zip(&needs_artificial) {
            let mut t = vec![0.0; width + 1];
            t[..n].copy_from_slice(&row.coeffs);
            t[width] = row.rhs;
            let slack_col = match row.relation {
                Relation::Le => Some((slack, 1.0)),
                Relation::Ge => Some((slack, -1.0)),
                Relation::Eq => None,
            };
            if let Some((col, sign)) = slack_col {
                t[col] = sign;
                slack += 1;
            }
            if t[width] < 0.0 {
                for x in &mut t {
                    *x = -*x;
                }
            }
            if needs {
                t[artificial] = 1.0;
                basis.push(artificial);
                artificial += 1;
            } else {
                basis.push(slack_col.expect("Le row has a slack").0);
            }
            rows.push(t);
        }
        Self {
            rows,
            basis,
            num_original: n,
            first_artificial,
            width,
        }
    }

    fn run(mut self, objective: &[f64]) -> Result<LpOutcome> {
        if self.first_artificial < self.width {
            let mut phase1 = vec![0.0; self.width];
            for c in &mut phase1[self.first_artificial..] {
                *c = -1.0;
            }
            let value = self.optimize(&phase1, self.width)?;
            let residual = -value;
            if residual > FEASIBILITY_TOL {
                return Ok(LpOutcome::Infeasible { residual });
            }
            self.expel_artificials();
        }
        let mut phase2 = vec![0.0; self.width];
        phase2[..self.num_original].copy_from_slice(objective);
        let value = self.optimize(&phase2, self.first_artificial)?;
        let mut x = vec![0.0; self.num_original];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.num_original {
                x[b] = row[self.width];
            }
        }
        Ok(LpOutcome::Optimal { x, value })
    }

    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        let mut reduced = cost[..allowed].to_vec();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (r, t) in reduced.iter_mut().zip(row) {
                    *r -= cb * t;
                }
            }
        }
        reduced
    }

    /// Maximizes `costᵀx` over columns `< allowed`; returns the optimal value.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<f64> {
        for _ in 0..MAX_PIVOTS {
            let reduced = self.reduced_costs(cost, allowed);
            // Bland: lowest-index improving column
            let Some(enter) = reduced.iter().position(|&r| r > PIVOT_TOL) else {
                return Ok(self
                    .rows
                    .iter()
                    .zip(&self.basis)
                    .map(|(row, &b)| cost[b] * row[self.width])
                    .sum());
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_TOL {
                    let ratio = row[self.width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((j, best)) => {
                            if ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[i] < self.basis[j])
                            {
                                Some((i, ratio))
                            } else {
                                Some((j, best))
                            }
                        }
                    };
                }
            }
            let Some((leave, _)) = leave else {
                return Err(Error::NumericalFailure("objective is unbounded".into()));
            };
            self.pivot(leave, enter);
        }
        Err(Error::NumericalFailure(format!(
            "no convergence after {MAX_PIVOTS} pivots"
        )))
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for x in &mut self.rows[r] {
            *x /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Pivots basic artificials out at zero level; drops rows that are redundant.
    fn expel_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| self.rows[i][j].abs() > PIVOT_TOL);
                match col {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.rows.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}
