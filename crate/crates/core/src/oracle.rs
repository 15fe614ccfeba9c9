//! Globally optimal feasible policy via the occupancy-measure linear program.
//!
//! Returns are linear in the normalized discounted occupancy `ν(s,a)`, so the
//! constrained problem becomes
//!
//! ```text
//! maximize   (1/(1−γ)) Σ ν(s,a) c̄_0(s,a)
//! subject to Σ_a ν(s',a) − γ Σ_{s,a} P(s'|s,a) ν(s,a) = (1−γ) ξ(s')   for every s'
//!            (1/(1−γ)) Σ ν(s,a) c̄_i(s,a) ≤ d_i                        for i = 1..p
//!            ν ≥ 0
//! ```

use serde::{Deserialize, Serialize};

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::policy::PolicyTable;
use crate::simplex::{LinearProgram, LpOutcome, Relation};

/// Occupancy mass below which a state counts as unvisited.
const UNVISITED: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySolution {
    pub status: LpStatus,
    /// `ν*(s,a)`; empty when infeasible.
    pub nu: Vec<Vec<f64>>,
    /// Policy extracted from `ν*`; empty when infeasible.
    pub policy: Vec<Vec<f64>>,
    /// `J_i(π*)` for channels `0..=p`; empty when infeasible.
    pub j_star: Vec<f64>,
}

impl OccupancySolution {
    pub fn policy_table(&self) -> PolicyTable {
        PolicyTable::from_rows(&self.policy)
    }
}

/// Solves the occupancy LP, reporting infeasibility in-band.
pub fn solve_occupancy(model: &TabularCmdp) -> Result<OccupancySolution> {
    let (ns, na) = (model.num_states, model.num_actions);
    let n = ns * na;
    let gamma = model.discount;
    let scale = 1.0 / (1.0 - gamma);

    let objective: Vec<f64> = model.mean_costs(0).iter().map(|c| c * scale).collect();
    let mut lp = LinearProgram::new(objective);
    for target in 0..ns {
        let mut row = vec![0.0; n];
        for a in 0..na {
            row[target * na + a] += 1.0;
        }
        for s in 0..ns {
            for a in 0..na {
                row[s * na + a] -= gamma * model.transition[s][a][target];
            }
        }
        lp.add_row(
            row,
            Relation::Eq,
            (1.0 - gamma) * model.initial_dist[target],
        );
    }
    for i in 1..model.num_channels() {
        let row = model.mean_costs(i).iter().map(|c| c * scale).collect();
        lp.add_row(row, Relation::Le, model.limit(i));
    }

    let x = match lp.solve()? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible { .. } => {
            return Ok(OccupancySolution {
                status: LpStatus::Infeasible,
                nu: Vec::new(),
                policy: Vec::new(),
                j_star: Vec::new(),
            })
        }
    };
    let nu: Vec<Vec<f64>> = x
        .chunks(na)
        .map(|r| r.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let j_star = (0..model.num_channels())
        .map(|i| {
            let mean = model.mean_costs(i);
            scale
                * nu.iter()
                    .flatten()
                    .zip(&mean)
                    .map(|(v, c)| v * c)
                    .sum::<f64>()
        })
        .collect();
    let policy = extract_policy(&nu);
    Ok(OccupancySolution {
        status: LpStatus::Optimal,
        nu,
        policy,
        j_star,
    })
}

/// The globally optimal feasible policy; `Error::Infeasible` if none exists.
pub fn solve_optimal(model: &TabularCmdp) -> Result<OccupancySolution> {
    let sol = solve_occupancy(model)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(Error::Infeasible { residual: f64::NAN }),
    }
}

/// `π(a|s) = ν(s,a) / Σ_a' ν(s,a')`, uniform where the state is unvisited.
pub fn extract_policy(nu: &[Vec<f64>]) -> Vec<Vec<f64>> {
    nu.iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total > UNVISITED {
                row.iter().map(|v| v / total).collect()
            } else {
                vec![1.0 / row.len() as f64; row.len()]
            }
        })
        .collect()
}
