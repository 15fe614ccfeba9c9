//! Primal-dual baseline: NPG ascent on the Lagrangian with projected dual
//! updates on the multipliers.

use serde::{Deserialize, Serialize};

use crate::cmdp::TabularCmdp;
use crate::crpo::{
    add_scaled, estimate_constraints, evaluate_iteration, finish, select_target, stream_rng,
    EvalMode, Evaluation, TieBreak,
};
use crate::error::{Error, Result};
use crate::policy::SoftmaxPolicy;
use crate::record::{Algo, IterationRecord, RunRecord, Target};
use crate::td::TdConfig;

/// Candidate dual stepsizes searched when tuning the primal-dual baseline.
pub const DUAL_STEP_GRID: [f64; 6] = [0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdoConfig {
    pub t_max: usize,
    pub alpha: f64,
    pub beta_dual: f64,
    /// Projection bound for the multipliers; `100/(1−γ)` when unset.
    #[serde(default)]
    pub lambda_max: Option<f64>,
    #[serde(default)]
    pub td: TdConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_mode: EvalMode,
    #[serde(default)]
    pub eval_epsilon: f64,
}

impl PdoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::InvalidConfig("t_max must be at least 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {} must be positive",
                self.alpha
            )));
        }
        if !(self.beta_dual >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "beta_dual = {} must be non-negative",
                self.beta_dual
            )));
        }
        if let Some(l) = self.lambda_max {
            if !(l >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "lambda_max = {l} must be non-negative"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return Err(Error::InvalidConfig("eval_epsilon must be in [0,1]".into()));
        }
        if self.eval_mode == EvalMode::Td {
            self.td.validate()?;
        }
        Ok(())
    }

    pub fn lambda_bound(&self, gamma: f64) -> f64 {
        self.lambda_max.unwrap_or(100.0 / (1.0 - gamma))
    }
}

/// Runs the primal-dual method from the uniform policy and `λ = 0`.
///
/// The primal step uses `Q_L = Q̄^0 − Σ_i λ_i Q̄^i`; the dual step is
/// `λ_i ← clip(λ_i + β (J̄_i − d_i), 0, λ_max)`. `in_n0` marks iterations whose
/// estimates satisfy every constraint exactly.
pub fn run_pdo(model: &TabularCmdp, cfg: &PdoConfig) -> Result<RunRecord> {
    cfg.validate()?;
    model.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let ev = Evaluation {
        mode: cfg.eval_mode,
        td: &cfg.td,
        epsilon: cfg.eval_epsilon,
        seed: cfg.seed,
    };
    let lambda_max = cfg.lambda_bound(model.discount);
    let step = cfg.alpha / (1.0 - model.discount);
    let mut policy = SoftmaxPolicy::zeros(model.num_states, model.num_actions);
    let mut lambda = vec![0.0; model.num_costs()];
    let mut iterations = Vec::with_capacity(cfg.t_max);
    let mut snapshots = Vec::with_capacity(cfg.t_max);
    for t in 0..cfg.t_max {
        let table = policy.probabilities();
        let (qbars, exact_j) = evaluate_iteration(model, &table, t, &ev)?;
        let jbar = estimate_constraints(model, &table, &qbars);
        let in_n0 = select_target(
            &jbar[1..],
            &model.limits,
            0.0,
            TieBreak::FirstIndex,
            &mut rng,
        ) == Target::Objective;
        snapshots.push(in_n0.then(|| table.rows()));
        iterations.push(IterationRecord {
            t,
            target: Target::Lagrangian,
            jbar: jbar.clone(),
            in_n0,
            exact_j,
            lambda: Some(lambda.clone()),
        });

        let logits = policy.logits_mut();
        add_scaled(logits, &qbars[0].values, step);
        for (i, l) in lambda.iter().enumerate() {
            add_scaled(logits, &qbars[i + 1].values, -step * l);
        }
        for (i, l) in lambda.iter_mut().enumerate() {
            *l = (*l + cfg.beta_dual * (jbar[i + 1] - model.limits[i])).clamp(0.0, lambda_max);
        }
    }
    Ok(finish(
        Algo::Pdo,
        cfg.seed,
        model,
        iterations,
        snapshots,
        &mut rng,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crpo::{run_npg, CrpoConfig};
    use crate::envs::make_twostate;

    fn cfg(t_max: usize, alpha: f64, beta: f64) -> PdoConfig {
        PdoConfig {
            t_max,
            alpha,
            beta_dual: beta,
            lambda_max: None,
            td: TdConfig::default(),
            seed: 4,
            eval_mode: EvalMode::Exact,
            eval_epsilon: 0.0,
        }
    }

    fn npg_cfg(t_max: usize, alpha: f64) -> CrpoConfig {
        CrpoConfig {
            t_max,
            alpha,
            eta: 0.0,
            td: TdConfig::default(),
            tie_break: TieBreak::FirstIndex,
            seed: 4,
            eval_mode: EvalMode::Exact,
            eval_epsilon: 0.0,
        }
    }

    fn exact_js(rec: &RunRecord) -> Vec<Vec<f64>> {
        rec.iterations.iter().map(|it| it.exact_j.clone()).collect()
    }

    #[test]
    fn multipliers_stay_in_bounds() {
        let m = make_twostate();
        let rec = run_pdo(&m, &cfg(500, 0.01, 0.05)).unwrap();
        let bound = 100.0 / (1.0 - m.discount);
        for it in &rec.iterations {
            let l = it.lambda.as_ref().unwrap();
            assert!(l.iter().all(|&x| (0.0..=bound).contains(&x)));
        }
    }

    #[test]
    fn zero_dual_step_is_unconstrained_npg() {
        let m = make_twostate();
        let pdo = run_pdo(&m, &cfg(150, 0.01, 0.0)).unwrap();
        let npg = run_npg(&m, &npg_cfg(150, 0.01)).unwrap();
        assert_eq!(exact_js(&pdo), exact_js(&npg));
    }

    #[test]
    fn zero_costs_are_unconstrained_npg() {
        let mut m = make_twostate();
        m.costs[0] = vec![vec![vec![0.0; 2]; 2]; 2];
        let pdo = run_pdo(&m, &cfg(150, 0.01, 0.05)).unwrap();
        let npg = run_npg(&m, &npg_cfg(150, 0.01)).unwrap();
        assert_eq!(exact_js(&pdo), exact_js(&npg));
        assert!(pdo
            .iterations
            .iter()
            .all(|it| it.lambda.as_ref().unwrap()[0] == 0.0));
    }

    #[test]
    fn slack_run_decreases_multiplier() {
        let m = make_twostate();
        let rec = run_pdo(&m, &cfg(3000, 0.01, 0.05)).unwrap();
        let mut checked = 0;
        for w in rec.iterations.windows(2) {
            let l0 = w[0].lambda.as_ref().unwrap()[0];
            let l1 = w[1].lambda.as_ref().unwrap()[0];
            if l0 > 0.0 && w[0].jbar[1] < m.limits[0] {
                assert!(l1 < l0);
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn bad_config_is_rejected() {
        let m = make_twostate();
        let mut c = cfg(10, 0.01, -1.0);
        assert!(run_pdo(&m, &c).is_err());
        c.beta_dual = 0.1;
        c.lambda_max = Some(-1.0);
        assert!(run_pdo(&m, &c).is_err());
    }
}
