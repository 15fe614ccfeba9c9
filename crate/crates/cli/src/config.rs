//! Experiment configuration file.

use serde::{Deserialize, Serialize};

use crpo_core::neural::{NeuralCrpoConfig, NeuralTdConfig};
use crpo_core::sampling::TdSampling;
use crpo_core::{
    theorem_schedule, CrpoConfig, EvalMode, PdoConfig, RunSpec, TabularCmdp, TdConfig, TieBreak,
};

/// Failure probability used when deriving theorem parameters.
const SCHEDULE_DELTA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Stepsize and tolerance from the convergence theorem for the model and `t_max`.
    Theorem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdoSection {
    pub beta_dual: f64,
    #[serde(default)]
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralSection {
    pub m: usize,
    #[serde(default = "default_feature_dim")]
    pub d: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub batch_n: Option<usize>,
    #[serde(default = "default_neural_k_in")]
    pub k_in: usize,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub sampling: TdSampling,
}

fn default_feature_dim() -> usize {
    16
}

fn default_radius() -> f64 {
    NeuralTdConfig::default().radius
}

fn default_neural_k_in() -> usize {
    NeuralTdConfig::default().k_in
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub t_max: usize,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    /// Fills `alpha` and `eta` where they are not given.
    #[serde(default)]
    pub schedule: Option<ScheduleKind>,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub eval_mode: EvalMode,
    #[serde(default)]
    pub eval_epsilon: f64,
    #[serde(default)]
    pub td: TdConfig,
    #[serde(default)]
    pub pdo: Option<PdoSection>,
    #[serde(default)]
    pub neural: Option<NeuralSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AlgoArg {
    Crpo,
    Pdo,
    Npg,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    fn alpha_eta(&self, model: &TabularCmdp) -> (Option<f64>, Option<f64>) {
        let sched = self
            .schedule
            .map(|ScheduleKind::Theorem| theorem_schedule(model, self.t_max, SCHEDULE_DELTA));
        (
            self.alpha.or(sched.map(|s| s.alpha)),
            self.eta.or(sched.map(|s| s.eta)),
        )
    }

    /// The run this configuration describes for `algo` on `model`.
    pub fn to_spec(
        &self,
        algo: AlgoArg,
        model: &TabularCmdp,
        seed: u64,
    ) -> Result<RunSpec, String> {
        let (alpha, eta) = self.alpha_eta(model);
        let alpha = alpha.ok_or("config: alpha is required unless a schedule is given")?;
        let need_eta = || eta.ok_or("config: eta is required for crpo unless a schedule is given");
        if self.neural.is_some() && algo != AlgoArg::Crpo {
            return Err("config: the neural section is only supported with --algo crpo".into());
        }
        let tabular = |eta: f64| CrpoConfig {
            t_max: self.t_max,
            alpha,
            eta,
            td: self.td.clone(),
            tie_break: self.tie_break,
            seed,
            eval_mode: self.eval_mode,
            eval_epsilon: self.eval_epsilon,
        };
        let spec = match algo {
            AlgoArg::Crpo => match &self.neural {
                Some(n) => RunSpec::NeuralCrpo {
                    config: NeuralCrpoConfig {
                        t_max: self.t_max,
                        alpha,
                        eta: need_eta()?,
                        m: n.m,
                        td: NeuralTdConfig {
                            k_in: n.k_in,
                            radius: n.radius,
                            beta: n.beta,
                            seed: self.td.seed,
                            sampling: n.sampling,
                        },
                        batch_n: n.batch_n,
                        delta: SCHEDULE_DELTA,
                        tie_break: self.tie_break,
                        seed,
                        eval_epsilon: self.eval_epsilon,
                    },
                    d: n.d,
                },
                None => RunSpec::Crpo(tabular(need_eta()?)),
            },
            AlgoArg::Npg => RunSpec::Npg(tabular(eta.unwrap_or(f64::INFINITY))),
            AlgoArg::Pdo => {
                let pdo = self
                    .pdo
                    .as_ref()
                    .ok_or("config: --algo pdo needs a pdo section")?;
                RunSpec::Pdo(PdoConfig {
                    t_max: self.t_max,
                    alpha,
                    beta_dual: pdo.beta_dual,
                    lambda_max: pdo.lambda_max,
                    td: self.td.clone(),
                    seed,
                    eval_mode: self.eval_mode,
                    eval_epsilon: self.eval_epsilon,
                })
            }
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}
