//! Transition sampling for temporal-difference evaluation.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::eval::{stationary_distribution, visitation_measure};
use crate::policy::PolicyTable;

/// Distribution the TD start pair `(s, a)` is drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdSampling {
    /// Ergodic limit `μ_π(s) π(a|s)`; refuses non-ergodic chains.
    #[default]
    Stationary,
    /// Discounted visitation `ν_π(s,a)` from `ξ`, i.e. the stationary law of
    /// the chain that restarts from `ξ` with probability `1−γ`. Defined for
    /// every policy, including ones whose chain has absorbing states.
    Visitation,
}

/// One sampled transition `(s, a, s', a')`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub next_s: usize,
    pub next_a: usize,
}

/// Draws `(s,a) ∼ start`, `s' ∼ P(·|s,a)`, `a' ∼ π(·|s')`.
pub struct TransitionSampler {
    num_actions: usize,
    start: WeightedIndex<f64>,
    next_state: Vec<WeightedIndex<f64>>,
    action: Vec<WeightedIndex<f64>>,
}

impl TransitionSampler {
    pub fn new(model: &TabularCmdp, policy: &PolicyTable, sampling: TdSampling) -> Result<Self> {
        let start = match sampling {
            TdSampling::Stationary => stationary_distribution(model, policy)?,
            TdSampling::Visitation => visitation_measure(model, policy)?,
        };
        let weighted = |w: &[f64]| {
            let clipped: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
            WeightedIndex::new(clipped).map_err(|e| Error::NumericalFailure(e.to_string()))
        };
        let next_state = model
            .transition
            .iter()
            .flatten()
            .map(|row| weighted(row))
            .collect::<Result<_>>()?;
        let action = (0..model.num_states)
            .map(|s| weighted(policy.row(s)))
            .collect::<Result<_>>()?;
        Ok(Self {
            num_actions: model.num_actions,
            start: weighted(&start)?,
            next_state,
            action,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Transition {
        let pair = self.start.sample(rng);
        let (s, a) = (pair / self.num_actions, pair % self.num_actions);
        let next_s = self.next_state[pair].sample(rng);
        let next_a = self.action[next_s].sample(rng);
        Transition {
            s,
            a,
            next_s,
            next_a,
        }
    }
}
