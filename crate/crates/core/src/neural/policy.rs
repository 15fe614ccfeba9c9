//! Softmax policy over network outputs with a temperature.

use serde::{Deserialize, Serialize};

use super::net::{FeatureEmbedding, TwoLayerNet};
use crate::crpo::Direction;
use crate::error::{Error, Result};
use crate::policy::{softmax_rows, PolicyTable};

/// `π(a|s) ∝ exp(τ f(ψ(s,a); W))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralPolicy {
    pub net: TwoLayerNet,
    pub tau: f64,
}

impl NeuralPolicy {
    /// Zero temperature: uniform whatever the weights.
    pub fn new(net: TwoLayerNet) -> Self {
        Self { net, tau: 0.0 }
    }

    pub fn logits(&self, emb: &FeatureEmbedding) -> Vec<f64> {
        emb.evaluate(&self.net)
            .into_iter()
            .map(|f| self.tau * f)
            .collect()
    }

    pub fn probabilities(&self, emb: &FeatureEmbedding) -> PolicyTable {
        let probs = softmax_rows(&self.logits(emb), emb.num_actions);
        PolicyTable::from_probs(emb.num_states, emb.num_actions, probs)
    }

    /// The same distribution computed as a unit-temperature policy on `τW`.
    pub fn probabilities_folded(&self, emb: &FeatureEmbedding) -> PolicyTable {
        let logits = emb.evaluate(&self.net.scaled(self.tau));
        PolicyTable::from_probs(
            emb.num_states,
            emb.num_actions,
            softmax_rows(&logits, emb.num_actions),
        )
    }

    /// Effective parameters `τW`.
    pub fn effective_weights(&self) -> Vec<f64> {
        self.net.w.iter().map(|w| self.tau * w).collect()
    }
}

/// `τ' = τ + α`, `W' = (τW ± α θ̄) / τ'`.
pub fn neural_npg_step(
    policy: &NeuralPolicy,
    theta_bar: &[f64],
    alpha: f64,
    direction: Direction,
) -> Result<NeuralPolicy> {
    let tau = policy.tau + alpha;
    if tau == 0.0 || !tau.is_finite() {
        return Err(Error::DegenerateTemperature);
    }
    let sign = match direction {
        Direction::Ascend => 1.0,
        Direction::Descend => -1.0,
    };
    let w = policy
        .net
        .w
        .iter()
        .zip(theta_bar)
        .map(|(w, th)| (policy.tau * w + sign * alpha * th) / tau)
        .collect();
    Ok(NeuralPolicy {
        net: policy.net.with_weights(w),
        tau,
    })
}
