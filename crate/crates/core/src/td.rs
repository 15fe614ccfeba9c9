//! Tabular TD(0) evaluation of state-action values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::eval::PolicyEvaluation;
use crate::policy::PolicyTable;
use crate::sampling::{TdSampling, TransitionSampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdConfig {
    pub k_in: usize,
    /// Stepsize decay exponent, `β_k = beta0 / (1+k)^sigma`.
    pub sigma: f64,
    pub beta0: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: TdSampling,
}

impl Default for TdConfig {
    fn default() -> Self {
        Self {
            k_in: 2000,
            sigma: 0.6,
            beta0: 0.5,
            seed: 0,
            sampling: TdSampling::Stationary,
        }
    }
}

impl TdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_in == 0 {
            return Err(Error::InvalidConfig("td.k_in must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "td.sigma = {} not in (0,1)",
                self.sigma
            )));
        }
        if !(self.beta0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "td.beta0 = {} must be positive",
                self.beta0
            )));
        }
        Ok(())
    }

    pub fn stepsize(&self, k: usize) -> f64 {
        self.beta0 / (1.0 + k as f64).powf(self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Td { k_in: usize },
}

/// Estimated `Q^i(s,a)`, row-major over `(s,a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub channel: usize,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl QEstimate {
    pub fn exact(eval: &PolicyEvaluation) -> Self {
        Self {
            channel: eval.channel,
            values: eval.q.clone(),
            provenance: Provenance::Exact,
        }
    }

    pub fn constant(channel: usize, num_pairs: usize, value: f64) -> Self {
        Self {
            channel,
            values: vec![value; num_pairs],
            provenance: Provenance::Exact,
        }
    }

    /// Euclidean distance to another table.
    pub fn distance(&self, other: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Runs `cfg.k_in` TD(0) updates from `θ = 0` with the RNG seeded by `cfg.seed`.
pub fn td_evaluate(
    model: &TabularCmdp,
    policy: &PolicyTable,
    channel: usize,
    cfg: &TdConfig,
) -> Result<QEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    td_evaluate_with(model, policy, channel, cfg, &mut rng)
}

/// As [`td_evaluate`], drawing samples from a caller-supplied RNG.
pub fn td_evaluate_with<R: Rng + ?Sized>(
    model: &TabularCmdp,
    policy: &PolicyTable,
    channel: usize,
    cfg: &TdConfig,
    rng: &mut R,
) -> Result<QEstimate> {
    cfg.validate()?;
    let sampler = TransitionSampler::new(model, policy, cfg.sampling)?;
    let na = model.num_actions;
    let costs = model.channel(channel);
    let gamma = model.discount;
    let mut theta = vec![0.0; model.num_pairs()];
    for k in 0..cfg.k_in {
        let tr = sampler.sample(rng);
        let here = tr.s * na + tr.a;
        let target = costs[tr.s][tr.a][tr.next_s] + gamma * theta[tr.next_s * na + tr.next_a];
        theta[here] += cfg.stepsize(k) * (target - theta[here]);
    }
    Ok(QEstimate {
        channel,
        values: theta,
        provenance: Provenance::Td { k_in: cfg.k_in },
    })
}
