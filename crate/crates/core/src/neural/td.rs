//! Projected semi-gradient TD with a two-layer network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{FeatureEmbedding, TwoLayerNet};
use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::policy::PolicyTable;
use crate::sampling::{TdSampling, TransitionSampler};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralTdConfig {
    pub k_in: usize,
    /// Radius of the ball around the initial weights that iterates stay in.
    pub radius: f64,
    /// Constant stepsize; `min(1/√K, (1−γ)/12)` when unset.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: TdSampling,
}

impl Default for NeuralTdConfig {
    fn default() -> Self {
        Self {
            k_in: 2000,
            radius: 10.0,
            beta: None,
            seed: 0,
            sampling: TdSampling::Stationary,
        }
    }
}

impl NeuralTdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_in == 0 {
            return Err(Error::InvalidConfig(
                "neural td k_in must be at least 1".into(),
            ));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "radius = {} must be non-negative",
                self.radius
            )));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0) {
                return Err(Error::InvalidConfig(format!("beta = {b} must be positive")));
            }
        }
        Ok(())
    }

    pub fn stepsize(&self, gamma: f64) -> f64 {
        self.beta
            .unwrap_or_else(|| (1.0 / (self.k_in as f64).sqrt()).min((1.0 - gamma) / 12.0))
    }
}

/// Averaged TD parameters and the value table they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralQ {
    pub channel: usize,
    /// `θ̄ = (1/K) Σ_{k<K} θ_k`.
    pub theta_bar: Vec<f64>,
    /// `f(ψ(s,a); θ̄)`, row-major over `(s,a)`.
    pub values: Vec<f64>,
    /// `max_k ‖θ_k − θ_0‖`.
    pub max_offset: f64,
}

/// Runs `cfg.k_in` projected TD steps from `θ_0 = init.w0` with the RNG seeded by `cfg.seed`.
pub fn neural_td_evaluate(
    model: &TabularCmdp,
    policy: &PolicyTable,
    emb: &FeatureEmbedding,
    init: &TwoLayerNet,
    channel: usize,
    cfg: &NeuralTdConfig,
) -> Result<NeuralQ> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    neural_td_evaluate_with(model, policy, emb, init, channel, cfg, &mut rng)
}

/// As [`neural_td_evaluate`], drawing samples from a caller-supplied RNG.
pub fn neural_td_evaluate_with<R: Rng + ?Sized>(
    model: &TabularCmdp,
    policy: &PolicyTable,
    emb: &FeatureEmbedding,
    init: &TwoLayerNet,
    channel: usize,
    cfg: &NeuralTdConfig,
    rng: &mut R,
) -> Result<NeuralQ> {
    cfg.validate()?;
    let sampler = TransitionSampler::new(model, policy, cfg.sampling)?;
    let costs = model.channel(channel);
    let gamma = model.discount;
    let beta = cfg.stepsize(gamma);
    let theta0 = &init.w0;
    let mut net = init.with_weights(theta0.clone());
    let mut sum = vec![0.0; theta0.len()];
    let mut max_offset: f64 = 0.0;
    let mut active = vec![false; net.m];
    for _ in 0..cfg.k_in {
        for ((acc, th), th0) in sum.iter_mut().zip(&net.w).zip(theta0) {
            *acc += th - th0;
        }
        let tr = sampler.sample(rng);
        let x = emb.get(tr.s, tr.a);
        let next = emb.get(tr.next_s, tr.next_a);
        let next_value = net.forward(next);
        let value = net.forward_active(x, &mut active);
        let td_error = costs[tr.s][tr.a][tr.next_s] + gamma * next_value - value;
        net.step_along_grad(x, &active, beta * td_error);
        project(&mut net.w, theta0, cfg.radius);
        max_offset = max_offset.max(offset(&net.w, theta0));
    }
    let k = cfg.k_in as f64;
    let theta_bar: Vec<f64> = sum
        .into_iter()
        .zip(theta0)
        .map(|(x, th0)| th0 + x / k)
        .collect();
    let values = emb.evaluate(&init.with_weights(theta_bar.clone()));
    Ok(NeuralQ {
        channel,
        theta_bar,
        values,
        max_offset,
    })
}

fn offset(w: &[f64], center: &[f64]) -> f64 {
    w.iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Radial shrink onto `{θ : ‖θ − center‖ ≤ radius}`.
fn project(w: &mut [f64], center: &[f64], radius: f64) {
    let dist = offset(w, center);
    if dist > radius {
        let shrink = radius / dist;
        for (x, c) in w.iter_mut().zip(center) {
            *x = c + shrink * (*x - c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::td_garnet;
    use crate::neural::net::init_net;

    fn single_state(gamma: f64) -> TabularCmdp {
        TabularCmdp {
            num_states: 1,
            num_actions: 1,
            discount: gamma,
            c_max: 1.0,
            initial_dist: vec![1.0],
            transition: vec![vec![vec![1.0]]],
            reward: vec![vec![vec![1.0]]],
            costs: vec![],
            limits: vec![],
        }
    }

    #[test]
    fn default_stepsize() {
        let cfg = NeuralTdConfig {
            k_in: 100,
            ..Default::default()
        };
        assert!((cfg.stepsize(0.9) - 0.1 / 12.0).abs() < 1e-15);
        let cfg = NeuralTdConfig {
            k_in: 1_000_000,
            ..Default::default()
        };
        assert!((cfg.stepsize(0.9) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn projection_is_radial() {
        let center = vec![1.0, 1.0];
        let mut w = vec![4.0, 5.0];
        project(&mut w, &center, 2.5);
        assert!((w[0] - 2.5).abs() < 1e-12 && (w[1] - 3.0).abs() < 1e-12);
        let mut inside = vec![1.5, 1.0];
        project(&mut inside, &center, 2.5);
        assert_eq!(inside, vec![1.5, 1.0]);
    }

    #[test]
    fn zero_radius_pins_the_average() {
        let m = td_garnet();
        let emb = FeatureEmbedding::gaussian(5, 2, 16, 0).unwrap();
        let net = init_net(16, 16, 1).unwrap();
        let cfg = NeuralTdConfig {
            k_in: 500,
            radius: 0.0,
            ..Default::default()
        };
        let q = neural_td_evaluate(&m, &PolicyTable::uniform(5, 2), &emb, &net, 0, &cfg).unwrap();
        assert_eq!(q.theta_bar, net.w0);
        assert_eq!(q.max_offset, 0.0);
    }

    #[test]
    fn iterates_stay_in_the_ball() {
        let m = td_garnet();
        let emb = FeatureEmbedding::gaussian(5, 2, 16, 0).unwrap();
        let net = init_net(16, 16, 1).unwrap();
        let cfg = NeuralTdConfig {
            k_in: 5000,
            radius: 0.5,
            beta: Some(0.05),
            ..Default::default()
        };
        let q = neural_td_evaluate(&m, &PolicyTable::uniform(5, 2), &emb, &net, 0, &cfg).unwrap();
        assert!(q.max_offset <= 0.5 + 1e-12);
        assert!(q.max_offset > 0.4);
    }

    #[test]
    fn single_state_fixed_point() {
        let m = single_state(0.5);
        let emb = FeatureEmbedding::gaussian(1, 1, 16, 2).unwrap();
        let net = init_net(32, 16, 3).unwrap();
        let cfg = NeuralTdConfig {
            k_in: 100_000,
            radius: 10.0,
            ..Default::default()
        };
        let q = neural_td_evaluate(&m, &PolicyTable::uniform(1, 1), &emb, &net, 0, &cfg).unwrap();
        assert!((q.values[0] - 2.0).abs() <= 0.2, "{}", q.values[0]);
    }

    #[test]
    fn seeded_runs_repeat() {
        let m = td_garnet();
        let emb = FeatureEmbedding::gaussian(5, 2, 8, 0).unwrap();
        let net = init_net(8, 8, 1).unwrap();
        let cfg = NeuralTdConfig {
            k_in: 300,
            seed: 9,
            ..Default::default()
        };
        let pol = PolicyTable::uniform(5, 2);
        let a = neural_td_evaluate(&m, &pol, &emb, &net, 1, &cfg).unwrap();
        let b = neural_td_evaluate(&m, &pol, &emb, &net, 1, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
