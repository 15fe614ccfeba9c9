//! CRPO with a neural softmax policy and neural TD critics.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::net::{init_net, FeatureEmbedding};
use super::policy::{neural_npg_step, NeuralPolicy};
use super::td::{neural_td_evaluate_with, NeuralQ, NeuralTdConfig};
use crate::cmdp::TabularCmdp;
use crate::crpo::{finish, select_target, stream_rng, Direction, TieBreak};
use crate::error::{Error, Result};
use crate::eval::exact_returns;
use crate::exec;
use crate::policy::PolicyTable;
use crate::record::{Algo, IterationRecord, RunRecord, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralCrpoConfig {
    pub t_max: usize,
    pub alpha: f64,
    pub eta: f64,
    /// Hidden width `m`.
    pub m: usize,
    #[serde(default)]
    pub td: NeuralTdConfig,
    /// Constraint-estimation batch size; `⌈T log(2T/δ)⌉` when unset.
    #[serde(default)]
    pub batch_n: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub seed: u64,
    /// Uniform mixing applied to the policy before TD evaluation (0 = off).
    #[serde(default)]
    pub eval_epsilon: f64,
}

fn default_delta() -> f64 {
    0.1
}

impl NeuralCrpoConfig {
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
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta = {} must be non-negative",
                self.eta
            )));
        }
        if self.batch_n == Some(0) {
            return Err(Error::InvalidConfig("batch_n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return Err(Error::InvalidConfig("eval_epsilon must be in [0,1]".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta = {} not in (0,1)",
                self.delta
            )));
        }
        self.td.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_n
            .unwrap_or_else(|| default_batch_size(self.t_max, self.delta))
    }
}

/// `⌈T log(2T/δ)⌉`.
pub fn default_batch_size(t: usize, delta: f64) -> usize {
    let t = t as f64;
    (t * (2.0 * t / delta).ln()).ceil().max(1.0) as usize
}

/// Draws `n` pairs with `s ∼ ξ`, `a ∼ π(·|s)` and averages each value table over them.
pub fn estimate_constraints_sampled<R: Rng + ?Sized>(
    model: &TabularCmdp,
    policy: &PolicyTable,
    values: &[&[f64]],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let weights: Vec<f64> = (0..model.num_pairs())
        .map(|i| {
            model.initial_dist[i / model.num_actions]
                * policy.prob(i / model.num_actions, i % model.num_actions)
        })
        .collect();
    let pairs = WeightedIndex::new(weights).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    let mut sums = vec![0.0; values.len()];
    for _ in 0..n {
        let x = pairs.sample(rng);
        for (acc, v) in sums.iter_mut().zip(values) {
            *acc += v[x];
        }
    }
    Ok(sums.into_iter().map(|s| s / n as f64).collect())
}

/// A finished neural run with its last policy.
#[derive(Debug, Clone)]
pub struct NeuralRun {
    pub record: RunRecord,
    pub policy: NeuralPolicy,
}

/// Runs CRPO from `τ = 0`. The audit `exact_j` evaluates the realized action
/// probabilities exactly.
pub fn run_neural_crpo(
    model: &TabularCmdp,
    emb: &FeatureEmbedding,
    cfg: &NeuralCrpoConfig,
) -> Result<NeuralRun> {
    cfg.validate()?;
    model.validate()?;
    emb.validate()?;
    if emb.num_states != model.num_states || emb.num_actions != model.num_actions {
        return Err(Error::InvalidConfig(
            "embedding does not match the model".into(),
        ));
    }
    let channels = model.num_channels();
    let batch = cfg.batch_size();
    let mut rng = stream_rng(cfg.seed, 0);
    let mut policy = NeuralPolicy::new(init_net(cfg.m, emb.d, cfg.seed)?);
    let init = policy.net.clone();
    let mut iterations = Vec::with_capacity(cfg.t_max);
    let mut snapshots = Vec::with_capacity(cfg.t_max);
    // streams: 0 run-level, then per iteration one per channel plus one for the batch
    let stream = |t: usize, k: usize| 1 + (t * (channels + 1) + k) as u64;
    for t in 0..cfg.t_max {
        let table = policy.probabilities(emb);
        let exact_j = exact_returns(model, &table)?;
        let behaviour = table.mix_uniform(cfg.eval_epsilon);
        let critics: Vec<NeuralQ> = exec::map(&(0..channels).collect::<Vec<_>>(), |&i| {
            let mut r = stream_rng(cfg.seed, stream(t, i));
            neural_td_evaluate_with(model, &behaviour, emb, &init, i, &cfg.td, &mut r)
        })
        .into_iter()
        .collect::<Result<_>>()
        .map_err(|e| e.at_iteration(t))?;
        let values: Vec<&[f64]> = critics.iter().map(|q| q.values.as_slice()).collect();
        let mut batch_rng = stream_rng(cfg.seed, stream(t, channels));
        let jbar = estimate_constraints_sampled(model, &table, &values, batch, &mut batch_rng)?;
        let target = select_target(&jbar[1..], &model.limits, cfg.eta, cfg.tie_break, &mut rng);
        let (channel, direction) = match target {
            Target::Constraint(i) => (i, Direction::Descend),
            _ => (0, Direction::Ascend),
        };
        let in_n0 = target == Target::Objective;
        snapshots.push(in_n0.then(|| table.rows()));
        iterations.push(IterationRecord {
            t,
            target,
            jbar,
            in_n0,
            exact_j,
            lambda: None,
        });
        policy = neural_npg_step(&policy, &critics[channel].theta_bar, cfg.alpha, direction)?;
    }
    let record = finish(
        Algo::NeuralCrpo,
        cfg.seed,
        model,
        iterations,
        snapshots,
        &mut rng,
    );
    Ok(NeuralRun { record, policy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_twostate, td_garnet};
    use crate::eval::{exact_q, expected_return};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_size_formula() {
        assert_eq!(
            default_batch_size(200, 0.1),
            (200.0 * 4000f64.ln()).ceil() as usize
        );
    }

    #[test]
    fn constant_values_estimate_the_constant() {
        let m = td_garnet();
        let pol = PolicyTable::uniform(5, 2);
        let kappa = vec![2.5; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let j = estimate_constraints_sampled(&m, &pol, &[&kappa], 17, &mut rng).unwrap();
        assert_eq!(j, vec![2.5]);
    }

    #[test]
    fn large_batch_with_exact_values_matches_returns() {
        let m = td_garnet();
        let pol = PolicyTable::from_rows(&[
            vec![0.3, 0.7],
            vec![0.5, 0.5],
            vec![0.9, 0.1],
            vec![0.2, 0.8],
            vec![0.6, 0.4],
        ]);
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for ch in 0..2 {
            let q = exact_q(&m, &pol, ch).unwrap().q;
            let j = estimate_constraints_sampled(&m, &pol, &[&q], n, &mut rng).unwrap()[0];
            let exact = expected_return(&m, &pol, ch).unwrap();
            assert!((j - exact).abs() <= 3.0 * m.value_bound() / (n as f64).sqrt());
        }
    }

    #[test]
    fn output_signs_stay_frozen() {
        let mut m = make_twostate();
        m.costs[0] = vec![vec![vec![0.0; 2]; 2]; 2];
        let emb = FeatureEmbedding::gaussian(2, 2, 16, 0).unwrap();
        let cfg = NeuralCrpoConfig {
            t_max: 5,
            alpha: 0.2,
            eta: 0.5,
            m: 16,
            td: NeuralTdConfig {
                k_in: 200,
                sampling: crate::sampling::TdSampling::Visitation,
                ..Default::default()
            },
            batch_n: Some(100),
            delta: 0.1,
            tie_break: TieBreak::FirstIndex,
            seed: 3,
            eval_epsilon: 0.0,
        };
        let run = run_neural_crpo(&m, &emb, &cfg).unwrap();
        assert_eq!(run.policy.net.b, init_net(16, 16, 3).unwrap().b);
        assert_eq!(run.record.iterations.len(), 5);
        assert!(run.record.iterations.iter().all(|it| it.in_n0));
    }

    #[test]
    fn stationary_sampling_refuses_twostate() {
        let m = make_twostate();
        let emb = FeatureEmbedding::gaussian(2, 2, 16, 0).unwrap();
        let cfg = NeuralCrpoConfig {
            t_max: 2,
            alpha: 0.2,
            eta: 0.5,
            m: 8,
            td: NeuralTdConfig {
                k_in: 10,
                ..Default::default()
            },
            batch_n: Some(10),
            delta: 0.1,
            tie_break: TieBreak::FirstIndex,
            seed: 0,
            eval_epsilon: 0.0,
        };
        assert!(matches!(
            run_neural_crpo(&m, &emb, &cfg),
            Err(Error::NotErgodic { iteration: Some(0) })
        ));
    }
}
