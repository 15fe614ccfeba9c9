//! Exact policy evaluation by dense linear solves.
//!
//! All tables indexed by state-action pairs are row-major over `(s, a)`.

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::linalg::{self, Lu};
use crate::policy::PolicyTable;

const RESIDUAL_TOL: f64 = 1e-10;

/// Exact values of one channel under one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub channel: usize,
    /// `V(s)`.
    pub v: Vec<f64>,
    /// `Q(s,a)`.
    pub q: Vec<f64>,
    /// `A(s,a) = Q(s,a) − V(s)`.
    pub advantage: Vec<f64>,
    /// `J = Σ_s ξ(s) V(s)`.
    pub j: f64,
}

/// State kernel `P_π(s'|s) = Σ_a π(a|s) P(s'|s,a)`, row-major `n × n`.
pub fn policy_kernel(model: &TabularCmdp, policy: &PolicyTable) -> Vec<f64> {
    let n = model.num_states;
    let mut kernel = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..model.num_actions {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (s2, p) in model.transition[s][a].iter().enumerate() {
                kernel[s * n + s2] += pa * p;
            }
        }
    }
    kernel
}

/// A factored `(I − γ P_π)` that evaluates any channel of the model under a fixed policy.
#[derive(Debug, Clone)]
pub struct PolicyEvaluator<'a> {
    model: &'a TabularCmdp,
    policy: &'a PolicyTable,
    system: Vec<f64>,
    lu: Lu,
}

impl<'a> PolicyEvaluator<'a> {
    pub fn new(model: &'a TabularCmdp, policy: &'a PolicyTable) -> Result<Self> {
        let n = model.num_states;
        let mut system = policy_kernel(model, policy);
        for (i, x) in system.iter_mut().enumerate() {
            *x *= -model.discount;
            if i / n == i % n {
                *x += 1.0;
            }
        }
        let lu = Lu::factor(system.clone(), n)?;
        Ok(Self {
            model,
            policy,
            system,
            lu,
        })
    }

    pub fn evaluate(&self, channel: usize) -> Result<PolicyEvaluation> {
        let model = self.model;
        let (n, na) = (model.num_states, model.num_actions);
        let mean = model.mean_costs(channel);
        let rhs: Vec<f64> = (0..n)
            .map(|s| {
                (0..na)
                    .map(|a| self.policy.prob(s, a) * mean[s * na + a])
                    .sum()
            })
            .collect();
        let v = self.lu.solve(&rhs);
        let residual = linalg::residual(&self.system, n, &v, &rhs);
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::SingularSystem { pivot: residual });
        }
        let mut q = Vec::with_capacity(n * na);
        for s in 0..n {
            for a in 0..na {
                let next: f64 = model.transition[s][a]
                    .iter()
                    .zip(&v)
                    .map(|(p, v)| p * v)
                    .sum();
                q.push(mean[s * na + a] + model.discount * next);
            }
        }
        let advantage = q.iter().enumerate().map(|(i, q)| q - v[i / na]).collect();
        let j = model.initial_dist.iter().zip(&v).map(|(x, v)| x * v).sum();
        Ok(PolicyEvaluation {
            channel,
            v,
            q,
            advantage,
            j,
        })
    }

    /// Evaluates channels `0..=p`.
    pub fn evaluate_all(&self) -> Result<Vec<PolicyEvaluation>> {
        (0..self.model.num_channels())
            .map(|i| self.evaluate(i))
            .collect()
    }

    /// Normalized discounted visitation from start distribution `rho`.
    pub fn visitation_from(&self, rho: &[f64]) -> Vec<f64> {
        let gamma = self.model.discount;
        let rhs: Vec<f64> = rho.iter().map(|x| (1.0 - gamma) * x).collect();
        let state = self.lu.solve_transpose(&rhs);
        let na = self.model.num_actions;
        (0..state.len() * na)
            .map(|i| state[i / na] * self.policy.prob(i / na, i % na))
            .collect()
    }
}

pub fn exact_q(
    model: &TabularCmdp,
    policy: &PolicyTable,
    channel: usize,
) -> Result<PolicyEvaluation> {
    PolicyEvaluator::new(model, policy)?.evaluate(channel)
}

/// Exact returns `J_i(π)` of every channel `0..=p`.
pub fn exact_returns(model: &TabularCmdp, policy: &PolicyTable) -> Result<Vec<f64>> {
    Ok(PolicyEvaluator::new(model, policy)?
        .evaluate_all()?
        .into_iter()
        .map(|e| e.j)
        .collect())
}

pub fn expected_return(model: &TabularCmdp, policy: &PolicyTable, channel: usize) -> Result<f64> {
    Ok(exact_q(model, policy, channel)?.j)
}

/// `ν_π(s,a) = (1−γ) Σ_t γ^t Pr(s_t = s, a_t = a)` started from `ξ`.
pub fn visitation_measure(model: &TabularCmdp, policy: &PolicyTable) -> Result<Vec<f64>> {
    Ok(PolicyEvaluator::new(model, policy)?.visitation_from(&model.initial_dist))
}

/// Whether `P_π^{4n}` is entrywise positive, judged on the support pattern.
pub fn is_ergodic(kernel: &[f64], n: usize) -> bool {
    let bool_mul = |x: &[bool], y: &[bool]| {
        let mut out = vec![false; n * n];
        for r in 0..n {
            for m in 0..n {
                if x[r * n + m] {
                    for c in 0..n {
                        out[r * n + c] |= y[m * n + c];
                    }
                }
            }
        }
        out
    };
    let mut base: Vec<bool> = kernel.iter().map(|&p| p > 0.0).collect();
    let mut power: Vec<bool> = (0..n * n).map(|i| i / n == i % n).collect();
    let mut exponent = 4 * n;
    while exponent > 0 {
        if exponent & 1 == 1 {
            power = bool_mul(&power, &base);
        }
        exponent >>= 1;
        if exponent > 0 {
            base = bool_mul(&base, &base);
        }
    }
    power.iter().all(|&x| x)
}

/// Stationary state distribution of an ergodic kernel.
pub fn stationary_states(kernel: &[f64], n: usize) -> Result<Vec<f64>> {
    if !is_ergodic(kernel, n) {
        return Err(Error::NotErgodic { iteration: None });
    }
    // μ (I − P) = 0 with the last balance equation replaced by Σ μ = 1.
    let mut system = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let identity = if r == c { 1.0 } else { 0.0 };
            system[r * n + c] = identity - kernel[c * n + r];
        }
    }
    for c in 0..n {
        system[(n - 1) * n + c] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let mu = Lu::factor(system, n)?.solve(&rhs);
    Ok(mu.into_iter().map(|x| x.max(0.0)).collect())
}

/// `μ_π(s) π(a|s)` for the ergodic limit of the policy-induced chain.
pub fn stationary_distribution(model: &TabularCmdp, policy: &PolicyTable) -> Result<Vec<f64>> {
    let n = model.num_states;
    let mu = stationary_states(&policy_kernel(model, policy), n)?;
    let na = model.num_actions;
    Ok((0..n * na)
        .map(|i| mu[i / na] * policy.prob(i / na, i % na))
        .collect())
}

/// Both sides of the performance difference identity
/// `J^ρ(π) − J^ρ(π') = (1/(1−γ)) E_{s∼ν_ρ(π)} E_{a∼π}[A_{π'}(s,a)]`.
pub fn performance_difference(
    model: &TabularCmdp,
    pi: &PolicyTable,
    pi_prime: &PolicyTable,
    channel: usize,
    rho: &[f64],
) -> Result<(f64, f64)> {
    let eval_pi = PolicyEvaluator::new(model, pi)?;
    let eval_prime = PolicyEvaluator::new(model, pi_prime)?;
    let v_pi = eval_pi.evaluate(channel)?.v;
    let prime = eval_prime.evaluate(channel)?;
    let j_rho = |v: &[f64]| rho.iter().zip(v).map(|(r, v)| r * v).sum::<f64>();
    let lhs = j_rho(&v_pi) - j_rho(&prime.v);
    // visitation_from already weights by π(a|s)
    let nu = eval_pi.visitation_from(rho);
    let rhs = nu
        .iter()
        .zip(&prime.advantage)
        .map(|(n, a)| n * a)
        .sum::<f64>()
        / (1.0 - model.discount);
    Ok((lhs, rhs))
}

/// Optimal values of one channel by value iteration, with a greedy deterministic policy.
#[derive(Debug, Clone)]
pub struct OptimalValues {
    pub v: Vec<f64>,
    pub actions: Vec<usize>,
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Value iteration to a sup-norm change below `1e-13 · c_max / (1−γ)`.
pub fn value_iteration(model: &TabularCmdp, channel: usize, sense: Sense) -> OptimalValues {
    let (n, na) = (model.num_states, model.num_actions);
    let mean = model.mean_costs(channel);
    let tol = 1e-13 * model.value_bound();
    let better = |x: f64, y: f64| match sense {
        Sense::Maximize => x > y,
        Sense::Minimize => x < y,
    };
    let mut v = vec![0.0; n];
    let mut actions = vec![0; n];
    loop {
        let mut next = vec![0.0; n];
        let mut delta: f64 = 0.0;
        for s in 0..n {
            let mut best = f64::NAN;
            for a in 0..na {
                let cont: f64 = model.transition[s][a]
                    .iter()
                    .zip(&v)
                    .map(|(p, v)| p * v)
                    .sum();
                let q = mean[s * na + a] + model.discount * cont;
                if best.is_nan() || better(q, best + 1e-15) {
                    best = q;
                    actions[s] = a;
                }
            }
            delta = delta.max((best - v[s]).abs());
            next[s] = best;
        }
        v = next;
        if delta < tol {
            break;
        }
    }
    let j = model.initial_dist.iter().zip(&v).map(|(x, v)| x * v).sum();
    OptimalValues { v, actions, j }
}
