//! Constraint-rectified policy optimization with tabular softmax policies.
//!
//! Each iteration evaluates every channel, estimates the constraint returns,
//! and takes one natural-gradient step: ascent on the reward when every
//! estimated constraint is within `d_i + η`, otherwise descent on one violated
//! constraint. Iterations that pass the gate form `N_0`; the output policy is
//! drawn uniformly from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::TabularCmdp;
use crate::error::{Error, Result};
use crate::eval::PolicyEvaluator;
use crate::exec;
use crate::policy::{PolicyTable, SoftmaxPolicy};
use crate::record::{Algo, IterationRecord, RunOutcome, RunRecord, Target};
use crate::td::{td_evaluate_with, QEstimate, TdConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Td,
    /// Exact `Q` from linear solves; removes evaluation error.
    Exact,
}

/// Which violated constraint to rectify when several are over their limit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    FirstIndex,
    MaxViolation,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrpoConfig {
    pub t_max: usize,
    pub alpha: f64,
    pub eta: f64,
    #[serde(default)]
    pub td: TdConfig,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_mode: EvalMode,
    /// Uniform mixing applied to the policy before TD evaluation (0 = off).
    #[serde(default)]
    pub eval_epsilon: f64,
}

impl CrpoConfig {
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
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return Err(Error::InvalidConfig("eval_epsilon must be in [0,1]".into()));
        }
        if self.eval_mode == EvalMode::Td {
            self.td.validate()?;
        }
        Ok(())
    }
}

/// `J̄_i = Σ_{s,a} ξ(s) π(a|s) Q̄^i(s,a)` for every supplied estimate.
pub fn estimate_constraints(
    model: &TabularCmdp,
    policy: &PolicyTable,
    qbars: &[QEstimate],
) -> Vec<f64> {
    let na = model.num_actions;
    qbars
        .iter()
        .map(|q| {
            q.values
                .iter()
                .enumerate()
                .map(|(i, v)| model.initial_dist[i / na] * policy.prob(i / na, i % na) * v)
                .sum()
        })
        .collect()
}

/// Gate and rectification choice. `jbar_costs[k]` is the estimate for channel `k + 1`.
pub fn select_target<R: Rng + ?Sized>(
    jbar_costs: &[f64],
    limits: &[f64],
    eta: f64,
    tie_break: TieBreak,
    rng: &mut R,
) -> Target {
    let violations: Vec<(usize, f64)> = jbar_costs
        .iter()
        .zip(limits)
        .enumerate()
        .filter(|(_, (j, d))| !(**j <= **d + eta))
        .map(|(k, (j, d))| (k + 1, j - d))
        .collect();
    if violations.is_empty() {
        return Target::Objective;
    }
    let chosen = match tie_break {
        TieBreak::FirstIndex => violations[0].0,
        TieBreak::MaxViolation => {
            violations
                .iter()
                .fold(
                    violations[0],
                    |best, &v| if v.1 > best.1 { v } else { best },
                )
                .0
        }
        TieBreak::Random => violations[rng.random_range(0..violations.len())].0,
    };
    Target::Constraint(chosen)
}

/// `w' = w ± α Q̄ / (1−γ)`.
pub fn npg_step(
    policy: &SoftmaxPolicy,
    qbar: &QEstimate,
    alpha: f64,
    direction: Direction,
    gamma: f64,
) -> SoftmaxPolicy {
    let mut next = policy.clone();
    add_scaled(
        next.logits_mut(),
        &qbar.values,
        signed_step(alpha, direction, gamma),
    );
    next
}

/// The same step in probability space: `π'(a|s) ∝ π(a|s) exp(± α Q̄(s,a) / (1−γ))`.
pub fn npg_step_multiplicative(
    policy: &PolicyTable,
    qbar: &QEstimate,
    alpha: f64,
    direction: Direction,
    gamma: f64,
) -> PolicyTable {
    let step = signed_step(alpha, direction, gamma);
    let na = policy.num_actions();
    let mut probs = Vec::with_capacity(qbar.values.len());
    for s in 0..policy.num_states() {
        let q = &qbar.values[s * na..(s + 1) * na];
        let max = q.iter().map(|x| step * x).fold(f64::NEG_INFINITY, f64::max);
        let row: Vec<f64> = policy
            .row(s)
            .iter()
            .zip(q)
            .map(|(p, x)| p * (step * x - max).exp())
            .collect();
        let z: f64 = row.iter().sum();
        probs.extend(row.into_iter().map(|x| x / z));
    }
    PolicyTable::from_probs(policy.num_states(), na, probs)
}

fn signed_step(alpha: f64, direction: Direction, gamma: f64) -> f64 {
    let step = alpha / (1.0 - gamma);
    match direction {
        Direction::Ascend => step,
        Direction::Descend => -step,
    }
}

pub(crate) fn add_scaled(target: &mut [f64], values: &[f64], scale: f64) {
    for (w, q) in target.iter_mut().zip(values) {
        *w += scale * q;
    }
}

/// Parameters prescribed by the tabular convergence theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha: f64,
    pub eta: f64,
    /// Saturates at `usize::MAX`.
    pub k_in: usize,
}

/// Stepsize decay exponent assumed by [`theorem_schedule`].
pub const SCHEDULE_SIGMA: f64 = 0.6;

/// `α = (1−γ)^{1.5} / √(|S||A|T)`,
/// `η = 2√(|S||A|) / ((1−γ)^{1.5} √T) · (3 + log|A| + 3 c_max + c_max²)`,
/// `K_in = T^{1/σ} (1−γ)^{−2/σ} log^{2/σ}(T^{1+2/σ}/δ)` with unit constant.
///
/// `log|A|` bounds the KL divergence from the optimal policy to the uniform
/// initial policy.
pub fn theorem_schedule(model: &TabularCmdp, t: usize, delta: f64) -> Schedule {
    let sa = model.num_pairs() as f64;
    let t = t as f64;
    let horizon = (1.0 - model.discount).powf(1.5);
    let alpha = horizon / (sa * t).sqrt();
    let kl_bound = (model.num_actions as f64).ln();
    let c = model.c_max;
    let eta = 2.0 * sa.sqrt() / (horizon * t.sqrt()) * (3.0 + kl_bound + 3.0 * c + c * c);
    let sigma = SCHEDULE_SIGMA;
    let log_term = ((1.0 + 2.0 / sigma) * t.ln() - delta.ln()).powf(2.0 / sigma);
    let k_in = t.powf(1.0 / sigma) * (1.0 - model.discount).powf(-2.0 / sigma) * log_term;
    let k_in = if k_in.is_finite() && k_in < usize::MAX as f64 {
        k_in.ceil() as usize
    } else {
        usize::MAX
    };
    Schedule { alpha, eta, k_in }
}

/// RNG for one purpose within a seeded run. Stream 0 drives run-level
/// choices; TD for iteration `t` and channel `i` uses stream `1 + t·(p+1) + i`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn td_stream(t: usize, channels: usize, channel: usize) -> u64 {
    1 + (t * channels + channel) as u64
}

/// Evaluation settings shared by the tabular optimizers.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation<'a> {
    pub mode: EvalMode,
    pub td: &'a TdConfig,
    pub epsilon: f64,
    pub seed: u64,
}

/// One iteration's `Q̄` for every channel plus the exact returns for the audit.
pub(crate) fn evaluate_iteration(
    model: &TabularCmdp,
    table: &PolicyTable,
    t: usize,
    ev: &Evaluation<'_>,
) -> Result<(Vec<QEstimate>, Vec<f64>)> {
    let exact = PolicyEvaluator::new(model, table)?.evaluate_all()?;
    let exact_j = exact.iter().map(|e| e.j).collect();
    let qbars = match ev.mode {
        EvalMode::Exact => exact.iter().map(QEstimate::exact).collect(),
        EvalMode::Td => {
            let channels = model.num_channels();
            let behaviour = table.mix_uniform(ev.epsilon);
            exec::map(&(0..channels).collect::<Vec<_>>(), |&i| {
                let mut rng = stream_rng(ev.seed, td_stream(t, channels, i));
                td_evaluate_with(model, &behaviour, i, ev.td, &mut rng)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_iteration(t))?
        }
    };
    Ok((qbars, exact_j))
}

/// Closes a run: averages over `N_0` and draws the output iterate.
pub(crate) fn finish(
    algo: Algo,
    seed: u64,
    model: &TabularCmdp,
    iterations: Vec<IterationRecord>,
    snapshots: Vec<Option<Vec<Vec<f64>>>>,
    rng: &mut ChaCha8Rng,
) -> RunRecord {
    let n0: Vec<usize> = iterations
        .iter()
        .filter(|it| it.in_n0)
        .map(|it| it.t)
        .collect();
    let (selected, selected_policy, n0_average_j) = if n0.is_empty() {
        (None, None, None)
    } else {
        let pick = n0[rng.random_range(0..n0.len())];
        let channels = model.num_channels();
        let avg = (0..channels)
            .map(|i| n0.iter().map(|&t| iterations[t].exact_j[i]).sum::<f64>() / n0.len() as f64)
            .collect();
        (Some(pick), snapshots[pick].clone(), Some(avg))
    };
    RunRecord {
        algo,
        seed,
        limits: model.limits.clone(),
        iterations,
        outcome: RunOutcome {
            empty_n0: n0.is_empty(),
            n0,
            selected,
            selected_policy,
            n0_average_j,
        },
    }
}

/// Runs CRPO from the uniform policy (all-zero logits).
pub fn run_crpo(model: &TabularCmdp, cfg: &CrpoConfig) -> Result<RunRecord> {
    run_gated(model, cfg, cfg.eta, Algo::Crpo)
}

/// Unconstrained NPG ascent on the reward, recorded in the same trace format.
/// Identical to CRPO with an infinite tolerance.
pub fn run_npg(model: &TabularCmdp, cfg: &CrpoConfig) -> Result<RunRecord> {
    run_gated(model, cfg, f64::INFINITY, Algo::Npg)
}

fn run_gated(model: &TabularCmdp, cfg: &CrpoConfig, eta: f64, algo: Algo) -> Result<RunRecord> {
    cfg.validate()?;
    model.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let ev = Evaluation {
        mode: cfg.eval_mode,
        td: &cfg.td,
        epsilon: cfg.eval_epsilon,
        seed: cfg.seed,
    };
    let mut policy = SoftmaxPolicy::zeros(model.num_states, model.num_actions);
    let mut iterations = Vec::with_capacity(cfg.t_max);
    let mut snapshots = Vec::with_capacity(cfg.t_max);
    for t in 0..cfg.t_max {
        let table = policy.probabilities();
        let (qbars, exact_j) = evaluate_iteration(model, &table, t, &ev)?;
        let jbar = estimate_constraints(model, &table, &qbars);
        let target = select_target(&jbar[1..], &model.limits, eta, cfg.tie_break, &mut rng);
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
        policy = npg_step(
            &policy,
            &qbars[channel],
            cfg.alpha,
            direction,
            model.discount,
        );
    }
    Ok(finish(
        algo, cfg.seed, model, iterations, snapshots, &mut rng,
    ))
}
