use serde::{Deserialize, Serialize};

/// A stochastic policy `π(a|s)` stored row-major over `(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    /// Rows must already be probability vectors.
    pub fn from_probs(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Self {
        assert_eq!(probs.len(), num_states * num_actions);
        Self {
            num_states,
            num_actions,
            probs,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let num_actions = rows.first().map_or(0, Vec::len);
        let probs = rows.iter().flatten().copied().collect();
        Self::from_probs(rows.len(), num_actions, probs)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self::from_probs(num_states, num_actions, vec![p; num_states * num_actions])
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Self::from_probs(actions.len(), num_actions, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.probs
            .chunks(self.num_actions)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// `(1 − eps) π + eps · uniform`.
    pub fn mix_uniform(&self, eps: f64) -> Self {
        if eps == 0.0 {
            return self.clone();
        }
        let u = eps / self.num_actions as f64;
        let probs = self.probs.iter().map(|p| (1.0 - eps) * p + u).collect();
        Self::from_probs(self.num_states, self.num_actions, probs)
    }
}

/// Tabular softmax policy `π_w(a|s) ∝ exp(w(s,a))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    num_states: usize,
    num_actions: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    /// All-zero logits, i.e. the uniform policy.
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::from_logits(num_states, num_actions, vec![0.0; num_states * num_actions])
    }

    pub fn from_logits(num_states: usize, num_actions: usize, logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), num_states * num_actions);
        Self {
            num_states,
            num_actions,
            logits,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn probabilities(&self) -> PolicyTable {
        PolicyTable::from_probs(
            self.num_states,
            self.num_actions,
            softmax_rows(&self.logits, self.num_actions),
        )
    }
}

/// Row-wise softmax of a row-major table, stabilized by the row maximum.
pub fn softmax_rows(logits: &[f64], num_actions: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(num_actions) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &w in row {
            let e = (w - max).exp();
            total += e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p /= total;
        }
    }
    out
}
