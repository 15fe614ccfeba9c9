//! Two-layer ReLU network `f(x; W) = (1/√m) Σ_r b_r ReLU(W_r·ψ(x))` and the
//! fixed feature embedding of tabular state-action pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden layer `w` (row-major `m × d`) is trained; output signs `b` are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    pub m: usize,
    pub d: usize,
    pub b: Vec<f64>,
    pub w: Vec<f64>,
    /// Initial hidden layer, the anchor for projection.
    pub w0: Vec<f64>,
}

/// Rows `W_r` are unit-norm Gaussian directions; `b_r ∼ U[−1, 1]`.
pub fn init_net(m: usize, d: usize, seed: u64) -> Result<TwoLayerNet> {
    if m == 0 || d < 2 {
        return Err(Error::InvalidConfig(format!(
            "network needs m >= 1 and d >= 2, got m={m}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(m * d);
    for _ in 0..m {
        w.extend(unit_gaussian(d, &mut rng));
    }
    let b = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(TwoLayerNet {
        m,
        d,
        b,
        w0: w.clone(),
        w,
    })
}

fn unit_gaussian(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = norm(&v);
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl TwoLayerNet {
    fn row(&self, r: usize) -> &[f64] {
        &self.w[r * self.d..(r + 1) * self.d]
    }

    fn preactivation(&self, r: usize, psi: &[f64]) -> f64 {
        self.row(r).iter().zip(psi).map(|(w, x)| w * x).sum()
    }

    pub fn forward(&self, psi: &[f64]) -> f64 {
        let sum: f64 = (0..self.m)
            .map(|r| self.b[r] * self.preactivation(r, psi).max(0.0))
            .sum();
        sum / (self.m as f64).sqrt()
    }

    /// `∂f/∂W_r = (b_r/√m) 1{W_r·ψ > 0} ψ`, stacked like `w`.
    pub fn grad(&self, psi: &[f64]) -> Vec<f64> {
        let mut active = vec![false; self.m];
        self.forward_active(psi, &mut active);
        let mut g = self.with_weights(vec![0.0; self.w.len()]);
        g.step_along_grad(psi, &active, 1.0);
        g.w
    }

    /// `f(ψ)` and, in `active`, which rows fire at `ψ`.
    pub(crate) fn forward_active(&self, psi: &[f64], active: &mut [bool]) -> f64 {
        let mut sum = 0.0;
        for r in 0..self.m {
            let z = self.preactivation(r, psi);
            active[r] = z > 0.0;
            if active[r] {
                sum += self.b[r] * z;
            }
        }
        sum / (self.m as f64).sqrt()
    }

    /// `w += scale · ∇_W f(ψ)` given the rows that fire at `ψ`.
    pub(crate) fn step_along_grad(&mut self, psi: &[f64], active: &[bool], scale: f64) {
        let c = scale / (self.m as f64).sqrt();
        for r in (0..self.m).filter(|&r| active[r]) {
            let k = c * self.b[r];
            for (w, x) in self.w[r * self.d..(r + 1) * self.d].iter_mut().zip(psi) {
                *w += k * x;
            }
        }
    }

    /// The same network with hidden layer `w`.
    pub fn with_weights(&self, w: Vec<f64>) -> Self {
        assert_eq!(w.len(), self.w.len());
        Self { w, ..self.clone() }
    }

    /// Hidden layer multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        self.with_weights(self.w.iter().map(|x| scale * x).collect())
    }
}

/// Fixed feature vectors `ψ(s,a)` with `‖ψ‖ ≤ 1`, row-major over `(s,a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEmbedding {
    pub num_states: usize,
    pub num_actions: usize,
    pub d: usize,
    pub psi: Vec<Vec<f64>>,
}

impl FeatureEmbedding {
    /// Independent unit-norm Gaussian directions per pair.
    pub fn gaussian(num_states: usize, num_actions: usize, d: usize, seed: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidConfig(format!("feature dimension {d} < 2")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = (0..num_states * num_actions)
            .map(|_| unit_gaussian(d, &mut rng))
            .collect();
        Ok(Self {
            num_states,
            num_actions,
            d,
            psi,
        })
    }

    pub fn get(&self, s: usize, a: usize) -> &[f64] {
        &self.psi[s * self.num_actions + a]
    }

    /// `f(ψ(s,a))` for every pair.
    pub fn evaluate(&self, net: &TwoLayerNet) -> Vec<f64> {
        self.psi.iter().map(|x| net.forward(x)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi.len() != self.num_states * self.num_actions {
            return Err(Error::InvalidConfig(
                "embedding has the wrong number of pairs".into(),
            ));
        }
        for (i, x) in self.psi.iter().enumerate() {
            if x.len() != self.d || !(norm(x) <= 1.0 + 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "feature {i} has wrong length or norm > 1"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        unit_gaussian(d, rng)
    }

    #[test]
    fn rows_are_unit_and_init_is_seeded() {
        let net = init_net(64, 8, 3).unwrap();
        for r in 0..64 {
            assert!((norm(net.row(r)) - 1.0).abs() < 1e-12);
        }
        assert!(net.b.iter().all(|b| (-1.0..=1.0).contains(b)));
        assert_eq!(net, init_net(64, 8, 3).unwrap());
        assert_eq!(net.w, net.w0);
    }

    #[test]
    fn output_is_bounded_by_sqrt_width() {
        let net = init_net(64, 8, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let x = random_unit(8, &mut rng);
            assert!(net.forward(&x).abs() <= 8.0);
        }
    }

    #[test]
    fn zero_input_has_zero_value_and_gradient() {
        let net = init_net(16, 4, 1).unwrap();
        let zero = vec![0.0; 4];
        assert_eq!(net.forward(&zero), 0.0);
        assert!(net.grad(&zero).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn positive_homogeneity() {
        let net = init_net(32, 6, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = random_unit(6, &mut rng);
            assert!((net.scaled(2.0).forward(&x) - 2.0 * net.forward(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-6;
        let mut checked = 0;
        while checked < 100 {
            let mut net = init_net(16, 5, rng.random()).unwrap();
            for w in &mut net.w {
                *w += 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
            let x = random_unit(5, &mut rng);
            if (0..net.m).any(|r| net.preactivation(r, &x).abs() < 1e-4) {
                continue;
            }
            let v = random_unit(net.w.len(), &mut rng);
            let shifted = |sign: f64| {
                net.with_weights(
                    net.w
                        .iter()
                        .zip(&v)
                        .map(|(w, d)| w + sign * eps * d)
                        .collect(),
                )
                .forward(&x)
            };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * eps);
            let analytic: f64 = net.grad(&x).iter().zip(&v).map(|(g, d)| g * d).sum();
            assert!((fd - analytic).abs() < 1e-5, "{fd} vs {analytic}");
            checked += 1;
        }
    }

    #[test]
    fn embedding_norms() {
        let e = FeatureEmbedding::gaussian(3, 2, 16, 0).unwrap();
        e.validate().unwrap();
        assert_eq!(e.psi.len(), 6);
        assert!(e.psi.iter().all(|x| norm(x) <= 1.0 + 1e-12));
    }

    #[test]
    fn json_field_names() {
        let net = init_net(2, 2, 0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&net).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["b", "d", "m", "w", "w0"]);
        assert_eq!(serde_json::from_value::<TwoLayerNet>(v).unwrap(), net);
    }
}
