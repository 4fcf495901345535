//! Adam with bias correction.

use std::collections::HashMap;

use crate::params::{ParamId, ParamKind, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    moments: HashMap<ParamId, (Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Updates every trainable parameter that has a gradient, with the
    /// learning rate multiplied by `rate(name)`. A zero rate skips the
    /// parameter entirely, moments included.
    pub fn step(
        &mut self,
        store: &mut ParamStore<f32>,
        grads: &HashMap<ParamId, Tensor<f32>>,
        rate: impl Fn(&str) -> f64,
    ) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut ids: Vec<&ParamId> = grads.keys().collect();
        ids.sort();
        for &id in ids {
            let entry = store.entry(id);
            let scale = rate(&entry.name);
            if entry.kind != ParamKind::Trainable || scale == 0.0 {
                continue;
            }
            let lr = self.learning_rate * scale;
            let g = grads[&id].data();
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let p = store.get_mut(id).data_mut();
            for i in 0..g.len() {
                let gi = g[i] as f64;
                let mi = self.beta1 * m[i] as f64 + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v[i] as f64 + (1.0 - self.beta2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
                p[i] = (p[i] as f64 - update) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use rand::SeedableRng;

    fn store() -> (ParamStore<f32>, ParamId) {
        let mut s = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let id = s.register(
            "w",
            &[3],
            ParamKind::Trainable,
            Init::Values(&[1.0, -2.0, 0.5]),
            &mut rng,
        );
        (s, id)
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        // With m̂ = g and v̂ = g², the first step is lr · g / (|g| + ε).
        let (mut s, id) = store();
        let mut opt = Adam::new(0.1, 0.9, 0.999, 1e-8);
        let grads = HashMap::from([(id, Tensor::from_vec(&[3], vec![4.0, -0.001, 0.0]))]);
        opt.step(&mut s, &grads, |_| 1.0);
        let p = s.get(id).data();
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] - (-2.0 + 0.1 * 0.001 / (0.001 + 1e-8))).abs() < 1e-6);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn two_steps_match_hand_computation() {
        let (mut s, id) = store();
        let mut opt = Adam::new(0.01, 0.9, 0.999, 1e-8);
        let g1 = 1.0f64;
        let g2 = 3.0f64;
        for g in [g1, g2] {
            let grads = HashMap::from([(id, Tensor::from_vec(&[3], vec![g as f32, 0.0, 0.0]))]);
            opt.step(&mut s, &grads, |_| 1.0);
        }
        let m = 0.9 * (0.1 * g1) + 0.1 * g2;
        let v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let want = 1.0 - 0.01 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((s.get(id).data()[0] as f64 - want).abs() < 1e-6);
    }

    #[test]
    fn zero_rates_leave_parameters() {
        let (mut s, id) = store();
        let before = s.get(id).clone();
        let grads = HashMap::from([(id, Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]))]);
        Adam::new(0.1, 0.9, 0.999, 1e-8).step(&mut s, &grads, |n| if n == "w" { 0.0 } else { 1.0 });
        Adam::new(0.0, 0.9, 0.999, 1e-8).step(&mut s, &grads, |_| 1.0);
        assert_eq!(s.get(id), &before);
    }

    #[test]
    fn rate_scales_the_step() {
        let (mut s, id) = store();
        let grads = HashMap::from([(id, Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]))]);
        Adam::new(0.1, 0.9, 0.999, 1e-8).step(&mut s, &grads, |_| 0.5);
        assert!((s.get(id).data()[0] - 0.95).abs() < 1e-6);
    }
}
