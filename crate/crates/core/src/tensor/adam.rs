use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Gradients;
use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

struct Moments {
    m: Tensor,
    v: Tensor,
    step: u64,
}

/// Adam with bias correction. Parameters that received no gradient in a
/// step are left untouched and keep their step count.
pub struct Adam {
    cfg: AdamConfig,
    state: Vec<Option<Moments>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        Self {
            cfg,
            state: (0..store.len()).map(|_| None).collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Largest per-parameter step count taken so far.
    pub fn steps(&self) -> u64 {
        self.state.iter().flatten().map(|s| s.step).max().unwrap_or(0)
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.param(id) else { continue };
            let p = store.get_mut(id);
            let st = self.state[id.0].get_or_insert_with(|| Moments {
                m: Tensor::zeros(p.shape()),
                v: Tensor::zeros(p.shape()),
                step: 0,
            });
            st.step += 1;
            let bc1 = 1.0 - beta1.powi(st.step as i32);
            let bc2 = 1.0 - beta2.powi(st.step as i32);
            let m = st.m.data_mut();
            let v = st.v.data_mut();
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Mode, Tape};

    fn quadratic_grads(store: &ParamStore, scale: &[f64]) -> Gradients {
        let mut tape = Tape::new(store, Mode::Train);
        let mut terms = Vec::new();
        for (i, id) in store.ids().enumerate() {
            let p = tape.param(id);
            let s = tape.scale(p, scale[i]);
            terms.push(tape.sum_all(s));
        }
        let stacked = tape.concat(&terms, 0).unwrap();
        let loss = tape.sum_all(stacked);
        tape.backward(loss).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::vector(&[1.0, -2.0]));
        let grads = quadratic_grads(&store, &[0.0]);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, &grads);
        assert_eq!(store.get(crate::tensor::ParamId(0)).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(3.0));
        let grads = quadratic_grads(&store, &[0.5]);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, &grads);
        let delta = 3.0 - store.get(id).item();
        // lr · ĝ / (√v̂ + ε) with ĝ = 0.5, √v̂ = 0.5
        let expected = 1e-4 * 0.5 / (0.5 + 1e-8);
        assert!((delta - expected).abs() < 1e-15);
        assert!((delta - 1e-4).abs() < 1e-11);
    }

    #[test]
    fn groups_update_independently() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::scalar(1.0));
        a.add("u", Tensor::scalar(1.0));
        let mut b = a.clone();
        let mut adam_a = Adam::new(AdamConfig::default(), &a);
        let mut adam_b = Adam::new(AdamConfig::default(), &b);
        for _ in 0..5 {
            let ga = quadratic_grads(&a, &[0.3, 2.0]);
            adam_a.step(&mut a, &ga);
            let gb = quadratic_grads(&b, &[0.3, -7.0]);
            adam_b.step(&mut b, &gb);
        }
        // the first parameter saw identical gradients in both runs
        assert_eq!(a.get(crate::tensor::ParamId(0)), b.get(crate::tensor::ParamId(0)));
        assert_ne!(a.get(crate::tensor::ParamId(1)), b.get(crate::tensor::ParamId(1)));
    }
}
