//! Adam with bias-corrected moments.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::Scalar;
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        Self {
            m: store.zero_gradients(),
            v: store.zero_gradients(),
            step: 0,
        }
    }
}

/// One update of every trainable block.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    ensure!(grads.len() == store.len(), Contract, "gradient list does not match the store");
    ensure!(state.m.len() == store.len(), Contract, "optimizer state does not match the store");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let (lr_t, c1_t, c2_t, eps) = (T::of(lr), T::of(c1), T::of(c2), T::of(cfg.eps));
    for b in 0..store.len() {
        if !store.block(b).trainable {
            continue;
        }
        let block = store.block_mut(b);
        ensure!(grads[b].len() == block.len(), Contract, "gradient for {} has the wrong length", block.name);
        for (k, p) in block.data.iter_mut().enumerate() {
            let g = grads[b][k];
            let m = b1 * state.m[b][k] + one_b1 * g;
            let v = b2 * state.v[b][k] + one_b2 * g * g;
            state.m[b][k] = m;
            state.v[b][k] = v;
            let m_hat = m / c1_t;
            let v_hat = v / c2_t;
            *p = *p - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("p".into(), vec![values.len()], true, values.to_vec());
        s.push("stat".into(), vec![1], false, vec![7.0]);
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(&[1.0, -2.0]);
        let mut st = AdamState::new(&s);
        let g = vec![vec![0.0, 0.0], vec![0.0]];
        adam_step(&mut s, &g, &mut st, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(s.block(0).data, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_by_hand() {
        let mut s = store(&[1.0, -2.0]);
        let mut st = AdamState::new(&s);
        let g = vec![vec![0.5, -4.0], vec![3.0]];
        let cfg = AdamConfig::default();
        adam_step(&mut s, &g, &mut st, 1e-3, &cfg).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let expect = |p: f64, g: f64| p - 1e-3 * g / (g.abs() + 1e-8);
        assert!((s.block(0).data[0] - expect(1.0, 0.5)).abs() < 1e-15);
        assert!((s.block(0).data[1] - expect(-2.0, -4.0)).abs() < 1e-15);
        assert_eq!(s.block(1).data, vec![7.0]);
        assert!(adam_step(&mut s, &vec![vec![0.0; 2]], &mut st, 1e-3, &cfg).is_err());
    }

    #[test]
    fn two_steps_match_reference_loop() {
        let mut s = store(&[0.3]);
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig::default();
        let gs = [0.2, -0.7];
        for g in gs {
            adam_step(&mut s, &vec![vec![g], vec![0.0]], &mut st, 0.01, &cfg).unwrap();
        }
        let (mut p, mut m, mut v) = (0.3f64, 0.0f64, 0.0f64);
        for (t, g) in gs.iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            p -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((s.block(0).data[0] - p).abs() < 1e-15);
        assert!((st.m[0][0] - m).abs() < 1e-15);
        assert!((st.v[0][0] - v).abs() < 1e-15);
        assert_eq!(st.step, 2);
    }
}
