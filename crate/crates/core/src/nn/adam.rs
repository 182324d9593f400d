use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParameterStore, RealArray};
use crate::scalar::Scalar;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First/second moment estimates mirroring a [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<RealArray<T>>,
    pub v: Vec<RealArray<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParameterStore<T>, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, e)| RealArray::zeros(e.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Applies one bias-corrected Adam update from the stored gradients, then
    /// zeroes them. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParameterStore<T>) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Usage(format!(
                "optimizer tracks {} entries but store has {}",
                self.m.len(),
                store.len()
            )));
        }
        if let Some(name) = store.first_non_finite_grad() {
            return Err(Error::NonFinite {
                entry: name.to_string(),
                context: "adam step (gradient)".into(),
            });
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_m_b1, one_m_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powf(self.t as f64));
        let bc2 = T::of(1.0 - c.beta2.powf(self.t as f64));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));

        for ((_, entry), (m, v)) in store.iter_mut().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let values = entry.value.data_mut();
            let grads = entry.grad.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                let mi = b1 * m.data()[i] + one_m_b1 * g;
                let vi = b2 * v.data()[i] + one_m_b2 * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                values[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                grads[i] = T::zero();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("x", RealArray::vector(vec![x])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_values_and_counts_step() {
        let mut s = scalar_store(1.5);
        let mut adam = AdamState::new(&s, AdamConfig::default());
        adam.step(&mut s).unwrap();
        assert_eq!(s.at(0).value.data(), &[1.5]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        for g in [2.5, -0.01] {
            let mut s = scalar_store(0.0);
            s.at_mut(0).grad.data_mut()[0] = g;
            let mut adam = AdamState::new(&s, AdamConfig::with_lr(0.1));
            adam.step(&mut s).unwrap();
            let moved = s.at(0).value.data()[0];
            assert!((moved + 0.1 * f64::signum(g)).abs() < 1e-6, "{moved}");
            assert_eq!(s.at(0).grad.data()[0], 0.0);
        }
    }

    #[test]
    fn two_step_trace_matches_recursion() {
        let mut s = scalar_store(0.0);
        let mut adam = AdamState::new(&s, AdamConfig::with_lr(0.1));
        for _ in 0..2 {
            s.at_mut(0).grad.data_mut()[0] = 1.0;
            adam.step(&mut s).unwrap();
        }
        // t=1: m=0.1, v=0.001, m̂=1, v̂=1 -> step 0.1/(1+1e-8)
        // t=2: m=0.19, v=0.001999, m̂=0.19/0.19=1, v̂=0.001999/0.001999=1
        let step = 0.1 / (1.0 + 1e-8);
        assert!((s.at(0).value.data()[0] + 2.0 * step).abs() < 1e-12);
        assert!((adam.m[0].data()[0] - 0.19).abs() < 1e-12);
        assert!((adam.v[0].data()[0] - 0.001999).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut s = scalar_store(1.0);
        s.insert("w", RealArray::vector(vec![2.0, 3.0])).unwrap();
        s.at_mut(0).grad.data_mut()[0] = 0.5;
        s.at_mut(1).grad.data_mut()[1] = f64::NAN;
        let mut adam = AdamState::new(&s, AdamConfig::default());
        match adam.step(&mut s) {
            Err(Error::NonFinite { entry, .. }) => assert_eq!(entry, "w"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
        assert_eq!(adam.t, 0);
        assert_eq!(s.at(0).value.data(), &[1.0]);
    }
}
