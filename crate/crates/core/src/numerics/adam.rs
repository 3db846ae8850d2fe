use alloc::vec::Vec;

use super::tensor::{ParamId, ParamStore};
use crate::error::{invalid, Error, Result};
use crate::math;

/// Adam hyper-parameters. The decay-rate defaults are 0.99 / 0.999.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.99,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            ..Self::default()
        }
    }
}

/// Moment estimates for one set of parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    params: Vec<ParamId>,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore, params: &[ParamId]) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(invalid("Adam betas must lie in [0, 1)"));
        }
        let zeros = |id: &ParamId| alloc::vec![0.0; store.get(*id).len()];
        Ok(Self {
            config,
            params: params.to_vec(),
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
        })
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update from the gradients currently held in
    /// `store`. Non-finite gradients abort the update before any write.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for &id in &self.params {
            if store.get(id).grad().iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(alloc::format!("gradient of {}", store.name(id))));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - math::powi(beta1, self.step as i32);
        let bc2 = 1.0 - math::powi(beta2, self.step as i32);
        for (k, &id) in self.params.iter().enumerate() {
            let tensor = store.get_mut(id);
            let grad: Vec<f64> = tensor.grad().to_vec();
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for (i, (p, g)) in tensor.values_mut().iter_mut().zip(&grad).enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
            }
            tensor.quantize_f32();
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    state.step(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store_with(values: &[f64]) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::from_vec(&[values.len()], values.to_vec()).unwrap()).unwrap();
        (s, id)
    }

    #[test]
    fn defaults_match_published_decay_rates() {
        let c = AdamConfig::default();
        assert_eq!(c.beta1, 0.99);
        assert_eq!(c.beta2, 0.999);
        assert_eq!(c.epsilon, 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut s, id) = store_with(&[0.5, -1.25]);
        let mut st = AdamState::new(AdamConfig::default(), &s, &[id]).unwrap();
        st.step(&mut s).unwrap();
        assert_eq!(s.get(id).values(), &[0.5, -1.25]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε) ≈ lr·sign(g).
        let (mut s, id) = store_with(&[1.0, 1.0]);
        let lr = 0.01;
        let mut st = AdamState::new(AdamConfig::with_lr(lr), &s, &[id]).unwrap();
        s.get_mut(id).grad_mut().copy_from_slice(&[3.0, -0.2]);
        st.step(&mut s).unwrap();
        let v = s.get(id).values();
        assert!((v[0] - (1.0 - lr)).abs() < 1e-6);
        assert!((v[1] - (1.0 + lr)).abs() < 1e-6);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let (mut a, ia) = store_with(&[0.1, 0.2, 0.3]);
        let (mut b, ib) = store_with(&[0.1, 0.2, 0.3]);
        let mut sa = AdamState::new(AdamConfig::default(), &a, &[ia]).unwrap();
        let mut sb = AdamState::new(AdamConfig::default(), &b, &[ib]).unwrap();
        for _ in 0..3 {
            a.get_mut(ia).grad_mut().copy_from_slice(&[0.4, -0.1, 2.0]);
            b.get_mut(ib).grad_mut().copy_from_slice(&[0.4, -0.1, 2.0]);
            sa.step(&mut a).unwrap();
            sb.step(&mut b).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_writing() {
        let (mut s, id) = store_with(&[1.0]);
        let mut st = AdamState::new(AdamConfig::default(), &s, &[id]).unwrap();
        s.get_mut(id).grad_mut()[0] = f64::NAN;
        assert!(matches!(st.step(&mut s), Err(Error::NonFinite(_))));
        assert_eq!(s.get(id).values(), &[1.0]);
        assert_eq!(st.step_count(), 0);
    }
}
