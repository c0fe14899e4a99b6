//! Adam with bias correction, plus the step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Adam moment accumulators, one slot per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

/// Adam coefficients; defaults are beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments shaped after `params`.
    pub fn new(params: &[Tensor<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Each entry of `params` is replaced by a
/// fresh tracked leaf holding the updated values; gradients and moments must
/// line up with the parameter order.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    config: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Argument(format!(
            "adam_step arity mismatch: {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient shape {:?} does not match parameter shape {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let beta1 = T::from_f64(config.beta1);
    let beta2 = T::from_f64(config.beta2);
    let eps = T::from_f64(config.eps);
    let lr = T::from_f64(lr);
    let one = T::one();
    let bias1 = one - beta1.powi(t);
    let bias2 = one - beta2.powi(t);

    for (i, param) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let mut data = param.data().to_vec();
        for j in 0..data.len() {
            m[j] = beta1 * m[j] + (one - beta1) * g[j];
            v[j] = beta2 * v[j] + (one - beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        *param = Tensor::param(param.shape(), data)?;
    }
    Ok(())
}

/// Learning rate at a 1-based `epoch`: the base rate times
/// `decay_factor^k`, where `k` counts decay epochs at or before `epoch`.
pub fn lr_schedule(epoch: usize, base_lr: f64, decay_epochs: &[usize], decay_factor: f64) -> f64 {
    let decays = decay_epochs.iter().filter(|&&e| e <= epoch).count();
    base_lr * decay_factor.powi(decays as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Tensor<f64> {
        Tensor::param(&[1], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = vec![scalar_param(2.5)];
        let grads = vec![Tensor::new(&[1], vec![0.0]).unwrap()];
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(params[0].data(), &[2.5]);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // bias correction makes m_hat / sqrt(v_hat) = sign(g) up to eps
        for g in [3.0, -0.02, 12000.0] {
            let mut params = vec![scalar_param(1.0)];
            let grads = vec![Tensor::new(&[1], vec![g]).unwrap()];
            let mut state = AdamState::new(&params);
            adam_step(&mut params, &grads, &mut state, 0.05, &AdamConfig::default()).unwrap();
            let moved = 1.0 - params[0].data()[0];
            assert!(
                (moved - 0.05 * g.signum()).abs() < 1e-6,
                "grad {g} moved by {moved}"
            );
        }
    }

    #[test]
    fn adam_descends_a_parabola() {
        // f(x) = x^2 from x=1 at lr 0.1: |x| < 0.1 within 100 steps
        let mut params = vec![scalar_param(1.0)];
        let mut state = AdamState::new(&params);
        for _ in 0..100 {
            let x = params[0].clone();
            let loss = x.mul(&x).unwrap().sum();
            let grads = vec![loss.backward(&[&x]).unwrap().get(&x).unwrap().clone()];
            adam_step(&mut params, &grads, &mut state, 0.1, &AdamConfig::default()).unwrap();
        }
        assert!(
            params[0].data()[0].abs() < 0.1,
            "x after 100 steps: {}",
            params[0].data()[0]
        );
    }

    #[test]
    fn gradient_shape_mismatch_is_rejected() {
        let mut params = vec![scalar_param(1.0)];
        let grads = vec![Tensor::new(&[2], vec![0.0, 0.0]).unwrap()];
        let mut state = AdamState::new(&params);
        let r = adam_step(&mut params, &grads, &mut state, 0.1, &AdamConfig::default());
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn schedule_decays_at_the_named_epochs() {
        let decay = [50usize, 75];
        assert_eq!(lr_schedule(1, 1e-4, &decay, 0.1), 1e-4);
        assert_eq!(lr_schedule(49, 1e-4, &decay, 0.1), 1e-4);
        assert!((lr_schedule(50, 1e-4, &decay, 0.1) - 1e-5).abs() < 1e-18);
        assert!((lr_schedule(74, 1e-4, &decay, 0.1) - 1e-5).abs() < 1e-18);
        assert!((lr_schedule(75, 1e-4, &decay, 0.1) - 1e-6).abs() < 1e-19);
        assert!((lr_schedule(200, 1e-4, &decay, 0.1) - 1e-6).abs() < 1e-19);
    }

    #[test]
    fn empty_decay_list_keeps_lr_constant() {
        for epoch in [1, 10, 1000] {
            assert_eq!(lr_schedule(epoch, 3e-3, &[], 0.1), 3e-3);
        }
    }

    #[test]
    fn schedule_is_non_increasing() {
        let decay = [3usize, 7, 20];
        let mut last = f64::INFINITY;
        for epoch in 1..=30 {
            let lr = lr_schedule(epoch, 1e-2, &decay, 0.5);
            assert!(lr <= last);
            last = lr;
        }
    }
}
