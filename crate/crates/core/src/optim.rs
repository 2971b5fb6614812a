//! AdamW with decoupled weight decay.

use crate::param::Parameter;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use crate::math;

/// AdamW optimizer. Moment state is keyed by parameter name and is created
/// lazily; frozen parameters get no state and are never touched.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step_count: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> AdamW {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step_count: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update to every trainable parameter, using the gradients
    /// currently stored on them.
    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - math::pow(self.beta1, t as f64);
        let bc2 = 1.0 - math::pow(self.beta2, t as f64);
        for p in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let n = p.value.len();
            let m = self
                .m
                .entry(p.name.clone())
                .or_insert_with(|| alloc::vec![0.0; n]);
            let v = self
                .v
                .entry(p.name.clone())
                .or_insert_with(|| alloc::vec![0.0; n]);
            let value = p.value.data_mut();
            let grad = p.grad.data();
            for i in 0..n {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                // decoupled decay: applied to the value, not the gradient
                value[i] -= self.lr * (m_hat / (math::sqrt(v_hat) + self.eps))
                    + self.lr * self.weight_decay * value[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_param(name: &str, value: f64, grad: f64, trainable: bool) -> Parameter {
        let mut p = Parameter::new(name, Tensor::from_vec(vec![1], vec![value]).unwrap());
        p.grad = Tensor::from_vec(vec![1], vec![grad]).unwrap();
        p.trainable = trainable;
        p
    }

    #[test]
    fn frozen_parameter_is_bit_identical_after_step() {
        let mut p = scalar_param("frozen", 1.234567891234, 10.0, false);
        let before = p.value.data()[0].to_bits();
        let mut opt = AdamW::new(0.1, 0.01);
        opt.step(&mut [&mut p]);
        assert_eq!(p.value.data()[0].to_bits(), before);
        assert!(opt.m.is_empty() && opt.v.is_empty());
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // hand evaluation: m_hat = g = 1, v_hat = g^2 = 1 after bias
        // correction, so the update is lr / (1 + eps)
        let mut p = scalar_param("w", 1.0, 1.0, true);
        let mut opt = AdamW::new(0.1, 0.0);
        opt.step(&mut [&mut p]);
        let delta = 1.0 - p.value.data()[0];
        let want = 0.1 / (1.0 + 1e-8);
        assert!((delta - want).abs() < 1e-12, "delta {delta}");
        assert!((delta - 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_grad_with_decay_shrinks_exactly() {
        let value = 2.5;
        let (lr, wd) = (0.05, 0.2);
        let mut p = scalar_param("w", value, 0.0, true);
        let mut opt = AdamW::new(lr, wd);
        opt.step(&mut [&mut p]);
        let want = value - lr * wd * value;
        assert_eq!(p.value.data()[0], want);
    }

    #[test]
    fn state_persists_across_steps() {
        let mut p = scalar_param("w", 1.0, 1.0, true);
        let mut opt = AdamW::new(0.1, 0.0);
        opt.step(&mut [&mut p]);
        let after_one = p.value.data()[0];
        opt.step(&mut [&mut p]);
        assert!(p.value.data()[0] < after_one);
        assert_eq!(opt.step_count(), 2);
    }
}
