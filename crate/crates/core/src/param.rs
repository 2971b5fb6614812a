//! Named trainable parameters.

use crate::tensor::Tensor;
use alloc::string::String;
use alloc::vec::Vec;

/// A named weight tensor with its gradient buffer and freeze flag.
///
/// The freeze/unfreeze training stages operate purely through `trainable`:
/// the optimizer leaves frozen parameters bit-identical.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Parameter {
        let grad = Tensor::zeros(value.dims().to_vec());
        Parameter {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    /// A permanently frozen parameter (stand-in weights that never train).
    pub fn frozen(name: impl Into<String>, value: Tensor) -> Parameter {
        let mut p = Parameter::new(name, value);
        p.trainable = false;
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that exposes its parameters as a flat named list.
///
/// The order must be stable across calls; registries rely on it.
pub trait Parameterized {
    fn params(&self) -> Vec<&Parameter>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_matches_value_dims() {
        let p = Parameter::new("w", Tensor::zeros(vec![2, 3]));
        assert_eq!(p.grad.dims(), p.value.dims());
        assert!(p.trainable);
        assert!(!Parameter::frozen("f", Tensor::zeros(vec![1])).trainable);
    }
}
