//! Central finite-difference verification of analytic gradients.

use crate::param::Parameterized;
use alloc::string::String;
use alloc::string::ToString;
use alloc::vec::Vec;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel_err < threshold
    }
}

/// Compare the analytic gradient produced by `loss_and_grad` against central
/// finite differences of `loss_only`, coordinate by coordinate over every
/// trainable parameter.
///
/// `loss_and_grad` must populate `grad` on each trainable parameter (on top
/// of zeroed grads); `loss_only` must evaluate the same loss without touching
/// grads. Relative error uses max(|analytic|, |numeric|, floor) in the
/// denominator so near-zero coordinates do not blow up.
pub fn finite_diff_check<M, F, G>(
    model: &mut M,
    mut loss_and_grad: F,
    mut loss_only: G,
    eps: f64,
) -> GradCheckReport
where
    M: Parameterized,
    F: FnMut(&mut M) -> f64,
    G: FnMut(&mut M) -> f64,
{
    model.zero_grads();
    let _ = loss_and_grad(model);

    // snapshot the analytic gradients before perturbing anything
    let analytic: Vec<(String, Vec<f64>)> = model
        .params()
        .iter()
        .filter(|p| p.trainable)
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: "".to_string(),
        worst_index: 0,
        checked: 0,
    };

    for (name, grads) in &analytic {
        for i in 0..grads.len() {
            let orig = read_coord(model, name, i);
            write_coord(model, name, i, orig + eps);
            let up = loss_only(model);
            write_coord(model, name, i, orig - eps);
            let down = loss_only(model);
            write_coord(model, name, i, orig);

            let numeric = (up - down) / (2.0 * eps);
            let a = grads[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    report
}

fn read_coord<M: Parameterized>(model: &mut M, name: &str, i: usize) -> f64 {
    for p in model.params_mut() {
        if p.name == name {
            return p.value.data()[i];
        }
    }
    panic!("parameter {name} vanished during gradient check");
}

fn write_coord<M: Parameterized>(model: &mut M, name: &str, i: usize, x: f64) {
    for p in model.params_mut() {
        if p.name == name {
            p.value.data_mut()[i] = x;
            return;
        }
    }
    panic!("parameter {name} vanished during gradient check");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Parameter;
    use crate::tensor::Tensor;

    struct Quadratic {
        w: Parameter,
    }

    impl Parameterized for Quadratic {
        fn params(&self) -> Vec<&Parameter> {
            alloc::vec![&self.w]
        }
        fn params_mut(&mut self) -> Vec<&mut Parameter> {
            alloc::vec![&mut self.w]
        }
    }

    fn quad_loss(m: &Quadratic) -> f64 {
        m.w.value.data().iter().map(|x| 0.5 * x * x).sum()
    }

    #[test]
    fn quadratic_gradient_matches_closely() {
        let mut m = Quadratic {
            w: Parameter::new(
                "w",
                Tensor::from_vec(vec![3], vec![0.3, -1.2, 2.0]).unwrap(),
            ),
        };
        let report = finite_diff_check(
            &mut m,
            |m| {
                let l = quad_loss(m);
                let vals: Vec<f64> = m.w.value.data().to_vec();
                m.w.grad.data_mut().copy_from_slice(&vals);
                l
            },
            |m| quad_loss(m),
            1e-5,
        );
        assert_eq!(report.checked, 3);
        assert!(report.max_rel_err < 1e-9, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn constant_loss_reports_zero_error() {
        let mut m = Quadratic {
            w: Parameter::new("w", Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap()),
        };
        let report = finite_diff_check(&mut m, |_| 7.0, |_| 7.0, 1e-5);
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let mut m = Quadratic {
            w: Parameter::new("w", Tensor::from_vec(vec![1], vec![1.5]).unwrap()),
        };
        let report = finite_diff_check(
            &mut m,
            |m| {
                let l = quad_loss(m);
                m.w.grad.data_mut()[0] = 99.0; // deliberately wrong
                l
            },
            |m| quad_loss(m),
            1e-5,
        );
        assert!(!report.passes(1e-6));
        assert_eq!(report.worst_param, "w");
    }

    #[test]
    fn frozen_params_are_skipped() {
        let mut m = Quadratic {
            w: Parameter::frozen("w", Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap()),
        };
        let report = finite_diff_check(&mut m, |m| quad_loss(m), |m| quad_loss(m), 1e-5);
        assert_eq!(report.checked, 0);
        assert_eq!(report.max_rel_err, 0.0);
    }
}
