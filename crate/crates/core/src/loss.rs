//! Scalar losses with analytic gradients.

use crate::error::CoreError;
use crate::math;
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::vec::Vec;

/// Mean binary cross-entropy on logits, in the stable softplus form.
///
/// Returns the loss and its gradient w.r.t. the logits,
/// `(sigmoid(x) - y) / n`.
pub fn bce_with_logits(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    if logits.dims() != labels.dims() {
        return Err(CoreError::Shape(format!(
            "bce: logits {:?} vs labels {:?}",
            logits.dims(),
            labels.dims()
        )));
    }
    if let Some(bad) = labels.data().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(CoreError::Data(format!("bce labels must be 0/1, got {bad}")));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.dims().to_vec());
    for (i, (&x, &y)) in logits.data().iter().zip(labels.data()).enumerate() {
        // max(x,0) - x*y + ln(1 + e^-|x|)
        loss += x.max(0.0) - x * y + math::softplus(-x.abs());
        grad.data_mut()[i] = (math::sigmoid(x) - y) / n;
    }
    Ok((loss / n, grad))
}

/// Mean negative log-softmax at the target indices.
///
/// `logits` is n x V; one target id per row. Returns the loss and its
/// gradient `(softmax - one_hot) / n`.
pub fn cross_entropy_logits(logits: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    if logits.dims().len() != 2 {
        return Err(CoreError::Shape(format!(
            "cross-entropy expects n x V logits, got {:?}",
            logits.dims()
        )));
    }
    let (n, v) = (logits.rows(), logits.cols());
    if targets.len() != n {
        return Err(CoreError::Shape(format!(
            "cross-entropy: {n} logit rows vs {} targets",
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= v) {
        return Err(CoreError::Index(format!(
            "cross-entropy target {t} out of range for vocab {v}"
        )));
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(alloc::vec![n, v]);
    let mut probs: Vec<f64> = alloc::vec![0.0; v];
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (p, &x) in probs.iter_mut().zip(row) {
            *p = math::exp(x - max);
            denom += *p;
        }
        loss += -(math::ln(probs[t] / denom));
        let g = grad.row_mut(i);
        for (gj, &p) in g.iter_mut().zip(&probs) {
            *gj = p / denom * scale;
        }
        g[t] -= scale;
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitRng;

    fn t1(v: Vec<f64>) -> Tensor {
        let n = v.len();
        Tensor::from_vec(vec![n], v).unwrap()
    }

    #[test]
    fn bce_uniform_cases_give_ln2() {
        let ln2 = core::f64::consts::LN_2;
        let (l, _) = bce_with_logits(&t1(vec![0.0]), &t1(vec![1.0])).unwrap();
        assert!((l - ln2).abs() < 1e-15);
        let (l, _) = bce_with_logits(&t1(vec![0.0]), &t1(vec![0.0])).unwrap();
        assert!((l - ln2).abs() < 1e-15);
    }

    #[test]
    fn bce_confident_pair() {
        // logits [2,-2] with labels [1,0]: each term is softplus(-2)
        let (l, _) = bce_with_logits(&t1(vec![2.0, -2.0]), &t1(vec![1.0, 0.0])).unwrap();
        let want = crate::math::softplus(-2.0);
        assert!((l - want).abs() < 1e-12, "loss {l} want {want}");
        assert!((l - 0.126928).abs() < 1e-6);
    }

    #[test]
    fn bce_gradient_is_sigmoid_minus_label_over_n() {
        let logits = t1(vec![1.5, -0.5]);
        let labels = t1(vec![1.0, 0.0]);
        let (_, g) = bce_with_logits(&logits, &labels).unwrap();
        assert!((g.data()[0] - (crate::math::sigmoid(1.5) - 1.0) / 2.0).abs() < 1e-15);
        assert!((g.data()[1] - crate::math::sigmoid(-0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bce_rejects_non_binary_labels() {
        let r = bce_with_logits(&t1(vec![0.0]), &t1(vec![0.5]));
        assert!(matches!(r, Err(CoreError::Data(_))));
    }

    #[test]
    fn bce_rejects_length_mismatch() {
        let r = bce_with_logits(&t1(vec![0.0, 1.0]), &t1(vec![1.0]));
        assert!(matches!(r, Err(CoreError::Shape(_))));
    }

    #[test]
    fn ce_uniform_logits_give_ln_v() {
        let logits = Tensor::zeros(vec![1, 8]);
        let (l, _) = cross_entropy_logits(&logits, &[3]).unwrap();
        assert!((l - crate::math::ln(8.0)).abs() < 1e-15);
    }

    #[test]
    fn ce_saturated_target_is_near_zero() {
        let mut logits = Tensor::zeros(vec![1, 8]);
        logits.set(0, 5, 50.0);
        let (l, _) = cross_entropy_logits(&logits, &[5]).unwrap();
        assert!(l < 1e-15, "loss {l}");
    }

    #[test]
    fn ce_direct_softmax_evaluation() {
        let logits = Tensor::from_vec(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let (l, _) = cross_entropy_logits(&logits, &[2]).unwrap();
        // independent evaluation: -log(e^3 / (e^1 + e^2 + e^3))
        let e = core::f64::consts::E;
        let want = -crate::math::ln(e.powi(3) / (e + e.powi(2) + e.powi(3)));
        assert!((l - want).abs() < 1e-12);
        assert!((l - 0.407606).abs() < 1e-6);
    }

    #[test]
    fn ce_gradient_rows_sum_to_zero() {
        let mut rng = SplitRng::new(4);
        let logits = Tensor::from_vec(vec![3, 5], rng.normal_vec(15, 1.0)).unwrap();
        let (_, g) = cross_entropy_logits(&logits, &[0, 4, 2]).unwrap();
        for i in 0..3 {
            let s: f64 = g.row(i).iter().sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn ce_rejects_out_of_range_target() {
        let logits = Tensor::zeros(vec![1, 4]);
        assert!(matches!(
            cross_entropy_logits(&logits, &[4]),
            Err(CoreError::Index(_))
        ));
    }
}
