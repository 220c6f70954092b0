use super::{check_rank, LayerError};
use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax of `[batch, classes]` logits, max-subtracted.
pub fn softmax<F: Scalar>(logits: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
    check_rank(logits, 2, "softmax")?;
    let classes = logits.shape()[1];
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(classes) {
        let (probs, _) = row_softmax(row);
        out.extend(probs.into_iter().map(F::from_f64_lossy));
    }
    Ok(Tensor::from_vec(logits.shape(), out)?)
}

/// Probabilities and `ln(sum(exp(z - max)))` for one row, in double.
fn row_softmax<F: Scalar>(row: &[F]) -> (Vec<f64>, f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (exps.into_iter().map(|e| e / sum).collect(), sum.ln())
}

/// Mean categorical cross-entropy of softmax(`logits`) against `labels`,
/// and its gradient with respect to the logits, `(softmax - onehot) / batch`.
pub fn softmax_xent<F: Scalar>(logits: &Tensor<F>, labels: &[usize]) -> Result<(f64, Tensor<F>), LayerError> {
    check_rank(logits, 2, "softmax_xent")?;
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(crate::tensor::TensorError::Shape(format!("{} labels for a batch of {batch}", labels.len())).into());
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(LayerError::InvalidLabel { row, label, classes });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    let inv_batch = 1.0 / batch as f64;
    for (row, &label) in logits.data().chunks_exact(classes).zip(labels) {
        let (probs, log_sum) = row_softmax(row);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        loss += log_sum - (row[label].as_f64() - max);
        grad.extend(probs.iter().enumerate().map(|(c, &p)| {
            let target = if c == label { 1.0 } else { 0.0 };
            F::from_f64_lossy((p - target) * inv_batch)
        }));
    }
    Ok((loss * inv_batch, Tensor::from_vec(logits.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    #[allow(clippy::approx_constant)]
    fn uniform_logits_give_ln_ten() {
        let logits = Tensor::<f64>::zeros(&[3, 10]).unwrap();
        let p = softmax(&logits).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let (loss, _) = softmax_xent(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn saturated_logits_do_not_overflow() {
        let mut logits = Tensor::<f32>::zeros(&[2, 10]).unwrap();
        logits.data_mut()[3] = 1000.0;
        logits.data_mut()[10 + 7] = 1000.0;
        let (loss, grad) = softmax_xent(&logits, &[3, 7]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(grad.data().iter().all(|v| v.is_finite()));
        let (loss, _) = softmax_xent(&logits, &[0, 0]).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_labels() {
        let logits = Tensor::<f64>::zeros(&[2, 10]).unwrap();
        assert!(matches!(
            softmax_xent(&logits, &[1, 10]),
            Err(LayerError::InvalidLabel { row: 1, label: 10, classes: 10 })
        ));
        assert!(softmax_xent(&logits, &[1]).is_err());
    }

    #[test]
    fn rows_sum_to_one_and_loss_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let v: Vec<f64> = (0..40).map(|_| rng.gen_range(-30.0..30.0)).collect();
            let logits = Tensor::from_vec(&[4, 10], v).unwrap();
            let p = softmax(&logits).unwrap();
            for row in p.data().chunks(10) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
            let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..10)).collect();
            let (loss, _) = softmax_xent(&logits, &labels).unwrap();
            assert!(loss >= 0.0);
        }
    }
}
