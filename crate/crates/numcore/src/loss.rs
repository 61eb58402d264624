use crate::error::{check_dim, NumError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Row-wise softmax of `[T, K]` logits.
pub fn softmax<R: Real>(logits: &Tensor<R>) -> Tensor<R> {
    let k = logits.cols();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(row[0], R::max);
        let mut sum = R::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Time-averaged categorical cross-entropy and its gradient.
#[derive(Debug, Clone)]
pub struct XentOutput<R: Real> {
    /// `-(1/T) sum_t sum_k y_tk log p_tk`
    pub loss: f64,
    pub probs: Tensor<R>,
    /// d loss / d logits, already divided by `T`.
    pub grad_logits: Tensor<R>,
}

fn check_logits<R: Real>(op: &'static str, logits: &Tensor<R>) -> Result<()> {
    logits.expect_rank(op, 2)?;
    if logits.cols() < 2 {
        return Err(NumError::Invalid {
            op,
            msg: format!("need at least 2 classes, got {}", logits.cols()),
        });
    }
    if logits.rows() == 0 {
        return Err(NumError::Invalid {
            op,
            msg: "empty sequence".into(),
        });
    }
    Ok(())
}

/// Softmax cross-entropy against (one-hot or soft) target rows.
pub fn softmax_xent<R: Real>(logits: &Tensor<R>, target: &Tensor<R>) -> Result<XentOutput<R>> {
    const OP: &str = "softmax_xent";
    check_logits(OP, logits)?;
    check_dim(OP, "target rows", logits.rows(), target.rows())?;
    check_dim(OP, "target classes", logits.cols(), target.cols())?;
    let (t, k) = (logits.rows(), logits.cols());
    let probs = softmax(logits);
    let mut loss = 0.0;
    let mut grad = vec![R::ZERO; t * k];
    let inv_t = R::from_f64(1.0 / t as f64);
    for i in 0..t {
        let lrow = logits.row(i);
        let max = lrow.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lrow.iter().map(|v| (v.to_f64() - max).exp()).sum::<f64>().ln();
        for j in 0..k {
            let y = target.row(i)[j];
            loss -= y.to_f64() * (lrow[j].to_f64() - lse);
            grad[i * k + j] = (probs.row(i)[j] - y) * inv_t;
        }
    }
    Ok(XentOutput {
        loss: loss / t as f64,
        probs,
        grad_logits: Tensor::new(vec![t, k], grad)?,
    })
}

/// Softmax cross-entropy against class indices.
pub fn softmax_xent_labels<R: Real>(logits: &Tensor<R>, labels: &[usize]) -> Result<XentOutput<R>> {
    const OP: &str = "softmax_xent";
    check_logits(OP, logits)?;
    check_dim(OP, "label count", logits.rows(), labels.len())?;
    let k = logits.cols();
    let mut target = Tensor::zeros(&[labels.len(), k]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(NumError::Invalid {
                op: OP,
                msg: format!("label {l} at step {i} out of range for {k} classes"),
            });
        }
        target.row_mut(i)[l] = R::ONE;
    }
    softmax_xent(logits, &target)
}
