use super::{ForwardTrace, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Matrix,
}

/// Mean negative log-likelihood of `targets` under the trace's softmax
/// output. The gradient is with respect to the pre-softmax logits:
/// `(p - one_hot) / B`.
pub fn cross_entropy(trace: &ForwardTrace, targets: &[usize]) -> Result<LossOutput> {
    let last = trace.pre.len().checked_sub(1).ok_or(Error::EmptyDims)?;
    let probs = trace.output();
    let softmax_like = probs
        .rows_iter()
        .all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9 && r.iter().all(|&p| p >= 0.0));
    if probs.cols() < 2 || trace.pre[last].cols() != probs.cols() || !softmax_like {
        return Err(Error::Shape("cross-entropy needs a softmax output".into()));
    }
    cross_entropy_probs(probs, targets)
}

/// [`cross_entropy`] on an explicit probability matrix.
pub fn cross_entropy_probs(probs: &Matrix, targets: &[usize]) -> Result<LossOutput> {
    let (batch, classes) = (probs.rows(), probs.cols());
    if targets.len() != batch {
        return Err(Error::Shape(format!(
            "{} targets for a batch of {}",
            targets.len(),
            batch
        )));
    }
    if batch == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let scale = 1.0 / batch as f64;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (b, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(Error::InvalidClass { index: t, classes });
        }
        loss -= probs.get(b, t).ln();
        let row = grad.row_mut(b);
        row[t] -= 1.0;
        row.iter_mut().for_each(|g| *g *= scale);
    }
    Ok(LossOutput {
        loss: loss * scale,
        grad,
    })
}

/// Mean squared error over a single-output batch. The gradient is returned as
/// a `B x 1` matrix ready for [`super::DenseNet::backward`].
pub fn mse(pred: &[f64], target: &[f64]) -> Result<LossOutput> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossOutput {
        loss: loss / n,
        grad: Matrix::from_vec(pred.len(), 1, grad),
    })
}
