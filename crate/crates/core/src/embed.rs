//! Pulling/pushing force embeddings of a head network.
//!
//! For a two-class softmax head with output-layer input `h_t` and class
//! probabilities `p_t1, p_t2`, the log-likelihood gradient of the first
//! output column is `sum_{C=+1} h_t (1 - p_t1) + sum_{C=-1} h_t (-p_t1)`.
//! The embedding keeps the batch-averaged, component-averaged value of each
//! of those terms for both columns:
//!
//! ```text
//! e[0] = 1/T sum_{C=+1} avg(h_t) (1 - p_t1)     pull on w1
//! e[1] = 1/T sum_{C=-1} avg(h_t) (-p_t1)        push on w1
//! e[2] = 1/T sum_{C=+1} avg(h_t) (-p_t2)        pull on w2
//! e[3] = 1/T sum_{C=-1} avg(h_t) (1 - p_t2)     push on w2
//! ```
//!
//! The data-based variant replaces `avg(h_t)` with `avg(w1)` for the first
//! pair and `avg(w2)` for the second.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseNet, ForwardTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub e: [f64; 4],
    pub sample_count: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check(trace: &ForwardTrace, targets: &[i8]) -> Result<()> {
    if targets.is_empty() || trace.batch_size() == 0 {
        return Err(Error::Data("embedding needs a nonempty batch".into()));
    }
    if trace.batch_size() != targets.len() {
        return Err(Error::Shape(format!(
            "{} targets for a batch of {}",
            targets.len(),
            trace.batch_size()
        )));
    }
    if trace.output().cols() != 2 {
        return Err(Error::Shape("embedding needs a two-class head".into()));
    }
    if let Some(bad) = targets.iter().find(|&&c| c != 1 && c != -1) {
        return Err(Error::Data(format!("category {bad} is not +1 or -1")));
    }
    Ok(())
}

/// Force sums with a per-sample scale for each pair: `scale(t) -> (s1, s2)`.
fn forces(trace: &ForwardTrace, targets: &[i8], scale: impl Fn(usize) -> (f64, f64)) -> Embedding {
    let probs = trace.output();
    let mut e = [0.0; 4];
    for (t, &c) in targets.iter().enumerate() {
        let (s1, s2) = scale(t);
        let (p1, p2) = (probs.get(t, 0), probs.get(t, 1));
        if c == 1 {
            e[0] += s1 * (1.0 - p1);
            e[2] += s2 * -p2;
        } else {
            e[1] += s1 * -p1;
            e[3] += s2 * (1.0 - p2);
        }
    }
    let n = targets.len() as f64;
    e.iter_mut().for_each(|v| *v /= n);
    Embedding {
        e,
        sample_count: targets.len(),
    }
}

/// Gradient-based embedding from a head's forward trace.
pub fn embed_gradient(trace: &ForwardTrace, targets: &[i8]) -> Result<Embedding> {
    check(trace, targets)?;
    let hidden = trace.last_hidden();
    Ok(forces(trace, targets, |t| {
        let a = mean(hidden.row(t));
        (a, a)
    }))
}

/// Data-based embedding: the output-layer column means of `head` stand in
/// for `avg(h_t)`.
pub fn embed_data(head: &DenseNet, trace: &ForwardTrace, targets: &[i8]) -> Result<Embedding> {
    check(trace, targets)?;
    let out = head.layers().last().expect("nonempty net");
    if out.out_dim() != 2 || out.in_dim() != trace.last_hidden().cols() {
        return Err(Error::Shape("trace does not belong to this head".into()));
    }
    let w1 = mean(out.weights.row(0));
    let w2 = mean(out.weights.row(1));
    Ok(forces(trace, targets, |_| (w1, w2)))
}

/// Mean squared component difference.
pub fn embedding_distance(a: &Embedding, b: &Embedding) -> f64 {
    a.e.iter().zip(&b.e).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 4.0
}
