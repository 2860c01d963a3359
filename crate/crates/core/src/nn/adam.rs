use super::{DenseNet, Gradients};
use crate::error::{Error, Result};

/// Adam optimiser state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        let n = net.param_count();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn param_count(&self) -> usize {
        self.m.len()
    }

    /// Applies one bias-corrected Adam update to `net`.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        let expected: usize = grads.layers.iter().map(|g| g.weights.len() + g.bias.len()).sum();
        if expected != self.m.len() || net.param_count() != self.m.len() || grads.layers.len() != net.layers().len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, network has {}, gradients {}",
                self.m.len(),
                net.param_count(),
                expected
            )));
        }
        for (layer, g) in net.layers().iter().zip(&grads.layers) {
            if layer.weights.rows() != g.weights.rows() || layer.weights.cols() != g.weights.cols() {
                return Err(Error::Shape("gradient layer shape".into()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            if m_hat != 0.0 {
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
