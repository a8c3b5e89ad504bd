use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stochastic gradient descent with heavy-ball momentum and L2 weight decay:
/// `v ← μ·v + (g + wd·θ)`, `θ ← θ − lr·v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Array2<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &[Array2<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
        }
        if self.velocity.len() != grads.len() {
            return Err(Error::shape("optimizer state does not match the parameter list"));
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            if p.dim() != g.dim() || v.dim() != g.dim() {
                return Err(Error::shape(format!("parameter {:?} vs gradient {:?}", p.dim(), g.dim())));
            }
            let (mu, wd, lr) = (self.momentum, self.weight_decay, self.lr);
            ndarray::Zip::from(&mut *p).and(g).and(&mut *v).for_each(|pv, &gv, vv| {
                *vv = mu * *vv + gv + wd * *pv;
                *pv -= lr * *vv;
            });
        }
        Ok(())
    }
}
