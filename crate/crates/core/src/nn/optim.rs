use std::collections::HashMap;

use ndarray::Array2;

use super::{Module, Param};

/// Adam with bias correction, optional decoupled weight decay and optional
/// global gradient-norm clipping. Moment buffers are keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    moments: HashMap<String, (Array2<f64>, Array2<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: None,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Global L2 norm of all trainable gradients.
    pub fn grad_norm<M: Module + ?Sized>(model: &M) -> f64 {
        let mut sq = 0.0;
        model.visit("", &mut |_, p| {
            if p.trainable {
                sq += p.grad.iter().map(|g| g * g).sum::<f64>();
            }
        });
        sq.sqrt()
    }

    /// Applies one update from the accumulated gradients. Gradients are left
    /// untouched.
    pub fn step<M: Module + ?Sized>(&mut self, model: &mut M) {
        self.step += 1;
        let scale = match self.clip_norm {
            Some(max) => {
                let n = Self::grad_norm(model);
                if n > max {
                    max / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr, wd) = (self.beta1, self.beta2, self.eps, self.lr, self.weight_decay);
        let moments = &mut self.moments;
        model.visit_mut("", &mut |name, p: &mut Param| {
            if !p.trainable {
                return;
            }
            let (m, v) = moments
                .entry(name)
                .or_insert_with(|| (Array2::zeros(p.value.raw_dim()), Array2::zeros(p.value.raw_dim())));
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    let g = g * scale;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *w -= lr * (update + wd * *w);
                });
        });
    }
}
