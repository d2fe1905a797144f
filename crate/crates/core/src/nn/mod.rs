//! Minimal dense-tensor neural network toolkit with hand-written backward
//! passes. Everything is `f64`; parameters are 2-D.
//!
//! Layers expose `forward` over `&self` (so a trained model can serve
//! concurrent inference) and return whatever the matching `backward` needs.
//! Gradients accumulate into [`Param::grad`] until [`Module::zero_grad`].

mod layers;
mod lstm;
mod optim;
pub mod safetensors;

pub use layers::{
    dropout_mask, gelu, gelu_grad, global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm1d,
    BnCache, Conv1d, ConvCache, Embedding, LayerNorm, LnCache, Linear, MaxPool1d, PoolCache,
};
pub use lstm::{Lstm, LstmCache};
pub use optim::Adam;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("missing tensor {0:?}")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("malformed tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A 2-D tensor with its accumulated gradient. Non-trainable params
/// (running statistics, input normalizers) are persisted but never updated
/// by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(value: Array2<f64>) -> Self {
        Self {
            trainable: false,
            ..Self::new(value)
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.value.nrows(), self.value.ncols()]
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Row vector view of a `[1, n]` parameter as a 1-D slice.
    pub fn row(&self) -> ndarray::ArrayView1<'_, f64> {
        self.value.row(0)
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything that owns named parameters. Visiting order is deterministic.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.grad.fill(0.0));
    }

    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }

    fn named_tensors(&self) -> Vec<(String, Array2<f64>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, p| out.push((name, p.value.clone())));
        out
    }

    /// Overwrites every parameter from `tensors`, checking shapes.
    fn load_tensors(&mut self, tensors: &BTreeMap<String, Array2<f64>>) -> Result<(), NnError> {
        let mut err = None;
        self.visit_mut("", &mut |name, p| {
            if err.is_some() {
                return;
            }
            match tensors.get(&name) {
                None => err = Some(NnError::MissingTensor(name)),
                Some(t) if t.dim() != p.value.dim() => {
                    err = Some(NnError::ShapeMismatch {
                        name,
                        expected: p.shape().to_vec(),
                        found: t.shape().to_vec(),
                    })
                }
                Some(t) => p.value.assign(t),
            }
        });
        err.map_or(Ok(()), Err)
    }
}

/// Glorot-uniform matrix.
pub fn glorot<R: Rng>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

pub fn normal_init<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Matrix with orthonormal columns (or rows, when wider than tall), from
/// Gram-Schmidt on a Gaussian draw.
pub fn orthogonal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let transpose = cols > rows;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut m = normal_init(r, c, 1.0, rng);
    for j in 0..c {
        for k in 0..j {
            let dot = m.column(j).dot(&m.column(k));
            let prev = m.column(k).to_owned();
            m.column_mut(j).scaled_add(-dot, &prev);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt().max(1e-12);
        m.column_mut(j).mapv_inplace(|v| v / norm);
    }
    if transpose {
        m.reversed_axes().as_standard_layout().to_owned()
    } else {
        m
    }
}

/// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, &t) in targets.iter().enumerate() {
        loss -= probs[[i, t]].max(1e-300).ln();
        grad[[i, t]] -= 1.0;
    }
    grad.mapv_inplace(|g| g / n as f64);
    (loss / n as f64, grad)
}

pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let s = row.sum();
        row.mapv_inplace(|e| e / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_is_orthonormal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for (r, c) in [(16, 16), (32, 8), (8, 32)] {
            let m = orthogonal(r, c, &mut rng);
            let g = if r >= c { m.t().dot(&m) } else { m.dot(&m.t()) };
            for ((i, j), &v) in g.indexed_iter() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = ndarray::array![[0.3, -1.2, 2.0], [1.0, 1.0, 0.5]];
        let targets = [2, 0];
        let (_, g) = softmax_cross_entropy(logits.view(), &targets);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut up = logits.clone();
                up[[i, j]] += h;
                let mut dn = logits.clone();
                dn[[i, j]] -= h;
                let num = (softmax_cross_entropy(up.view(), &targets).0 - softmax_cross_entropy(dn.view(), &targets).0) / (2.0 * h);
                assert!((num - g[[i, j]]).abs() < 1e-8);
            }
        }
    }
}
