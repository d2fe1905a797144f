use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Zip};
use rand::Rng;
use rayon::prelude::*;

use super::{join, Module, Param};

/// Fully connected layer with PyTorch weight layout `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(weight: Array2<f64>, bias: Array2<f64>) -> Self {
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.value.t()) + &self.bias.value
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
        self.weight.grad += &dy.t().dot(&x);
        self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.value)
    }
}

impl Module for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// 1-D convolution along time with "same" zero padding over `[B, T, C]`
/// input. Kernel layout is `[kernel * c_in, c_out]`, tap-major.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    pub kernel: usize,
    pub c_in: usize,
}

pub struct ConvCache {
    cols: Vec<Array2<f64>>,
}

impl Conv1d {
    pub fn new(weight: Array2<f64>, bias: Array2<f64>, kernel: usize, c_in: usize) -> Self {
        assert_eq!(weight.nrows(), kernel * c_in);
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
            kernel,
            c_in,
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.value.ncols()
    }

    fn im2col(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let t_len = x.nrows();
        let left = (self.kernel - 1) / 2;
        let mut cols = Array2::zeros((t_len, self.kernel * self.c_in));
        for t in 0..t_len {
            for j in 0..self.kernel {
                let src = t as isize + j as isize - left as isize;
                if src >= 0 && (src as usize) < t_len {
                    cols.slice_mut(s![t, j * self.c_in..(j + 1) * self.c_in])
                        .assign(&x.row(src as usize));
                }
            }
        }
        cols
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, ConvCache) {
        let (b, t_len, _) = x.dim();
        let c_out = self.c_out();
        let results: Vec<(Array2<f64>, Array2<f64>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let cols = self.im2col(x.index_axis(Axis(0), i));
                let y = cols.dot(&self.weight.value) + &self.bias.value;
                (cols, y)
            })
            .collect();
        let mut out = Array3::zeros((b, t_len, c_out));
        let mut cols = Vec::with_capacity(b);
        for (i, (c, y)) in results.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), i).assign(&y);
            cols.push(c);
        }
        (out, ConvCache { cols })
    }

    pub fn backward(&mut self, cache: &ConvCache, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t_len, _) = dy.dim();
        let left = (self.kernel - 1) / 2;
        let w = &self.weight.value;
        let parts: Vec<(Array2<f64>, Array2<f64>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let dyi = dy.index_axis(Axis(0), i);
                let dw = cache.cols[i].t().dot(&dyi);
                let dcols = dyi.dot(&w.t());
                let mut dx = Array2::zeros((t_len, self.c_in));
                for t in 0..t_len {
                    for j in 0..self.kernel {
                        let src = t as isize + j as isize - left as isize;
                        if src >= 0 && (src as usize) < t_len {
                            let mut row = dx.row_mut(src as usize);
                            row += &dcols.slice(s![t, j * self.c_in..(j + 1) * self.c_in]);
                        }
                    }
                }
                (dw, dx)
            })
            .collect();
        let mut dx = Array3::zeros((b, t_len, self.c_in));
        for (i, (dw, dxi)) in parts.into_iter().enumerate() {
            self.weight.grad += &dw;
            dx.index_axis_mut(Axis(0), i).assign(&dxi);
        }
        let db = dy.sum_axis(Axis(0)).sum_axis(Axis(0));
        self.bias.grad.row_mut(0).scaled_add(1.0, &db);
        dx
    }
}

impl Module for Conv1d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Batch normalization over the channel axis of `[B, T, C]`; statistics
/// pool batch and time.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
}

pub struct BnCache {
    x_hat: Array3<f64>,
    inv_std: Array1<f64>,
    mean: Array1<f64>,
    var_unbiased: Array1<f64>,
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Array2::ones((1, channels))),
            beta: Param::zeros(1, channels),
            running_mean: Param::buffer(Array2::zeros((1, channels))),
            running_var: Param::buffer(Array2::ones((1, channels))),
            momentum: 0.1,
            eps: 1e-3,
        }
    }

    pub fn forward_eval(&self, x: &Array3<f64>) -> Array3<f64> {
        let mean = self.running_mean.row();
        let scale = Zip::from(&self.gamma.row())
            .and(&self.running_var.row())
            .map_collect(|g, v| g / (v + self.eps).sqrt());
        let mut y = x.clone();
        for mut lane in y.lanes_mut(Axis(2)) {
            Zip::from(&mut lane)
                .and(&mean)
                .and(&scale)
                .and(&self.beta.row())
                .for_each(|v, m, s, b| *v = (*v - m) * s + b);
        }
        y
    }

    pub fn forward_train(&self, x: &Array3<f64>) -> (Array3<f64>, BnCache) {
        let (b, t, c) = x.dim();
        let n = (b * t) as f64;
        let flat = x.view().into_shape_with_order((b * t, c)).expect("contiguous");
        let mean = flat.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = &flat - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat_flat = &centered * &inv_std;
        let y_flat = &x_hat_flat * &self.gamma.row() + &self.beta.row();
        let var_unbiased = if n > 1.0 { &var * (n / (n - 1.0)) } else { var.clone() };
        let x_hat = x_hat_flat.into_shape_with_order((b, t, c)).expect("shape");
        let y = y_flat.into_shape_with_order((b, t, c)).expect("shape");
        (
            y,
            BnCache {
                x_hat,
                inv_std,
                mean,
                var_unbiased,
            },
        )
    }

    pub fn update_running(&mut self, cache: &BnCache) {
        let m = self.momentum;
        let mut rm = self.running_mean.value.row_mut(0);
        rm.zip_mut_with(&cache.mean, |r, &b| *r = (1.0 - m) * *r + m * b);
        let mut rv = self.running_var.value.row_mut(0);
        rv.zip_mut_with(&cache.var_unbiased, |r, &b| *r = (1.0 - m) * *r + m * b);
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t, c) = dy.dim();
        let n = (b * t) as f64;
        let dy_flat = dy.view().into_shape_with_order((b * t, c)).expect("contiguous");
        let xh = cache.x_hat.view().into_shape_with_order((b * t, c)).expect("contiguous");
        let dgamma = (&dy_flat * &xh).sum_axis(Axis(0));
        let dbeta = dy_flat.sum_axis(Axis(0));
        self.gamma.grad.row_mut(0).scaled_add(1.0, &dgamma);
        self.beta.grad.row_mut(0).scaled_add(1.0, &dbeta);
        let dxhat = &dy_flat * &self.gamma.row();
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &xh).sum_axis(Axis(0));
        let dx = (&dxhat * n - &sum_dxhat - &(&xh * &sum_dxhat_xhat)) * &(&cache.inv_std / n);
        dx.into_shape_with_order((b, t, c)).expect("shape")
    }
}

impl Module for BatchNorm1d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
        f(join(prefix, "running_mean"), &self.running_mean);
        f(join(prefix, "running_var"), &self.running_var);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
        f(join(prefix, "running_mean"), &mut self.running_mean);
        f(join(prefix, "running_var"), &mut self.running_var);
    }
}

/// Non-overlapping max pooling along time; trailing frames that do not fill
/// a window are dropped.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool1d {
    pub pool: usize,
}

pub struct PoolCache {
    argmax: Array3<usize>,
    t_in: usize,
}

impl MaxPool1d {
    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, PoolCache) {
        let (b, t, c) = x.dim();
        let t_out = t / self.pool;
        let mut y = Array3::zeros((b, t_out, c));
        let mut argmax = Array3::zeros((b, t_out, c));
        for i in 0..b {
            for o in 0..t_out {
                for ch in 0..c {
                    let mut best = o * self.pool;
                    for k in best + 1..(o + 1) * self.pool {
                        if x[[i, k, ch]] > x[[i, best, ch]] {
                            best = k;
                        }
                    }
                    y[[i, o, ch]] = x[[i, best, ch]];
                    argmax[[i, o, ch]] = best;
                }
            }
        }
        (y, PoolCache { argmax, t_in: t })
    }

    pub fn backward(&self, cache: &PoolCache, dy: &Array3<f64>) -> Array3<f64> {
        let (b, t_out, c) = dy.dim();
        let mut dx = Array3::zeros((b, cache.t_in, c));
        for i in 0..b {
            for o in 0..t_out {
                for ch in 0..c {
                    dx[[i, cache.argmax[[i, o, ch]], ch]] += dy[[i, o, ch]];
                }
            }
        }
        dx
    }
}

pub fn relu<D: ndarray::Dimension>(x: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<D: ndarray::Dimension>(
    y: &ndarray::Array<f64, D>,
    dy: &ndarray::Array<f64, D>,
) -> ndarray::Array<f64, D> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(y).for_each(|d, &v| {
        if v <= 0.0 {
            *d = 0.0
        }
    });
    dx
}

/// Inverted-dropout mask: entries are 0 or `1 / (1 - rate)`.
pub fn dropout_mask<D: ndarray::Dimension, R: Rng>(shape: D, rate: f64, rng: &mut R) -> ndarray::Array<f64, D> {
    let keep = 1.0 - rate;
    ndarray::Array::from_shape_simple_fn(shape, || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

/// `[B, T, C]` → `[B, C]`.
pub fn global_avg_pool(x: &Array3<f64>) -> Array2<f64> {
    x.mean_axis(Axis(1)).expect("non-empty time axis")
}

pub fn global_avg_pool_backward(dy: &Array2<f64>, t: usize) -> Array3<f64> {
    let (b, c) = dy.dim();
    let scaled = dy / t as f64;
    let mut dx = Array3::zeros((b, t, c));
    for mut lane in dx.axis_iter_mut(Axis(1)) {
        lane.assign(&scaled);
    }
    dx
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Layer normalization over the last axis of `[L, D]`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub weight: Param,
    pub bias: Param,
    pub eps: f64,
}

pub struct LnCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize, eps: f64) -> Self {
        Self {
            weight: Param::new(Array2::ones((1, dim))),
            bias: Param::zeros(1, dim),
            eps,
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, LnCache) {
        let d = x.ncols() as f64;
        let mean = x.mean_axis(Axis(1)).expect("non-empty");
        let centered = &x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = &centered * &inv_std.view().insert_axis(Axis(1));
        let y = &x_hat * &self.weight.value + &self.bias.value;
        (y, LnCache { x_hat, inv_std })
    }

    pub fn backward(&mut self, cache: &LnCache, dy: ArrayView2<f64>) -> Array2<f64> {
        let d = dy.ncols() as f64;
        self.weight.grad += &(&dy * &cache.x_hat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = &dy * &self.weight.value;
        let sum = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
        let sum_x = (&dxhat * &cache.x_hat).sum_axis(Axis(1)).insert_axis(Axis(1));
        let inner = &dxhat * d - &sum - &(&cache.x_hat * &sum_x);
        inner * &(&cache.inv_std / d).insert_axis(Axis(1))
    }
}

impl Module for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Row lookup table `[vocab, dim]`.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub weight: Param,
}

impl Embedding {
    pub fn new(table: Array2<f64>) -> Self {
        Self { weight: Param::new(table) }
    }

    pub fn forward(&self, ids: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((ids.len(), self.weight.value.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).assign(&self.weight.value.row(id));
        }
        out
    }

    pub fn backward(&mut self, ids: &[usize], dy: ArrayView2<f64>) {
        for (i, &id) in ids.iter().enumerate() {
            let mut row = self.weight.grad.row_mut(id);
            row += &dy.row(i);
        }
    }
}

impl Module for Embedding {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "weight"), &self.weight);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand3(b: usize, t: usize, c: usize, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_simple_fn((b, t, c), || rng.random_range(-1.0..1.0))
    }

    /// Checks d(sum(y * probe))/dx against central differences.
    fn check_input_grad(f: impl Fn(&Array3<f64>) -> Array3<f64>, x: &Array3<f64>, analytic: &Array3<f64>, probe: &Array3<f64>) {
        let h = 1e-5;
        for idx in [[0, 0, 0], [0, 3, 1], [1, 5, 2], [1, x.dim().1 - 1, 0]] {
            let mut up = x.clone();
            up[idx] += h;
            let mut dn = x.clone();
            dn[idx] -= h;
            let num = ((f(&up) * probe).sum() - (f(&dn) * probe).sum()) / (2.0 * h);
            assert!((num - analytic[idx]).abs() < 1e-6 * (1.0 + num.abs()), "{idx:?}: {num} vs {}", analytic[idx]);
        }
    }

    #[test]
    fn conv_same_padding_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv1d::new(super::super::glorot(5 * 3, 4, 15, 20, &mut rng), Array2::zeros((1, 4)), 5, 3);
        let x = rand3(2, 9, 3, 2);
        let (y, cache) = conv.forward(&x);
        assert_eq!(y.dim(), (2, 9, 4));
        let probe = rand3(2, 9, 4, 3);
        let dx = conv.backward(&cache, &probe);
        let c2 = conv.clone();
        check_input_grad(|x| c2.forward(x).0, &x, &dx, &probe);
    }

    #[test]
    fn batchnorm_gradient() {
        let mut bn = BatchNorm1d::new(3);
        bn.gamma.value = ndarray::array![[1.5, 0.5, -2.0]];
        let x = rand3(2, 7, 3, 4);
        let (y, cache) = bn.forward_train(&x);
        let flat = y.view().into_shape_with_order((14, 3)).unwrap();
        let m = flat.mean_axis(Axis(0)).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12));
        let probe = rand3(2, 7, 3, 5);
        let dx = bn.backward(&cache, &probe);
        let b2 = bn.clone();
        check_input_grad(|x| b2.forward_train(x).0, &x, &dx, &probe);
    }

    #[test]
    fn maxpool_routes_gradient_to_argmax() {
        let x = Array3::from_shape_vec((1, 5, 1), vec![1.0, 3.0, 2.0, 0.0, 9.0]).unwrap();
        let pool = MaxPool1d { pool: 2 };
        let (y, cache) = pool.forward(&x);
        assert_eq!(y.as_slice().unwrap(), &[3.0, 2.0]);
        let dx = pool.backward(&cache, &Array3::from_elem((1, 2, 1), 1.0));
        assert_eq!(dx.as_slice().unwrap(), &[0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn layernorm_gradient() {
        let mut ln = LayerNorm::new(6, 1e-12);
        ln.weight.value = ndarray::array![[1.0, 2.0, 0.5, -1.0, 1.0, 3.0]];
        let x3 = rand3(1, 4, 6, 9);
        let x = x3.index_axis(Axis(0), 0).to_owned();
        let (_, cache) = ln.forward(x.view());
        let probe = rand3(1, 4, 6, 10).index_axis(Axis(0), 0).to_owned();
        let dx = ln.backward(&cache, probe.view());
        let h = 1e-6;
        for (i, j) in [(0, 0), (1, 3), (3, 5)] {
            let mut up = x.clone();
            up[[i, j]] += h;
            let mut dn = x.clone();
            dn[[i, j]] -= h;
            let num = ((ln.forward(up.view()).0 * &probe).sum() - (ln.forward(dn.view()).0 * &probe).sum()) / (2.0 * h);
            assert!((num - dx[[i, j]]).abs() < 1e-6, "{num} vs {}", dx[[i, j]]);
        }
    }

    #[test]
    fn gelu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let num = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_mask_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = dropout_mask(ndarray::Ix2(100, 100), 0.2, &mut rng);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        let mean = m.mean().unwrap();
        assert!((mean - 1.0).abs() < 0.05);
    }
}
