use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;

use super::{glorot, join, orthogonal, Module, Param};

/// Single LSTM layer over `[B, T, D]`, gate order (input, forget, cell,
/// output). Weights: `w_ih [4H, D]`, `w_hh [4H, H]`, `bias [1, 4H]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: Param,
    pub w_hh: Param,
    pub bias: Param,
    pub hidden: usize,
}

pub struct LstmCache {
    x: Array3<f64>,
    /// Activated gates per step, `[T][B, 4H]`.
    gates: Vec<Array2<f64>>,
    /// Cell states; index `t + 1` holds the state after step `t`.
    c: Vec<Array2<f64>>,
    h: Vec<Array2<f64>>,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Lstm {
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_ih = glorot(4 * hidden, input, input, 4 * hidden, rng);
        let mut w_hh = Array2::zeros((4 * hidden, hidden));
        for g in 0..4 {
            w_hh.slice_mut(s![g * hidden..(g + 1) * hidden, ..])
                .assign(&orthogonal(hidden, hidden, rng));
        }
        let mut bias = Array2::zeros((1, 4 * hidden));
        bias.slice_mut(s![0, hidden..2 * hidden]).fill(1.0);
        Self {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            bias: Param::new(bias),
            hidden,
        }
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, LstmCache) {
        let (b, t_len, _) = x.dim();
        let hd = self.hidden;
        let mut h = Array2::zeros((b, hd));
        let mut c = Array2::zeros((b, hd));
        let mut out = Array3::zeros((b, t_len, hd));
        let mut cache = LstmCache {
            x: x.clone(),
            gates: Vec::with_capacity(t_len),
            c: vec![c.clone()],
            h: vec![h.clone()],
        };
        for t in 0..t_len {
            let xt = x.slice(s![.., t, ..]);
            let mut z = xt.dot(&self.w_ih.value.t()) + h.dot(&self.w_hh.value.t()) + &self.bias.value;
            z.slice_mut(s![.., 0..2 * hd]).mapv_inplace(sigmoid);
            z.slice_mut(s![.., 2 * hd..3 * hd]).mapv_inplace(f64::tanh);
            z.slice_mut(s![.., 3 * hd..]).mapv_inplace(sigmoid);
            let i = z.slice(s![.., 0..hd]);
            let f = z.slice(s![.., hd..2 * hd]);
            let g = z.slice(s![.., 2 * hd..3 * hd]);
            let o = z.slice(s![.., 3 * hd..]);
            c = &f * &c + &i * &g;
            h = &o * &c.mapv(f64::tanh);
            out.slice_mut(s![.., t, ..]).assign(&h);
            cache.gates.push(z);
            cache.c.push(c.clone());
            cache.h.push(h.clone());
        }
        (out, cache)
    }

    /// `dh_seq` is the loss gradient w.r.t. every emitted hidden state.
    pub fn backward(&mut self, cache: &LstmCache, dh_seq: &Array3<f64>) -> Array3<f64> {
        let (b, t_len, d) = cache.x.dim();
        let hd = self.hidden;
        let mut dx = Array3::zeros((b, t_len, d));
        let mut dh_next = Array2::<f64>::zeros((b, hd));
        let mut dc_next = Array2::<f64>::zeros((b, hd));
        for t in (0..t_len).rev() {
            let z = &cache.gates[t];
            let i = z.slice(s![.., 0..hd]);
            let f = z.slice(s![.., hd..2 * hd]);
            let g = z.slice(s![.., 2 * hd..3 * hd]);
            let o = z.slice(s![.., 3 * hd..]);
            let c_prev = &cache.c[t];
            let tanh_c = cache.c[t + 1].mapv(f64::tanh);
            let dh = &dh_seq.slice(s![.., t, ..]) + &dh_next;
            let dc = &dc_next + &(&dh * &o * &tanh_c.mapv(|v| 1.0 - v * v));
            let mut dz = Array2::zeros((b, 4 * hd));
            dz.slice_mut(s![.., 0..hd]).assign(&(&dc * &g * &i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., hd..2 * hd]).assign(&(&dc * c_prev * &f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., 2 * hd..3 * hd]).assign(&(&dc * &i * &g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![.., 3 * hd..]).assign(&(&dh * &tanh_c * &o.mapv(|v| v * (1.0 - v))));
            let xt = cache.x.slice(s![.., t, ..]);
            self.w_ih.grad += &dz.t().dot(&xt);
            self.w_hh.grad += &dz.t().dot(&cache.h[t]);
            self.bias.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            dx.slice_mut(s![.., t, ..]).assign(&dz.dot(&self.w_ih.value));
            dh_next = dz.dot(&self.w_hh.value);
            dc_next = &dc * &f;
        }
        dx
    }
}

impl Module for Lstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "w_ih"), &self.w_ih);
        f(join(prefix, "w_hh"), &self.w_hh);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "w_ih"), &mut self.w_ih);
        f(join(prefix, "w_hh"), &mut self.w_hh);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut lstm = Lstm::init(3, 4, &mut rng);
        let x = Array3::from_shape_simple_fn((2, 5, 3), || rng.random_range(-1.0..1.0));
        let probe = Array3::from_shape_simple_fn((2, 5, 4), || rng.random_range(-1.0..1.0));
        let (_, cache) = lstm.forward(&x);
        let dx = lstm.backward(&cache, &probe);
        let loss = |l: &Lstm, x: &Array3<f64>| (l.forward(x).0 * &probe).sum();
        let h = 1e-6;
        for idx in [[0, 0, 0], [1, 2, 1], [0, 4, 2]] {
            let mut up = x.clone();
            up[idx] += h;
            let mut dn = x.clone();
            dn[idx] -= h;
            let num = (loss(&lstm, &up) - loss(&lstm, &dn)) / (2.0 * h);
            assert!((num - dx[idx]).abs() < 1e-7, "dx {num} vs {}", dx[idx]);
        }
        for (r, c) in [(0, 0), (5, 2), (13, 3)] {
            let mut l2 = lstm.clone();
            l2.w_hh.value[[r, c]] += h;
            let up = loss(&l2, &x);
            l2.w_hh.value[[r, c]] -= 2.0 * h;
            let dn = loss(&l2, &x);
            let num = (up - dn) / (2.0 * h);
            assert!((num - lstm.w_hh.grad[[r, c]]).abs() < 1e-7);
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lstm = Lstm::init(2, 3, &mut rng);
        assert_eq!(lstm.bias.value.row(0).to_vec(), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
