use ndarray::{s, Array2, Array3};
use rand_chacha::ChaCha8Rng;

use super::config::{AudioModelConfig, AudioModelKind};
use crate::nn::{
    dropout_mask, glorot, global_avg_pool, global_avg_pool_backward, join, relu, relu_backward, BatchNorm1d, BnCache,
    Conv1d, ConvCache, Linear, Lstm, LstmCache, MaxPool1d, Module, Param, PoolCache,
};

/// Training mode draws dropout masks and uses batch statistics.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    fn mask<D: ndarray::Dimension>(&mut self, shape: D, rate: f64) -> Option<ndarray::Array<f64, D>> {
        match self {
            Mode::Train(rng) if rate > 0.0 => Some(dropout_mask(shape, rate, *rng)),
            _ => None,
        }
    }

    fn training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

fn apply_mask<D: ndarray::Dimension>(x: ndarray::Array<f64, D>, mask: &Option<ndarray::Array<f64, D>>) -> ndarray::Array<f64, D> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

#[derive(Debug, Clone)]
pub struct CnnBlock {
    pub conv: Conv1d,
    pub bn: BatchNorm1d,
    pub pool: MaxPool1d,
}

#[derive(Debug, Clone)]
pub struct CnnNet {
    pub blocks: Vec<CnnBlock>,
    pub dense: Linear,
    pub head: Linear,
    pub dropout: f64,
}

struct BlockCache {
    conv: ConvCache,
    bn: Option<BnCache>,
    act: Array3<f64>,
    pool: PoolCache,
    mask: Option<Array3<f64>>,
}

pub struct CnnCache {
    blocks: Vec<BlockCache>,
    pooled_len: usize,
    gap: Array2<f64>,
    hidden: Array2<f64>,
}

impl CnnNet {
    fn build(cfg: &AudioModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let (_, mut c_in) = cfg.input_shape();
        let mut blocks = Vec::new();
        for b in &cfg.conv_blocks {
            let w = glorot(b.kernel * c_in, b.filters, b.kernel * c_in, b.kernel * b.filters, rng);
            blocks.push(CnnBlock {
                conv: Conv1d::new(w, Array2::zeros((1, b.filters)), b.kernel, c_in),
                bn: BatchNorm1d::new(b.filters),
                pool: MaxPool1d { pool: b.pool },
            });
            c_in = b.filters;
        }
        let dense = Linear::new(glorot(cfg.dense_width, c_in, c_in, cfg.dense_width, rng), Array2::zeros((1, cfg.dense_width)));
        let head = Linear::new(
            glorot(cfg.n_classes, cfg.dense_width, cfg.dense_width, cfg.n_classes, rng),
            Array2::zeros((1, cfg.n_classes)),
        );
        Self { blocks, dense, head, dropout: cfg.dropout }
    }

    fn forward(&self, x: &Array3<f64>, mode: &mut Mode) -> (Array2<f64>, CnnCache) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (z, conv) = block.conv.forward(&h);
            let (z, bn) = if mode.training() {
                let (y, c) = block.bn.forward_train(&z);
                (y, Some(c))
            } else {
                (block.bn.forward_eval(&z), None)
            };
            let act = relu(&z);
            let (pooled, pool) = block.pool.forward(&act);
            let mask = mode.mask(pooled.raw_dim(), self.dropout);
            h = apply_mask(pooled, &mask);
            caches.push(BlockCache { conv, bn, act, pool, mask });
        }
        let gap = global_avg_pool(&h);
        let hidden = relu(&self.dense.forward(gap.view()));
        let logits = self.head.forward(hidden.view());
        (logits, CnnCache { blocks: caches, pooled_len: h.dim().1, gap, hidden })
    }

    fn backward(&mut self, cache: &CnnCache, dlogits: &Array2<f64>) -> Array3<f64> {
        let dhidden = self.head.backward(cache.hidden.view(), dlogits.view());
        let dpre = relu_backward(&cache.hidden, &dhidden);
        let dgap = self.dense.backward(cache.gap.view(), dpre.view());
        let mut dh = global_avg_pool_backward(&dgap, cache.pooled_len);
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let dpooled = apply_mask(dh, &bc.mask);
            let dact = block.pool.backward(&bc.pool, &dpooled);
            let dz = relu_backward(&bc.act, &dact);
            let dz = block.bn.backward(bc.bn.as_ref().expect("backward requires a training-mode forward"), &dz);
            dh = block.conv.backward(&bc.conv, &dz);
        }
        dh
    }

    fn update_running_stats(&mut self, cache: &CnnCache) {
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            if let Some(bn) = &bc.bn {
                block.bn.update_running(bn);
            }
        }
    }
}

impl Module for CnnNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(prefix, &format!("blocks.{i}"));
            b.conv.visit(&join(&p, "conv"), f);
            b.bn.visit(&join(&p, "bn"), f);
        }
        self.dense.visit(&join(prefix, "dense"), f);
        self.head.visit(&join(prefix, "head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(prefix, &format!("blocks.{i}"));
            b.conv.visit_mut(&join(&p, "conv"), f);
            b.bn.visit_mut(&join(&p, "bn"), f);
        }
        self.dense.visit_mut(&join(prefix, "dense"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Stacked LSTM; the last layer's final hidden state feeds the head.
#[derive(Debug, Clone)]
pub struct LstmNet {
    pub layers: Vec<Lstm>,
    pub head: Linear,
    pub dropout: f64,
}

pub struct LstmNetCache {
    layers: Vec<(LstmCache, Option<Array3<f64>>)>,
    seq_len: usize,
    last: Array2<f64>,
    last_mask: Option<Array2<f64>>,
}

impl LstmNet {
    fn build(cfg: &AudioModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let (_, mut d) = cfg.input_shape();
        let mut layers = Vec::new();
        for &units in &cfg.lstm_units {
            layers.push(Lstm::init(d, units, rng));
            d = units;
        }
        let head = Linear::new(glorot(cfg.n_classes, d, d, cfg.n_classes, rng), Array2::zeros((1, cfg.n_classes)));
        Self { layers, head, dropout: cfg.dropout }
    }

    fn forward(&self, x: &Array3<f64>, mode: &mut Mode) -> (Array2<f64>, LstmNetCache) {
        let n = self.layers.len();
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(n);
        for (i, layer) in self.layers.iter().enumerate() {
            let (seq, c) = layer.forward(&h);
            let mask = if i + 1 < n { mode.mask(seq.raw_dim(), self.dropout) } else { None };
            h = apply_mask(seq, &mask);
            caches.push((c, mask));
        }
        let t = h.dim().1;
        let last = h.slice(s![.., t - 1, ..]).to_owned();
        let last_mask = mode.mask(last.raw_dim(), self.dropout);
        let last = apply_mask(last, &last_mask);
        let logits = self.head.forward(last.view());
        (logits, LstmNetCache { layers: caches, seq_len: t, last, last_mask })
    }

    fn backward(&mut self, cache: &LstmNetCache, dlogits: &Array2<f64>) -> Array3<f64> {
        let dlast = apply_mask(self.head.backward(cache.last.view(), dlogits.view()), &cache.last_mask);
        let (b, hd) = dlast.dim();
        let mut dseq = Array3::zeros((b, cache.seq_len, hd));
        dseq.slice_mut(s![.., cache.seq_len - 1, ..]).assign(&dlast);
        for (layer, (c, mask)) in self.layers.iter_mut().zip(&cache.layers).rev() {
            let d = apply_mask(dseq, mask);
            dseq = layer.backward(c, &d);
        }
        dseq
    }
}

impl Module for LstmNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("lstm.{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("lstm.{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[derive(Debug, Clone)]
pub enum Net {
    Cnn(CnnNet),
    Lstm(LstmNet),
}

pub enum NetCache {
    Cnn(CnnCache),
    Lstm(LstmNetCache),
}

impl Net {
    pub fn build(cfg: &AudioModelConfig, rng: &mut ChaCha8Rng) -> Self {
        match cfg.kind {
            AudioModelKind::Cnn => Net::Cnn(CnnNet::build(cfg, rng)),
            AudioModelKind::Lstm => Net::Lstm(LstmNet::build(cfg, rng)),
        }
    }

    /// `x` is `[B, L, C]`; returns logits `[B, n_classes]`.
    pub fn forward(&self, x: &Array3<f64>, mode: &mut Mode) -> (Array2<f64>, NetCache) {
        match self {
            Net::Cnn(n) => {
                let (l, c) = n.forward(x, mode);
                (l, NetCache::Cnn(c))
            }
            Net::Lstm(n) => {
                let (l, c) = n.forward(x, mode);
                (l, NetCache::Lstm(c))
            }
        }
    }

    pub fn backward(&mut self, cache: &NetCache, dlogits: &Array2<f64>) -> Array3<f64> {
        match (self, cache) {
            (Net::Cnn(n), NetCache::Cnn(c)) => n.backward(c, dlogits),
            (Net::Lstm(n), NetCache::Lstm(c)) => n.backward(c, dlogits),
            _ => unreachable!("cache produced by a different network kind"),
        }
    }

    pub fn update_running_stats(&mut self, cache: &NetCache) {
        if let (Net::Cnn(n), NetCache::Cnn(c)) = (self, cache) {
            n.update_running_stats(c);
        }
    }

    pub fn head_mut(&mut self) -> &mut Linear {
        match self {
            Net::Cnn(n) => &mut n.head,
            Net::Lstm(n) => &mut n.head,
        }
    }
}

impl Module for Net {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        match self {
            Net::Cnn(n) => n.visit(prefix, f),
            Net::Lstm(n) => n.visit(prefix, f),
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        match self {
            Net::Cnn(n) => n.visit_mut(prefix, f),
            Net::Lstm(n) => n.visit_mut(prefix, f),
        }
    }
}

