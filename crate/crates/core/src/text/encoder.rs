//! DistilBERT-style encoder with a sequence-classification head, parameter
//! names matching the published checkpoints. Each sequence is processed at
//! its true length, which is equivalent to padding with an attention mask.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    dropout_mask, gelu, gelu_grad, join, normal_init, relu, relu_backward, softmax_rows, Embedding, LayerNorm,
    LnCache, Linear, Module, Param,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub hidden_dim: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_head_dropout")]
    pub seq_classif_dropout: f64,
    #[serde(default = "default_activation")]
    pub activation: String,
    /// Std of the normal initialization for fresh weights.
    #[serde(default = "default_initializer_range")]
    pub initializer_range: f64,
}

fn default_dropout() -> f64 {
    0.1
}
fn default_head_dropout() -> f64 {
    0.2
}
fn default_activation() -> String {
    "gelu".into()
}
fn default_initializer_range() -> f64 {
    0.02
}

impl EncoderConfig {
    /// A small encoder for training from scratch.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            dim: 32,
            n_layers: 2,
            n_heads: 4,
            hidden_dim: 64,
            max_position_embeddings: 128,
            dropout: 0.1,
            seq_classif_dropout: 0.2,
            activation: "gelu".into(),
            initializer_range: 0.1,
        }
    }

    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dim == 0 || self.n_heads == 0 || self.dim % self.n_heads != 0 {
            out.push(format!("dim {} must be a positive multiple of n_heads {}", self.dim, self.n_heads));
        }
        if self.vocab_size == 0 || self.hidden_dim == 0 || self.max_position_embeddings == 0 {
            out.push("vocab_size, hidden_dim and max_position_embeddings must be positive".into());
        }
        if self.activation != "gelu" {
            out.push(format!("unsupported activation {:?}", self.activation));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.seq_classif_dropout) {
            out.push("dropout rates must be in [0, 1)".into());
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    sa_ln: LayerNorm,
    lin1: Linear,
    lin2: Linear,
    out_ln: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct DistilBertClassifier {
    pub config: EncoderConfig,
    word: Embedding,
    position: Embedding,
    emb_ln: LayerNorm,
    blocks: Vec<Block>,
    pre_classifier: Linear,
    classifier: Linear,
}

struct BlockCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_mask: Option<Array2<f64>>,
    sa: LnCache,
    h1: Array2<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
    out: LnCache,
}

pub struct SeqCache {
    ids: Vec<usize>,
    emb: LnCache,
    emb_mask: Option<Array2<f64>>,
    blocks: Vec<BlockCache>,
    cls: Array2<f64>,
    pooled: Array2<f64>,
    head_mask: Option<Array2<f64>>,
    head_in: Array2<f64>,
}

fn linear<R: Rng>(out: usize, inp: usize, std: f64, rng: &mut R) -> Linear {
    Linear::new(normal_init(out, inp, std, rng), Array2::zeros((1, out)))
}

fn mask(rng: &mut Option<&mut ChaCha8Rng>, shape: (usize, usize), rate: f64) -> Option<Array2<f64>> {
    match rng {
        Some(r) if rate > 0.0 => Some(dropout_mask(ndarray::Ix2(shape.0, shape.1), rate, *r)),
        _ => None,
    }
}

fn apply(x: Array2<f64>, m: &Option<Array2<f64>>) -> Array2<f64> {
    match m {
        Some(m) => x * m,
        None => x,
    }
}

impl DistilBertClassifier {
    /// Random normal initialization with std `initializer_range`.
    pub fn init<R: Rng>(config: &EncoderConfig, n_classes: usize, rng: &mut R) -> Self {
        let d = config.dim;
        let std = config.initializer_range;
        let blocks = (0..config.n_layers)
            .map(|_| Block {
                q: linear(d, d, std, rng),
                k: linear(d, d, std, rng),
                v: linear(d, d, std, rng),
                out: linear(d, d, std, rng),
                sa_ln: LayerNorm::new(d, 1e-12),
                lin1: linear(config.hidden_dim, d, std, rng),
                lin2: linear(d, config.hidden_dim, std, rng),
                out_ln: LayerNorm::new(d, 1e-12),
            })
            .collect();
        Self {
            config: config.clone(),
            word: Embedding::new(normal_init(config.vocab_size, d, std, rng)),
            position: Embedding::new(normal_init(config.max_position_embeddings, d, std, rng)),
            emb_ln: LayerNorm::new(d, 1e-12),
            blocks,
            pre_classifier: linear(d, d, std, rng),
            classifier: linear(n_classes, d, std, rng),
        }
    }

    /// Re-initializes the two head layers.
    pub fn reset_head<R: Rng>(&mut self, rng: &mut R) {
        let d = self.config.dim;
        let n = self.classifier.out_features();
        let std = self.config.initializer_range;
        self.pre_classifier = linear(d, d, std, rng);
        self.classifier = linear(n, d, std, rng);
    }

    /// Logits `[1, n_classes]` for one token sequence. Passing an RNG
    /// enables dropout.
    pub fn forward(&self, ids: &[usize], mut rng: Option<&mut ChaCha8Rng>) -> (Array2<f64>, SeqCache) {
        let len = ids.len();
        let d = self.config.dim;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let rate = self.config.dropout;
        let positions: Vec<usize> = (0..len).collect();
        let emb = self.word.forward(ids) + self.position.forward(&positions);
        let (x, emb_cache) = self.emb_ln.forward(emb.view());
        let emb_mask = mask(&mut rng, (len, d), rate);
        let mut x = apply(x, &emb_mask);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let q = b.q.forward(x.view());
            let k = b.k.forward(x.view());
            let v = b.v.forward(x.view());
            let mut ctx = Array2::zeros((len, d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                let p = softmax_rows(scores.view());
                ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
                probs.push(p);
            }
            let attn_mask = mask(&mut rng, (len, d), rate);
            let attn = apply(b.out.forward(ctx.view()), &attn_mask);
            let (h1, sa) = b.sa_ln.forward((&attn + &x).view());
            let z1 = b.lin1.forward(h1.view());
            let a1 = z1.mapv(gelu);
            let ffn_mask = mask(&mut rng, (len, d), rate);
            let f = apply(b.lin2.forward(a1.view()), &ffn_mask);
            let (h2, out) = b.out_ln.forward((&f + &h1).view());
            caches.push(BlockCache { x, q, k, v, probs, ctx, attn_mask, sa, h1, z1, a1, ffn_mask, out });
            x = h2;
        }
        let cls = x.slice(s![0..1, ..]).to_owned();
        let pooled = relu(&self.pre_classifier.forward(cls.view()));
        let head_mask = mask(&mut rng, (1, d), self.config.seq_classif_dropout);
        let head_in = apply(pooled.clone(), &head_mask);
        let logits = self.classifier.forward(head_in.view());
        let cache = SeqCache { ids: ids.to_vec(), emb: emb_cache, emb_mask, blocks: caches, cls, pooled, head_mask, head_in };
        (logits, cache)
    }

    pub fn backward(&mut self, cache: &SeqCache, dlogits: ArrayView2<f64>) {
        let len = cache.ids.len();
        let d = self.config.dim;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dhead = apply(self.classifier.backward(cache.head_in.view(), dlogits), &cache.head_mask);
        let dpre = relu_backward(&cache.pooled, &dhead);
        let dcls = self.pre_classifier.backward(cache.cls.view(), dpre.view());
        let mut dx = Array2::zeros((len, d));
        dx.row_mut(0).assign(&dcls.row(0));
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let dsum2 = b.out_ln.backward(&c.out, dx.view());
            let df = apply(dsum2.clone(), &c.ffn_mask);
            let da1 = b.lin2.backward(c.a1.view(), df.view());
            let dz1 = da1 * &c.z1.mapv(gelu_grad);
            let dh1 = dsum2 + b.lin1.backward(c.h1.view(), dz1.view());
            let dsum1 = b.sa_ln.backward(&c.sa, dh1.view());
            let dattn = apply(dsum1.clone(), &c.attn_mask);
            let dctx = b.out.backward(c.ctx.view(), dattn.view());
            let mut dq = Array2::zeros((len, d));
            let mut dk = Array2::zeros((len, d));
            let mut dv = Array2::zeros((len, d));
            for (h, p) in c.probs.iter().enumerate() {
                let cols = s![.., h * dh..(h + 1) * dh];
                let dctx_h = dctx.slice(cols);
                let dp = dctx_h.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
                let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
                let ds = (p * &(&dp - &row_dot)) * scale;
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            dx = dsum1
                + b.q.backward(c.x.view(), dq.view())
                + b.k.backward(c.x.view(), dk.view())
                + b.v.backward(c.x.view(), dv.view());
        }
        let dx = apply(dx, &cache.emb_mask);
        let demb = self.emb_ln.backward(&cache.emb, dx.view());
        self.word.backward(&cache.ids, demb.view());
        let positions: Vec<usize> = (0..len).collect();
        self.position.backward(&positions, demb.view());
    }
}

impl Module for DistilBertClassifier {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        let base = join(prefix, "distilbert");
        let emb = join(&base, "embeddings");
        self.word.visit(&join(&emb, "word_embeddings"), f);
        self.position.visit(&join(&emb, "position_embeddings"), f);
        self.emb_ln.visit(&join(&emb, "LayerNorm"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(&base, &format!("transformer.layer.{i}"));
            b.q.visit(&join(&p, "attention.q_lin"), f);
            b.k.visit(&join(&p, "attention.k_lin"), f);
            b.v.visit(&join(&p, "attention.v_lin"), f);
            b.out.visit(&join(&p, "attention.out_lin"), f);
            b.sa_ln.visit(&join(&p, "sa_layer_norm"), f);
            b.lin1.visit(&join(&p, "ffn.lin1"), f);
            b.lin2.visit(&join(&p, "ffn.lin2"), f);
            b.out_ln.visit(&join(&p, "output_layer_norm"), f);
        }
        self.pre_classifier.visit(&join(prefix, "pre_classifier"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        let base = join(prefix, "distilbert");
        let emb = join(&base, "embeddings");
        self.word.visit_mut(&join(&emb, "word_embeddings"), f);
        self.position.visit_mut(&join(&emb, "position_embeddings"), f);
        self.emb_ln.visit_mut(&join(&emb, "LayerNorm"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(&base, &format!("transformer.layer.{i}"));
            b.q.visit_mut(&join(&p, "attention.q_lin"), f);
            b.k.visit_mut(&join(&p, "attention.k_lin"), f);
            b.v.visit_mut(&join(&p, "attention.v_lin"), f);
            b.out.visit_mut(&join(&p, "attention.out_lin"), f);
            b.sa_ln.visit_mut(&join(&p, "sa_layer_norm"), f);
            b.lin1.visit_mut(&join(&p, "ffn.lin1"), f);
            b.lin2.visit_mut(&join(&p, "ffn.lin2"), f);
            b.out_ln.visit_mut(&join(&p, "output_layer_norm"), f);
        }
        self.pre_classifier.visit_mut(&join(prefix, "pre_classifier"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}
