//! Parameterized layers over [`Graph`]: linear maps, MLPs, layer norm and
//! pre-norm attention blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, ParamId, ParamStore, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Gelu => g.gelu(x),
        }
    }
}

/// Glorot-uniform weight matrix.
fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_vec(
        fan_in,
        fan_out,
        (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect(),
    )
}

/// `y = x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(rng, in_dim, out_dim));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

/// Linear layers with an activation between consecutive layers (none after
/// the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dims: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(store, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect();
        Mlp { layers, activation }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var) -> Var {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, store, x);
            if i < last {
                x = self.activation.apply(g, x);
            }
        }
        x
    }

    /// Like [`Mlp::forward`] but also activates the last layer's output.
    pub fn forward_activated(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let y = self.forward(g, store, x);
        self.activation.apply(g, y)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(1, dim, 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(1, dim)),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Multi-head scaled dot-product attention with an output projection.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

/// Intermediate values of one attention call, for inspection.
#[derive(Clone, Debug)]
pub struct AttentionTrace {
    pub output: Var,
    /// Per-group, per-head attention matrices (group-major).
    pub weights: Vec<Var>,
    /// Concatenated head outputs before the output projection.
    pub heads: Var,
}

impl MultiHeadAttention {
    /// Queries have width `dim`; keys and values are projected from `kv_dim`.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, kv_dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "width {dim} not divisible by {heads} heads");
        MultiHeadAttention {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{name}.key"), kv_dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), kv_dim, dim, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, rng),
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, context: Var, groups: usize) -> Var {
        self.forward_traced(g, store, x, context, groups).output
    }

    /// Attention restricted to `groups` equal consecutive blocks: query block
    /// `i` only attends to context block `i`. `groups == 1` is plain attention.
    pub fn forward_traced(&self, g: &mut Graph, store: &ParamStore, x: Var, context: Var, groups: usize) -> AttentionTrace {
        let (nq, _) = g.shape(x);
        let (nk, _) = g.shape(context);
        assert!(groups > 0 && nq % groups == 0 && nk % groups == 0, "attention groups must split the tokens evenly");
        let q = self.query.forward(g, store, x);
        let k = self.key.forward(g, store, context);
        let v = self.value.forward(g, store, context);
        let dim = self.query.out_dim;
        let dk = dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let (gq, gk) = (nq / groups, nk / groups);
        let mut weights = Vec::with_capacity(groups * self.heads);
        let mut blocks = Vec::with_capacity(groups);
        for gi in 0..groups {
            let (qg, kg, vg) = if groups == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_rows(q, gi * gq, gq),
                    g.slice_rows(k, gi * gk, gk),
                    g.slice_rows(v, gi * gk, gk),
                )
            };
            let mut head_outs = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let (qh, kh, vh) = if self.heads == 1 {
                    (qg, kg, vg)
                } else {
                    (
                        g.slice_cols(qg, h * dk, dk),
                        g.slice_cols(kg, h * dk, dk),
                        g.slice_cols(vg, h * dk, dk),
                    )
                };
                let scores = g.matmul_t(qh, kh);
                let scores = g.scale(scores, scale);
                let attn = g.softmax(scores);
                weights.push(attn);
                head_outs.push(g.matmul(attn, vh));
            }
            blocks.push(if head_outs.len() == 1 { head_outs[0] } else { g.concat_cols(&head_outs) });
        }
        let heads = if blocks.len() == 1 { blocks[0] } else { g.concat_rows(&blocks) };
        let output = self.output.forward(g, store, heads);
        AttentionTrace { output, weights, heads }
    }
}

/// Two-layer position-wise feed-forward network.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub mlp: Mlp,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, activation: Activation, rng: &mut R) -> Self {
        FeedForward {
            mlp: Mlp::new(store, name, &[dim, hidden, dim], activation, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        self.mlp.forward(g, store, x)
    }
}

/// Pre-norm self-attention block:
/// `x + drop(MHA(LN(x)))`, then `x + drop(FFN(LN(x)))`.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub norm_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl AttentionBlock {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ffn_hidden: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        AttentionBlock {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, dim, heads, rng),
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, ffn_hidden, activation, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, groups: usize) -> Var {
        let h = self.norm_attn.forward(g, store, x);
        let a = self.attn.forward(g, store, h, h, groups);
        let a = g.dropout(a);
        let x = g.add(x, a);
        let h = self.norm_ffn.forward(g, store, x);
        let f = self.ffn.forward(g, store, h);
        let f = g.dropout(f);
        g.add(x, f)
    }
}

/// A stack of [`AttentionBlock`]s followed by a final layer norm.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub blocks: Vec<AttentionBlock>,
    pub norm: LayerNorm,
}

impl Encoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        dim: usize,
        heads: usize,
        ffn_hidden: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Encoder {
            blocks: (0..layers)
                .map(|i| AttentionBlock::new(store, &format!("{name}.{i}"), dim, heads, ffn_hidden, activation, rng))
                .collect(),
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: Var, groups: usize) -> Var {
        for b in &self.blocks {
            x = b.forward(g, store, x, groups);
        }
        self.norm.forward(g, store, x)
    }
}

/// Pre-norm decoder layer: self-attention, cross-attention to `memory`, FFN.
/// Memory is used as given (no normalization) and projected from its own
/// width to the token width by the key/value maps.
#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub norm_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm_cross: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        memory_dim: usize,
        heads: usize,
        ffn_hidden: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        DecoderLayer {
            norm_self: LayerNorm::new(store, &format!("{name}.norm_self"), dim),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), dim, dim, heads, rng),
            norm_cross: LayerNorm::new(store, &format!("{name}.norm_cross"), dim),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), dim, memory_dim, heads, rng),
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, ffn_hidden, activation, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, memory: Var) -> Var {
        let h = self.norm_self.forward(g, store, x);
        let a = self.self_attn.forward(g, store, h, h, 1);
        let a = g.dropout(a);
        let x = g.add(x, a);
        let h = self.norm_cross.forward(g, store, x);
        let c = self.cross_attn.forward(g, store, h, memory, 1);
        let c = g.dropout(c);
        let x = g.add(x, c);
        let h = self.norm_ffn.forward(g, store, x);
        let f = self.ffn.forward(g, store, h);
        let f = g.dropout(f);
        g.add(x, f)
    }
}
