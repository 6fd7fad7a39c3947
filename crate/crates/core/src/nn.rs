//! Layers: linear, scaled dot-product attention, multi-head self-attention
//! and the classification loss. Forward passes are recorded on a
//! [`Graph`], which supplies the backward rules.
//!
//! Parameter structs (`*Params`) own tensors; `*Vars` are the same
//! parameters bound onto a graph for one forward/backward pass.

use crate::rng::Rng;
use crate::tensor::{Graph, Tensor, TensorError, Var};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{heads} heads do not divide embedding width {d_model}")]
    InvalidHeadCount { d_model: usize, heads: usize },
}

/// Glorot-uniform bound for a `[fan_out × fan_in]` weight.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// `[out × in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl LinearParams {
    /// Glorot-uniform weight, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self::glorot_with_gain(in_dim, out_dim, 1.0, rng)
    }

    /// Glorot-uniform with the bound multiplied by `gain`.
    pub fn glorot_with_gain(in_dim: usize, out_dim: usize, gain: f64, rng: &mut Rng) -> Self {
        Self {
            weight: Tensor::uniform(&[out_dim, in_dim], gain * glorot_limit(in_dim, out_dim), rng),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> LinearVars {
        LinearVars {
            weight: g.leaf(self.weight.clone().with_requires_grad(trainable)),
            bias: g.leaf(self.bias.clone().with_requires_grad(trainable)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

/// `y = x·Wᵀ + b` over the trailing dimension.
pub fn linear_forward(g: &mut Graph, p: &LinearVars, x: Var) -> Result<Var, NnError> {
    Ok(g.linear(x, p.weight, Some(p.bias))?)
}

/// Four `d_model × d_model` projections with biases, split into `heads`
/// contiguous column blocks of width `d_model / heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub query: LinearParams,
    pub key: LinearParams,
    pub value: LinearParams,
    pub output: LinearParams,
    pub heads: usize,
}

impl AttentionParams {
    pub fn glorot(d_model: usize, heads: usize, rng: &mut Rng) -> Result<Self, NnError> {
        check_heads(d_model, heads)?;
        Ok(Self {
            query: LinearParams::glorot(d_model, d_model, rng),
            key: LinearParams::glorot(d_model, d_model, rng),
            value: LinearParams::glorot(d_model, d_model, rng),
            output: LinearParams::glorot(d_model, d_model, rng),
            heads,
        })
    }

    pub fn d_model(&self) -> usize {
        self.query.in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.query.param_count()
            + self.key.param_count()
            + self.value.param_count()
            + self.output.param_count()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> AttentionVars {
        AttentionVars {
            query: self.query.bind(g, trainable),
            key: self.key.bind(g, trainable),
            value: self.value.bind(g, trainable),
            output: self.output.bind(g, trainable),
            heads: self.heads,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub query: LinearVars,
    pub key: LinearVars,
    pub value: LinearVars,
    pub output: LinearVars,
    pub heads: usize,
}

fn check_heads(d_model: usize, heads: usize) -> Result<(), NnError> {
    if heads == 0 || !d_model.is_multiple_of(heads) {
        return Err(NnError::InvalidHeadCount { d_model, heads });
    }
    Ok(())
}

/// Attention weights of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    /// Post-softmax `[T × T]` weights, one per head.
    pub per_head: Vec<Tensor>,
    /// Elementwise mean of `per_head`.
    pub averaged: Tensor,
    /// Unscaled scores `q·kᵀ` per head.
    pub raw_scores: Option<Vec<Tensor>>,
}

impl AttentionTrace {
    pub fn new(per_head: Vec<Tensor>, raw_scores: Option<Vec<Tensor>>) -> Self {
        let h = per_head.len() as f64;
        let shape = per_head[0].shape().to_vec();
        let averaged = Tensor::from_fn(&shape, |i| {
            per_head.iter().map(|w| w.data()[i]).sum::<f64>() / h
        });
        Self {
            per_head,
            averaged,
            raw_scores,
        }
    }

    pub fn heads(&self) -> usize {
        self.per_head.len()
    }

    pub fn seq_len(&self) -> usize {
        self.averaged.shape()[0]
    }
}

struct AttentionParts {
    output: Var,
    weights: Var,
    scores: Var,
}

fn attention_parts(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<AttentionParts, NnError> {
    let (sq, sk, sv) = (g.shape(q).to_vec(), g.shape(k).to_vec(), g.shape(v).to_vec());
    if sq.len() != 2 || sk.len() != 2 || sv.len() != 2 || sq != sk || sv[0] != sq[0] {
        return Err(TensorError::ShapeMismatch {
            op: "scaled_dot_product_attention",
            detail: format!("q {sq:?}, k {sk:?}, v {sv:?}"),
        }
        .into());
    }
    let d_k = sq[1] as f64;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / d_k.sqrt());
    let weights = g.softmax_rows(scaled);
    let output = g.matmul(weights, v)?;
    Ok(AttentionParts {
        output,
        weights,
        scores,
    })
}

/// `softmax(q·kᵀ / √d_k)·v`. Returns the output `[T × d_v]` and the
/// `[T × T]` weight node.
pub fn scaled_dot_product_attention(
    g: &mut Graph,
    q: Var,
    k: Var,
    v: Var,
) -> Result<(Var, Var), NnError> {
    let parts = attention_parts(g, q, k, v)?;
    Ok((parts.output, parts.weights))
}

/// Multi-head self-attention over a stack of sequences.
///
/// `x` is `[n·seq_len × d_model]`: `n` sequences of `seq_len` rows each
/// (a single `[seq_len × d_model]` sequence is `n = 1`). The projections run
/// once over the whole stack; attention runs per sequence and per head.
/// Returns the `[n·seq_len × d_model]` output and one trace per sequence.
pub fn multi_head_attention(
    g: &mut Graph,
    p: &AttentionVars,
    x: Var,
    seq_len: usize,
) -> Result<(Var, Vec<AttentionTrace>), NnError> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 2 || seq_len == 0 || !shape[0].is_multiple_of(seq_len) {
        return Err(TensorError::ShapeMismatch {
            op: "multi_head_attention",
            detail: format!("input {shape:?} with sequence length {seq_len}"),
        }
        .into());
    }
    let d_model = shape[1];
    check_heads(d_model, p.heads)?;
    let d_k = d_model / p.heads;
    let n_seq = shape[0] / seq_len;

    let q = linear_forward(g, &p.query, x)?;
    let k = linear_forward(g, &p.key, x)?;
    let v = linear_forward(g, &p.value, x)?;

    let mut seq_outputs = Vec::with_capacity(n_seq);
    let mut traces = Vec::with_capacity(n_seq);
    for s in 0..n_seq {
        let (qs, ks, vs) = if n_seq == 1 {
            (q, k, v)
        } else {
            (
                g.slice(q, 0, s * seq_len, seq_len)?,
                g.slice(k, 0, s * seq_len, seq_len)?,
                g.slice(v, 0, s * seq_len, seq_len)?,
            )
        };
        let mut head_outputs = Vec::with_capacity(p.heads);
        let mut weights = Vec::with_capacity(p.heads);
        let mut scores = Vec::with_capacity(p.heads);
        for h in 0..p.heads {
            let (qh, kh, vh) = if p.heads == 1 {
                (qs, ks, vs)
            } else {
                (
                    g.slice(qs, 1, h * d_k, d_k)?,
                    g.slice(ks, 1, h * d_k, d_k)?,
                    g.slice(vs, 1, h * d_k, d_k)?,
                )
            };
            let parts = attention_parts(g, qh, kh, vh)?;
            head_outputs.push(parts.output);
            weights.push(g.value(parts.weights).clone());
            scores.push(g.value(parts.scores).clone());
        }
        let concat = if p.heads == 1 {
            head_outputs[0]
        } else {
            g.concat_lastdim(&head_outputs)?
        };
        seq_outputs.push(concat);
        traces.push(AttentionTrace::new(weights, Some(scores)));
    }
    let stacked = if n_seq == 1 {
        seq_outputs[0]
    } else {
        g.concat(&seq_outputs, 0)?
    };
    let out = linear_forward(g, &p.output, stacked)?;
    Ok((out, traces))
}

/// Mean categorical cross-entropy of `[b × C]` logits.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var, NnError> {
    Ok(g.cross_entropy(logits, labels)?)
}
