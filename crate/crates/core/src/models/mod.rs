//! The two classifiers.
//!
//! * **Freq. Attention**: each `[128 × 22]` patch is read as a sequence of
//!   22 frames with 128-dim embeddings, passed through one multi-head
//!   self-attention block (`att1`), flattened and mapped to 20 logits (`fc`).
//! * **Freq. FC**: a shared `128 → 128` layer (`fc1`) applied to every frame,
//!   ReLU, then flatten and `2816 → 20` (`fc2`).
//!
//! Flattening is frequency-major: the `[22 × 128]` sequence output is
//! transposed back to `[128 × 22]` before the row-major flatten, so input
//! bin `f` at frame `t` always lands at position `f·22 + t`.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};

use serde::{Deserialize, Serialize};

use crate::nn::{
    self, AttentionTrace, AttentionVars, LinearParams, LinearVars, NnError,
};
use crate::rng::Rng;
use crate::tensor::{Graph, Tensor, TensorError, Var};
use crate::{N_CLASSES, N_FRAMES, N_MELS};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("operation needs a Freq. Attention model")]
    WrongModelKind,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint has {found} parameters, spec expects {expected}")]
    ParamCountMismatch { expected: usize, found: usize },
}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Nn(NnError::Tensor(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FreqAttention,
    FreqFc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Attention heads; ignored for Freq. FC.
    pub heads: usize,
    pub n_classes: usize,
    pub n_mels: usize,
    pub n_frames: usize,
}

impl ModelSpec {
    pub fn attention(heads: usize) -> Self {
        Self {
            kind: ModelKind::FreqAttention,
            heads,
            n_classes: N_CLASSES,
            n_mels: N_MELS,
            n_frames: N_FRAMES,
        }
    }

    pub fn fc() -> Self {
        Self {
            kind: ModelKind::FreqFc,
            heads: 0,
            n_classes: N_CLASSES,
            n_mels: N_MELS,
            n_frames: N_FRAMES,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_classes == 0 || self.n_mels == 0 || self.n_frames == 0 {
            return Err(ModelError::InvalidSpec(format!("{self:?}")));
        }
        if self.kind == ModelKind::FreqAttention
            && (self.heads == 0 || !self.n_mels.is_multiple_of(self.heads))
        {
            return Err(NnError::InvalidHeadCount {
                d_model: self.n_mels,
                heads: self.heads,
            }
            .into());
        }
        Ok(())
    }

    /// Short label used in reports and file names, e.g. `attention-h8`.
    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::FreqAttention => format!("attention-h{}", self.heads),
            ModelKind::FreqFc => "fc".to_string(),
        }
    }

    /// Parameter names and shapes in canonical order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (m, flat, c) = (self.n_mels, self.n_mels * self.n_frames, self.n_classes);
        let entries: Vec<(&str, Vec<usize>)> = match self.kind {
            ModelKind::FreqAttention => vec![
                ("att1.w_q", vec![m, m]),
                ("att1.b_q", vec![m]),
                ("att1.w_k", vec![m, m]),
                ("att1.b_k", vec![m]),
                ("att1.w_v", vec![m, m]),
                ("att1.b_v", vec![m]),
                ("att1.w_o", vec![m, m]),
                ("att1.b_o", vec![m]),
                ("fc.weight", vec![c, flat]),
                ("fc.bias", vec![c]),
            ],
            ModelKind::FreqFc => vec![
                ("fc1.weight", vec![m, m]),
                ("fc1.bias", vec![m]),
                ("fc2.weight", vec![c, flat]),
                ("fc2.bias", vec![c]),
            ],
        };
        entries
            .into_iter()
            .map(|(n, s)| (n.to_string(), s))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Named parameter tensors in canonical layer order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Parameters under a layer prefix such as `att1` or `fc2`.
    pub fn layer_count(&self, layer: &str) -> usize {
        let prefix = format!("{layer}.");
        self.entries
            .iter()
            .filter(|(n, _)| n.starts_with(&prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Rounds every value to the nearest `f32`, the storage precision.
    pub fn round_to_f32(&mut self) {
        for (_, t) in &mut self.entries {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Parameters bound onto a graph, by name.
#[derive(Debug, Clone, Default)]
pub struct BoundParams {
    vars: Vec<(String, Var)>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var, ModelError> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    /// Swaps in a different node for one parameter (used by gradient checks).
    pub fn replace(&mut self, name: &str, var: Var) -> Result<(), ModelError> {
        let slot = self
            .vars
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))?;
        slot.1 = var;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }

    fn linear(&self, layer: &str) -> Result<LinearVars, ModelError> {
        Ok(LinearVars {
            weight: self.get(&format!("{layer}.weight"))?,
            bias: self.get(&format!("{layer}.bias"))?,
        })
    }

    fn attention(&self, layer: &str, heads: usize) -> Result<AttentionVars, ModelError> {
        let lin = |w: &str, b: &str| -> Result<LinearVars, ModelError> {
            Ok(LinearVars {
                weight: self.get(&format!("{layer}.{w}"))?,
                bias: self.get(&format!("{layer}.{b}"))?,
            })
        };
        Ok(AttentionVars {
            query: lin("w_q", "b_q")?,
            key: lin("w_k", "b_k")?,
            value: lin("w_v", "b_v")?,
            output: lin("w_o", "b_o")?,
            heads,
        })
    }
}

#[derive(Debug)]
pub struct ForwardOutput {
    /// `[b × n_classes]`
    pub logits: Var,
    /// One per sample for Freq. Attention, empty for Freq. FC.
    pub traces: Vec<AttentionTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
}

/// Init gain of the output layer. At gain 1 the 2816-wide layer produces
/// logits with variance near 1 and an initial loss well above `ln C`.
pub const CLASSIFIER_GAIN: f64 = 0.1;

fn classifier(in_dim: usize, classes: usize, rng: &mut Rng) -> LinearParams {
    LinearParams::glorot_with_gain(in_dim, classes, CLASSIFIER_GAIN, rng)
}

/// Allocates and initializes a model: Glorot-uniform weights (output layer
/// scaled by [`CLASSIFIER_GAIN`]), zero biases.
pub fn build(spec: ModelSpec, rng: &mut Rng) -> Result<Model, ModelError> {
    spec.validate()?;
    let mut entries = Vec::new();
    let mut push_linear = |prefix: &str, w: &str, b: &str, p: LinearParams| {
        entries.push((format!("{prefix}.{w}"), p.weight));
        entries.push((format!("{prefix}.{b}"), p.bias));
    };
    let (m, flat, c) = (spec.n_mels, spec.n_mels * spec.n_frames, spec.n_classes);
    match spec.kind {
        ModelKind::FreqAttention => {
            let att = nn::AttentionParams::glorot(m, spec.heads, rng)?;
            push_linear("att1", "w_q", "b_q", att.query);
            push_linear("att1", "w_k", "b_k", att.key);
            push_linear("att1", "w_v", "b_v", att.value);
            push_linear("att1", "w_o", "b_o", att.output);
            push_linear("fc", "weight", "bias", classifier(flat, c, rng));
        }
        ModelKind::FreqFc => {
            push_linear("fc1", "weight", "bias", LinearParams::glorot(m, m, rng));
            push_linear("fc2", "weight", "bias", classifier(flat, c, rng));
        }
    }
    Ok(Model {
        spec,
        params: ParamSet::new(entries),
    })
}

/// Packs patches (`n_mels·n_frames` values each, frequency-major) into a
/// `[b × 1 × n_mels × n_frames]` batch.
pub fn batch_tensor(patches: &[&[f32]], n_mels: usize, n_frames: usize) -> Result<Tensor, TensorError> {
    let mut data = Vec::with_capacity(patches.len() * n_mels * n_frames);
    for p in patches {
        data.extend(p.iter().map(|&v| v as f64));
    }
    Tensor::new(vec![patches.len(), 1, n_mels, n_frames], data)
}

fn check_input(spec: &ModelSpec, g: &Graph, input: Var) -> Result<usize, ModelError> {
    let s = g.shape(input);
    if s.len() != 4 || s[1] != 1 || s[2] != spec.n_mels || s[3] != spec.n_frames {
        return Err(TensorError::ShapeMismatch {
            op: "model input",
            detail: format!(
                "expected [b, 1, {}, {}], got {s:?}",
                spec.n_mels, spec.n_frames
            ),
        }
        .into());
    }
    Ok(s[0])
}

/// `[b,1,F,T]` → `[b·T, F]`: one row per frame.
fn to_frames(g: &mut Graph, input: Var, b: usize, f: usize, t: usize) -> Result<Var, ModelError> {
    let x = g.reshape(input, &[b, f, t])?;
    let x = g.transpose(x)?;
    Ok(g.reshape(x, &[b * t, f])?)
}

/// `[b·T, F]` → `[b, F·T]`, frequency-major.
fn flatten_frames(g: &mut Graph, x: Var, b: usize, f: usize, t: usize) -> Result<Var, ModelError> {
    let x = g.reshape(x, &[b, t, f])?;
    let x = g.transpose(x)?;
    Ok(g.reshape(x, &[b, f * t])?)
}

pub fn forward_freq_attention(
    spec: &ModelSpec,
    g: &mut Graph,
    params: &BoundParams,
    input: Var,
) -> Result<ForwardOutput, ModelError> {
    if spec.kind != ModelKind::FreqAttention {
        return Err(ModelError::WrongModelKind);
    }
    let b = check_input(spec, g, input)?;
    let (f, t) = (spec.n_mels, spec.n_frames);
    let seq = to_frames(g, input, b, f, t)?;
    let att = params.attention("att1", spec.heads)?;
    let (attended, traces) = nn::multi_head_attention(g, &att, seq, t)?;
    let flat = flatten_frames(g, attended, b, f, t)?;
    let logits = nn::linear_forward(g, &params.linear("fc")?, flat)?;
    Ok(ForwardOutput { logits, traces })
}

pub fn forward_freq_fc(
    spec: &ModelSpec,
    g: &mut Graph,
    params: &BoundParams,
    input: Var,
) -> Result<ForwardOutput, ModelError> {
    if spec.kind != ModelKind::FreqFc {
        return Err(ModelError::InvalidSpec("expected a Freq. FC spec".into()));
    }
    let b = check_input(spec, g, input)?;
    let (f, t) = (spec.n_mels, spec.n_frames);
    let frames = to_frames(g, input, b, f, t)?;
    let hidden = nn::linear_forward(g, &params.linear("fc1")?, frames)?;
    let hidden = g.relu(hidden);
    let flat = flatten_frames(g, hidden, b, f, t)?;
    let logits = nn::linear_forward(g, &params.linear("fc2")?, flat)?;
    Ok(ForwardOutput {
        logits,
        traces: Vec::new(),
    })
}

impl Model {
    pub fn build(spec: ModelSpec, rng: &mut Rng) -> Result<Self, ModelError> {
        build(spec, rng)
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        BoundParams {
            vars: self
                .params
                .iter()
                .map(|(n, t)| {
                    (
                        n.to_string(),
                        g.leaf(t.clone().with_requires_grad(trainable)),
                    )
                })
                .collect(),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        params: &BoundParams,
        input: Var,
    ) -> Result<ForwardOutput, ModelError> {
        match self.spec.kind {
            ModelKind::FreqAttention => forward_freq_attention(&self.spec, g, params, input),
            ModelKind::FreqFc => forward_freq_fc(&self.spec, g, params, input),
        }
    }

    /// Inference-only forward; returns `[b × n_classes]` logits.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(batch.clone());
        let out = self.forward(&mut g, &bound, x)?;
        Ok(g.value(out.logits).clone())
    }

    /// Mean cross-entropy over the batch and its gradient for every
    /// parameter, in [`ParamSet`] order.
    pub fn loss_and_grads(
        &self,
        batch: &Tensor,
        labels: &[usize],
    ) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, true);
        let x = g.constant(batch.clone());
        let out = self.forward(&mut g, &bound, x)?;
        let loss = nn::cross_entropy(&mut g, out.logits, labels)?;
        let grads = g.backward(loss)?;
        let per_param = bound
            .iter()
            .map(|(_, v)| grads.get(v).map(|s| s.to_vec()).unwrap_or_default())
            .collect();
        Ok((g.value(loss).data()[0], per_param))
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(batch.clone());
        let out = self.forward(&mut g, &bound, x)?;
        let loss = nn::cross_entropy(&mut g, out.logits, labels)?;
        Ok(g.value(loss).data()[0])
    }
}

/// The `att1` trace for one `[n_mels × n_frames]` patch.
pub fn attention_trace(model: &Model, patch: &[f32]) -> Result<AttentionTrace, ModelError> {
    if model.spec.kind != ModelKind::FreqAttention {
        return Err(ModelError::WrongModelKind);
    }
    let batch = batch_tensor(&[patch], model.spec.n_mels, model.spec.n_frames)?;
    let mut g = Graph::new();
    let bound = model.bind(&mut g, false);
    let x = g.constant(batch);
    let mut out = forward_freq_attention(&model.spec, &mut g, &bound, x)?;
    Ok(out.traces.remove(0))
}
