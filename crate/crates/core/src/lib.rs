//! Timbre classification from short log-mel patches.
//!
//! The crate covers the whole pipeline:
//!
//! ```text
//! WAV -> resample 22050 Hz -> STFT (1024/512, Hann) -> 128-band mel -> log, [0,1]
//!     -> onset trim + 22-frame crop -> per-bin standardization
//!     -> Freq. Attention (multi-head self-attention over frames + FC)
//!        or Freq. FC (per-frame FC + ReLU + FC)
//!     -> cross-entropy / Adam training -> weighted P/R/F1
//! ```
//!
//! All model math runs on [`tensor::Graph`], a small reverse-mode tape with
//! explicit per-operation backward rules.

pub mod dataset;
pub mod dsp;
pub mod eval;
pub mod models;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use dataset::{ClassTable, SampleRecord, Split, SplitPlan};
pub use dsp::{AudioClip, DspParams, LogMelPatch, NormStats};
pub use eval::{ConfusionMatrix, EvalReport};
pub use models::{Model, ModelKind, ModelSpec, ParamSet};
pub use rng::Rng;
pub use tensor::{Graph, Tensor, Var};
pub use trainer::{TrainConfig, TrainLog};

/// Number of target classes.
pub const N_CLASSES: usize = 20;
/// Mel bands, also the attention embedding width.
pub const N_MELS: usize = 128;
/// Frames per patch, also the attention sequence length.
pub const N_FRAMES: usize = 22;
