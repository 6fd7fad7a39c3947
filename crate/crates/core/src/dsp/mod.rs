//! Audio front-end: file → fixed-size normalized log-mel patch.
//!
//! ```text
//! load_wav -> resample(22050) -> stft_magnitude(1024, 512, Hann)
//!          -> log_mel(128 bands, 32.7..8000 Hz) -> trim_and_crop(0.1, 22)
//!          -> normalize_patch(train statistics)
//! ```
//!
//! Every stage is a pure function of its inputs, so the same file and
//! parameters always give bit-identical patches.

mod cache;
mod features;
mod mel;
mod resample;
mod stft;
mod wav;

pub use cache::{read_cache, read_stats, write_cache, write_stats, CacheEntry, FeatureCache};
pub use features::{
    denormalize_patch, fit_norm_stats, log_mel, normalize_patch, trim_and_crop, LogMelPatch,
    LogMelSpectrogram, NormStats, STD_FLOOR,
};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub use resample::resample;
pub use stft::{hann_window, stft_magnitude};
pub use wav::{load_wav, write_wav_f32, write_wav_i16};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty clip")]
    EmptyClip,
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no frame exceeds the onset threshold")]
    NoOnset,
    #[error("no patches to fit statistics on")]
    EmptyCollection,
    #[error("patch is already normalized")]
    AlreadyNormalized,
    #[error("malformed feature file: {0}")]
    CacheFormat(String),
}

/// Decoded mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }
}

/// Front-end parameters. Defaults are the classifier's input settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspParams {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub onset_threshold: f64,
    pub frames: usize,
}

impl Default for DspParams {
    fn default() -> Self {
        Self {
            sample_rate: 22_050,
            window_len: 1024,
            hop: 512,
            n_mels: 128,
            fmin: 32.7,
            fmax: 8000.0,
            onset_threshold: 0.1,
            frames: 22,
        }
    }
}

/// Reusable front-end: holds the filterbank for one parameter set.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    params: DspParams,
    filterbank: MelFilterbank,
}

impl FrontEnd {
    pub fn new(params: DspParams) -> Result<Self, DspError> {
        let filterbank = mel_filterbank(
            params.n_mels,
            params.fmin,
            params.fmax,
            params.sample_rate,
            params.window_len,
        )?;
        Ok(Self { params, filterbank })
    }

    pub fn params(&self) -> &DspParams {
        &self.params
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Clip → scaled log-mel spectrogram at the working sample rate.
    pub fn spectrogram(&self, clip: &AudioClip) -> Result<LogMelSpectrogram, DspError> {
        let clip = resample(clip, self.params.sample_rate);
        let mag = stft_magnitude(&clip, self.params.window_len, self.params.hop)?;
        let mut spec = log_mel(&mag, &self.filterbank)?;
        spec.frame_hop_s = self.params.hop as f64 / self.params.sample_rate as f64;
        Ok(spec)
    }

    /// Clip → unnormalized patch.
    pub fn patch(&self, clip: &AudioClip) -> Result<LogMelPatch, DspError> {
        let spec = self.spectrogram(clip)?;
        trim_and_crop(&spec, self.params.onset_threshold, self.params.frames)
    }

    pub fn patch_from_file(&self, path: &Path) -> Result<LogMelPatch, DspError> {
        self.patch(&load_wav(path)?)
    }
}
