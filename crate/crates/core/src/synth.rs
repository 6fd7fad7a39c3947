//! Synthetic tone-plus-noise clips with class-dependent pitch range and
//! harmonic profile. Used for smoke tests and demos when the real corpus is
//! not at hand.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::dsp::{write_wav_i16, AudioClip, DspError};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Lowest fundamental, Hz. Class bands span four octaves above it.
    pub base_hz: f64,
    pub harmonics: usize,
    /// Noise amplitude relative to the tone.
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            sample_rate: 22_050,
            duration_s: 0.8,
            base_hz: 110.0,
            harmonics: 8,
            noise: 0.05,
        }
    }
}

fn harmonic_gain(class: usize, k: usize) -> f64 {
    let k = k as f64;
    match class % 3 {
        0 => 1.0 / k,
        1 => {
            if k as usize % 2 == 1 {
                1.0 / k
            } else {
                0.0
            }
        }
        _ => 1.0 / (k * k),
    }
}

/// One clip of class `class` out of `n_classes`.
pub fn class_clip(class: usize, n_classes: usize, rng: &mut Rng, p: &SynthParams) -> AudioClip {
    let sr = p.sample_rate as f64;
    let n = (p.duration_s * sr) as usize;
    let span = 4.0 / n_classes.max(1) as f64;
    let lo = p.base_hz * 2f64.powf(class as f64 * span);
    let f0 = lo * 2f64.powf(rng.uniform_range(0.0, 0.6 * span));
    let gain = rng.uniform_range(0.3, 0.9);
    let delay = (rng.uniform_range(0.02, 0.15) * sr) as usize;
    let attack = 0.01 * sr;
    let decay = rng.uniform_range(2.0, 5.0);
    let phases: Vec<f64> = (0..p.harmonics).map(|_| rng.uniform_range(0.0, 2.0 * PI)).collect();
    let nyquist = sr / 2.0;
    let mut lp = 0.0;
    let samples = (0..n)
        .map(|i| {
            if i < delay {
                return 0.0;
            }
            let t = (i - delay) as f64 / sr;
            let env = ((i - delay) as f64 / attack).min(1.0) * (-decay * t).exp();
            let mut tone = 0.0;
            for (k, ph) in phases.iter().enumerate() {
                let f = f0 * (k + 1) as f64;
                if f < 0.9 * nyquist {
                    tone += harmonic_gain(class, k + 1) * (2.0 * PI * f * t + ph).sin();
                }
            }
            lp += 0.3 * (rng.normal() - lp);
            (gain * env * (0.5 * tone + p.noise * lp)) as f32
        })
        .collect();
    AudioClip::new(samples, p.sample_rate)
}

/// Writes `per_class` clips per name as `<name>/<name>_<i>_synth.wav`.
pub fn write_corpus(
    root: &Path,
    names: &[&str],
    per_class: usize,
    seed: u64,
    p: &SynthParams,
) -> Result<Vec<PathBuf>, DspError> {
    let mut written = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir)?;
        let mut rng = Rng::derive(seed, c as u64);
        for i in 0..per_class {
            let path = dir.join(format!("{name}_{i:03}_synth.wav"));
            write_wav_i16(&path, &class_clip(c, names.len(), &mut rng, p))?;
            written.push(path);
        }
    }
    Ok(written)
}
