use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioClip, DspError, Matrix};

/// Periodic Hann window (the DFT-even form used for spectral analysis).
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

/// Magnitude STFT without centering: frame `t` covers samples
/// `[t·hop, t·hop + window_len)`. Clips shorter than one window are
/// zero-padded to a single frame.
///
/// Returns a `[window_len/2 + 1 × T]` matrix, `T = ⌊(len − window_len)/hop⌋ + 1`.
pub fn stft_magnitude(clip: &AudioClip, window_len: usize, hop: usize) -> Result<Matrix, DspError> {
    if clip.samples.is_empty() {
        return Err(DspError::EmptyClip);
    }
    if hop == 0 || window_len < hop {
        return Err(DspError::InvalidRange(format!(
            "window {window_len} with hop {hop}"
        )));
    }
    let mut samples: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    if samples.len() < window_len {
        samples.resize(window_len, 0.0);
    }
    let frames = (samples.len() - window_len) / hop + 1;
    let bins = window_len / 2 + 1;
    let window = hann_window(window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);

    let mut out = Matrix::zeros(bins, frames);
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    for t in 0..frames {
        let frame = &samples[t * hop..t * hop + window_len];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, c) in buf.iter().take(bins).enumerate() {
            out.set(k, t, c.norm());
        }
    }
    Ok(out)
}
