//! Slaney-style mel scale and unit-peak triangular filterbank.

use super::{DspError, Matrix};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn logstep() -> f64 {
    6.4f64.ln() / 27.0
}

/// Linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz >= MIN_LOG_HZ {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / logstep()
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel >= MIN_LOG_MEL {
        MIN_LOG_HZ * (logstep() * (mel - MIN_LOG_MEL)).exp()
    } else {
        F_SP * mel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `[n_mels × n_fft/2+1]`
    pub weights: Matrix,
    /// Center frequency of each filter, Hz.
    pub centers: Vec<f64>,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.rows
    }

    pub fn n_bins(&self) -> usize {
        self.weights.cols
    }

    /// First and last FFT bin with nonzero weight in filter `m`.
    pub fn support(&self, m: usize) -> (usize, usize) {
        let row = self.weights.row(m);
        let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
        let last = row.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        (first, last)
    }
}

/// `n_mels` triangles whose edges and centers are `n_mels + 2` points
/// equally spaced in mel between `fmin` and `fmax`. Each triangle peaks at 1.
pub fn mel_filterbank(
    n_mels: usize,
    fmin: f64,
    fmax: f64,
    sample_rate: u32,
    n_fft: usize,
) -> Result<MelFilterbank, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) || n_mels == 0 || n_fft < 2 {
        return Err(DspError::InvalidRange(format!(
            "fmin {fmin}, fmax {fmax}, nyquist {nyquist}, {n_mels} mels, n_fft {n_fft}"
        )));
    }
    let bins = n_fft / 2 + 1;
    let fft_freqs: Vec<f64> = (0..bins)
        .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
        .collect();
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, &f) in fft_freqs.iter().enumerate() {
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            weights.set(m, k, rising.min(falling).max(0.0));
        }
        if weights.row(m).iter().all(|&w| w == 0.0) {
            return Err(DspError::InvalidRange(format!(
                "mel filter {m} ({left:.1}..{right:.1} Hz) falls between FFT bins"
            )));
        }
    }
    Ok(MelFilterbank {
        weights,
        centers: edges[1..=n_mels].to_vec(),
        fmin,
        fmax,
        sample_rate,
    })
}
