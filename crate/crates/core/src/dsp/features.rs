use super::{DspError, Matrix, MelFilterbank};

const LOG_EPS: f64 = 1e-10;
/// Lower bound applied to per-bin standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Log-mel magnitudes min-max scaled to `[0, 1]` per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    /// `[n_mels × T]`
    pub values: Matrix,
    pub frame_hop_s: f64,
}

impl LogMelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.cols
    }
}

/// Fixed-size crop, `n_mels × frames` values, frequency-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelPatch {
    pub values: Vec<f32>,
    pub n_mels: usize,
    pub n_frames: usize,
    /// Source spectrogram column the crop starts at.
    pub onset_frame: usize,
    pub normalized: bool,
}

impl LogMelPatch {
    pub fn get(&self, bin: usize, frame: usize) -> f32 {
        self.values[bin * self.n_frames + frame]
    }
}

/// `scale01(ln(fb · mag + 1e-10))`. A constant input maps to all zeros.
pub fn log_mel(stft_mag: &Matrix, fb: &MelFilterbank) -> Result<LogMelSpectrogram, DspError> {
    if stft_mag.rows != fb.weights.cols {
        return Err(DspError::ShapeMismatch(format!(
            "{} STFT bins for a {}-bin filterbank",
            stft_mag.rows, fb.weights.cols
        )));
    }
    let (n_mels, frames) = (fb.weights.rows, stft_mag.cols);
    let mut out = Matrix::zeros(n_mels, frames);
    for m in 0..n_mels {
        let w = fb.weights.row(m);
        for (k, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let mag_row = stft_mag.row(k);
            let dst = &mut out.data[m * frames..(m + 1) * frames];
            for (d, &s) in dst.iter_mut().zip(mag_row) {
                *d += wk * s;
            }
        }
    }
    for v in &mut out.data {
        *v = (*v + LOG_EPS).ln();
    }
    let min = out.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = out.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    for v in &mut out.data {
        *v = if range > 0.0 { (*v - min) / range } else { 0.0 };
    }
    Ok(LogMelSpectrogram {
        values: out,
        frame_hop_s: 0.0,
    })
}

/// Finds the first column whose maximum exceeds `threshold` and takes
/// `frames` columns from there, zero-padding past the end.
pub fn trim_and_crop(
    spec: &LogMelSpectrogram,
    threshold: f64,
    frames: usize,
) -> Result<LogMelPatch, DspError> {
    let m = &spec.values;
    let onset = (0..m.cols)
        .find(|&c| m.column(c).any(|v| v > threshold))
        .ok_or(DspError::NoOnset)?;
    let mut values = vec![0f32; m.rows * frames];
    for r in 0..m.rows {
        for t in 0..frames {
            let c = onset + t;
            if c < m.cols {
                values[r * frames + t] = m.get(r, c) as f32;
            }
        }
    }
    Ok(LogMelPatch {
        values,
        n_mels: m.rows,
        n_frames: frames,
        onset_frame: onset,
        normalized: false,
    })
}

/// Per-bin mean and standard deviation over all frames of a patch set.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Population statistics per frequency bin, std floored at [`STD_FLOOR`].
pub fn fit_norm_stats<'a, I>(patches: I) -> Result<NormStats, DspError>
where
    I: IntoIterator<Item = &'a LogMelPatch>,
    I::IntoIter: Clone,
{
    let iter = patches.into_iter();
    let first = iter.clone().next().ok_or(DspError::EmptyCollection)?;
    let (n_mels, n_frames) = (first.n_mels, first.n_frames);
    let mut count = 0usize;
    let mut sum = vec![0f64; n_mels];
    for p in iter.clone() {
        if p.normalized {
            return Err(DspError::AlreadyNormalized);
        }
        if p.n_mels != n_mels || p.n_frames != n_frames {
            return Err(DspError::ShapeMismatch(format!(
                "patch {}x{} among {n_mels}x{n_frames}",
                p.n_mels, p.n_frames
            )));
        }
        for (b, row) in p.values.chunks(n_frames).enumerate() {
            sum[b] += row.iter().map(|&v| v as f64).sum::<f64>();
        }
        count += n_frames;
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0f64; n_mels];
    for p in iter {
        for (b, row) in p.values.chunks(n_frames).enumerate() {
            sq[b] += row.iter().map(|&v| (v as f64 - mean[b]).powi(2)).sum::<f64>();
        }
    }
    Ok(NormStats {
        std: sq
            .iter()
            .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
            .collect(),
        mean,
    })
}

/// `(x − mean[bin]) / std[bin]`.
pub fn normalize_patch(patch: &LogMelPatch, stats: &NormStats) -> Result<LogMelPatch, DspError> {
    if patch.normalized {
        return Err(DspError::AlreadyNormalized);
    }
    check_stats(patch, stats)?;
    let mut out = patch.clone();
    for (b, row) in out.values.chunks_mut(patch.n_frames).enumerate() {
        let (m, s) = (stats.mean[b], stats.std[b]);
        for v in row {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
    out.normalized = true;
    Ok(out)
}

/// Inverse of [`normalize_patch`].
pub fn denormalize_patch(patch: &LogMelPatch, stats: &NormStats) -> Result<LogMelPatch, DspError> {
    check_stats(patch, stats)?;
    let mut out = patch.clone();
    for (b, row) in out.values.chunks_mut(patch.n_frames).enumerate() {
        let (m, s) = (stats.mean[b], stats.std[b]);
        for v in row {
            *v = (*v as f64 * s + m) as f32;
        }
    }
    out.normalized = false;
    Ok(out)
}

fn check_stats(patch: &LogMelPatch, stats: &NormStats) -> Result<(), DspError> {
    if stats.mean.len() != patch.n_mels || stats.std.len() != patch.n_mels {
        return Err(DspError::ShapeMismatch(format!(
            "{} bins of statistics for a {}-bin patch",
            stats.mean.len(),
            patch.n_mels
        )));
    }
    Ok(())
}
