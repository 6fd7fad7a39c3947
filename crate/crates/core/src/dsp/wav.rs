use std::path::Path;

use super::{AudioClip, DspError};

fn map_hound(e: hound::Error, path: &Path) -> DspError {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            DspError::FileNotFound(path.to_path_buf())
        }
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            DspError::CorruptHeader(format!("{}: truncated", path.display()))
        }
        hound::Error::IoError(io) => DspError::Io(io),
        hound::Error::FormatError(msg) => DspError::CorruptHeader(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => {
            DspError::UnsupportedEncoding(format!("{}: unsupported WAV format", path.display()))
        }
        other => DspError::UnsupportedEncoding(format!("{}: {other}", path.display())),
    }
}

/// Decodes a PCM WAV file (8/16/24/32-bit integer or 32-bit float) to mono.
///
/// Integer samples are scaled by `2^(bits-1)`; channels are averaged.
pub fn load_wav(path: &Path) -> Result<AudioClip, DspError> {
    if !path.exists() {
        return Err(DspError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(e, path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || spec.sample_rate == 0 {
        return Err(DspError::CorruptHeader(format!(
            "{}: {channels} channels at {} Hz",
            path.display(),
            spec.sample_rate
        )));
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(e, path))?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(|e| map_hound(e, path))?
        }
        (fmt, bits) => {
            return Err(DspError::UnsupportedEncoding(format!(
                "{}: {fmt:?} at {bits} bits",
                path.display()
            )))
        }
    };

    let samples: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| (frame.iter().map(|&v| v as f64).sum::<f64>() / channels as f64) as f32)
            .collect()
    };
    if samples.is_empty() {
        return Err(DspError::EmptyClip);
    }
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes mono 16-bit PCM, clamping to `[-1, 1)`.
pub fn write_wav_i16(path: &Path, clip: &AudioClip) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(e, path))?;
    for &s in &clip.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| map_hound(e, path))?;
    }
    w.finalize().map_err(|e| map_hound(e, path))
}

/// Writes mono 32-bit float WAV.
pub fn write_wav_f32(path: &Path, clip: &AudioClip) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(e, path))?;
    for &s in &clip.samples {
        w.write_sample(s).map_err(|e| map_hound(e, path))?;
    }
    w.finalize().map_err(|e| map_hound(e, path))
}
