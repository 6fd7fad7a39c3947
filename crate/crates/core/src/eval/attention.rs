use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::EvalError;
use crate::nn::AttentionTrace;
use crate::tensor::Tensor;

/// Writes a row-major matrix as plain comma-separated values.
pub fn write_csv_matrix(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<(), EvalError> {
    if data.len() != rows * cols {
        return Err(EvalError::Format(format!("{} values for {rows}x{cols}", data.len())));
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in 0..rows {
        let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_csv_matrix`]; returns `(rows, cols, data)`.
pub fn read_csv_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>), EvalError> {
    let text = std::fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(EvalError::Format(format!("{}: ragged row {rows}", path.display())))
            }
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), data))
}

/// Averaged weights applied to the patch along the frame axis:
/// `act[b, t] = Σ_s patch[b, s] · avg[t, s]`, giving `n_mels × T`.
pub fn activation_map(trace: &AttentionTrace, patch: &[f32], n_mels: usize) -> Result<Tensor, EvalError> {
    let t = trace.seq_len();
    if patch.len() != n_mels * t {
        return Err(EvalError::Format(format!(
            "patch has {} values, expected {n_mels}x{t}",
            patch.len()
        )));
    }
    let avg = trace.averaged.data();
    Ok(Tensor::from_fn(&[n_mels, t], |i| {
        let (b, tt) = (i / t, i % t);
        (0..t).map(|s| patch[b * t + s] as f64 * avg[tt * t + s]).sum()
    }))
}

/// Writes `<stem>.head<i>.csv` per head, `<stem>.avg.csv` and `<stem>.act.csv`.
pub fn export_attention(
    trace: &AttentionTrace,
    patch: &[f32],
    n_mels: usize,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let t = trace.seq_len();
    let mut written = Vec::new();
    for (i, w) in trace.per_head.iter().enumerate() {
        let p = dir.join(format!("{stem}.head{i}.csv"));
        write_csv_matrix(&p, t, t, w.data())?;
        written.push(p);
    }
    let p = dir.join(format!("{stem}.avg.csv"));
    write_csv_matrix(&p, t, t, trace.averaged.data())?;
    written.push(p);
    let act = activation_map(trace, patch, n_mels)?;
    let p = dir.join(format!("{stem}.act.csv"));
    write_csv_matrix(&p, n_mels, t, act.data())?;
    written.push(p);
    Ok(written)
}
