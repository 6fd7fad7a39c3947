//! Windowed-sinc polyphase resampler.

use super::AudioClip;

const TAPS: usize = 64;
const HALF: isize = (TAPS / 2) as isize;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Blackman window over `(-HALF, HALF)`.
fn window(x: f64) -> f64 {
    let r = x / HALF as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let a = std::f64::consts::PI * r;
    0.42 + 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
}

/// Resamples to `target_rate` with a 64-tap windowed-sinc kernel.
///
/// Output length is `round(len · target / source)`; equal rates return the
/// input unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> AudioClip {
    assert!(target_rate > 0, "target rate must be positive");
    if clip.sample_rate == target_rate || clip.samples.is_empty() {
        return AudioClip::new(clip.samples.clone(), target_rate);
    }
    let g = gcd(clip.sample_rate as u64, target_rate as u64);
    // output step in input samples is down/up
    let up = target_rate as u64 / g;
    let down = clip.sample_rate as u64 / g;
    let cutoff = ROLLOFF * (target_rate as f64 / clip.sample_rate as f64).min(1.0);

    // one kernel per output phase p/up
    let phases: Vec<[f64; TAPS]> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut k = [0.0; TAPS];
            for (t, slot) in k.iter_mut().enumerate() {
                let x = (t as isize - HALF + 1) as f64 - frac;
                *slot = cutoff * sinc(cutoff * x) * window(x);
            }
            k
        })
        .collect();

    let n_in = clip.samples.len() as u64;
    let n_out = ((n_in * up) as f64 / down as f64).round() as usize;
    let src = &clip.samples;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let base = (pos / up) as isize;
        let kernel = &phases[(pos % up) as usize];
        let mut acc = 0.0;
        for (t, &k) in kernel.iter().enumerate() {
            let i = base + t as isize - HALF + 1;
            if i >= 0 && (i as usize) < src.len() {
                acc += k * src[i as usize] as f64;
            }
        }
        out.push(acc as f32);
    }
    AudioClip::new(out, target_rate)
}
