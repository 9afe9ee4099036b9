//! Transmission-peak detection with sub-sample refinement.

use super::LockError;

/// How to treat peaks closer than the resolvable separation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergePolicy {
    /// Return an error.
    Error,
    /// Keep the peaks but mark them merged.
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Detection threshold as a fraction of the trace maximum, in (0, 1).
    pub threshold_fraction: f64,
    /// Peaks closer than this (samples) are flagged as merged.
    pub min_separation: f64,
    pub merge_policy: MergePolicy,
    /// Expected peak FWHM in samples. When set, the trace is correlated with
    /// a matching Lorentzian kernel before the maximum search; this brings
    /// the sub-sample jitter down to the information limit of the scan.
    pub matched_fwhm: Option<f64>,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.35,
            min_separation: 40e6 / 3e6,
            merge_policy: MergePolicy::Warn,
            matched_fwhm: None,
        }
    }
}

/// Normalized cross-correlation with a unit-area Lorentzian of the given
/// FWHM (samples); edges renormalized by the in-range kernel weight.
fn matched_smooth(samples: &[f64], fwhm: f64) -> Vec<f64> {
    let half = (3.0 * fwhm).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|j| {
            let u = 2.0 * j as f64 / fwhm;
            1.0 / (1.0 + u * u)
        })
        .collect();
    let n = samples.len() as isize;
    let mut out = vec![0.0; samples.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        let mut norm = 0.0;
        for (kj, &kv) in kernel.iter().enumerate() {
            let idx = i as isize + kj as isize - half;
            if idx >= 0 && idx < n {
                acc += kv * samples[idx as usize];
                norm += kv;
            }
        }
        *slot = acc / norm;
    }
    out
}

/// A detected peak with sub-sample position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Fractional sample index of the maximum.
    pub position: f64,
    pub height: f64,
    /// True if another peak sits within `min_separation`.
    pub merged: bool,
}

/// Thresholded local maxima refined by 3-point quadratic interpolation.
/// Positions are strictly increasing.
pub fn detect_peaks(samples: &[f64], opts: &DetectOptions) -> Result<Vec<Peak>, LockError> {
    if !(opts.threshold_fraction > 0.0 && opts.threshold_fraction < 1.0) {
        return Err(LockError::Config {
            name: "threshold_fraction",
            value: opts.threshold_fraction,
            requirement: "in (0, 1)",
        });
    }
    if samples.len() < 3 {
        return Err(LockError::NoPeaks);
    }
    let smoothed;
    let samples = match opts.matched_fwhm {
        Some(fwhm) if fwhm > 0.0 => {
            smoothed = matched_smooth(samples, fwhm);
            &smoothed[..]
        }
        _ => samples,
    };
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max <= 0.0 {
        return Err(LockError::NoPeaks);
    }
    let threshold = opts.threshold_fraction * max;

    let mut peaks = Vec::new();
    for i in 1..samples.len() - 1 {
        let (a, b, c) = (samples[i - 1], samples[i], samples[i + 1]);
        if b < threshold || b < a || b <= c {
            continue;
        }
        // vertex of the parabola through the three points
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 1e-300 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        peaks.push(Peak {
            position: i as f64 + delta,
            height: b - 0.25 * (a - c) * delta,
            merged: false,
        });
    }
    if peaks.is_empty() {
        return Err(LockError::NoPeaks);
    }
    for i in 1..peaks.len() {
        if peaks[i].position - peaks[i - 1].position < opts.min_separation {
            match opts.merge_policy {
                MergePolicy::Error => {
                    return Err(LockError::MergedPeaks(
                        peaks[i - 1].position,
                        peaks[i].position,
                    ))
                }
                MergePolicy::Warn => {
                    peaks[i - 1].merged = true;
                    peaks[i].merged = true;
                }
            }
        }
    }
    Ok(peaks)
}

/// Collapse clusters of maxima closer than `min_separation` into their
/// highest member. Noise riding on a peak flank produces spurious local
/// maxima; a lock loop wants one position per physical peak.
pub fn consolidate(peaks: Vec<Peak>, min_separation: f64) -> Vec<Peak> {
    let mut out: Vec<Peak> = Vec::with_capacity(peaks.len());
    for p in peaks {
        match out.last_mut() {
            Some(last) if p.position - last.position < min_separation => {
                if p.height > last.height {
                    *last = p;
                }
            }
            _ => out.push(p),
        }
    }
    out
}
