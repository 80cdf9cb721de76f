//! Windowed statistical features over memorygram time series.
//!
//! Six population moments per window (min, max, mean, std, skew, excess
//! kurtosis), computed over the two halves of the trace plus equal segments
//! of each half: `6 * (2 + 2 * segments_per_half)` features, 60 at four
//! segments and 108 at eight.

use super::FingerprintError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub skew: f64,
    pub kurtosis: f64,
}

impl WindowStats {
    pub fn to_array(self) -> [f64; 6] {
        [self.min, self.max, self.mean, self.std, self.skew, self.kurtosis]
    }
}

/// Population moments of one window in a single streaming pass (Pébay's
/// update formulas). `std` divides by n; `kurtosis` is excess (normal -> 0).
/// Zero-variance windows return skew 0 and kurtosis 0 by convention.
pub fn window_stats(xs: &[f64]) -> Result<WindowStats, FingerprintError> {
    if xs.is_empty() {
        return Err(FingerprintError::EmptyWindow);
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let (mut n, mut mean, mut m2, mut m3, mut m4) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &x in xs {
        min = min.min(x);
        max = max.max(x);
        let n1 = n;
        n += 1.0;
        let delta = x - mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        mean += delta_n;
        m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2 - 4.0 * delta_n * m3;
        m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2;
        m2 += term1;
    }
    let var = m2 / n;
    let (std, skew, kurtosis) = if var > 0.0 {
        let std = var.sqrt();
        ((std), (m3 / n) / (var * std), (m4 / n) / (var * var) - 3.0)
    } else {
        (0.0, 0.0, 0.0)
    };
    Ok(WindowStats { min, max, mean, std, skew, kurtosis })
}

/// Split `half` into `segments` equal parts; remainder samples join the
/// last segment.
fn segment_bounds(len: usize, segments: usize) -> impl Iterator<Item = (usize, usize)> {
    let base = len / segments;
    (0..segments).map(move |i| {
        let start = i * base;
        let end = if i + 1 == segments { len } else { start + base };
        (start, end)
    })
}

/// Flat feature vector of a trace: stats of the first half, the second
/// half, then each segment of the first half, then each segment of the
/// second half.
pub fn extract_features(samples: &[f64], segments_per_half: usize) -> Result<Vec<f64>, FingerprintError> {
    if segments_per_half == 0 {
        return Err(FingerprintError::EmptyWindow);
    }
    if samples.len() < 2 * segments_per_half {
        return Err(FingerprintError::TraceTooShort {
            samples: samples.len(),
            needed: 2 * segments_per_half,
        });
    }
    let (first, second) = samples.split_at(samples.len() / 2);
    let mut out = Vec::with_capacity(6 * (2 + 2 * segments_per_half));
    out.extend(window_stats(first)?.to_array());
    out.extend(window_stats(second)?.to_array());
    for half in [first, second] {
        for (s, e) in segment_bounds(half.len(), segments_per_half) {
            out.extend(window_stats(&half[s..e])?.to_array());
        }
    }
    Ok(out)
}

pub fn feature_len(segments_per_half: usize) -> usize {
    6 * (2 + 2 * segments_per_half)
}
