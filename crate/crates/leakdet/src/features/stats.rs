//! Statistical window features: the 14 basic scalars plus autocorrelation
//! and percentage change.
//!
//! Ratio features guard against zero denominators by returning 0 instead of
//! NaN/inf — classifier input must stay finite, and 0 standardizes to a
//! neutral value. Two deliberate literalisms, kept because downstream
//! column names promise them: Clearance Factor and Margin Factor share one
//! formula (peak over squared-root-mean), and Index Maximum is peak/N, not
//! an argmax position.

/// Threshold below which a denominator counts as zero.
pub const GUARD_EPS: f64 = 1e-12;

fn guarded_ratio(num: f64, den: f64) -> f64 {
    if den.abs() < GUARD_EPS {
        0.0
    } else {
        num / den
    }
}

/// The 14 basic scalars of one window, in column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicStats {
    /// max |x|
    pub peak: f64,
    /// peak / mean |x|
    pub impulse_factor: f64,
    /// (mean sqrt|x|)^2
    pub srm: f64,
    /// peak / srm
    pub clearance_factor: f64,
    /// sqrt(energy / N)
    pub rms: f64,
    /// peak / srm (same formula as clearance, kept as its own column)
    pub margin_factor: f64,
    /// sum of x^2
    pub energy: f64,
    /// peak / rms
    pub crest_factor: f64,
    /// max - min
    pub peak_to_peak: f64,
    /// mean of ((x - mean)/std)^4, population std; 0 for zero variance
    pub kurtosis: f64,
    /// mean of ((x - mean)/std)^3, population std; 0 for zero variance
    pub skewness: f64,
    /// rms / mean |x|
    pub shape_factor: f64,
    /// peak / N
    pub index_max: f64,
    /// min |x| / N
    pub index_min: f64,
}

impl BasicStats {
    pub const COUNT: usize = 14;

    pub const NAMES: [&'static str; Self::COUNT] = [
        "peak",
        "impulse_factor",
        "srm",
        "clearance_factor",
        "rms",
        "margin_factor",
        "energy",
        "crest_factor",
        "peak_to_peak",
        "kurtosis",
        "skewness",
        "shape_factor",
        "index_max",
        "index_min",
    ];

    pub fn as_array(&self) -> [f64; Self::COUNT] {
        [
            self.peak,
            self.impulse_factor,
            self.srm,
            self.clearance_factor,
            self.rms,
            self.margin_factor,
            self.energy,
            self.crest_factor,
            self.peak_to_peak,
            self.kurtosis,
            self.skewness,
            self.shape_factor,
            self.index_max,
            self.index_min,
        ]
    }
}

/// Computes the 14 basic scalars. Callers pass windows of at least two
/// samples; shorter slices still produce defined (guarded) values.
pub fn basic_stats(x: &[f64]) -> BasicStats {
    let n = x.len() as f64;
    let peak = x.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let srm = (x.iter().map(|v| v.abs().sqrt()).sum::<f64>() / n).powi(2);
    let energy = x.iter().map(|v| v * v).sum::<f64>();
    let rms = (energy / n).sqrt();
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_abs = x.iter().fold(f64::INFINITY, |acc, &v| acc.min(v.abs()));

    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let (kurtosis, skewness) = if std < GUARD_EPS {
        (0.0, 0.0)
    } else {
        let k = x.iter().map(|v| ((v - mean) / std).powi(4)).sum::<f64>() / n;
        let s = x.iter().map(|v| ((v - mean) / std).powi(3)).sum::<f64>() / n;
        (k, s)
    };

    BasicStats {
        peak,
        impulse_factor: guarded_ratio(peak, mean_abs),
        srm,
        clearance_factor: guarded_ratio(peak, srm),
        rms,
        margin_factor: guarded_ratio(peak, srm),
        energy,
        crest_factor: guarded_ratio(peak, rms),
        peak_to_peak: max - min,
        kurtosis,
        skewness,
        shape_factor: guarded_ratio(rms, mean_abs),
        index_max: peak / n,
        index_min: min_abs / n,
    }
}

/// Sample autocorrelation at lag `t`:
/// `sum_{i<N-t} (x_i - mean)(x_{i+t} - mean) / sum (x_i - mean)^2`.
/// Zero-variance windows give 0. Requires `1 <= t < x.len()`.
pub fn autocorr(x: &[f64], t: usize) -> f64 {
    debug_assert!(t >= 1 && t < x.len());
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let den: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if den < GUARD_EPS {
        return 0.0;
    }
    let num: f64 = (0..n - t).map(|i| (x[i] - mean) * (x[i + t] - mean)).sum();
    num / den
}

/// Mean percentage change over lag `t`: per-step values
/// `(x_i - x_{i-t}) * 100 / |x_{i-t}|` for `i = t..N`, with steps from a
/// near-zero base skipped; 0 when every step is skipped.
pub fn pct_change(x: &[f64], t: usize) -> f64 {
    debug_assert!(t >= 1 && t < x.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in t..x.len() {
        let base = x[i - t];
        if base.abs() < GUARD_EPS {
            continue;
        }
        sum += (x[i] - base) * 100.0 / base.abs();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
