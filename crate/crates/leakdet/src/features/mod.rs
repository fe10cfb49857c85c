//! Overlapping-window feature extraction.
//!
//! A banded series is cut into overlapping fixed-length windows; each
//! window yields 26 features per selected band (14 basic statistics, 5
//! autocorrelations, 3 percentage changes, Shannon entropy, rate entropy,
//! approximate entropy, sample entropy) concatenated band after band —
//! 52 predictors for the usual two-band selection. A window is labeled
//! leak (1) only when every second inside it is leak-labeled.
//!
//! The entropy bin edges are fitted once, on the training split's
//! leak-labeled seconds, and then frozen: validation, test, and transfer
//! datasets are binned with the training edges so no information flows
//! backwards from evaluation data.

mod entropy;
mod stats;

pub use entropy::{apen, rate_entropy, sampen, shannon_entropy};
pub use stats::{autocorr, basic_stats, pct_change, BasicStats, GUARD_EPS};

use crate::banding::{quantile_sorted, Band, BandedSeries};
use crate::{Error, Result};

/// Window length and overlap, both in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowConfig {
    pub window_s: usize,
    pub overlap_s: usize,
}

/// Window length used throughout the pipeline, seconds.
pub const DEFAULT_WINDOW_S: usize = 10;
/// Overlap settings the tuning grid sweeps over, seconds.
pub const OVERLAPS_S: [usize; 3] = [3, 5, 7];

impl WindowConfig {
    pub fn new(window_s: usize, overlap_s: usize) -> Result<Self> {
        if overlap_s == 0 || overlap_s >= window_s {
            return Err(Error::Config(format!(
                "overlap {overlap_s} s must satisfy 0 < overlap < window ({window_s} s)"
            )));
        }
        Ok(WindowConfig {
            window_s,
            overlap_s,
        })
    }

    /// Hop between consecutive window starts.
    pub fn stride_s(&self) -> usize {
        self.window_s - self.overlap_s
    }
}

/// Parameters of the per-window feature computations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    /// Lags for the autocorrelation features.
    pub autocorr_lags: Vec<usize>,
    /// Lags for the percentage-change features.
    pub pct_lags: Vec<usize>,
    /// Quantiles (of training leak data) defining the entropy bin edges.
    pub entropy_quantiles: Vec<f64>,
    /// Embedding dimension for approximate and sample entropy.
    pub apen_m: usize,
    /// Tolerance as a fraction of the window standard deviation.
    pub apen_r_factor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            autocorr_lags: vec![1, 2, 3, 4, 5],
            pct_lags: vec![1, 2, 3],
            entropy_quantiles: vec![0.05, 0.10, 0.95, 0.99],
            apen_m: 2,
            apen_r_factor: 0.2,
        }
    }
}

impl FeatureConfig {
    /// Features computed per band: 14 basic + lags + 4 entropy-family.
    pub fn per_band_count(&self) -> usize {
        BasicStats::COUNT + self.autocorr_lags.len() + self.pct_lags.len() + 4
    }

    /// Per-band column names in computation order, without band prefix.
    pub fn per_band_names(&self) -> Vec<String> {
        let mut names: Vec<String> = BasicStats::NAMES.iter().map(|s| s.to_string()).collect();
        names.extend(self.autocorr_lags.iter().map(|t| format!("autocorr_{t}")));
        names.extend(self.pct_lags.iter().map(|t| format!("pct_{t}")));
        names.push("shannon_entropy".into());
        names.push("rate_entropy".into());
        names.push("apen".into());
        names.push("sampen".into());
        names
    }

    pub fn validate(&self, window_s: usize) -> Result<()> {
        for &t in self.autocorr_lags.iter().chain(&self.pct_lags) {
            if t == 0 || t >= window_s {
                return Err(Error::Config(format!(
                    "lag {t} must satisfy 1 <= lag < window ({window_s} s)"
                )));
            }
        }
        if self.entropy_quantiles.is_empty() {
            return Err(Error::Config("entropy_quantiles must be non-empty".into()));
        }
        for w in self.entropy_quantiles.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "entropy_quantiles must be strictly increasing".into(),
                ));
            }
        }
        if self
            .entropy_quantiles
            .iter()
            .any(|&q| !(0.0 < q && q < 1.0))
        {
            return Err(Error::Config(
                "entropy_quantiles must lie strictly inside (0, 1)".into(),
            ));
        }
        if self.apen_m == 0 {
            return Err(Error::Config("apen_m must be >= 1".into()));
        }
        if window_s < self.apen_m + 2 {
            return Err(Error::Config(format!(
                "window {window_s} s too short for embedding dimension {}",
                self.apen_m
            )));
        }
        if !self.apen_r_factor.is_finite() || self.apen_r_factor <= 0.0 {
            return Err(Error::Config("apen_r_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Entropy bin edges per selected band, fitted on training leak seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEdges {
    /// The quantiles the edges were taken at.
    pub quantiles: Vec<f64>,
    /// One `(band, ascending edges)` entry per selected band, in selection
    /// order.
    pub per_band: Vec<(Band, Vec<f64>)>,
}

/// Fits entropy bin edges: for each selected band, the configured quantiles
/// of that band's values over the leak-labeled seconds of `labels`.
pub fn fit_entropy_edges(
    banded: &BandedSeries,
    band_indices: &[usize],
    labels: &[u8],
    fcfg: &FeatureConfig,
) -> Result<EntropyEdges> {
    if labels.len() != banded.duration_s() {
        return Err(Error::Validation(format!(
            "labels length {} != duration {}",
            labels.len(),
            banded.duration_s()
        )));
    }
    if labels.iter().all(|&l| l == 0) {
        return Err(Error::Validation(
            "no leak-labeled seconds to fit entropy bin edges on".into(),
        ));
    }
    let mut per_band = Vec::with_capacity(band_indices.len());
    for &bi in band_indices {
        let band = *banded
            .bands()
            .get(bi)
            .ok_or_else(|| Error::Validation(format!("band index {bi} out of range")))?;
        let mut leak_values: Vec<f64> = banded
            .band_row(bi)
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == 1)
            .map(|(&v, _)| v)
            .collect();
        leak_values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let edges: Vec<f64> = fcfg
            .entropy_quantiles
            .iter()
            .map(|&q| quantile_sorted(&leak_values, q))
            .collect();
        per_band.push((band, edges));
    }
    Ok(EntropyEdges {
        quantiles: fcfg.entropy_quantiles.clone(),
        per_band,
    })
}

/// Enumerates fully contained windows `[k*stride, k*stride + window)`.
/// A trailing stretch shorter than one window is dropped.
pub fn frame_windows(series_len: usize, wcfg: &WindowConfig) -> Result<Vec<(usize, usize)>> {
    WindowConfig::new(wcfg.window_s, wcfg.overlap_s)?;
    if series_len < wcfg.window_s {
        return Err(Error::Validation(format!(
            "series of {series_len} s shorter than one {} s window",
            wcfg.window_s
        )));
    }
    let stride = wcfg.stride_s();
    Ok((0..=series_len - wcfg.window_s)
        .step_by(stride)
        .map(|start| (start, start + wcfg.window_s))
        .collect())
}

/// A window is leak only when every second inside it is leak.
pub fn label_window(window_labels: &[u8]) -> u8 {
    u8::from(window_labels.iter().all(|&l| l == 1))
}

/// Extracted windows: one row of `26 × band count` features each, plus the
/// window label and start second.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    feature_names: Vec<String>,
    /// Row-major values, `values[row * n_cols + col]`.
    values: Vec<f64>,
    n_cols: usize,
    labels: Vec<u8>,
    window_starts: Vec<usize>,
}

impl FeatureFrame {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn window_starts(&self) -> &[usize] {
        &self.window_starts
    }

    /// Assembles a frame from parts; lengths must agree.
    pub fn from_parts(
        feature_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<u8>,
        window_starts: Vec<usize>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        if n_cols == 0
            || labels.len() != window_starts.len()
            || values.len() != n_cols * labels.len()
        {
            return Err(Error::Validation("inconsistent feature frame parts".into()));
        }
        Ok(FeatureFrame {
            feature_names,
            values,
            n_cols,
            labels,
            window_starts,
        })
    }

    /// CSV export: all feature columns, then `label`, then
    /// `window_start_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.feature_names.join(","));
        out.push_str(",label,window_start_s\n");
        for i in 0..self.n_rows() {
            let mut first = true;
            for v in self.row(i) {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&format!("{v}"));
            }
            out.push_str(&format!(",{},{}\n", self.labels[i], self.window_starts[i]));
        }
        out
    }
}

/// Computes the full feature frame for the selected bands.
pub fn featurize(
    banded: &BandedSeries,
    band_indices: &[usize],
    labels: &[u8],
    wcfg: &WindowConfig,
    fcfg: &FeatureConfig,
    edges: &EntropyEdges,
) -> Result<FeatureFrame> {
    featurize_impl(banded, band_indices, labels, wcfg, fcfg, edges, true)
}

/// Sequential twin of [`featurize`], for benchmarking the parallel speedup.
pub fn featurize_seq(
    banded: &BandedSeries,
    band_indices: &[usize],
    labels: &[u8],
    wcfg: &WindowConfig,
    fcfg: &FeatureConfig,
    edges: &EntropyEdges,
) -> Result<FeatureFrame> {
    featurize_impl(banded, band_indices, labels, wcfg, fcfg, edges, false)
}

#[allow(clippy::too_many_arguments)]
fn featurize_impl(
    banded: &BandedSeries,
    band_indices: &[usize],
    labels: &[u8],
    wcfg: &WindowConfig,
    fcfg: &FeatureConfig,
    edges: &EntropyEdges,
    parallel: bool,
) -> Result<FeatureFrame> {
    if band_indices.is_empty() {
        return Err(Error::Validation("no bands selected".into()));
    }
    for (k, &bi) in band_indices.iter().enumerate() {
        if bi >= banded.n_bands() {
            return Err(Error::Validation(format!("band index {bi} out of range")));
        }
        if band_indices[..k].contains(&bi) {
            return Err(Error::Validation(format!("band index {bi} repeated")));
        }
    }
    if labels.len() != banded.duration_s() {
        return Err(Error::Validation(format!(
            "labels length {} != duration {}",
            labels.len(),
            banded.duration_s()
        )));
    }
    fcfg.validate(wcfg.window_s)?;
    // the frozen edge table must cover exactly the selected bands, in order
    if edges.per_band.len() != band_indices.len() {
        return Err(Error::Config(format!(
            "entropy edge table covers {} bands, selection has {}",
            edges.per_band.len(),
            band_indices.len()
        )));
    }
    for (k, &bi) in band_indices.iter().enumerate() {
        let expected = banded.bands()[bi];
        let (found, edge_values) = &edges.per_band[k];
        if *found != expected {
            return Err(Error::Config(format!(
                "entropy edge table band {found} does not match selected band {expected}"
            )));
        }
        if edge_values.len() != fcfg.entropy_quantiles.len() {
            return Err(Error::Config("entropy edge table width mismatch".into()));
        }
    }

    let windows = frame_windows(banded.duration_s(), wcfg)?;
    let mut feature_names = Vec::new();
    for &bi in band_indices {
        let prefix = banded.bands()[bi].name();
        for name in fcfg.per_band_names() {
            feature_names.push(format!("{prefix}_{name}"));
        }
    }
    let n_cols = feature_names.len();

    let render_window = |wi: usize| -> Vec<f64> {
        let (start, end) = windows[wi];
        let mut row = Vec::with_capacity(n_cols);
        for (k, &bi) in band_indices.iter().enumerate() {
            let x = &banded.band_row(bi)[start..end];
            let edge_values = &edges.per_band[k].1;
            row.extend_from_slice(&basic_stats(x).as_array());
            for &t in &fcfg.autocorr_lags {
                row.push(autocorr(x, t));
            }
            for &t in &fcfg.pct_lags {
                row.push(pct_change(x, t));
            }
            row.push(shannon_entropy(x, edge_values));
            row.push(rate_entropy(x, edge_values));
            // window length was validated against apen_m up front
            row.push(apen(x, fcfg.apen_m, fcfg.apen_r_factor).expect("validated window"));
            row.push(sampen(x, fcfg.apen_m, fcfg.apen_r_factor).expect("validated window"));
        }
        row
    };

    let rows = if parallel {
        crate::par::map_indexed(windows.len(), render_window)
    } else {
        crate::par::map_indexed_seq(windows.len(), render_window)
    };
    let mut values = Vec::with_capacity(windows.len() * n_cols);
    for row in rows {
        values.extend_from_slice(&row);
    }
    let window_labels: Vec<u8> = windows
        .iter()
        .map(|&(start, end)| label_window(&labels[start..end]))
        .collect();
    let window_starts: Vec<usize> = windows.iter().map(|&(start, _)| start).collect();
    FeatureFrame::from_parts(feature_names, values, window_labels, window_starts)
}
