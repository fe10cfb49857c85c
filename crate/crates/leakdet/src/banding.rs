//! Sub-band aggregation and correlation-based band ranking.
//!
//! Stage 1 reduces a full-resolution PSD matrix to a handful of frequency
//! bands: the axis `[0, max_freq_hz)` is tiled by bands of `granularity_hz`
//! width (the last band may be partial) and each band-second is summarized
//! by one metric (mean, median, or iqr) over the PSD cells whose bin-center
//! frequency falls inside the band.
//!
//! Stage 2 ranks bands by the Pearson correlation between their per-second
//! series and the 0/1 leak labels (point-biserial, since one variable is
//! binary) and selects a pair of bands to carry into feature extraction.

use crate::dataset::Spectrogram;
use crate::{Error, Result};

/// Sub-band granularities the pipeline sweeps over, Hz.
pub const GRANULARITIES_HZ: [u32; 3] = [1_000, 2_000, 5_000];

/// Per-band-per-second summary statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Mean,
    Median,
    /// Inter-quartile range with linear-interpolation quantiles.
    Iqr,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mean, Metric::Median, Metric::Iqr];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mean => "mean",
            Metric::Median => "median",
            Metric::Iqr => "iqr",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Metric::Mean),
            "median" => Ok(Metric::Median),
            "iqr" => Ok(Metric::Iqr),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected mean, median, or iqr)"
            ))),
        }
    }
}

/// How to reduce the spectrogram to bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BandingConfig {
    pub granularity_hz: u32,
    pub metric: Metric,
}

impl BandingConfig {
    pub fn new(granularity_hz: u32, metric: Metric) -> Result<Self> {
        if !GRANULARITIES_HZ.contains(&granularity_hz) {
            return Err(Error::Config(format!(
                "granularity {granularity_hz} Hz not in supported set {GRANULARITIES_HZ:?}"
            )));
        }
        Ok(BandingConfig {
            granularity_hz,
            metric,
        })
    }
}

/// One frequency band `[lo_hz, hi_hz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Band {
    /// Compact name token: 2000 -> "2k", 0 -> "0", 65536 -> "65536".
    fn freq_token(hz: f64) -> String {
        if hz == 0.0 {
            "0".to_string()
        } else if hz % 1000.0 == 0.0 {
            format!("{}k", hz / 1000.0)
        } else {
            format!("{hz}")
        }
    }

    pub fn name(&self) -> String {
        format!(
            "{}_{}",
            Band::freq_token(self.lo_hz),
            Band::freq_token(self.hi_hz)
        )
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}) Hz", self.lo_hz, self.hi_hz)
    }
}

/// Banded view of a spectrogram: one summary series per frequency band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSeries {
    bands: Vec<Band>,
    /// Band-major storage: `values[band * duration_s + t]`.
    values: Vec<f64>,
    duration_s: usize,
    config: BandingConfig,
}

impl BandedSeries {
    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn duration_s(&self) -> usize {
        self.duration_s
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn config(&self) -> BandingConfig {
        self.config
    }

    /// The per-second series of one band.
    pub fn band_row(&self, band: usize) -> &[f64] {
        &self.values[band * self.duration_s..(band + 1) * self.duration_s]
    }

    /// Index of the band with exactly these edges, if present.
    pub fn band_index(&self, lo_hz: f64, hi_hz: f64) -> Option<usize> {
        self.bands
            .iter()
            .position(|b| b.lo_hz == lo_hz && b.hi_hz == hi_hz)
    }

    /// A copy restricted to the seconds in `range`, so downstream stages
    /// can operate on one time partition without seeing its neighbors.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<BandedSeries> {
        if range.start >= range.end || range.end > self.duration_s {
            return Err(Error::Validation(format!(
                "slice {}..{} out of bounds for duration {}",
                range.start, range.end, self.duration_s
            )));
        }
        let len = range.end - range.start;
        let mut values = Vec::with_capacity(self.bands.len() * len);
        for band in 0..self.bands.len() {
            values.extend_from_slice(&self.band_row(band)[range.clone()]);
        }
        Ok(BandedSeries {
            bands: self.bands.clone(),
            values,
            duration_s: len,
            config: self.config,
        })
    }
}

/// Tiles `[0, max_freq_hz)` with `granularity_hz`-wide bands; the last band
/// is clipped to `max_freq_hz` when the division is not exact.
pub fn band_edges(granularity_hz: u32, max_freq_hz: f64) -> Vec<Band> {
    let g = granularity_hz as f64;
    let n_bands = (max_freq_hz / g).ceil() as usize;
    (0..n_bands)
        .map(|k| Band {
            lo_hz: k as f64 * g,
            hi_hz: ((k + 1) as f64 * g).min(max_freq_hz),
        })
        .collect()
}

/// Bins whose center frequency falls in `[lo_hz, hi_hz)`, as a half-open
/// index range.
fn band_bin_range(band: Band, n_bins: usize, max_freq_hz: f64) -> (usize, usize) {
    let w = max_freq_hz / n_bins as f64;
    let lo = (band.lo_hz / w - 0.5).ceil().max(0.0) as usize;
    let hi = ((band.hi_hz / w - 0.5).ceil().max(0.0) as usize).min(n_bins);
    (lo.min(n_bins), hi)
}

/// Reduces a spectrogram to per-band summary series.
pub fn aggregate(spec: &Spectrogram, cfg: BandingConfig) -> Result<BandedSeries> {
    aggregate_impl(spec, cfg, true)
}

/// Sequential twin of [`aggregate`], for benchmarking the parallel speedup.
pub fn aggregate_seq(spec: &Spectrogram, cfg: BandingConfig) -> Result<BandedSeries> {
    aggregate_impl(spec, cfg, false)
}

fn aggregate_impl(spec: &Spectrogram, cfg: BandingConfig, parallel: bool) -> Result<BandedSeries> {
    if cfg.granularity_hz as f64 > spec.max_freq_hz() {
        return Err(Error::Config(format!(
            "granularity {} Hz exceeds max frequency {} Hz",
            cfg.granularity_hz,
            spec.max_freq_hz()
        )));
    }
    BandingConfig::new(cfg.granularity_hz, cfg.metric)?;
    let bands = band_edges(cfg.granularity_hz, spec.max_freq_hz());
    for &band in &bands {
        let (lo, hi) = band_bin_range(band, spec.n_bins(), spec.max_freq_hz());
        if lo >= hi {
            return Err(Error::Config(format!(
                "band {band} contains no frequency bins"
            )));
        }
    }

    let duration = spec.duration_s();
    let render_band = |bi: usize| -> Vec<f64> {
        let (lo, hi) = band_bin_range(bands[bi], spec.n_bins(), spec.max_freq_hz());
        let mut out = Vec::with_capacity(duration);
        let mut cell = Vec::with_capacity(hi - lo);
        for t in 0..duration {
            cell.clear();
            for bin in lo..hi {
                cell.push(spec.value(bin, t));
            }
            out.push(apply_metric(cfg.metric, &mut cell));
        }
        out
    };

    let rows = if parallel {
        crate::par::map_indexed(bands.len(), render_band)
    } else {
        crate::par::map_indexed_seq(bands.len(), render_band)
    };
    let mut values = Vec::with_capacity(bands.len() * duration);
    for row in rows {
        values.extend_from_slice(&row);
    }
    Ok(BandedSeries {
        bands,
        values,
        duration_s: duration,
        config: cfg,
    })
}

fn apply_metric(metric: Metric, cell: &mut [f64]) -> f64 {
    match metric {
        Metric::Mean => cell.iter().sum::<f64>() / cell.len() as f64,
        Metric::Median => {
            cell.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite PSD"));
            quantile_sorted(cell, 0.5)
        }
        Metric::Iqr => {
            cell.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite PSD"));
            quantile_sorted(cell, 0.75) - quantile_sorted(cell, 0.25)
        }
    }
}

/// Quantile with linear interpolation between order statistics ("type 7"):
/// position h = (n-1)q, value = s[floor(h)] + frac(h) * (s[floor(h)+1] - s[floor(h)]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// One ranked band: its correlation with the labels and 1-based rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub band: Band,
    pub r: f64,
    pub abs_rank: usize,
}

/// Bands ordered by |r| descending, plus the zero-variance bands that had
/// to be excluded (correlation undefined for a constant series).
#[derive(Debug, Clone, PartialEq)]
pub struct BandRanking {
    pub entries: Vec<RankEntry>,
    pub excluded_zero_variance: Vec<Band>,
}

impl BandRanking {
    /// CSV export: `band_lo_hz,band_hi_hz,r,abs_rank`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band_lo_hz,band_hi_hz,r,abs_rank\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.band.lo_hz, e.band.hi_hz, e.r, e.abs_rank
            ));
        }
        out
    }
}

/// Pearson correlation of each band's series against the 0/1 label vector.
/// Constant bands are excluded and reported. Errors when the labels hold a
/// single class (the correlation is undefined there).
pub fn rank_bands(banded: &BandedSeries, labels: &[u8]) -> Result<BandRanking> {
    if labels.len() != banded.duration_s() {
        return Err(Error::Validation(format!(
            "labels length {} != duration {}",
            labels.len(),
            banded.duration_s()
        )));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(Error::Validation(
            "labels contain a single class; correlation undefined".into(),
        ));
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let y_mean = ones as f64 / y.len() as f64;
    let y_ss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();

    let mut scored = Vec::new();
    let mut excluded = Vec::new();
    for (bi, &band) in banded.bands().iter().enumerate() {
        let x = banded.band_row(bi);
        let x_mean = x.iter().sum::<f64>() / x.len() as f64;
        let x_ss: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
        if x_ss == 0.0 {
            excluded.push(band);
            continue;
        }
        let cov: f64 = x
            .iter()
            .zip(&y)
            .map(|(xv, yv)| (xv - x_mean) * (yv - y_mean))
            .sum();
        let r = cov / (x_ss * y_ss).sqrt();
        scored.push((band, r));
    }
    // |r| descending; ties broken by band position for a stable order.
    scored.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .expect("finite correlations")
            .then(a.0.lo_hz.partial_cmp(&b.0.lo_hz).expect("finite edges"))
    });
    let entries = scored
        .into_iter()
        .enumerate()
        .map(|(i, (band, r))| RankEntry {
            band,
            r,
            abs_rank: i + 1,
        })
        .collect();
    Ok(BandRanking {
        entries,
        excluded_zero_variance: excluded,
    })
}

/// An ordered pair of distinct bands, normalized ascending by `lo_hz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPair {
    pub first: Band,
    pub second: Band,
}

impl BandPair {
    pub fn new(a: Band, b: Band) -> Result<Self> {
        if a == b {
            return Err(Error::Validation(format!("duplicate band {a} in pair")));
        }
        let (first, second) = if (a.lo_hz, a.hi_hz) <= (b.lo_hz, b.hi_hz) {
            (a, b)
        } else {
            (b, a)
        };
        Ok(BandPair { first, second })
    }

    /// Rendered as `band_{lo1}_{hi1}_{lo2}_{hi2}` with "k" abbreviations,
    /// e.g. `band_0_2k_2k_4k`.
    pub fn name(&self) -> String {
        format!("band_{}_{}", self.first.name(), self.second.name())
    }
}

impl std::fmt::Display for BandPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// How [`select_band_pair`] picks its two bands.
#[derive(Debug, Clone, PartialEq)]
pub enum PairStrategy {
    /// The two bands with the highest |r|.
    Top2,
    /// Exactly these two bands, given as (lo_hz, hi_hz) edges.
    Explicit((f64, f64), (f64, f64)),
}

/// Picks two distinct bands from a ranking.
pub fn select_band_pair(ranking: &BandRanking, strategy: &PairStrategy) -> Result<BandPair> {
    match strategy {
        PairStrategy::Top2 => {
            if ranking.entries.len() < 2 {
                return Err(Error::Validation(format!(
                    "ranking has {} usable bands; need at least 2",
                    ranking.entries.len()
                )));
            }
            BandPair::new(ranking.entries[0].band, ranking.entries[1].band)
        }
        PairStrategy::Explicit(a, b) => {
            let find = |(lo, hi): (f64, f64)| -> Result<Band> {
                ranking
                    .entries
                    .iter()
                    .map(|e| e.band)
                    .chain(ranking.excluded_zero_variance.iter().copied())
                    .find(|band| band.lo_hz == lo && band.hi_hz == hi)
                    .ok_or_else(|| {
                        Error::Validation(format!("band [{lo}, {hi}) not in this banding"))
                    })
            };
            BandPair::new(find(*a)?, find(*b)?)
        }
    }
}
