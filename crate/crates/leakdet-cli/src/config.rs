//! The TOML run configuration.
//!
//! Every key is optional; defaults are listed on each field and in the
//! README. Precedence everywhere is: command-line flag, then config file,
//! then built-in default. Unknown keys anywhere in the file are rejected so
//! typos cannot silently fall back to defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use leakdet::banding::Metric;
use leakdet::dataset::{DEFAULT_MAX_FREQ_HZ, DEFAULT_N_BINS, DEFAULT_SAMPLE_RATE_HZ};
use leakdet::features::{FeatureConfig, DEFAULT_WINDOW_S};
use leakdet::pipeline::{KernelKind, ParamGrid, SplitSpec};
use leakdet::synth::{
    preset_config, BackgroundSpectrum, LeakSpec, Preset, ProcessSpec, SynthConfig,
};
use leakdet::{Error, Result};

/// Collapses a multi-line parser message into the single-line form the CLI
/// promises on stderr.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed for synthetic data generation. Default 42.
    pub seed: Option<u64>,
    /// Worker threads for the tuning grid. Default: all cores.
    pub workers: Option<usize>,
    pub paths: Option<PathsSection>,
    pub synth: Option<SynthSection>,
    pub dataset: Option<DatasetSection>,
    pub banding: Option<BandingSection>,
    pub window: Option<WindowSection>,
    pub features: Option<FeatureSection>,
    pub grid: Option<GridSection>,
    pub split: Option<SplitSection>,
    pub tune: Option<TuneSection>,
}

/// Input/output file locations, overridable per command by flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub dataset: Option<PathBuf>,
    pub annotation: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
    /// Output directory for emitted files. Default ".".
    pub out_dir: Option<PathBuf>,
}

/// Synthetic-recording description: either `preset` alone, or a custom
/// layout (mixing both is rejected).
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    /// One of: leak_process, leak_noprocess, noleak_noprocess.
    pub preset: Option<String>,
    pub duration_s: Option<usize>,
    /// Default 5000.
    pub n_bins: Option<usize>,
    /// Default 65536.
    pub max_freq_hz: Option<f64>,
    /// Default 1.0.
    pub background_level: Option<f64>,
    /// Spectral tilt exponent; omitted means a flat background.
    pub background_tilt_alpha: Option<f64>,
    /// Multiplicative noise coefficient of variation. Default 0.2.
    pub jitter_cv: Option<f64>,
    #[serde(default)]
    pub leaks: Vec<LeakSection>,
    #[serde(default)]
    pub process: Vec<ProcessSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakSection {
    pub start_s: usize,
    pub end_s: usize,
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub snr_db: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub start_s: usize,
    pub end_s: usize,
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub snr_db: f64,
    /// Default 30 s.
    pub modulation_period_s: Option<f64>,
}

/// How to interpret spectrogram files on load.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// Expected bin-row count; omitted disables the cross-check.
    pub n_bins: Option<usize>,
    /// Default 131072.
    pub sample_rate_hz: Option<f64>,
    /// Default 65536.
    pub max_freq_hz: Option<f64>,
}

/// Fixing a banding choice restricts the tuning search to it.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandingSection {
    pub granularity_hz: Option<u32>,
    /// One of: mean, median, iqr.
    pub metric: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    /// Default 10.
    pub window_s: Option<usize>,
    /// Fixing an overlap restricts the tuning search to it.
    pub overlap_s: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSection {
    /// Default [1, 2, 3, 4, 5].
    pub autocorr_lags: Option<Vec<usize>>,
    /// Default [1, 2, 3].
    pub pct_lags: Option<Vec<usize>>,
    /// Default [0.05, 0.10, 0.95, 0.99].
    pub entropy_quantiles: Option<Vec<f64>>,
    /// Default 2.
    pub apen_m: Option<usize>,
    /// Default 0.2.
    pub apen_r_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Default [1000, 2000, 5000].
    pub granularities_hz: Option<Vec<u32>>,
    /// Default ["mean", "median", "iqr"].
    pub metrics: Option<Vec<String>>,
    /// Default [3, 5, 7].
    pub overlaps_s: Option<Vec<usize>>,
    /// Default ["linear", "rbf"].
    pub kernels: Option<Vec<String>>,
    /// Default [1, 10, 100, 1000].
    pub costs: Option<Vec<f64>>,
    /// Default [1, 0.1, 0.001, 0.0001]; applies to rbf only.
    pub gammas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// Default 0.6.
    pub train: Option<f64>,
    /// Default 0.2.
    pub validation: Option<f64>,
    /// Default 0.2.
    pub test: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    /// Band combinations carried into the test stage. Default 5.
    pub top_candidates: Option<usize>,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOP_CANDIDATES: usize = 5;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), one_line(&e.to_string()))))
    }

    pub fn window_s(&self) -> usize {
        self.window
            .as_ref()
            .and_then(|w| w.window_s)
            .unwrap_or(DEFAULT_WINDOW_S)
    }

    pub fn split(&self) -> SplitSpec {
        let defaults = SplitSpec::default();
        match &self.split {
            None => defaults,
            Some(s) => SplitSpec {
                train: s.train.unwrap_or(defaults.train),
                validation: s.validation.unwrap_or(defaults.validation),
                test: s.test.unwrap_or(defaults.test),
            },
        }
    }

    pub fn features(&self) -> FeatureConfig {
        let defaults = FeatureConfig::default();
        match &self.features {
            None => defaults,
            Some(f) => FeatureConfig {
                autocorr_lags: f.autocorr_lags.clone().unwrap_or(defaults.autocorr_lags),
                pct_lags: f.pct_lags.clone().unwrap_or(defaults.pct_lags),
                entropy_quantiles: f
                    .entropy_quantiles
                    .clone()
                    .unwrap_or(defaults.entropy_quantiles),
                apen_m: f.apen_m.unwrap_or(defaults.apen_m),
                apen_r_factor: f.apen_r_factor.unwrap_or(defaults.apen_r_factor),
            },
        }
    }

    /// The tuning search space: the `[grid]` section over its defaults,
    /// then narrowed by any fixed `[banding]` choice or `[window]` overlap.
    pub fn grid(&self) -> Result<ParamGrid> {
        let defaults = ParamGrid::default();
        let mut grid = match &self.grid {
            None => defaults,
            Some(g) => {
                let metrics = match &g.metrics {
                    None => defaults.metrics,
                    Some(names) => names
                        .iter()
                        .map(|n| n.parse::<Metric>())
                        .collect::<Result<Vec<_>>>()?,
                };
                let kernels = match &g.kernels {
                    None => defaults.kernels,
                    Some(names) => names
                        .iter()
                        .map(|n| n.parse::<KernelKind>())
                        .collect::<Result<Vec<_>>>()?,
                };
                ParamGrid {
                    granularities_hz: g
                        .granularities_hz
                        .clone()
                        .unwrap_or(defaults.granularities_hz),
                    metrics,
                    overlaps_s: g.overlaps_s.clone().unwrap_or(defaults.overlaps_s),
                    kernels,
                    costs: g.costs.clone().unwrap_or(defaults.costs),
                    gammas: g.gammas.clone().unwrap_or(defaults.gammas),
                }
            }
        };
        if let Some(banding) = &self.banding {
            if let Some(g) = banding.granularity_hz {
                grid.granularities_hz = vec![g];
            }
            if let Some(m) = &banding.metric {
                grid.metrics = vec![m.parse()?];
            }
        }
        if let Some(overlap) = self.window.as_ref().and_then(|w| w.overlap_s) {
            grid.overlaps_s = vec![overlap];
        }
        Ok(grid)
    }

    pub fn top_candidates(&self) -> usize {
        self.tune
            .as_ref()
            .and_then(|t| t.top_candidates)
            .unwrap_or(DEFAULT_TOP_CANDIDATES)
    }

    pub fn dataset_load_meta(&self) -> (Option<usize>, f64, f64) {
        let d = self.dataset.as_ref();
        (
            d.and_then(|d| d.n_bins),
            d.and_then(|d| d.sample_rate_hz)
                .unwrap_or(DEFAULT_SAMPLE_RATE_HZ),
            d.and_then(|d| d.max_freq_hz).unwrap_or(DEFAULT_MAX_FREQ_HZ),
        )
    }

    /// Resolves the `[synth]` section to a generator config and a name for
    /// the output files. `preset_override` is the `--preset` flag.
    pub fn synth_config(
        &self,
        preset_override: Option<&str>,
        seed: u64,
    ) -> Result<(SynthConfig, String)> {
        let section = self.synth.as_ref();
        let preset_name = preset_override
            .map(str::to_string)
            .or_else(|| section.and_then(|s| s.preset.clone()));
        if let Some(name) = preset_name {
            let preset: Preset = name.parse()?;
            if let Some(s) = section {
                let custom_fields_present = s.duration_s.is_some()
                    || s.n_bins.is_some()
                    || s.max_freq_hz.is_some()
                    || s.background_level.is_some()
                    || s.background_tilt_alpha.is_some()
                    || s.jitter_cv.is_some()
                    || !s.leaks.is_empty()
                    || !s.process.is_empty();
                if custom_fields_present {
                    return Err(Error::Config(
                        "synth preset and custom synth fields are mutually exclusive".into(),
                    ));
                }
            }
            return Ok((preset_config(preset, seed), preset.name().to_string()));
        }
        let s = section.ok_or_else(|| {
            Error::Config("synth needs --preset or a [synth] config section".into())
        })?;
        let duration_s = s
            .duration_s
            .ok_or_else(|| Error::Config("custom [synth] section needs duration_s".into()))?;
        let cfg = SynthConfig {
            duration_s,
            n_bins: s.n_bins.unwrap_or(DEFAULT_N_BINS),
            max_freq_hz: s.max_freq_hz.unwrap_or(DEFAULT_MAX_FREQ_HZ),
            seed,
            background_level: s.background_level.unwrap_or(1.0),
            background_spectrum: match s.background_tilt_alpha {
                Some(alpha) => BackgroundSpectrum::Tilt { alpha },
                None => BackgroundSpectrum::Flat,
            },
            leak_spec: s
                .leaks
                .iter()
                .map(|l| LeakSpec {
                    interval: (l.start_s, l.end_s),
                    band_hz: (l.lo_hz, l.hi_hz),
                    snr_db: l.snr_db,
                })
                .collect(),
            process_spec: s
                .process
                .iter()
                .map(|p| ProcessSpec {
                    interval: (p.start_s, p.end_s),
                    band_hz: (p.lo_hz, p.hi_hz),
                    snr_db: p.snr_db,
                    modulation_period_s: p.modulation_period_s.unwrap_or(30.0),
                })
                .collect(),
            jitter_cv: s.jitter_cv.unwrap_or(0.2),
        };
        Ok((cfg, "custom".to_string()))
    }
}
