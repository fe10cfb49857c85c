//! Stages 4–5: orchestration of the trained pipeline.
//!
//! This module owns everything above the per-stage primitives: splitting a
//! recording chronologically into train/validation/test partitions, running
//! the hyperparameter grid search (validation selects overlap, kernel, and
//! cost; the held-out test partition then picks the granularity/metric/band
//! combination), training the final model on the whole recording, and
//! applying a finished model unchanged to other recordings.
//!
//! Leakage discipline: every fitted statistic — band ranking, entropy bin
//! edges, the standardizer, the SVM itself — is computed from the training
//! seconds of the stage that fits it, and windows never straddle partition
//! boundaries (each partition is framed independently). Grid combinations
//! run in parallel and are merged in enumeration order, so results are
//! independent of scheduling.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::ops::Range;

use crate::banding::{
    aggregate, rank_bands, select_band_pair, BandPair, BandedSeries, BandingConfig, Metric,
    PairStrategy,
};
use crate::dataset::{expand_labels, LeakAnnotation, Spectrogram};
use crate::features::{featurize, fit_entropy_edges, FeatureConfig, FeatureFrame, WindowConfig};
use crate::svm::{train, KernelSpec, PipelineMeta, SvmModel, TrainOptions};
use crate::{par, Error, Result};

/// A spectrogram together with its per-second 0/1 leak labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub spectrogram: Spectrogram,
    /// One label per second; 1 marks a leak second.
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(spectrogram: Spectrogram, annotation: &LeakAnnotation) -> Result<Self> {
        let labels = expand_labels(annotation, spectrogram.duration_s())?;
        Ok(LabeledDataset {
            spectrogram,
            labels,
        })
    }

    pub fn duration_s(&self) -> usize {
        self.spectrogram.duration_s()
    }
}

/// Chronological train/validation/test proportions over the time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let all_pos = self.train > 0.0 && self.validation > 0.0 && self.test > 0.0;
        let sum = self.train + self.validation + self.test;
        if !all_pos || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "split fractions must be positive and sum to 1, got {}/{}/{}",
                self.train, self.validation, self.test
            )));
        }
        Ok(())
    }
}

/// Splits `[0, duration_s)` into three contiguous second ranges by the
/// given fractions (floor arithmetic; the test range takes the remainder).
/// Each partition must be at least `min_partition_s` seconds — callers pass
/// the window length so every partition holds at least one whole window.
pub fn split_chronological(
    duration_s: usize,
    spec: &SplitSpec,
    min_partition_s: usize,
) -> Result<[Range<usize>; 3]> {
    spec.validate()?;
    let train_end = (duration_s as f64 * spec.train).floor() as usize;
    let val_end = (duration_s as f64 * (spec.train + spec.validation)).floor() as usize;
    let ranges = [0..train_end, train_end..val_end, val_end..duration_s];
    for (name, r) in ["train", "validation", "test"].iter().zip(&ranges) {
        if r.end - r.start < min_partition_s.max(1) {
            return Err(Error::Validation(format!(
                "{name} partition {}..{} is shorter than {min_partition_s} s",
                r.start, r.end
            )));
        }
    }
    Ok(ranges)
}

/// Confusion counts plus the derived ratios. Ratios with zero denominators
/// are `None` and render as "N/A" — never silently 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

/// "N/A" for undefined ratios, shortest round-trip decimal otherwise.
pub fn fmt_ratio(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "N/A".to_string(),
    }
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    /// Key/value report block for one evaluated dataset.
    pub fn render_report(&self, label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset {label}");
        let _ = writeln!(out, "windows {}", self.total());
        let _ = writeln!(out, "true_positives {}", self.true_positives);
        let _ = writeln!(out, "false_positives {}", self.false_positives);
        let _ = writeln!(out, "true_negatives {}", self.true_negatives);
        let _ = writeln!(out, "false_negatives {}", self.false_negatives);
        let _ = writeln!(out, "accuracy {}", self.accuracy);
        let _ = writeln!(out, "precision {}", fmt_ratio(self.precision));
        let _ = writeln!(out, "recall {}", fmt_ratio(self.recall));
        let _ = writeln!(out, "specificity {}", fmt_ratio(self.specificity));
        let _ = writeln!(out, "f1 {}", fmt_ratio(self.f1));
        out
    }
}

/// Builds the confusion counts and derived ratios for 0/1 labels, with 1 as
/// the positive (leak) class.
pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<Metrics> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::Validation(format!(
            "metric inputs must be equal-length and non-empty ({} vs {})",
            y_true.len(),
            y_pred.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fal_n) = (0usize, 0usize, 0usize, 0usize);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t > 1 || p > 1 {
            return Err(Error::Validation(format!(
                "labels must be 0 or 1, got true={t} pred={p}"
            )));
        }
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            (1, 0) => fal_n += 1,
            _ => unreachable!(),
        }
    }
    let ratio =
        |num: usize, den: usize| -> Option<f64> { (den > 0).then(|| num as f64 / den as f64) };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fal_n);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fal_n,
        accuracy: (tp + tn) as f64 / y_true.len() as f64,
        precision,
        recall,
        specificity: ratio(tn, tn + fp),
        f1,
    })
}

/// Which kernel family a grid enumerates; γ applies only to rbf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear,
    Rbf,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            other => Err(Error::Config(format!(
                "unknown kernel {other:?} (expected linear or rbf)"
            ))),
        }
    }
}

/// The hyperparameter search space. The default reproduces the full
/// experimental grid: 3 granularities × 3 metrics × 3 overlaps ×
/// (4 linear costs + 4 costs × 4 γ for rbf) = 540 effective runs; counting
/// γ under the linear kernel too (where it is a no-op) the nominal
/// cardinality is 864.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub granularities_hz: Vec<u32>,
    pub metrics: Vec<Metric>,
    pub overlaps_s: Vec<usize>,
    pub kernels: Vec<KernelKind>,
    pub costs: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            granularities_hz: vec![1_000, 2_000, 5_000],
            metrics: Metric::ALL.to_vec(),
            overlaps_s: vec![3, 5, 7],
            kernels: vec![KernelKind::Linear, KernelKind::Rbf],
            costs: vec![1.0, 10.0, 100.0, 1000.0],
            gammas: vec![1.0, 0.1, 0.001, 0.0001],
        }
    }
}

impl ParamGrid {
    pub fn validate(&self) -> Result<()> {
        if self.granularities_hz.is_empty()
            || self.metrics.is_empty()
            || self.overlaps_s.is_empty()
            || self.kernels.is_empty()
            || self.costs.is_empty()
        {
            return Err(Error::Config("grid has an empty dimension".into()));
        }
        if self.kernels.contains(&KernelKind::Rbf) && self.gammas.is_empty() {
            return Err(Error::Config("rbf kernel in grid but no gammas".into()));
        }
        for &c in &self.costs {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::Config(format!("cost {c} must be positive")));
            }
        }
        for &g in &self.gammas {
            if !g.is_finite() || g <= 0.0 {
                return Err(Error::Config(format!("gamma {g} must be positive")));
            }
        }
        Ok(())
    }

    /// All effective combinations, in a fixed enumeration order.
    pub fn enumerate(&self) -> Vec<HyperCombo> {
        let mut combos = Vec::new();
        for &granularity_hz in &self.granularities_hz {
            for &metric in &self.metrics {
                for &overlap_s in &self.overlaps_s {
                    for &kind in &self.kernels {
                        let kernels: Vec<KernelSpec> = match kind {
                            KernelKind::Linear => vec![KernelSpec::Linear],
                            KernelKind::Rbf => self
                                .gammas
                                .iter()
                                .map(|&gamma| KernelSpec::Rbf { gamma })
                                .collect(),
                        };
                        for kernel in kernels {
                            for &c in &self.costs {
                                combos.push(HyperCombo {
                                    granularity_hz,
                                    metric,
                                    overlap_s,
                                    kernel,
                                    c,
                                });
                            }
                        }
                    }
                }
            }
        }
        combos
    }

    /// Cardinality counting γ for every kernel, even where it is a no-op.
    pub fn nominal_count(&self) -> usize {
        self.granularities_hz.len()
            * self.metrics.len()
            * self.overlaps_s.len()
            * self.kernels.len()
            * self.costs.len()
            * self.gammas.len().max(1)
    }
}

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperCombo {
    pub granularity_hz: u32,
    pub metric: Metric,
    pub overlap_s: usize,
    pub kernel: KernelSpec,
    pub c: f64,
}

impl HyperCombo {
    pub fn kernel_name(&self) -> &'static str {
        match self.kernel {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.kernel {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { gamma } => Some(gamma),
        }
    }
}

/// One grid-search ledger entry: the combination, the band pair its
/// training partition selected, its validation metrics, and the reason it
/// was skipped if any stage could not run.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow {
    pub combo: HyperCombo,
    pub band_pair: Option<BandPair>,
    pub validation: Option<Metrics>,
    pub skip_reason: Option<String>,
}

/// Ranks two ledger rows for selection: higher validation F1 first, ties
/// broken by higher precision, then lower cost, then linear before rbf,
/// then a fixed key (γ, granularity, metric, overlap) so the winner is
/// independent of enumeration order. Rows without a defined F1 sort last.
pub(crate) fn selection_order(a: &LedgerRow, b: &LedgerRow) -> Ordering {
    let f1 = |r: &LedgerRow| r.validation.as_ref().and_then(|m| m.f1);
    let precision = |r: &LedgerRow| {
        r.validation
            .as_ref()
            .and_then(|m| m.precision)
            .unwrap_or(f64::NEG_INFINITY)
    };
    match (f1(a), f1(b)) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Greater,
        (Some(_), None) => Ordering::Less,
        (Some(fa), Some(fb)) => fb
            .partial_cmp(&fa)
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                precision(b)
                    .partial_cmp(&precision(a))
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| a.combo.c.partial_cmp(&b.combo.c).unwrap_or(Ordering::Equal))
            .then_with(|| {
                let kernel_rank = |c: &HyperCombo| matches!(c.kernel, KernelSpec::Rbf { .. }) as u8;
                kernel_rank(&a.combo).cmp(&kernel_rank(&b.combo))
            })
            .then_with(|| {
                let ga = a.combo.gamma().unwrap_or(0.0);
                let gb = b.combo.gamma().unwrap_or(0.0);
                ga.partial_cmp(&gb).unwrap_or(Ordering::Equal)
            })
            .then_with(|| a.combo.granularity_hz.cmp(&b.combo.granularity_hz))
            .then_with(|| {
                let idx = |m: Metric| Metric::ALL.iter().position(|&x| x == m).unwrap();
                idx(a.combo.metric).cmp(&idx(b.combo.metric))
            })
            .then_with(|| a.combo.overlap_s.cmp(&b.combo.overlap_s)),
    }
}

/// Everything the grid search decided, plus the full per-combo ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    /// One row per effective combination, in enumeration order.
    pub rows: Vec<LedgerRow>,
    pub selected: SelectedParams,
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl GridSearchResult {
    /// The results ledger: all parameters, validation metrics, skip reason.
    pub fn ledger_csv(&self) -> String {
        let mut out = String::from(
            "granularity_hz,metric,overlap_s,kernel,c,gamma,band_pair,\
             val_tp,val_fp,val_tn,val_fn,val_accuracy,val_precision,\
             val_recall,val_specificity,val_f1,skip_reason\n",
        );
        for row in &self.rows {
            let combo = &row.combo;
            let gamma = combo.gamma().map(|g| format!("{g}")).unwrap_or_default();
            let pair = row
                .band_pair
                .as_ref()
                .map(BandPair::name)
                .unwrap_or_default();
            let m = row.validation.as_ref();
            let counts = m
                .map(|m| {
                    format!(
                        "{},{},{},{}",
                        m.true_positives, m.false_positives, m.true_negatives, m.false_negatives
                    )
                })
                .unwrap_or_else(|| ",,,".to_string());
            let ratios = m
                .map(|m| {
                    format!(
                        "{},{},{},{},{}",
                        m.accuracy,
                        fmt_ratio(m.precision),
                        fmt_ratio(m.recall),
                        fmt_ratio(m.specificity),
                        fmt_ratio(m.f1)
                    )
                })
                .unwrap_or_else(|| ",,,,".to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                combo.granularity_hz,
                combo.metric,
                combo.overlap_s,
                combo.kernel_name(),
                combo.c,
                gamma,
                pair,
                counts,
                ratios,
                csv_field(row.skip_reason.as_deref().unwrap_or("")),
            );
        }
        out
    }
}

/// The tuned parameter set: everything needed to train the final model.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedParams {
    pub granularity_hz: u32,
    pub metric: Metric,
    pub overlap_s: usize,
    pub kernel: KernelSpec,
    pub c: f64,
    pub band_pair: BandPair,
}

impl SelectedParams {
    /// Plain-text key/value serialization for the params file.
    pub fn to_text(&self) -> String {
        let kernel = match self.kernel {
            KernelSpec::Linear => "linear".to_string(),
            KernelSpec::Rbf { gamma } => format!("rbf {gamma}"),
        };
        format!(
            "granularity_hz {}\nmetric {}\noverlap_s {}\nkernel {}\nc {}\nband_pair {} {} {} {}\n",
            self.granularity_hz,
            self.metric,
            self.overlap_s,
            kernel,
            self.c,
            self.band_pair.first.lo_hz,
            self.band_pair.first.hi_hz,
            self.band_pair.second.lo_hz,
            self.band_pair.second.hi_hz,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(' ').ok_or_else(|| {
                Error::Format(format!("params line {}: expected 'key value'", i + 1))
            })?;
            fields.insert(key.to_string(), value.trim().to_string());
        }
        let get = |key: &str| -> Result<String> {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Format(format!("params file missing key {key:?}")))
        };
        let parse_f64 = |key: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Format(format!("params key {key}: bad number {v:?}")))
        };
        let granularity_hz: u32 = get("granularity_hz")?
            .parse()
            .map_err(|_| Error::Format("bad granularity_hz".into()))?;
        let metric: Metric = get("metric")?.parse()?;
        BandingConfig::new(granularity_hz, metric)?;
        let overlap_s: usize = get("overlap_s")?
            .parse()
            .map_err(|_| Error::Format("bad overlap_s".into()))?;
        let kernel_text = get("kernel")?;
        let kernel = match kernel_text.split_whitespace().collect::<Vec<_>>()[..] {
            ["linear"] => KernelSpec::Linear,
            ["rbf", g] => KernelSpec::Rbf {
                gamma: parse_f64("kernel", g)?,
            },
            _ => {
                return Err(Error::Format(format!(
                    "bad kernel {kernel_text:?} (expected 'linear' or 'rbf <gamma>')"
                )))
            }
        };
        kernel.validate()?;
        let c = parse_f64("c", &get("c")?)?;
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::Format(format!("cost {c} must be positive")));
        }
        let pair_text = get("band_pair")?;
        let edges: Result<Vec<f64>> = pair_text
            .split_whitespace()
            .map(|t| parse_f64("band_pair", t))
            .collect();
        let edges = edges?;
        if edges.len() != 4 {
            return Err(Error::Format(format!(
                "band_pair needs 4 edge frequencies, got {}",
                edges.len()
            )));
        }
        let band_pair = BandPair::new(
            crate::banding::Band {
                lo_hz: edges[0],
                hi_hz: edges[1],
            },
            crate::banding::Band {
                lo_hz: edges[2],
                hi_hz: edges[3],
            },
        )?;
        Ok(SelectedParams {
            granularity_hz,
            metric,
            overlap_s,
            kernel,
            c,
            band_pair,
        })
    }
}

/// Stage-1..3 products shared by every combination with the same
/// granularity and metric.
struct BandedStage {
    train: BandedSeries,
    validation: BandedSeries,
    pair: BandPair,
    indices: Vec<usize>,
    edges: crate::features::EntropyEdges,
}

fn pair_indices(banded: &BandedSeries, pair: &BandPair) -> Result<Vec<usize>> {
    let find = |b: &crate::banding::Band| {
        banded.band_index(b.lo_hz, b.hi_hz).ok_or_else(|| {
            Error::Validation(format!(
                "band {}..{} Hz does not exist at granularity {} Hz",
                b.lo_hz,
                b.hi_hz,
                banded.config().granularity_hz
            ))
        })
    };
    Ok(vec![find(&pair.first)?, find(&pair.second)?])
}

fn to_pm1(labels: &[u8]) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect()
}

fn frame_rows(frame: &FeatureFrame) -> Vec<Vec<f64>> {
    (0..frame.n_rows()).map(|i| frame.row(i).to_vec()).collect()
}

/// Runs the full validation-stage search. Every combination that cannot be
/// evaluated (no leak seconds in its training partition, single-class
/// training windows, …) is kept in the ledger with a skip reason instead of
/// failing the search; the search only errors when NO combination yields a
/// defined validation F1.
pub fn grid_search(
    data: &LabeledDataset,
    grid: &ParamGrid,
    split: &SplitSpec,
    window_s: usize,
    fcfg: &FeatureConfig,
) -> Result<GridSearchResult> {
    grid.validate()?;
    fcfg.validate(window_s)?;
    let duration = data.duration_s();
    let ranges = split_chronological(duration, split, window_s)?;
    let train_labels = &data.labels[ranges[0].clone()];
    let val_labels = &data.labels[ranges[1].clone()];

    // Stage 1+2 cache: one entry per (granularity, metric).
    let mut gm_list: Vec<(u32, Metric)> = Vec::new();
    for &g in &grid.granularities_hz {
        for &m in &grid.metrics {
            if !gm_list.contains(&(g, m)) {
                gm_list.push((g, m));
            }
        }
    }
    let banded_stages: Vec<std::result::Result<BandedStage, String>> =
        par::map_indexed(gm_list.len(), |i| {
            let (granularity_hz, metric) = gm_list[i];
            let build = || -> Result<BandedStage> {
                let cfg = BandingConfig::new(granularity_hz, metric)?;
                let banded = aggregate(&data.spectrogram, cfg)?;
                let train_slice = banded.slice(ranges[0].clone())?;
                let val_slice = banded.slice(ranges[1].clone())?;
                let ranking = rank_bands(&train_slice, train_labels)?;
                let pair = select_band_pair(&ranking, &PairStrategy::Top2)?;
                let indices = pair_indices(&banded, &pair)?;
                let edges = fit_entropy_edges(&train_slice, &indices, train_labels, fcfg)?;
                Ok(BandedStage {
                    train: train_slice,
                    validation: val_slice,
                    pair,
                    indices,
                    edges,
                })
            };
            build().map_err(|e| e.to_string())
        });

    // Feature cache: one entry per (granularity, metric, overlap).
    struct FrameSet {
        x_train: Vec<Vec<f64>>,
        y_train: Vec<f64>,
        x_val: Vec<Vec<f64>>,
        y_val: Vec<u8>,
    }
    let mut gmo_list: Vec<(usize, usize)> = Vec::new(); // (gm index, overlap)
    for gm in 0..gm_list.len() {
        for &ov in &grid.overlaps_s {
            if !gmo_list.contains(&(gm, ov)) {
                gmo_list.push((gm, ov));
            }
        }
    }
    let frame_sets: Vec<std::result::Result<FrameSet, String>> =
        par::map_indexed(gmo_list.len(), |i| {
            let (gm, overlap_s) = gmo_list[i];
            let stage = banded_stages[gm].as_ref().map_err(|e| e.clone())?;
            let build = || -> Result<FrameSet> {
                let wcfg = WindowConfig::new(window_s, overlap_s)?;
                let train_frame = featurize(
                    &stage.train,
                    &stage.indices,
                    train_labels,
                    &wcfg,
                    fcfg,
                    &stage.edges,
                )?;
                let val_frame = featurize(
                    &stage.validation,
                    &stage.indices,
                    val_labels,
                    &wcfg,
                    fcfg,
                    &stage.edges,
                )?;
                let y_train = to_pm1(train_frame.labels());
                if !y_train.contains(&1.0) || !y_train.contains(&-1.0) {
                    return Err(Error::Validation(
                        "training windows contain a single class".into(),
                    ));
                }
                Ok(FrameSet {
                    x_train: frame_rows(&train_frame),
                    y_train,
                    x_val: frame_rows(&val_frame),
                    y_val: val_frame.labels().to_vec(),
                })
            };
            build().map_err(|e| e.to_string())
        });

    // Stage 3: one SVM per combination, evaluated on validation windows.
    let combos = grid.enumerate();
    let rows: Vec<LedgerRow> = par::map_indexed(combos.len(), |ci| {
        let combo = combos[ci];
        let gm = gm_list
            .iter()
            .position(|&(g, m)| g == combo.granularity_hz && m == combo.metric)
            .expect("combo enumerated from the same grid");
        let gmo = gmo_list
            .iter()
            .position(|&(i, ov)| i == gm && ov == combo.overlap_s)
            .expect("combo enumerated from the same grid");
        let band_pair = banded_stages[gm].as_ref().ok().map(|s| s.pair);
        let run = || -> std::result::Result<Metrics, String> {
            let frames = frame_sets[gmo].as_ref().map_err(|e| e.clone())?;
            let opts = TrainOptions::new(combo.c, combo.kernel);
            let model =
                train(&frames.x_train, &frames.y_train, &opts).map_err(|e| e.to_string())?;
            let preds: std::result::Result<Vec<u8>, String> = frames
                .x_val
                .iter()
                .map(|row| model.predict(row).map_err(|e| e.to_string()))
                .collect();
            compute_metrics(&frames.y_val, &preds?).map_err(|e| e.to_string())
        };
        match run() {
            Ok(metrics) => LedgerRow {
                combo,
                band_pair,
                validation: Some(metrics),
                skip_reason: None,
            },
            Err(reason) => LedgerRow {
                combo,
                band_pair,
                validation: None,
                skip_reason: Some(reason),
            },
        }
    });

    let best = rows
        .iter()
        .filter(|r| r.validation.as_ref().is_some_and(|m| m.f1.is_some()))
        .min_by(|a, b| selection_order(a, b))
        .ok_or_else(|| {
            Error::Validation("no grid combination produced a defined validation F1".into())
        })?;
    let selected = SelectedParams {
        granularity_hz: best.combo.granularity_hz,
        metric: best.combo.metric,
        overlap_s: best.combo.overlap_s,
        kernel: best.combo.kernel,
        c: best.combo.c,
        band_pair: best.band_pair.expect("evaluated row has a band pair"),
    };
    Ok(GridSearchResult { rows, selected })
}

/// A (granularity, metric, band pair) combination queued for the
/// test-stage comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BandComboCandidate {
    pub granularity_hz: u32,
    pub metric: Metric,
    pub pair: BandPair,
}

impl BandComboCandidate {
    /// Human-readable label, e.g. `iqr band_2k_3k_1k_2k`.
    pub fn label(&self) -> String {
        format!("{} {}", self.metric, self.pair.name())
    }
}

/// Test-stage outcome for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct BandComboOutcome {
    pub candidate: BandComboCandidate,
    pub test: Option<Metrics>,
    pub skip_reason: Option<String>,
}

/// The hyperparameters held fixed while band combinations compete.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedHyperParams {
    pub overlap_s: usize,
    pub kernel: KernelSpec,
    pub c: f64,
}

impl SelectedParams {
    pub fn fixed_hyper(&self) -> FixedHyperParams {
        FixedHyperParams {
            overlap_s: self.overlap_s,
            kernel: self.kernel,
            c: self.c,
        }
    }
}

/// Trains each candidate on train+validation (one contiguous chronological
/// block) and measures it on the held-out test partition. Candidates that
/// cannot run carry a skip reason; test partitions without leak windows
/// yield metrics whose recall/F1 are N/A rather than an error.
pub fn evaluate_band_combos(
    data: &LabeledDataset,
    hyper: &FixedHyperParams,
    candidates: &[BandComboCandidate],
    split: &SplitSpec,
    window_s: usize,
    fcfg: &FeatureConfig,
) -> Result<Vec<BandComboOutcome>> {
    fcfg.validate(window_s)?;
    let ranges = split_chronological(data.duration_s(), split, window_s)?;
    let fit_range = 0..ranges[1].end; // train + validation, still contiguous
    let test_range = ranges[2].clone();
    let wcfg = WindowConfig::new(window_s, hyper.overlap_s)?;

    let outcomes = par::map_indexed(candidates.len(), |i| {
        let candidate = candidates[i].clone();
        let run = || -> Result<Metrics> {
            let cfg = BandingConfig::new(candidate.granularity_hz, candidate.metric)?;
            let banded = aggregate(&data.spectrogram, cfg)?;
            let indices = pair_indices(&banded, &candidate.pair)?;
            let fit_slice = banded.slice(fit_range.clone())?;
            let test_slice = banded.slice(test_range.clone())?;
            let fit_labels = &data.labels[fit_range.clone()];
            let test_labels = &data.labels[test_range.clone()];
            let edges = fit_entropy_edges(&fit_slice, &indices, fit_labels, fcfg)?;
            let fit_frame = featurize(&fit_slice, &indices, fit_labels, &wcfg, fcfg, &edges)?;
            let y_fit = to_pm1(fit_frame.labels());
            if !y_fit.contains(&1.0) || !y_fit.contains(&-1.0) {
                return Err(Error::Validation(
                    "training windows contain a single class".into(),
                ));
            }
            let model = train(
                &frame_rows(&fit_frame),
                &y_fit,
                &TrainOptions::new(hyper.c, hyper.kernel),
            )?;
            let test_frame = featurize(&test_slice, &indices, test_labels, &wcfg, fcfg, &edges)?;
            let preds: Result<Vec<u8>> = (0..test_frame.n_rows())
                .map(|r| model.predict(test_frame.row(r)))
                .collect();
            compute_metrics(test_frame.labels(), &preds?)
        };
        match run() {
            Ok(metrics) => BandComboOutcome {
                candidate,
                test: Some(metrics),
                skip_reason: None,
            },
            Err(e) => BandComboOutcome {
                candidate,
                test: None,
                skip_reason: Some(e.to_string()),
            },
        }
    });
    Ok(outcomes)
}

/// Plot-ready precision/recall table, one row per evaluated candidate.
pub fn render_pr_csv(outcomes: &[BandComboOutcome]) -> String {
    let mut out = String::from("granularity_hz,metric,band_pair,precision,recall\n");
    for o in outcomes {
        if let Some(m) = &o.test {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                o.candidate.granularity_hz,
                o.candidate.metric,
                o.candidate.pair.name(),
                fmt_ratio(m.precision),
                fmt_ratio(m.recall),
            );
        }
    }
    out
}

/// Picks the winning candidate from the test stage: highest test F1; when
/// no candidate has a defined F1 (a test partition without leak windows),
/// highest test specificity — the only discriminating signal left — and
/// finally the earliest candidate (candidates arrive in validation-rank
/// order). Returns the index into `outcomes`.
pub fn select_band_combo(outcomes: &[BandComboOutcome]) -> Result<usize> {
    let evaluated: Vec<usize> = (0..outcomes.len())
        .filter(|&i| outcomes[i].test.is_some())
        .collect();
    if evaluated.is_empty() {
        return Err(Error::Validation(
            "every band-combination candidate was skipped".into(),
        ));
    }
    let key = |i: usize| -> (Option<f64>, Option<f64>) {
        let m = outcomes[i].test.as_ref().unwrap();
        (m.f1, m.specificity)
    };
    let better = |a: usize, b: usize| -> Ordering {
        let (fa, sa) = key(a);
        let (fb, sb) = key(b);
        let opt_desc = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(u), Some(v)) => v.partial_cmp(&u).unwrap_or(Ordering::Equal),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        opt_desc(fa, fb)
            .then_with(|| opt_desc(sa, sb))
            .then_with(|| a.cmp(&b))
    };
    Ok(evaluated
        .into_iter()
        .min_by(|&a, &b| better(a, b))
        .expect("non-empty"))
}

/// Trains the deployment model on the ENTIRE recording with the selected
/// parameters: entropy edges are refitted on the full recording's leak
/// seconds, and the model ships with the complete pipeline recipe so other
/// recordings can be evaluated without refitting anything.
pub fn train_final(
    data: &LabeledDataset,
    params: &SelectedParams,
    window_s: usize,
    fcfg: &FeatureConfig,
) -> Result<SvmModel> {
    fcfg.validate(window_s)?;
    let banding = BandingConfig::new(params.granularity_hz, params.metric)?;
    let banded = aggregate(&data.spectrogram, banding)?;
    let indices = pair_indices(&banded, &params.band_pair)?;
    let wcfg = WindowConfig::new(window_s, params.overlap_s)?;
    let edges = fit_entropy_edges(&banded, &indices, &data.labels, fcfg)?;
    let frame = featurize(&banded, &indices, &data.labels, &wcfg, fcfg, &edges)?;
    let y = to_pm1(frame.labels());
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::Validation(
            "full-recording windows contain a single class".into(),
        ));
    }
    let model = train(
        &frame_rows(&frame),
        &y,
        &TrainOptions::new(params.c, params.kernel),
    )?;
    model.with_context(
        frame.feature_names().to_vec(),
        PipelineMeta {
            banding,
            band_pair: params.band_pair,
            window: wcfg,
            features: fcfg.clone(),
            edges,
        },
    )
}

/// Rebuilds the model's feature frame on a new spectrogram using the
/// pipeline recipe frozen inside the model — nothing is refitted.
pub fn model_feature_frame(
    model: &SvmModel,
    spec: &Spectrogram,
    labels: &[u8],
) -> Result<FeatureFrame> {
    let meta = model.pipeline_meta.as_ref().ok_or_else(|| {
        Error::Validation("model carries no pipeline metadata; retrain with full context".into())
    })?;
    let banded = aggregate(spec, meta.banding)?;
    let indices = pair_indices(&banded, &meta.band_pair)?;
    let frame = featurize(
        &banded,
        &indices,
        labels,
        &meta.window,
        &meta.features,
        &meta.edges,
    )?;
    if frame.feature_names() != model.feature_order.as_slice() {
        return Err(Error::Validation(
            "rebuilt feature columns do not match the model's training columns".into(),
        ));
    }
    Ok(frame)
}

/// Applies a finished model to a labeled recording and scores it. The
/// model's frozen recipe (bands, metric, window, entropy edges,
/// standardizer) is used verbatim; no statistic is refitted.
pub fn transfer_evaluate(model: &SvmModel, target: &LabeledDataset) -> Result<Metrics> {
    let frame = model_feature_frame(model, &target.spectrogram, &target.labels)?;
    let preds: Result<Vec<u8>> = (0..frame.n_rows())
        .map(|r| model.predict(frame.row(r)))
        .collect();
    compute_metrics(frame.labels(), &preds?)
}

/// Per-window decisions over an (unlabeled) recording.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPredictions {
    pub window_starts: Vec<usize>,
    pub decisions: Vec<u8>,
    /// Raw decision-function values backing each decision.
    pub scores: Vec<f64>,
}

impl WindowPredictions {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("window_start_s,decision,score\n");
        for ((start, decision), score) in self
            .window_starts
            .iter()
            .zip(&self.decisions)
            .zip(&self.scores)
        {
            let _ = writeln!(out, "{start},{decision},{score}");
        }
        out
    }
}

/// Runs a finished model over every window of a recording.
pub fn predict_windows(model: &SvmModel, spec: &Spectrogram) -> Result<WindowPredictions> {
    let labels = vec![0u8; spec.duration_s()];
    let frame = model_feature_frame(model, spec, &labels)?;
    let mut decisions = Vec::with_capacity(frame.n_rows());
    let mut scores = Vec::with_capacity(frame.n_rows());
    for r in 0..frame.n_rows() {
        let score = model.decision_function(frame.row(r))?;
        decisions.push(u8::from(score > 0.0));
        scores.push(score);
    }
    Ok(WindowPredictions {
        window_starts: frame.window_starts().to_vec(),
        decisions,
        scores,
    })
}

/// Everything a full tuning run produces.
#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub search: GridSearchResult,
    /// Test-stage comparison of the leading band combinations.
    pub band_outcomes: Vec<BandComboOutcome>,
    /// Final parameters after the test stage (band pair may differ from
    /// the validation winner's).
    pub selected: SelectedParams,
    /// Model retrained on the whole recording with `selected`.
    pub model: SvmModel,
}

/// Full tuning pipeline: validation-stage grid search, test-stage band
/// comparison over the `top_candidates` best distinct (granularity,
/// metric, pair) triples, then final whole-recording training.
pub fn tune(
    data: &LabeledDataset,
    grid: &ParamGrid,
    split: &SplitSpec,
    window_s: usize,
    fcfg: &FeatureConfig,
    top_candidates: usize,
) -> Result<TuneOutcome> {
    if top_candidates == 0 {
        return Err(Error::Config("top_candidates must be at least 1".into()));
    }
    let search = grid_search(data, grid, split, window_s, fcfg)?;

    let mut ranked: Vec<&LedgerRow> = search
        .rows
        .iter()
        .filter(|r| r.validation.as_ref().is_some_and(|m| m.f1.is_some()))
        .collect();
    ranked.sort_by(|a, b| selection_order(a, b));
    let mut candidates: Vec<BandComboCandidate> = Vec::new();
    for row in ranked {
        let pair = row.band_pair.expect("evaluated row has a band pair");
        let candidate = BandComboCandidate {
            granularity_hz: row.combo.granularity_hz,
            metric: row.combo.metric,
            pair,
        };
        if !candidates.contains(&candidate) {
            candidates.push(candidate);
        }
        if candidates.len() == top_candidates {
            break;
        }
    }

    let band_outcomes = evaluate_band_combos(
        data,
        &search.selected.fixed_hyper(),
        &candidates,
        split,
        window_s,
        fcfg,
    )?;
    let winner = select_band_combo(&band_outcomes)?;
    let chosen = &band_outcomes[winner].candidate;
    let selected = SelectedParams {
        granularity_hz: chosen.granularity_hz,
        metric: chosen.metric,
        band_pair: chosen.pair,
        ..search.selected.clone()
    };
    let model = train_final(data, &selected, window_s, fcfg)?;
    Ok(TuneOutcome {
        search,
        band_outcomes,
        selected,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banding::Band;
    use crate::features::DEFAULT_WINDOW_S;
    use crate::synth::{BackgroundSpectrum, LeakSpec, SynthConfig};
    use approx::assert_relative_eq;

    #[test]
    fn split_matches_floor_arithmetic_oracle() {
        let r = split_chronological(3096, &SplitSpec::default(), 10).unwrap();
        assert_eq!(r, [0..1857, 1857..2476, 2476..3096]);
    }

    #[test]
    fn split_rejects_partitions_shorter_than_a_window() {
        // 30 s at 0.6/0.2/0.2 gives 18/6/6 — too short for 10 s windows
        let err = split_chronological(30, &SplitSpec::default(), 10).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        // but comfortably valid with 5 s windows
        let r = split_chronological(30, &SplitSpec::default(), 5).unwrap();
        assert_eq!(r, [0..18, 18..24, 24..30]);
    }

    #[test]
    fn split_rejects_fractions_not_summing_to_one() {
        let bad = SplitSpec {
            train: 0.5,
            validation: 0.2,
            test: 0.2,
        };
        assert!(split_chronological(1000, &bad, 10).is_err());
        let negative = SplitSpec {
            train: 1.2,
            validation: -0.1,
            test: -0.1,
        };
        assert!(split_chronological(1000, &negative, 10).is_err());
    }

    #[test]
    fn perfect_predictions_give_unit_ratios() {
        let y = [1u8, 0, 1, 0, 0, 1];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.recall, Some(1.0));
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(m.f1, Some(1.0));
    }

    #[test]
    fn confusion_oracle_tp14_fn3_fp0_tn300() {
        let mut y_true = Vec::new();
        let mut y_pred = Vec::new();
        y_true.extend(std::iter::repeat_n(1u8, 14));
        y_pred.extend(std::iter::repeat_n(1u8, 14)); // TP
        y_true.extend(std::iter::repeat_n(1u8, 3));
        y_pred.extend(std::iter::repeat_n(0u8, 3)); // FN
        y_true.extend(std::iter::repeat_n(0u8, 300));
        y_pred.extend(std::iter::repeat_n(0u8, 300)); // TN
        let m = compute_metrics(&y_true, &y_pred).unwrap();
        assert_eq!(
            (
                m.true_positives,
                m.false_negatives,
                m.false_positives,
                m.true_negatives
            ),
            (14, 3, 0, 300)
        );
        assert_relative_eq!(m.recall.unwrap(), 14.0 / 17.0, epsilon = 1e-15);
        assert_relative_eq!(m.recall.unwrap(), 0.8235, epsilon = 1e-4);
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.specificity, Some(1.0));
        let p = 1.0;
        let r = 14.0 / 17.0;
        assert_relative_eq!(m.f1.unwrap(), 2.0 * p * r / (p + r), epsilon = 1e-15);
    }

    #[test]
    fn all_negative_data_reports_na_not_zero_or_one() {
        let y = [0u8; 50];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!(m.recall, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(fmt_ratio(m.recall), "N/A");
        let report = m.render_report("target");
        assert!(report.contains("recall N/A"));
        assert!(report.contains("specificity 1"));
    }

    #[test]
    fn metric_input_validation() {
        assert!(compute_metrics(&[1, 0], &[1]).is_err());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[2, 0], &[1, 0]).is_err());
    }

    #[test]
    fn default_grid_has_540_effective_and_864_nominal_combos() {
        let grid = ParamGrid::default();
        assert_eq!(grid.enumerate().len(), 540);
        assert_eq!(grid.nominal_count(), 864);
    }

    #[test]
    fn equal_f1_ties_break_on_precision_then_cost_then_kernel() {
        let combo = |c: f64, kernel: KernelSpec| HyperCombo {
            granularity_hz: 1000,
            metric: Metric::Mean,
            overlap_s: 7,
            kernel,
            c,
        };
        let pair = BandPair::new(
            Band {
                lo_hz: 0.0,
                hi_hz: 1000.0,
            },
            Band {
                lo_hz: 1000.0,
                hi_hz: 2000.0,
            },
        )
        .unwrap();
        let row = |c, kernel, precision: f64, f1: f64| LedgerRow {
            combo: combo(c, kernel),
            band_pair: Some(pair),
            validation: Some(Metrics {
                true_positives: 1,
                false_positives: 0,
                true_negatives: 1,
                false_negatives: 0,
                accuracy: 1.0,
                precision: Some(precision),
                recall: Some(1.0),
                specificity: Some(1.0),
                f1: Some(f1),
            }),
            skip_reason: None,
        };
        // same F1: higher precision wins
        let a = row(10.0, KernelSpec::Linear, 1.0, 0.9);
        let b = row(1.0, KernelSpec::Linear, 0.9, 0.9);
        assert_eq!(selection_order(&a, &b), Ordering::Less);
        // same F1 and precision: lower C wins
        let c1 = row(1.0, KernelSpec::Linear, 1.0, 0.9);
        let c10 = row(10.0, KernelSpec::Linear, 1.0, 0.9);
        assert_eq!(selection_order(&c1, &c10), Ordering::Less);
        // same F1, precision, C: linear beats rbf
        let lin = row(1.0, KernelSpec::Linear, 1.0, 0.9);
        let rbf = row(1.0, KernelSpec::Rbf { gamma: 0.1 }, 1.0, 0.9);
        assert_eq!(selection_order(&lin, &rbf), Ordering::Less);
        // a defined F1 always beats an undefined one
        let mut na = row(1.0, KernelSpec::Linear, 1.0, 0.9);
        na.validation = None;
        assert_eq!(selection_order(&lin, &na), Ordering::Less);
    }

    /// Small synthetic recording with leak episodes in all three
    /// partitions (0.6/0.2/0.2 over 200 s -> boundaries at 120 and 160).
    fn desk_dataset() -> LabeledDataset {
        let cfg = SynthConfig {
            duration_s: 200,
            n_bins: 64,
            max_freq_hz: 8_000.0,
            seed: 11,
            background_level: 1.0,
            background_spectrum: BackgroundSpectrum::Tilt { alpha: 0.5 },
            leak_spec: vec![
                LeakSpec {
                    interval: (20, 45),
                    band_hz: (1_000.0, 3_000.0),
                    snr_db: 12.0,
                },
                LeakSpec {
                    interval: (60, 80),
                    band_hz: (1_000.0, 3_000.0),
                    snr_db: 12.0,
                },
                LeakSpec {
                    interval: (95, 115),
                    band_hz: (1_000.0, 3_000.0),
                    snr_db: 12.0,
                },
                LeakSpec {
                    interval: (128, 150),
                    band_hz: (1_000.0, 3_000.0),
                    snr_db: 12.0,
                },
                LeakSpec {
                    interval: (165, 190),
                    band_hz: (1_000.0, 3_000.0),
                    snr_db: 12.0,
                },
            ],
            process_spec: vec![],
            jitter_cv: 0.2,
        };
        let (spec, ann) = crate::synth::generate(&cfg).unwrap();
        LabeledDataset::new(spec, &ann).unwrap()
    }

    fn one_combo_grid() -> ParamGrid {
        ParamGrid {
            granularities_hz: vec![1_000],
            metrics: vec![Metric::Mean],
            overlaps_s: vec![7],
            kernels: vec![KernelKind::Linear],
            costs: vec![1.0],
            gammas: vec![],
        }
    }

    #[test]
    fn single_combo_grid_matches_manual_stage_composition() {
        let data = desk_dataset();
        let split = SplitSpec::default();
        let fcfg = FeatureConfig::default();
        let result =
            grid_search(&data, &one_combo_grid(), &split, DEFAULT_WINDOW_S, &fcfg).unwrap();
        assert_eq!(result.rows.len(), 1);
        let row = &result.rows[0];
        assert!(row.skip_reason.is_none(), "{:?}", row.skip_reason);

        // Manual composition of the same stages.
        let ranges = split_chronological(200, &split, DEFAULT_WINDOW_S).unwrap();
        let banded = aggregate(
            &data.spectrogram,
            BandingConfig::new(1_000, Metric::Mean).unwrap(),
        )
        .unwrap();
        let train_slice = banded.slice(ranges[0].clone()).unwrap();
        let val_slice = banded.slice(ranges[1].clone()).unwrap();
        let train_labels = &data.labels[ranges[0].clone()];
        let val_labels = &data.labels[ranges[1].clone()];
        let ranking = rank_bands(&train_slice, train_labels).unwrap();
        let pair = select_band_pair(&ranking, &PairStrategy::Top2).unwrap();
        assert_eq!(result.selected.band_pair, pair);
        let indices = pair_indices(&banded, &pair).unwrap();
        let edges = fit_entropy_edges(&train_slice, &indices, train_labels, &fcfg).unwrap();
        let wcfg = WindowConfig::new(DEFAULT_WINDOW_S, 7).unwrap();
        let train_frame =
            featurize(&train_slice, &indices, train_labels, &wcfg, &fcfg, &edges).unwrap();
        let val_frame = featurize(&val_slice, &indices, val_labels, &wcfg, &fcfg, &edges).unwrap();
        let model = train(
            &frame_rows(&train_frame),
            &to_pm1(train_frame.labels()),
            &TrainOptions::new(1.0, KernelSpec::Linear),
        )
        .unwrap();
        let preds: Vec<u8> = (0..val_frame.n_rows())
            .map(|r| model.predict(val_frame.row(r)).unwrap())
            .collect();
        let manual = compute_metrics(val_frame.labels(), &preds).unwrap();
        assert_eq!(row.validation, Some(manual));
    }

    #[test]
    fn leak_band_pair_is_selected_and_validation_f1_is_strong() {
        let data = desk_dataset();
        let result = grid_search(
            &data,
            &one_combo_grid(),
            &SplitSpec::default(),
            DEFAULT_WINDOW_S,
            &FeatureConfig::default(),
        )
        .unwrap();
        // the planted leak occupies 1–3 kHz, so the selected pair must be
        // drawn from those bands
        let pair = result.selected.band_pair;
        for band in [pair.first, pair.second] {
            assert!(
                band.lo_hz >= 1_000.0 && band.hi_hz <= 3_000.0,
                "selected band {}..{} outside the planted leak range",
                band.lo_hz,
                band.hi_hz
            );
        }
        let f1 = result.rows[0].validation.as_ref().unwrap().f1.unwrap();
        assert!(f1 > 0.8, "validation f1 = {f1}");
    }

    #[test]
    fn selection_is_invariant_under_grid_reordering() {
        let data = desk_dataset();
        let fcfg = FeatureConfig::default();
        let grid = ParamGrid {
            granularities_hz: vec![1_000, 2_000],
            metrics: vec![Metric::Mean, Metric::Iqr],
            overlaps_s: vec![5, 7],
            kernels: vec![KernelKind::Linear],
            costs: vec![1.0, 10.0],
            gammas: vec![],
        };
        let reversed = ParamGrid {
            granularities_hz: vec![2_000, 1_000],
            metrics: vec![Metric::Iqr, Metric::Mean],
            overlaps_s: vec![7, 5],
            kernels: vec![KernelKind::Linear],
            costs: vec![10.0, 1.0],
            gammas: vec![],
        };
        let split = SplitSpec::default();
        let a = grid_search(&data, &grid, &split, DEFAULT_WINDOW_S, &fcfg).unwrap();
        let b = grid_search(&data, &reversed, &split, DEFAULT_WINDOW_S, &fcfg).unwrap();
        assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn ledger_csv_has_one_row_per_combo_and_quotes_reasons() {
        let data = desk_dataset();
        let grid = ParamGrid {
            granularities_hz: vec![1_000],
            metrics: vec![Metric::Mean],
            overlaps_s: vec![5, 7],
            kernels: vec![KernelKind::Linear],
            costs: vec![1.0],
            gammas: vec![],
        };
        let result = grid_search(
            &data,
            &grid,
            &SplitSpec::default(),
            DEFAULT_WINDOW_S,
            &FeatureConfig::default(),
        )
        .unwrap();
        let csv = result.ledger_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3); // header + 2 combos
        assert!(lines[0].starts_with("granularity_hz,metric,overlap_s,kernel,c,gamma"));
        assert!(lines[1].starts_with("1000,mean,5,linear,1,,"));
        assert!(lines[2].starts_with("1000,mean,7,linear,1,,"));
        // a skip reason containing a comma must be quoted
        let quoted = csv_field("skipped: a, b");
        assert_eq!(quoted, "\"skipped: a, b\"");
    }

    #[test]
    fn candidate_labels_render_metric_and_normalized_pair_names() {
        let c1 = BandComboCandidate {
            granularity_hz: 1_000,
            metric: Metric::Iqr,
            pair: BandPair::new(
                Band {
                    lo_hz: 2_000.0,
                    hi_hz: 3_000.0,
                },
                Band {
                    lo_hz: 1_000.0,
                    hi_hz: 2_000.0,
                },
            )
            .unwrap(),
        };
        // order-normalized: ascending lo_hz regardless of construction order
        assert_eq!(c1.label(), "iqr band_1k_2k_2k_3k");
        let c2 = BandComboCandidate {
            granularity_hz: 2_000,
            metric: Metric::Mean,
            pair: BandPair::new(
                Band {
                    lo_hz: 0.0,
                    hi_hz: 2_000.0,
                },
                Band {
                    lo_hz: 2_000.0,
                    hi_hz: 4_000.0,
                },
            )
            .unwrap(),
        };
        assert_eq!(c2.label(), "mean band_0_2k_2k_4k");
    }

    #[test]
    fn band_combo_evaluation_and_selection_on_desk_data() {
        let data = desk_dataset();
        let fcfg = FeatureConfig::default();
        let hyper = FixedHyperParams {
            overlap_s: 7,
            kernel: KernelSpec::Linear,
            c: 1.0,
        };
        let band = |lo: f64, hi: f64| Band {
            lo_hz: lo,
            hi_hz: hi,
        };
        let candidates = vec![
            BandComboCandidate {
                granularity_hz: 1_000,
                metric: Metric::Mean,
                pair: BandPair::new(band(1_000.0, 2_000.0), band(2_000.0, 3_000.0)).unwrap(),
            },
            // a pair far from the planted leak band
            BandComboCandidate {
                granularity_hz: 1_000,
                metric: Metric::Mean,
                pair: BandPair::new(band(5_000.0, 6_000.0), band(6_000.0, 7_000.0)).unwrap(),
            },
        ];
        let outcomes = evaluate_band_combos(
            &data,
            &hyper,
            &candidates,
            &SplitSpec::default(),
            DEFAULT_WINDOW_S,
            &fcfg,
        )
        .unwrap();
        assert_eq!(outcomes.len(), 2);
        let leak_metrics = outcomes[0].test.as_ref().unwrap();
        assert!(leak_metrics.recall.is_some(), "test partition has leaks");
        let winner = select_band_combo(&outcomes).unwrap();
        assert_eq!(winner, 0, "leak-band pair must beat the off-band pair");
        // single-candidate list works and returns index 0
        let solo = evaluate_band_combos(
            &data,
            &hyper,
            &candidates[..1],
            &SplitSpec::default(),
            DEFAULT_WINDOW_S,
            &fcfg,
        )
        .unwrap();
        assert_eq!(solo.len(), 1);
        assert_eq!(select_band_combo(&solo).unwrap(), 0);
        // the plot CSV carries one data row per evaluated candidate
        let csv = render_pr_csv(&outcomes);
        assert_eq!(csv.lines().count(), 1 + 2);
        assert!(csv.starts_with("granularity_hz,metric,band_pair,precision,recall\n"));
    }

    #[test]
    fn final_model_transfers_and_predicts_deterministically() {
        let data = desk_dataset();
        let fcfg = FeatureConfig::default();
        let params = SelectedParams {
            granularity_hz: 1_000,
            metric: Metric::Mean,
            overlap_s: 7,
            kernel: KernelSpec::Linear,
            c: 1.0,
            band_pair: BandPair::new(
                Band {
                    lo_hz: 1_000.0,
                    hi_hz: 2_000.0,
                },
                Band {
                    lo_hz: 2_000.0,
                    hi_hz: 3_000.0,
                },
            )
            .unwrap(),
        };
        let model = train_final(&data, &params, DEFAULT_WINDOW_S, &fcfg).unwrap();
        assert!(model.pipeline_meta.is_some());
        assert_eq!(model.feature_order.len(), 52);

        // transfer back onto the training recording: near-perfect scores
        let m = transfer_evaluate(&model, &data).unwrap();
        assert!(m.accuracy > 0.95, "self-transfer accuracy {}", m.accuracy);

        // prediction table covers exactly the framed windows
        let preds = predict_windows(&model, &data.spectrogram).unwrap();
        let expected_windows = (200 - 10) / 3 + 1; // stride = window - overlap
        assert_eq!(preds.window_starts.len(), expected_windows);
        assert_eq!(preds.decisions.len(), expected_windows);
        let csv = preds.to_csv();
        assert_eq!(csv.lines().count(), 1 + expected_windows);
        assert!(csv.starts_with("window_start_s,decision,score\n"));
        // determinism: a second run produces the identical table
        let again = predict_windows(&model, &data.spectrogram).unwrap();
        assert_eq!(preds, again);
    }

    #[test]
    fn transfer_requires_pipeline_metadata() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let bare = train(&x, &[-1.0, 1.0], &TrainOptions::default()).unwrap();
        let data = desk_dataset();
        let err = transfer_evaluate(&bare, &data).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn selected_params_round_trip_through_text() {
        let params = SelectedParams {
            granularity_hz: 2_000,
            metric: Metric::Iqr,
            overlap_s: 7,
            kernel: KernelSpec::Rbf { gamma: 0.001 },
            c: 100.0,
            band_pair: BandPair::new(
                Band {
                    lo_hz: 0.0,
                    hi_hz: 2_000.0,
                },
                Band {
                    lo_hz: 2_000.0,
                    hi_hz: 4_000.0,
                },
            )
            .unwrap(),
        };
        let text = params.to_text();
        assert_eq!(SelectedParams::from_text(&text).unwrap(), params);
        // comments and blank lines are tolerated
        let with_comment = format!("# tuned params\n\n{text}");
        assert_eq!(SelectedParams::from_text(&with_comment).unwrap(), params);
        // unknown kernel rejected
        let bad = text.replace("rbf 0.001", "poly 3");
        assert!(SelectedParams::from_text(&bad).is_err());
        // missing key rejected
        let missing = text.replace("granularity_hz 2000\n", "");
        assert!(SelectedParams::from_text(&missing).is_err());
    }

    #[test]
    fn tune_produces_a_transferable_model_on_desk_data() {
        let data = desk_dataset();
        let grid = ParamGrid {
            granularities_hz: vec![1_000],
            metrics: vec![Metric::Mean, Metric::Iqr],
            overlaps_s: vec![7],
            kernels: vec![KernelKind::Linear],
            costs: vec![1.0],
            gammas: vec![],
        };
        let outcome = tune(
            &data,
            &grid,
            &SplitSpec::default(),
            DEFAULT_WINDOW_S,
            &FeatureConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(outcome.search.rows.len(), 2);
        assert!(!outcome.band_outcomes.is_empty());
        assert!(outcome.model.pipeline_meta.is_some());
        let m = transfer_evaluate(&outcome.model, &data).unwrap();
        assert!(
            m.accuracy > 0.9,
            "tuned self-transfer accuracy {}",
            m.accuracy
        );
    }
}
