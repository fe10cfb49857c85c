//! Soft-margin support vector classifier.
//!
//! Training standardizes features, precomputes the kernel Gram matrix, and
//! runs a sequential-minimal-optimization solver on the dual problem (see
//! [`smo`]). Models carry everything prediction needs — kernel, dual
//! coefficients, support vectors, bias, standardizer — plus the pipeline
//! metadata (banding, band pair, window, feature parameters, entropy
//! edges) that lets a saved model process a raw spectrogram end to end.
//!
//! Training is deliberately single-threaded per model; the grid search
//! layer runs many independent trainings concurrently instead.

mod io;
mod smo;

pub use io::{load_model, save_model};

use crate::banding::{BandPair, BandingConfig};
use crate::features::{EntropyEdges, FeatureConfig, WindowConfig};
use crate::{Error, Result};

/// Kernel function choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf { gamma } = self {
            if !gamma.is_finite() || *gamma <= 0.0 {
                return Err(Error::Config(format!(
                    "rbf gamma must be a positive finite number, got {gamma}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, z)| x * z).sum(),
            KernelSpec::Rbf { gamma } => {
                let sq: f64 = a.iter().zip(b).map(|(x, z)| (x - z) * (x - z)).sum();
                (-gamma * sq).exp()
            }
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Linear => f.write_str("linear"),
            KernelSpec::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
        }
    }
}

/// Per-feature location/scale fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; zero-std features map inputs to 0.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.means.len() {
            return Err(Error::Validation(format!(
                "row has {} features, standardizer expects {}",
                row.len(),
                self.means.len()
            )));
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect())
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

/// Fits per-column mean and population standard deviation.
pub fn fit_standardizer(rows: &[Vec<f64>]) -> Result<Standardizer> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Validation(
            "cannot standardize an empty matrix".into(),
        ));
    }
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for row in rows {
        if row.len() != d {
            return Err(Error::Validation("ragged feature matrix".into()));
        }
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; d];
    for row in rows {
        for ((s, &v), &m) in stds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
    }
    Ok(Standardizer { means, stds })
}

/// Everything needed to run a saved model on a raw spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineMeta {
    pub banding: BandingConfig,
    pub band_pair: BandPair,
    pub window: WindowConfig,
    pub features: FeatureConfig,
    /// Entropy bin edges frozen from the training split.
    pub edges: EntropyEdges,
}

/// Training knobs. `tol` is the KKT tolerance, `max_passes` the pair-update
/// budget; `balance_classes` rescales each class's cap to
/// `C · n / (2 · n_class)` (off for all standard protocol runs).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub c: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_passes: usize,
    pub balance_classes: bool,
}

impl TrainOptions {
    pub fn new(c: f64, kernel: KernelSpec) -> Self {
        TrainOptions {
            c,
            kernel,
            ..TrainOptions::default()
        }
    }
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            c: 1.0,
            kernel: KernelSpec::Linear,
            tol: 1e-3,
            max_passes: 50_000,
            balance_classes: false,
        }
    }
}

/// A trained classifier. Invariants: `0 ≤ α_i ≤ cap_i`, `Σ α_i y_i ≈ 0`
/// (within 1e-6), every stored support vector has a nonzero coefficient,
/// and `support_vectors` rows are standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    /// Standardized feature rows with nonzero α.
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i · y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub standardizer: Standardizer,
    /// Column names in the order rows must be presented.
    pub feature_order: Vec<String>,
    pub pipeline_meta: Option<PipelineMeta>,
    /// False when training stopped on the iteration budget instead of the
    /// KKT tolerance.
    pub converged: bool,
    pub iterations: usize,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.standardizer.n_features()
    }

    /// Attaches the real column names and pipeline metadata (training
    /// itself only sees an anonymous matrix).
    pub fn with_context(mut self, feature_order: Vec<String>, meta: PipelineMeta) -> Result<Self> {
        if feature_order.len() != self.n_features() {
            return Err(Error::Validation(format!(
                "{} feature names for a {}-feature model",
                feature_order.len(),
                self.n_features()
            )));
        }
        self.feature_order = feature_order;
        self.pipeline_meta = Some(meta);
        Ok(self)
    }

    /// Raw margin `f(x) = Σ dual_coef_i · K(sv_i, standardize(x)) + b`.
    pub fn decision_function(&self, x_raw: &[f64]) -> Result<f64> {
        let xs = self.standardizer.apply_row(x_raw)?;
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            f += coef * self.kernel.eval(sv, &xs);
        }
        Ok(f)
    }

    /// 1 for leak, 0 otherwise; the tie f = 0 goes to 0 (favor no-alarm).
    pub fn predict(&self, x_raw: &[f64]) -> Result<u8> {
        Ok(u8::from(self.decision_function(x_raw)? > 0.0))
    }

    /// Linear-kernel primal weights `w = Σ dual_coef_i · sv_i` (in
    /// standardized space). Errors for non-linear kernels.
    pub fn primal_weights(&self) -> Result<Vec<f64>> {
        if self.kernel != KernelSpec::Linear {
            return Err(Error::Validation(
                "primal weights exist only for the linear kernel".into(),
            ));
        }
        let d = self.n_features();
        let mut w = vec![0.0; d];
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            for (wk, &v) in w.iter_mut().zip(sv) {
                *wk += coef * v;
            }
        }
        Ok(w)
    }
}

/// Trains a soft-margin SVM. Labels must be exactly ±1 with both classes
/// present; rows are standardized internally (the fitted standardizer ships
/// with the model). Non-convergence within the budget returns the best
/// iterate with `converged = false` rather than an error.
pub fn train(x: &[Vec<f64>], y: &[f64], opts: &TrainOptions) -> Result<SvmModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Validation(format!(
            "{} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Validation(format!(
                "row {i} has arity {}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "row {i} contains non-finite values"
            )));
        }
    }
    let n_pos = y.iter().filter(|&&v| v == 1.0).count();
    let n_neg = y.iter().filter(|&&v| v == -1.0).count();
    if n_pos + n_neg != y.len() {
        return Err(Error::Validation("labels must be exactly +1 or -1".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation(
            "training labels contain a single class".into(),
        ));
    }
    if !opts.c.is_finite() || opts.c <= 0.0 {
        return Err(Error::Config(format!("C must be positive, got {}", opts.c)));
    }
    if !opts.tol.is_finite() || opts.tol <= 0.0 || opts.max_passes == 0 {
        return Err(Error::Config("tol must be > 0 and max_passes >= 1".into()));
    }
    opts.kernel.validate()?;

    let standardizer = fit_standardizer(x)?;
    let xs = standardizer.apply(x)?;
    let n = xs.len();

    let caps: Vec<f64> = if opts.balance_classes {
        y.iter()
            .map(|&yi| {
                let class_n = if yi > 0.0 { n_pos } else { n_neg };
                opts.c * n as f64 / (2.0 * class_n as f64)
            })
            .collect()
    } else {
        vec![opts.c; n]
    };

    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = opts.kernel.eval(&xs[i], &xs[j]);
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }

    let result = smo::solve(&gram, n, y, &caps, opts.tol, opts.max_passes);

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, &a) in result.alpha.iter().enumerate() {
        if a > 1e-12 {
            support_vectors.push(xs[i].clone());
            dual_coefs.push(a * y[i]);
        }
    }
    let feature_order = (0..d).map(|k| format!("f{k}")).collect();
    Ok(SvmModel {
        kernel: opts.kernel,
        c: opts.c,
        support_vectors,
        dual_coefs,
        bias: result.bias,
        standardizer,
        feature_order,
        pipeline_meta: None,
        converged: result.converged,
        iterations: result.iterations,
    })
}

/// The raw optimizer output: the full multiplier vector (zeros included),
/// not just the support vectors a trained model retains.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Low-level entry to the dual solver for verification and diagnostics:
/// minimizes `½ Σ α_i α_j y_i y_j K_ij − Σ α_i` over `0 ≤ α ≤ c`,
/// `Σ α_i y_i = 0`, given a precomputed row-major `n × n` Gram matrix.
/// No standardization or support-vector filtering happens here.
pub fn solve_dual(
    gram: &[f64],
    y: &[f64],
    c: f64,
    tol: f64,
    max_passes: usize,
) -> Result<DualSolution> {
    let n = y.len();
    if n == 0 || gram.len() != n * n {
        return Err(Error::Validation(format!(
            "gram matrix has {} entries, expected {}",
            gram.len(),
            n * n
        )));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Validation("labels must be exactly +1 or -1".into()));
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::Config(format!("C must be positive, got {c}")));
    }
    if !tol.is_finite() || tol <= 0.0 || max_passes == 0 {
        return Err(Error::Config("tol must be > 0 and max_passes >= 1".into()));
    }
    let result = smo::solve(gram, n, y, &vec![c; n], tol, max_passes);
    Ok(DualSolution {
        alpha: result.alpha,
        bias: result.bias,
        converged: result.converged,
        iterations: result.iterations,
    })
}
