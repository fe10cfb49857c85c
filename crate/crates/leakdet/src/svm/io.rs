//! Model file format: versioned line-oriented text.
//!
//! Every f64 is written as the 16-hex-digit big-endian bit pattern of its
//! IEEE-754 representation, so save -> load reproduces each value exactly
//! and predictions round-trip bit for bit. Counts and names are plain
//! text. Keys appear in a fixed order and unknown or missing keys are load
//! errors — the format is a contract, not a suggestion.

use std::path::Path;

use crate::banding::{Band, BandPair, BandingConfig};
use crate::features::{EntropyEdges, FeatureConfig, WindowConfig};
use crate::{Error, Result};

use super::{KernelSpec, PipelineMeta, Standardizer, SvmModel};

const MAGIC: &str = "leakdet-svm v1";

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_list(vs: &[f64]) -> String {
    vs.iter().map(|&v| hex(v)).collect::<Vec<_>>().join(" ")
}

/// Serializes a model; the write is atomic (temp file + rename).
pub fn save_model(model: &SvmModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    match model.kernel {
        KernelSpec::Linear => out.push_str("kernel linear\n"),
        KernelSpec::Rbf { gamma } => out.push_str(&format!("kernel rbf {}\n", hex(gamma))),
    }
    out.push_str(&format!("c {}\n", hex(model.c)));
    out.push_str(&format!("bias {}\n", hex(model.bias)));
    out.push_str(&format!("converged {}\n", model.converged));
    out.push_str(&format!("iterations {}\n", model.iterations));
    out.push_str(&format!("n_features {}\n", model.n_features()));
    out.push_str(&format!(
        "feature_names {}\n",
        model.feature_order.join(",")
    ));
    out.push_str(&format!(
        "standardizer_means {}\n",
        hex_list(&model.standardizer.means)
    ));
    out.push_str(&format!(
        "standardizer_stds {}\n",
        hex_list(&model.standardizer.stds)
    ));
    out.push_str(&format!("n_sv {}\n", model.support_vectors.len()));
    for (sv, &coef) in model.support_vectors.iter().zip(&model.dual_coefs) {
        out.push_str(&format!("sv {} {}\n", hex(coef), hex_list(sv)));
    }
    match &model.pipeline_meta {
        None => out.push_str("meta absent\n"),
        Some(meta) => {
            out.push_str("meta present\n");
            out.push_str(&format!(
                "meta_granularity_hz {}\n",
                meta.banding.granularity_hz
            ));
            out.push_str(&format!("meta_metric {}\n", meta.banding.metric));
            out.push_str(&format!(
                "meta_band_pair {} {} {} {}\n",
                hex(meta.band_pair.first.lo_hz),
                hex(meta.band_pair.first.hi_hz),
                hex(meta.band_pair.second.lo_hz),
                hex(meta.band_pair.second.hi_hz),
            ));
            out.push_str(&format!(
                "meta_window {} {}\n",
                meta.window.window_s, meta.window.overlap_s
            ));
            out.push_str(&format!(
                "meta_autocorr_lags {}\n",
                join_usizes(&meta.features.autocorr_lags)
            ));
            out.push_str(&format!(
                "meta_pct_lags {}\n",
                join_usizes(&meta.features.pct_lags)
            ));
            out.push_str(&format!("meta_apen_m {}\n", meta.features.apen_m));
            out.push_str(&format!(
                "meta_apen_r_factor {}\n",
                hex(meta.features.apen_r_factor)
            ));
            out.push_str(&format!(
                "meta_entropy_quantiles {}\n",
                hex_list(&meta.features.entropy_quantiles)
            ));
            out.push_str(&format!("meta_edges {}\n", meta.edges.per_band.len()));
            for (band, edges) in &meta.edges.per_band {
                out.push_str(&format!(
                    "edge {} {} {}\n",
                    hex(band.lo_hz),
                    hex(band.hi_hz),
                    hex_list(edges)
                ));
            }
        }
    }
    out.push_str("end\n");
    crate::fsutil::write_atomic(path, out.as_bytes())
}

/// Strict line-cursor over the model file.
struct Reader<'a> {
    lines: std::str::Lines<'a>,
    lineno: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            lines: text.lines(),
            lineno: 0,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.lineno += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::Model(format!("truncated model file at line {}", self.lineno)))
    }

    /// Consumes one line that must start with `key`; returns the rest.
    fn expect(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.strip_prefix(key) {
            Some("") => Ok(""),
            Some(rest) if rest.starts_with(' ') => Ok(&rest[1..]),
            _ => Err(Error::Model(format!(
                "line {}: expected key {key:?}, got {line:?}",
                self.lineno
            ))),
        }
    }
}

fn parse_hex(token: &str) -> Result<f64> {
    if token.len() != 16 {
        return Err(Error::Model(format!("bad float token {token:?}")));
    }
    u64::from_str_radix(token, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::Model(format!("bad float token {token:?}")))
}

fn parse_hex_list(text: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Result<Vec<f64>> = text.split_whitespace().map(parse_hex).collect();
    let values = values?;
    if values.len() != expected {
        return Err(Error::Model(format!(
            "expected {expected} floats, found {}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_count(text: &str) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| Error::Model(format!("bad count {text:?}")))
}

fn join_usizes(vs: &[usize]) -> String {
    vs.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_usizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Model(format!("bad integer list entry {t:?}")))
        })
        .collect()
}

/// Loads a model saved by [`save_model`].
pub fn load_model(path: &Path) -> Result<SvmModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&text);

    let magic = r.next_line()?;
    if magic != MAGIC {
        return Err(Error::Model(format!(
            "not a model file (header {magic:?}, expected {MAGIC:?})"
        )));
    }
    let kernel_line = r.expect("kernel")?;
    let kernel = {
        let mut parts = kernel_line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("linear"), None) => KernelSpec::Linear,
            (Some("rbf"), Some(g)) => KernelSpec::Rbf {
                gamma: parse_hex(g)?,
            },
            _ => return Err(Error::Model(format!("bad kernel line {kernel_line:?}"))),
        }
    };
    let c = parse_hex(r.expect("c")?)?;
    let bias = parse_hex(r.expect("bias")?)?;
    let converged = match r.expect("converged")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Model(format!("bad converged flag {other:?}"))),
    };
    let iterations = parse_count(r.expect("iterations")?)?;
    let n_features = parse_count(r.expect("n_features")?)?;
    if n_features == 0 {
        return Err(Error::Model("model has zero features".into()));
    }
    let feature_order: Vec<String> = r
        .expect("feature_names")?
        .split(',')
        .map(str::to_string)
        .collect();
    if feature_order.len() != n_features {
        return Err(Error::Model(format!(
            "{} feature names for {n_features} features",
            feature_order.len()
        )));
    }
    let means = parse_hex_list(r.expect("standardizer_means")?, n_features)?;
    let stds = parse_hex_list(r.expect("standardizer_stds")?, n_features)?;
    let n_sv = parse_count(r.expect("n_sv")?)?;
    let mut support_vectors = Vec::with_capacity(n_sv);
    let mut dual_coefs = Vec::with_capacity(n_sv);
    for _ in 0..n_sv {
        let row = parse_hex_list(r.expect("sv")?, n_features + 1)?;
        dual_coefs.push(row[0]);
        support_vectors.push(row[1..].to_vec());
    }

    let pipeline_meta = match r.expect("meta")? {
        "absent" => None,
        "present" => Some(load_meta(&mut r)?),
        other => return Err(Error::Model(format!("bad meta marker {other:?}"))),
    };
    r.expect("end")?;

    let model = SvmModel {
        kernel,
        c,
        support_vectors,
        dual_coefs,
        bias,
        standardizer: Standardizer { means, stds },
        feature_order,
        pipeline_meta,
        converged,
        iterations,
    };
    model.kernel.validate()?;
    Ok(model)
}

fn load_meta(r: &mut Reader<'_>) -> Result<PipelineMeta> {
    let granularity_hz = parse_count(r.expect("meta_granularity_hz")?)? as u32;
    let metric = r.expect("meta_metric")?.parse()?;
    let banding = BandingConfig::new(granularity_hz, metric)?;
    let pair_edges = parse_hex_list(r.expect("meta_band_pair")?, 4)?;
    let band_pair = BandPair::new(
        Band {
            lo_hz: pair_edges[0],
            hi_hz: pair_edges[1],
        },
        Band {
            lo_hz: pair_edges[2],
            hi_hz: pair_edges[3],
        },
    )?;
    let window_line = r.expect("meta_window")?;
    let mut window_parts = window_line.split_whitespace();
    let window_s = parse_count(window_parts.next().unwrap_or(""))?;
    let overlap_s = parse_count(window_parts.next().unwrap_or(""))?;
    let window = WindowConfig::new(window_s, overlap_s)?;
    let autocorr_lags = parse_usizes(r.expect("meta_autocorr_lags")?)?;
    let pct_lags = parse_usizes(r.expect("meta_pct_lags")?)?;
    let apen_m = parse_count(r.expect("meta_apen_m")?)?;
    let apen_r_factor = parse_hex(r.expect("meta_apen_r_factor")?)?;
    let quantiles_line = r.expect("meta_entropy_quantiles")?;
    let entropy_quantiles: Result<Vec<f64>> =
        quantiles_line.split_whitespace().map(parse_hex).collect();
    let entropy_quantiles = entropy_quantiles?;
    let features = FeatureConfig {
        autocorr_lags,
        pct_lags,
        entropy_quantiles: entropy_quantiles.clone(),
        apen_m,
        apen_r_factor,
    };
    let n_edges = parse_count(r.expect("meta_edges")?)?;
    let mut per_band = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let row = parse_hex_list(r.expect("edge")?, 2 + entropy_quantiles.len())?;
        per_band.push((
            Band {
                lo_hz: row[0],
                hi_hz: row[1],
            },
            row[2..].to_vec(),
        ));
    }
    Ok(PipelineMeta {
        banding,
        band_pair,
        window,
        features,
        edges: EntropyEdges {
            quantiles: entropy_quantiles,
            per_band,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::banding::Metric;
    use crate::svm::{train, TrainOptions};

    fn trained_fixture() -> SvmModel {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut state = 42u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..30 {
            let a = next();
            let b = next();
            x.push(vec![a, b, a * b]);
            y.push(if a - b > 0.2 { 1.0 } else { -1.0 });
        }
        train(
            &x,
            &y,
            &TrainOptions::new(5.0, KernelSpec::Rbf { gamma: 0.7 }),
        )
        .unwrap()
    }

    fn sample_meta() -> PipelineMeta {
        PipelineMeta {
            banding: BandingConfig::new(2_000, Metric::Mean).unwrap(),
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
            window: WindowConfig::new(10, 7).unwrap(),
            features: FeatureConfig::default(),
            edges: EntropyEdges {
                quantiles: vec![0.05, 0.10, 0.95, 0.99],
                per_band: vec![
                    (
                        Band {
                            lo_hz: 0.0,
                            hi_hz: 2_000.0,
                        },
                        vec![0.1, 0.2, 3.7, 4.001],
                    ),
                    (
                        Band {
                            lo_hz: 2_000.0,
                            hi_hz: 4_000.0,
                        },
                        vec![0.01, 0.02, 0.37, 0.4001],
                    ),
                ],
            },
        }
    }

    #[test]
    fn round_trip_preserves_predictions_bit_exactly() {
        let model = trained_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.svm");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);

        let mut state = 7u64;
        for _ in 0..100 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let a = (state >> 11) as f64 / (1u64 << 53) as f64 * 6.0 - 3.0;
            let probe = vec![a, -a * 0.5, a * a];
            assert_eq!(
                model.decision_function(&probe).unwrap().to_bits(),
                loaded.decision_function(&probe).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn meta_round_trips_with_band_pair_name() {
        let model = trained_fixture()
            .with_context(vec!["a".into(), "b".into(), "ab".into()], sample_meta())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.svm");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let meta = loaded.pipeline_meta.as_ref().unwrap();
        assert_eq!(meta.band_pair.name(), "band_0_2k_2k_4k");
        assert_eq!(meta, &sample_meta());
        assert_eq!(loaded.feature_order, vec!["a", "b", "ab"]);
    }

    #[test]
    fn wrong_magic_is_a_model_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.svm");
        std::fs::write(&path, "not-a-model v9\n").unwrap();
        assert!(matches!(load_model(&path), Err(Error::Model(_))));
    }

    #[test]
    fn truncated_file_is_a_model_error() {
        let model = trained_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.svm");
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Model(_))));
    }

    #[test]
    fn corrupted_float_token_is_a_model_error() {
        let model = trained_fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.svm");
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let bad = text.replacen("bias ", "bias zz", 1);
        std::fs::write(&path, bad).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Model(_))));
    }
}
