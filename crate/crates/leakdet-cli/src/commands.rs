//! Implementations of the six subcommands.

use std::path::{Path, PathBuf};

use leakdet::dataset::{load_spectrogram_with_meta, LeakAnnotation, Spectrogram};
use leakdet::fsutil::write_atomic;
use leakdet::pipeline::{self, LabeledDataset, SelectedParams};
use leakdet::svm::{load_model, save_model};
use leakdet::{Error, Result};

use crate::config::RunConfig;

/// Resolves a required path: flag first, then the `[paths]` key.
fn require_path(
    flag: Option<PathBuf>,
    from_config: Option<&PathBuf>,
    flag_name: &str,
    config_key: &str,
) -> Result<PathBuf> {
    flag.or_else(|| from_config.cloned()).ok_or_else(|| {
        Error::Config(format!(
            "missing {config_key} path: pass --{flag_name} or set [paths] {config_key}"
        ))
    })
}

fn config_path<'c>(
    config: &'c RunConfig,
    pick: fn(&'c crate::config::PathsSection) -> Option<&'c PathBuf>,
) -> Option<&'c PathBuf> {
    config.paths.as_ref().and_then(pick)
}

fn load_dataset(config: &RunConfig, path: &Path) -> Result<Spectrogram> {
    let (n_bins, sample_rate_hz, max_freq_hz) = config.dataset_load_meta();
    load_spectrogram_with_meta(path, n_bins, sample_rate_hz, max_freq_hz)
}

pub fn cmd_synth(
    config: &RunConfig,
    preset_flag: Option<&str>,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let (synth_cfg, name) = config.synth_config(preset_flag, seed)?;
    let (spectrogram, annotation) = leakdet::synth::generate(&synth_cfg)?;
    let spec_path = out_dir.join(format!("{name}_spectrogram.txt"));
    let ann_path = out_dir.join(format!("{name}_annotation.csv"));
    spectrogram.save(&spec_path)?;
    annotation.save(&ann_path)?;
    println!(
        "wrote {} (duration_s {}, n_bins {})",
        spec_path.display(),
        spectrogram.duration_s(),
        spectrogram.n_bins()
    );
    println!(
        "wrote {} ({} intervals)",
        ann_path.display(),
        annotation.intervals().len()
    );
    Ok(())
}

fn load_labeled(
    config: &RunConfig,
    dataset_path: &Path,
    annotation_path: &Path,
) -> Result<LabeledDataset> {
    let spectrogram = load_dataset(config, dataset_path)?;
    let annotation = LeakAnnotation::load(annotation_path)?;
    LabeledDataset::new(spectrogram, &annotation)
}

pub fn cmd_tune(
    config: &RunConfig,
    dataset: Option<PathBuf>,
    annotation: Option<PathBuf>,
    out_dir: &Path,
) -> Result<()> {
    let dataset_path = require_path(
        dataset,
        config_path(config, |p| p.dataset.as_ref()),
        "dataset",
        "dataset",
    )?;
    let annotation_path = require_path(
        annotation,
        config_path(config, |p| p.annotation.as_ref()),
        "annotation",
        "annotation",
    )?;
    let data = load_labeled(config, &dataset_path, &annotation_path)?;
    let outcome = pipeline::tune(
        &data,
        &config.grid()?,
        &config.split(),
        config.window_s(),
        &config.features(),
        config.top_candidates(),
    )?;

    let ledger_path = out_dir.join("ledger.csv");
    write_atomic(&ledger_path, outcome.search.ledger_csv().as_bytes())?;
    let combos_path = out_dir.join("band_combos.csv");
    write_atomic(
        &combos_path,
        pipeline::render_pr_csv(&outcome.band_outcomes).as_bytes(),
    )?;
    let params_path = out_dir.join("params.txt");
    write_atomic(&params_path, outcome.selected.to_text().as_bytes())?;
    let model_path = out_dir.join("model.svm");
    save_model(&outcome.model, &model_path)?;

    let s = &outcome.selected;
    let kernel = match s.kernel {
        leakdet::svm::KernelSpec::Linear => "linear".to_string(),
        leakdet::svm::KernelSpec::Rbf { gamma } => format!("rbf gamma={gamma}"),
    };
    println!(
        "selected granularity_hz={} metric={} overlap_s={} kernel={} c={} band_pair={}",
        s.granularity_hz,
        s.metric,
        s.overlap_s,
        kernel,
        s.c,
        s.band_pair.name()
    );
    let val_f1 = outcome
        .search
        .rows
        .iter()
        .filter_map(|r| r.validation.as_ref().and_then(|m| m.f1))
        .fold(f64::NEG_INFINITY, f64::max);
    println!("best_validation_f1 {val_f1}");
    for p in [&ledger_path, &combos_path, &params_path, &model_path] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn cmd_train(
    config: &RunConfig,
    dataset: Option<PathBuf>,
    annotation: Option<PathBuf>,
    params: Option<PathBuf>,
    model_out: Option<PathBuf>,
    out_dir: &Path,
) -> Result<()> {
    let dataset_path = require_path(
        dataset,
        config_path(config, |p| p.dataset.as_ref()),
        "dataset",
        "dataset",
    )?;
    let annotation_path = require_path(
        annotation,
        config_path(config, |p| p.annotation.as_ref()),
        "annotation",
        "annotation",
    )?;
    let params_path = require_path(
        params,
        config_path(config, |p| p.params.as_ref()),
        "params",
        "params",
    )?;
    let text = std::fs::read_to_string(&params_path)
        .map_err(|e| Error::Config(format!("{}: {e}", params_path.display())))?;
    let selected = SelectedParams::from_text(&text)?;
    let data = load_labeled(config, &dataset_path, &annotation_path)?;
    let model = pipeline::train_final(&data, &selected, config.window_s(), &config.features())?;
    let model_path = model_out
        .or_else(|| config_path(config, |p| p.model.as_ref()).cloned())
        .unwrap_or_else(|| out_dir.join("model.svm"));
    save_model(&model, &model_path)?;
    println!(
        "wrote {} ({} support vectors, converged {})",
        model_path.display(),
        model.support_vectors.len(),
        model.converged
    );
    Ok(())
}

pub fn cmd_eval(
    config: &RunConfig,
    model: Option<PathBuf>,
    dataset: Option<PathBuf>,
    annotation: Option<PathBuf>,
) -> Result<()> {
    let model_path = require_path(
        model,
        config_path(config, |p| p.model.as_ref()),
        "model",
        "model",
    )?;
    let dataset_from_flag = dataset.is_some();
    let dataset_path = require_path(
        dataset,
        config_path(config, |p| p.dataset.as_ref()),
        "dataset",
        "dataset",
    )?;
    // The config's annotation belongs to the config's dataset: it applies
    // only when the dataset also came from the config. A dataset given by
    // flag without an annotation flag is evaluated as unannotated.
    let annotation_path = annotation.or_else(|| {
        if dataset_from_flag {
            None
        } else {
            config_path(config, |p| p.annotation.as_ref()).cloned()
        }
    });

    let model = load_model(&model_path)?;
    let spectrogram = load_dataset(config, &dataset_path)?;
    let data = match &annotation_path {
        Some(p) => LabeledDataset::new(spectrogram, &LeakAnnotation::load(p)?)?,
        None => {
            let labels = vec![0u8; spectrogram.duration_s()];
            LabeledDataset {
                spectrogram,
                labels,
            }
        }
    };
    let metrics = pipeline::transfer_evaluate(&model, &data)?;
    let label = dataset_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dataset_path.display().to_string());
    print!("{}", metrics.render_report(&label));
    Ok(())
}

pub fn cmd_predict(
    config: &RunConfig,
    model: Option<PathBuf>,
    dataset: Option<PathBuf>,
    predictions_out: Option<PathBuf>,
    out_dir: &Path,
) -> Result<()> {
    let model_path = require_path(
        model,
        config_path(config, |p| p.model.as_ref()),
        "model",
        "model",
    )?;
    let dataset_path = require_path(
        dataset,
        config_path(config, |p| p.dataset.as_ref()),
        "dataset",
        "dataset",
    )?;
    let model = load_model(&model_path)?;
    let spectrogram = load_dataset(config, &dataset_path)?;
    let predictions = pipeline::predict_windows(&model, &spectrogram)?;
    let out_path = predictions_out.unwrap_or_else(|| out_dir.join("predictions.csv"));
    write_atomic(&out_path, predictions.to_csv().as_bytes())?;
    println!(
        "wrote {} ({} windows)",
        out_path.display(),
        predictions.window_starts.len()
    );
    Ok(())
}

/// Quote-aware split of one CSV line (doubled quotes escape a quote).
fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        if in_quotes {
            if c == '"' {
                if chars.peek() == Some(&'"') {
                    cur.push('"');
                    chars.next();
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push(c);
            }
        } else if c == '"' {
            in_quotes = true;
        } else if c == ',' {
            fields.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    fields.push(cur);
    fields
}

const LEDGER_HEADER: &str = "granularity_hz,metric,overlap_s,kernel,c,gamma,band_pair,\
                             val_tp,val_fp,val_tn,val_fn,val_accuracy,val_precision,\
                             val_recall,val_specificity,val_f1,skip_reason";

pub fn cmd_report(config: &RunConfig, ledger: Option<PathBuf>, out_dir: &Path) -> Result<()> {
    let ledger_path = require_path(
        ledger,
        config_path(config, |p| p.ledger.as_ref()),
        "ledger",
        "ledger",
    )?;
    let text = std::fs::read_to_string(&ledger_path)
        .map_err(|e| Error::Config(format!("{}: {e}", ledger_path.display())))?;
    let expected_cols = LEDGER_HEADER.split(',').count();

    let mut out =
        String::from("granularity_hz,metric,overlap_s,kernel,c,gamma,band_pair,precision,recall\n");
    let mut series = 0usize;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let bad =
            |what: &str| Error::Format(format!("{} line {lineno}: {what}", ledger_path.display()));
        if lineno == 1 {
            if line != LEDGER_HEADER {
                return Err(bad("not a tuning ledger header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields = split_csv_line(line);
        if fields.len() != expected_cols {
            return Err(bad(&format!(
                "expected {expected_cols} fields, found {}",
                fields.len()
            )));
        }
        fields[0]
            .parse::<u32>()
            .map_err(|_| bad(&format!("bad granularity_hz {:?}", fields[0])))?;
        fields[2]
            .parse::<usize>()
            .map_err(|_| bad(&format!("bad overlap_s {:?}", fields[2])))?;
        fields[4]
            .parse::<f64>()
            .map_err(|_| bad(&format!("bad cost {:?}", fields[4])))?;
        let ratio_ok = |v: &str| v == "N/A" || v.parse::<f64>().is_ok();
        let precision = &fields[12];
        let recall = &fields[13];
        // Rows whose combo was skipped carry empty metric fields and emit
        // no series; evaluated rows must carry parseable ratios.
        if fields[7].is_empty() {
            continue;
        }
        if !ratio_ok(precision) || !ratio_ok(recall) {
            return Err(bad(&format!(
                "bad precision/recall {precision:?}/{recall:?}"
            )));
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fields[0],
            fields[1],
            fields[2],
            fields[3],
            fields[4],
            fields[5],
            fields[6],
            precision,
            recall
        ));
        series += 1;
    }
    if text.is_empty() {
        return Err(Error::Format(format!(
            "{}: empty file (expected a ledger header)",
            ledger_path.display()
        )));
    }
    let out_path = out_dir.join("report.csv");
    write_atomic(&out_path, out.as_bytes())?;
    println!("wrote {} ({series} series)", out_path.display());
    Ok(())
}
