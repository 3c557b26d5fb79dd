//! End-to-end training into a run directory.

use std::path::{Path, PathBuf};

use super::{
    history_csv, load_fields, prepare_split, split_dataset, train, ModelMeta, NormalizationStats, SampleSource,
    TrainConfig, TrainedModel, RESIDUAL_SCALE_FLOOR,
};
use crate::error::{Error, Result};
use crate::field::{N_STATIONS, N_VARIABLES};
use crate::net::build_model;
use crate::synth::{baseline_field, DatasetManifest, SplitRecord};
use crate::Tensor;

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const CONFIG_ECHO: &str = "train.conf";

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub split: SplitRecord,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub wall_seconds: f64,
    pub checkpoint: PathBuf,
    pub normalization: NormalizationStats,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Split, standardize, train and persist. Only train and validation samples
/// are read from `source`. The split and normalization are recorded into
/// `manifest`; the caller decides whether to write it back.
pub fn train_run<S: SampleSource + ?Sized>(
    source: &S,
    manifest: &mut DatasetManifest,
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<RunSummary> {
    cfg.validate()?;
    if source.len() != manifest.n_samples {
        return Err(Error::invalid("sample source and manifest disagree on the sample count"));
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let split = match &manifest.split {
        Some(frozen) => {
            log::info!("using the split frozen in the manifest (seed {})", frozen.seed);
            frozen.clone()
        }
        None => split_dataset(manifest.n_samples, &cfg.split)?,
    };
    log::info!(
        "split: {} train / {} validation / {} holdout",
        split.train.len(),
        split.validation.len(),
        split.holdout.len()
    );
    write(&run_dir.join(SPLIT_FILE), serde_json::to_string_pretty(&split)? + "\n")?;
    write(&run_dir.join(CONFIG_ECHO), cfg.to_key_values().to_text())?;

    let train_fields = load_fields(source, &split.train)?;
    let stats = {
        let refs: Vec<&Tensor<f32>> = train_fields.iter().collect();
        NormalizationStats::fit(&refs)?
    };
    let mut train_split = prepare_split(source, &split.train, &train_fields, &stats)?;
    drop(train_fields);
    let val_fields = load_fields(source, &split.validation)?;
    let mut val_split = prepare_split(source, &split.validation, &val_fields, &stats)?;
    drop(val_fields);

    let baseline = baseline_field(&manifest.generator)?;
    let reference: Tensor<f32> = if cfg.baseline_residual {
        stats.apply(&baseline.tensor().cast::<f32>())?
    } else {
        Tensor::zeros(baseline.tensor().shape().to_vec())
    };
    train_split.subtract_reference(&reference)?;
    val_split.subtract_reference(&reference)?;
    let residual_scale: Vec<f64> = if cfg.baseline_residual {
        train_split.slot_rms().into_iter().map(|r| r.max(RESIDUAL_SCALE_FLOOR)).collect()
    } else {
        vec![1.0; N_STATIONS * N_VARIABLES]
    };
    train_split.scale_slots(&residual_scale)?;
    val_split.scale_slots(&residual_scale)?;

    let mut ranges = [(0.0, 0.0); N_VARIABLES];
    for (v, r) in manifest.variable_ranges.iter().enumerate().take(N_VARIABLES) {
        ranges[v] = (r.min, r.max);
    }
    let meta = ModelMeta::from_baseline(
        &baseline,
        manifest.annulus.clone(),
        manifest.generator.gamma,
        ranges,
    )?;

    let model = build_model::<f32>(&cfg.architecture, cfg.seed)?;
    let ckpt = run_dir.join(BEST_CHECKPOINT);
    let hist_path = run_dir.join(HISTORY_FILE);
    let mut history = Vec::new();
    let outcome = train(model, &train_split, &val_split, cfg, |rec, best| {
        history.push(*rec);
        write(&hist_path, history_csv(&history))?;
        if let Some(m) = best {
            TrainedModel {
                model: m.clone(),
                normalization: stats.clone(),
                reference: reference.clone(),
                residual_scale: residual_scale.clone(),
                meta: meta.clone(),
            }
            .save(&ckpt)?;
        }
        Ok(())
    })?;

    manifest.split = Some(split.clone());
    manifest.normalization = Some(stats.clone());
    Ok(RunSummary {
        split,
        best_epoch: outcome.best_epoch,
        best_val_mse: outcome.best_val_mse,
        epochs_run: outcome.history.len(),
        stopped_early: outcome.stopped_early,
        wall_seconds: outcome.history.last().map_or(0.0, |r| r.wall_seconds),
        checkpoint: ckpt,
        normalization: stats,
    })
}
