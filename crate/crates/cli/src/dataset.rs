//! On-disk dataset layout: a JSON manifest next to binary field containers.

use std::path::{Path, PathBuf};

use mmdiff_core::field::{read_joint_fields, write_joint_fields, JointLayout};
use mmdiff_core::normalize::ChannelNormalizer;
use mmdiff_core::pca::PcaModel;
use mmdiff_core::pipeline::{GrainDataConfig, GrainDataset};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.jfld";
pub const VAL_FILE: &str = "val.jfld";
pub const VAL_THETA_FILE: &str = "val_theta.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: GrainDataConfig,
    pub layout: JointLayout,
    pub train_file: String,
    pub val_file: String,
    pub val_theta_file: String,
    pub train_count: usize,
    pub val_count: usize,
    pub main_norm: ChannelNormalizer,
    pub aux_norm: ChannelNormalizer,
    pub pca: Option<PcaModel>,
}

/// Write the dataset as manifest + containers under `dir`.
pub fn save_dataset(dataset: &GrainDataset, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(runtime)?;
    write_joint_fields(dir.join(TRAIN_FILE), &dataset.train).map_err(runtime)?;
    write_joint_fields(dir.join(VAL_FILE), &dataset.val).map_err(runtime)?;
    let theta_json = serde_json::to_string(&dataset.val_theta).map_err(runtime)?;
    std::fs::write(dir.join(VAL_THETA_FILE), theta_json).map_err(runtime)?;
    let manifest = DatasetManifest {
        config: dataset.config.clone(),
        layout: dataset.layout,
        train_file: TRAIN_FILE.to_string(),
        val_file: VAL_FILE.to_string(),
        val_theta_file: VAL_THETA_FILE.to_string(),
        train_count: dataset.train.len(),
        val_count: dataset.val.len(),
        main_norm: dataset.main_norm.clone(),
        aux_norm: dataset.aux_norm.clone(),
        pca: dataset.pca.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    std::fs::write(dir.join(MANIFEST_FILE), text).map_err(runtime)?;
    Ok(())
}

/// Load a dataset previously written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<GrainDataset, CliError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        CliError::Config(format!(
            "missing dataset manifest {manifest_path:?}: {e}; run gen-data first"
        ))
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("malformed manifest: {e}")))?;
    let train = read_joint_fields(dir.join(&manifest.train_file)).map_err(runtime)?;
    let val = read_joint_fields(dir.join(&manifest.val_file)).map_err(runtime)?;
    if train.len() != manifest.train_count || val.len() != manifest.val_count {
        return Err(CliError::Config(format!(
            "manifest counts ({}, {}) disagree with payloads ({}, {})",
            manifest.train_count,
            manifest.val_count,
            train.len(),
            val.len()
        )));
    }
    let theta_text =
        std::fs::read_to_string(dir.join(&manifest.val_theta_file)).map_err(runtime)?;
    let val_theta: Vec<Vec<f64>> = serde_json::from_str(&theta_text)
        .map_err(|e| CliError::Config(format!("malformed {}: {e}", manifest.val_theta_file)))?;
    Ok(GrainDataset {
        config: manifest.config,
        layout: manifest.layout,
        train,
        val,
        val_theta,
        main_norm: manifest.main_norm,
        aux_norm: manifest.aux_norm,
        pca: manifest.pca,
    })
}

pub fn dataset_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("dataset")
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}
