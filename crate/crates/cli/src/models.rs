//! Object models paired with their PPF descriptions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ppf_core::bop::{self, load_object_model, read_models_info};
use ppf_core::cloud::ObjectModel;
use ppf_core::ppf::{build_model, read_model, write_model, PpfModel, DEFAULT_N_ANGLE, DEFAULT_TAU_D};

use crate::error::{CliError, Result};

pub fn ppf_model_path(models_dir: &Path, obj_id: u32) -> PathBuf {
    models_dir.join(format!("obj_{obj_id:06}.ppfm"))
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub object: ObjectModel<f64>,
    pub ppf: PpfModel<f64>,
}

impl LoadedModel {
    pub fn build(object: ObjectModel<f64>, tau_d: f64, n_angle: u32) -> Result<Self> {
        let ppf = build_model(&object, tau_d, n_angle)?;
        Ok(Self { object, ppf })
    }

    fn matches(&self, tau_d: Option<f64>, n_angle: Option<u32>) -> bool {
        let step = tau_d.map(|t| t * self.object.diameter());
        step.is_none_or(|s| (s - self.ppf.sample_step()).abs() <= 1e-9 * s.abs())
            && n_angle.is_none_or(|n| n == self.ppf.n_angle())
    }
}

pub type ModelLibrary = BTreeMap<u32, LoadedModel>;

fn object_ids(models_dir: &Path, info: &BTreeMap<u32, bop::ModelInfo>) -> Result<Vec<u32>> {
    let mut ids: Vec<u32> = info.keys().copied().collect();
    let rd = std::fs::read_dir(models_dir).map_err(|e| CliError::Io {
        path: models_dir.to_path_buf(),
        source: e,
    })?;
    for entry in rd.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_prefix("obj_").and_then(|s| s.strip_suffix(".ply")) {
            if let Ok(id) = id.parse() {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

fn read_info(models_dir: &Path) -> Result<BTreeMap<u32, bop::ModelInfo>> {
    if models_dir.join("models_info.json").exists() {
        Ok(read_models_info(models_dir)?)
    } else {
        Ok(BTreeMap::new())
    }
}

/// Builds and writes `obj_<id>.ppfm` for `ids`, or for every model in the
/// directory when `ids` is empty. Returns the written paths.
pub fn build_models(models_dir: &Path, ids: &[u32], tau_d: Option<f64>, n_angle: Option<u32>) -> Result<Vec<PathBuf>> {
    let info = read_info(models_dir)?;
    let ids = if ids.is_empty() { object_ids(models_dir, &info)? } else { ids.to_vec() };
    let mut out = Vec::new();
    for id in ids {
        let object = load_object_model::<f64>(models_dir, id, info.get(&id))?;
        let m = LoadedModel::build(object, tau_d.unwrap_or(DEFAULT_TAU_D), n_angle.unwrap_or(DEFAULT_N_ANGLE))?;
        let path = ppf_model_path(models_dir, id);
        write_model(&path, &m.ppf)?;
        log::info!(
            "object {id}: {} sampled points, {} table entries -> {}",
            m.ppf.num_points(),
            m.ppf.table.num_entries(),
            path.display()
        );
        out.push(path);
    }
    Ok(out)
}

/// Loads the objects in `ids` with their stored PPF models. A stored model
/// built with a different `tau_d` or `n_angle` than requested is rebuilt in
/// memory.
pub fn load_library(models_dir: &Path, ids: &[u32], tau_d: Option<f64>, n_angle: Option<u32>) -> Result<ModelLibrary> {
    let info = read_info(models_dir)?;
    let mut lib = ModelLibrary::new();
    for &id in ids {
        if lib.contains_key(&id) {
            continue;
        }
        if !info.contains_key(&id) && !bop::model_ply_path(models_dir, id).exists() {
            return Err(CliError::UnknownObject(id));
        }
        let object = load_object_model::<f64>(models_dir, id, info.get(&id))?;
        let path = ppf_model_path(models_dir, id);
        if !path.exists() {
            return Err(CliError::MissingModel(path));
        }
        let ppf = read_model::<f64>(&path)?;
        if ppf.object_id != id {
            return Err(CliError::InvalidArgument(format!(
                "{} holds object {}, expected {id}",
                path.display(),
                ppf.object_id
            )));
        }
        let mut m = LoadedModel { object, ppf };
        if !m.matches(tau_d, n_angle) {
            log::info!("object {id}: rebuilding model with the requested sampling");
            let t = tau_d.unwrap_or(m.ppf.sample_step() / m.object.diameter());
            let n = n_angle.unwrap_or(m.ppf.n_angle());
            m = LoadedModel::build(m.object, t, n)?;
        }
        lib.insert(id, m);
    }
    Ok(lib)
}
