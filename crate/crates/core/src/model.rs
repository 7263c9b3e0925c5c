//! Model persistence: a manifest plus one binary file per detector and
//! per novelty model, all under a single directory.
//!
//! Binary files carry a short magic/version envelope ahead of the
//! bincode payload so stale or foreign files fail fast instead of
//! deserializing into garbage.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{SystemParams, TrainedSystem};
use crate::real::Real;
use crate::trace::{KPIS_PER_RESOURCE, KPI_NAMES};

const MAGIC: [u8; 4] = *b"FCM1";
const FORMAT_VERSION: u32 = 1;

/// Writes one model file: magic, version, then the bincode payload.
pub fn write_model<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bincode::serialize_into(&mut bytes, value)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reads a model file written by [`write_model`].
pub fn read_model<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
    if bytes.len() < 8 || bytes[..4] != MAGIC {
        return Err(Error::Model(format!(
            "{}: not a model file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked"));
    if version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "{}: format version {version}, expected {FORMAT_VERSION}",
            path.display()
        )));
    }
    Ok(bincode::deserialize(&bytes[8..])?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
struct Manifest<F: Real> {
    format_version: u32,
    resources: usize,
    kpis: Vec<String>,
    trained_ticks: u64,
    svm_training_vectors: usize,
    params: SystemParams<F>,
}

fn detector_path(dir: &Path, resource: usize, kpi: usize) -> PathBuf {
    dir.join(format!("det_r{resource}_{}.bin", KPI_NAMES[kpi]))
}

fn svm_path(dir: &Path, eps_index: usize, resource: usize) -> PathBuf {
    dir.join(format!("svm_e{eps_index}_r{resource}.bin"))
}

/// Persists a trained system: `manifest.json`, per-KPI detector files,
/// and per-(epsilon, resource) novelty model files.
pub fn save_system<F: Real>(system: &TrainedSystem<F>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        resources: system.resources,
        kpis: KPI_NAMES.iter().map(|s| s.to_string()).collect(),
        trained_ticks: system.trained_ticks,
        svm_training_vectors: system.svm_training_vectors,
        params: system.params.clone(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for r in 0..system.resources {
        for k in 0..KPIS_PER_RESOURCE {
            write_model(
                &detector_path(dir, r, k),
                &system.detectors[r * KPIS_PER_RESOURCE + k],
            )?;
        }
    }
    for (e, row) in system.svms.iter().enumerate() {
        for (r, svm) in row.iter().enumerate() {
            write_model(&svm_path(dir, e, r), svm)?;
        }
    }
    Ok(())
}

/// Loads a system persisted by [`save_system`].
pub fn load_system<F: Real>(dir: &Path) -> Result<TrainedSystem<F>> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Model(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest<F> = serde_json::from_str(&text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "manifest format version {} unsupported",
            manifest.format_version
        )));
    }
    let mut detectors = Vec::with_capacity(manifest.resources * KPIS_PER_RESOURCE);
    for r in 0..manifest.resources {
        for k in 0..KPIS_PER_RESOURCE {
            detectors.push(read_model(&detector_path(dir, r, k))?);
        }
    }
    let mut svms = Vec::with_capacity(manifest.params.epsilons.len());
    for e in 0..manifest.params.epsilons.len() {
        let mut row = Vec::with_capacity(manifest.resources);
        for r in 0..manifest.resources {
            row.push(read_model(&svm_path(dir, e, r))?);
        }
        svms.push(row);
    }
    Ok(TrainedSystem {
        params: manifest.params,
        resources: manifest.resources,
        detectors,
        svms,
        trained_ticks: manifest.trained_ticks,
        svm_training_vectors: manifest.svm_training_vectors,
    })
}
