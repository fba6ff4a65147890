//! File formats shared by the pipeline and the command line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimators::MleReport;
use crate::measure::{CountsDataset, MultiBasisDataset};
use crate::nqs::{ModelFile, NqsModel};
use crate::povm::PovmKind;
use crate::qcore::{purity, DensityMatrix};

/// Writes `contents` through a temporary file in the same directory, then
/// renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes every `(relative path, contents)` entry under `dir`.
pub fn write_outputs(dir: &Path, files: &BTreeMap<String, String>) -> Result<()> {
    for (rel, contents) in files {
        write_atomic(&dir.join(rel), contents.as_bytes())?;
    }
    Ok(())
}

/// A measurement record of either file layout.
#[derive(Clone, Debug)]
pub enum DataFile {
    Counts(CountsDataset),
    MultiBasis(MultiBasisDataset),
}

pub fn load_data(path: &Path) -> Result<DataFile> {
    let value: Value = read_json(path)?;
    if value.get("settings").is_some() {
        Ok(DataFile::MultiBasis(serde_json::from_value(value)?))
    } else if value.get("povm").is_some() {
        Ok(DataFile::Counts(serde_json::from_value(value)?))
    } else {
        Err(Error::Format(format!(
            "{} is neither a counts file nor a multi-basis file",
            path.display()
        )))
    }
}

/// A reconstructed or fitted state with its spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateFile {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povm: Option<PovmKind>,
    pub rho: DensityMatrix,
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub purity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<MleReport>,
}

impl StateFile {
    pub fn new(
        method: &str,
        povm: Option<PovmKind>,
        rho: &DensityMatrix,
        fit: Option<MleReport>,
    ) -> Self {
        let eigenvalues = rho.eigenvalues();
        Self {
            method: method.to_string(),
            povm,
            min_eigenvalue: eigenvalues.last().copied().unwrap_or(0.0),
            purity: purity(rho),
            eigenvalues,
            rho: rho.clone(),
            fit,
        }
    }
}

/// Anything a Bell curve can be computed from.
#[derive(Clone, Debug)]
pub enum StateSource {
    State(DensityMatrix),
    Model(NqsModel),
}

/// Reads a state file, a bare density matrix, or a model file.
pub fn load_state_source(path: &Path) -> Result<StateSource> {
    let value: Value = read_json(path)?;
    if value.get("ansatz").is_some() {
        let file: ModelFile = serde_json::from_value(value)?;
        Ok(StateSource::Model(file.into_model()?))
    } else if value.get("rho").is_some() {
        let file: StateFile = serde_json::from_value(value)?;
        Ok(StateSource::State(file.rho))
    } else if value.get("dim").is_some() {
        Ok(StateSource::State(serde_json::from_value(value)?))
    } else {
        Err(Error::Format(format!(
            "{} holds neither a state nor a model",
            path.display()
        )))
    }
}
