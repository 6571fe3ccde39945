//! On-disk checkpoints and training artifacts.
//!
//! A checkpoint is a directory holding one `.npy` file per parameter tensor
//! and a `manifest.json` mapping names to files and shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{EncoderConfig, EncoderParams};
use crate::npy::{self, Precision};
use crate::pretrain::{curve_to_csv, PretrainOutcome, TrainConfig};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "supercl-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub encoder: EncoderConfig,
    pub tensors: Vec<ManifestEntry>,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, params: &EncoderParams) -> Result<Manifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for (name, t) in params.names().into_iter().zip(params.tensors()) {
        let file = format!("{name}.npy");
        npy::save(dir.join(&file), t, Precision::F8)?;
        tensors.push(ManifestEntry {
            name,
            file,
            shape: t.shape().to_vec(),
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: 1,
        encoder: params.config().clone(),
        tensors,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<EncoderParams> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT || manifest.version != 1 {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint {} v{}",
            path.display(),
            manifest.format,
            manifest.version
        )));
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let t = npy::load(dir.join(&entry.file))?;
        if t.shape() != entry.shape.as_slice() {
            return Err(Error::Format(format!(
                "{}: shape {:?} disagrees with manifest {:?}",
                entry.file,
                t.shape(),
                entry.shape
            )));
        }
        tensors.push(t);
    }
    let params = EncoderParams::from_tensors(manifest.encoder, tensors)?;
    let names: Vec<&str> = manifest.tensors.iter().map(|e| e.name.as_str()).collect();
    if params.names() != names {
        return Err(Error::Format("manifest tensor names out of order".into()));
    }
    Ok(params)
}

/// Write `config.json`, `loss_curve.csv` and the final `checkpoint/` into
/// `out_dir`.
pub fn save_run(out_dir: impl AsRef<Path>, cfg: &TrainConfig, outcome: &PretrainOutcome) -> Result<()> {
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config = out.join("config.json");
    fs::write(&config, serde_json::to_string_pretty(cfg)?).map_err(|e| Error::io(config, e))?;
    let curve = out.join("loss_curve.csv");
    fs::write(&curve, curve_to_csv(&outcome.curve)).map_err(|e| Error::io(curve, e))?;
    save_checkpoint(out.join("checkpoint"), &outcome.params)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params = EncoderParams::init(EncoderConfig::default(), 3).unwrap();
        let manifest = save_checkpoint(dir.path(), &params).unwrap();
        assert_eq!(manifest.tensors.len(), params.tensors().len());
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.tensors(), params.tensors());
        assert_eq!(back.config(), params.config());
    }

    #[test]
    fn missing_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_checkpoint(dir.path()).unwrap_err().is_io());
        let params = EncoderParams::init(EncoderConfig::default(), 3).unwrap();
        let manifest = save_checkpoint(dir.path(), &params).unwrap();
        fs::write(dir.path().join(&manifest.tensors[0].file), b"junk").unwrap();
        assert!(load_checkpoint(dir.path()).unwrap_err().is_io());
    }
}
