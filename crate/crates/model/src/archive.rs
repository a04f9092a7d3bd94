//! On-disk model format: a directory holding a text manifest and a tensor archive.
//!
//! The manifest starts with `CVVNET-MODEL 1` followed by the backbone
//! configuration as `key=value` lines plus `seed` and `param_count`. The
//! tensor file is the autograd crate's named archive, one entry per parameter
//! or buffer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use cvvnet_autograd::ParamStore;

use crate::backbone::{BackboneConfig, CvvNet};
use crate::error::{ModelError, Result};
use crate::kv::KvMap;

pub const MODEL_MANIFEST: &str = "model.manifest";
pub const MODEL_TENSORS: &str = "model.tensors";
const HEADER: &str = "CVVNET-MODEL 1";

fn archive_err(path: &Path, message: impl ToString) -> ModelError {
    ModelError::Archive { path: path.display().to_string(), message: message.to_string() }
}

pub fn manifest_text(model: &CvvNet) -> String {
    let mut kv = model.config().to_kv();
    kv.set("seed", model.seed);
    kv.set("param_count", model.store.len());
    format!("{HEADER}\n{}", kv.render())
}

pub fn save_model(dir: &Path, model: &CvvNet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| archive_err(dir, e))?;
    let mpath = dir.join(MODEL_MANIFEST);
    std::fs::write(&mpath, manifest_text(model)).map_err(|e| archive_err(&mpath, e))?;
    let tpath = dir.join(MODEL_TENSORS);
    let file = File::create(&tpath).map_err(|e| archive_err(&tpath, e))?;
    let mut w = BufWriter::new(file);
    model.store.write_archive(&mut w).map_err(|e| archive_err(&tpath, e))?;
    w.flush().map_err(|e| archive_err(&tpath, e))
}

/// Parses a manifest into the configuration and initialisation seed.
pub fn parse_manifest(text: &str) -> Result<(BackboneConfig, u64, KvMap)> {
    let body = text
        .strip_prefix(HEADER)
        .ok_or_else(|| ModelError::InvalidConfig("model manifest header missing".into()))?;
    let kv = KvMap::parse(body)?;
    let cfg = BackboneConfig::from_kv(&kv)?;
    let seed = kv.parsed("seed")?;
    Ok((cfg, seed, kv))
}

/// Rebuilds the module graph from the manifest, then overwrites every
/// tensor from the archive. Extra or missing tensors are errors.
pub fn load_model(dir: &Path) -> Result<CvvNet> {
    let mpath = dir.join(MODEL_MANIFEST);
    let text = std::fs::read_to_string(&mpath).map_err(|e| archive_err(&mpath, e))?;
    let (cfg, seed, _) = parse_manifest(&text).map_err(|e| archive_err(&mpath, e))?;
    let mut model = CvvNet::init(cfg, seed)?;
    let tpath = dir.join(MODEL_TENSORS);
    let file = File::open(&tpath).map_err(|e| archive_err(&tpath, e))?;
    let stored = ParamStore::read_archive(&mut BufReader::new(file)).map_err(|e| archive_err(&tpath, e))?;
    if stored.len() != model.store.len() {
        return Err(archive_err(
            &tpath,
            format!("archive has {} tensors, model expects {}", stored.len(), model.store.len()),
        ));
    }
    model.store.load_from(&stored).map_err(|e| archive_err(&tpath, e))?;
    Ok(model)
}
