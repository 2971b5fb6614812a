//! Checkpoint directories: one MVT1 file per named tensor, a `manifest.txt`
//! of `name sha256` lines hashing the tensor files, plus small text files
//! for the model config, vocabulary, and stage/seed state. Writes go to a
//! temp directory first and land via rename.

use crate::cfgfile::{parse_kv, read_kv, write_kv};
use crate::{io_err, mvt, CliError, Result};
use hvt_core::checksum::bytes_digest;
use hvt_core::model::ModelConfig;
use hvt_core::train::Checkpoint;
use hvt_core::Tensor;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.txt";
pub const MODEL_CFG: &str = "model.cfg";
pub const VOCAB: &str = "vocab.txt";
pub const STATE: &str = "state.txt";

fn tensor_file(name: &str) -> String {
    format!("{name}.mvt")
}

/// Write the checkpoint atomically: everything is staged in `<dir>.tmp`,
/// which then replaces `dir` in one rename.
pub fn save(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tmp = dir.with_file_name(format!(
        "{}.tmp",
        dir.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .ok_or_else(|| CliError::Usage(format!("bad checkpoint path {}", dir.display())))?
    ));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;

    let mut manifest = String::new();
    for (name, tensor) in &ckpt.tensors {
        let file = tmp.join(tensor_file(name));
        let bytes = mvt::encode(tensor.dims(), tensor.data());
        fs::write(&file, &bytes).map_err(|e| io_err(&file, e))?;
        manifest.push_str(name);
        manifest.push(' ');
        manifest.push_str(&bytes_digest(&bytes));
        manifest.push('\n');
    }
    let mpath = tmp.join(MANIFEST);
    fs::write(&mpath, manifest).map_err(|e| io_err(&mpath, e))?;

    write_kv(&tmp.join(MODEL_CFG), &ckpt.cfg.to_kv())?;
    let vpath = tmp.join(VOCAB);
    fs::write(
        &vpath,
        format!("N={}\nNV={}\n", ckpt.cfg.n_text, ckpt.cfg.n_v),
    )
    .map_err(|e| io_err(&vpath, e))?;
    let spath = tmp.join(STATE);
    fs::write(&spath, format!("stage={}\nseed={}\n", ckpt.stage, ckpt.seed))
        .map_err(|e| io_err(&spath, e))?;

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| io_err(dir, e))
}

/// Parse `name sha256` lines.
pub fn parse_manifest(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (name, digest) = line.rsplit_once(' ').ok_or_else(|| {
            CliError::Format(format!("{origin}:{}: expected `name sha256`", lineno + 1))
        })?;
        out.push((name.to_string(), digest.to_string()));
    }
    Ok(out)
}

/// Load and fully validate a checkpoint: every tensor file must match its
/// manifest digest, and the vocabulary file must agree with the model
/// config.
pub fn load(dir: &Path) -> Result<Checkpoint> {
    let mpath = dir.join(MANIFEST);
    let mtext = fs::read_to_string(&mpath).map_err(|e| io_err(&mpath, e))?;
    let entries = parse_manifest(&mtext, &mpath.display().to_string())?;

    let cfg = ModelConfig::from_kv(&read_kv(&dir.join(MODEL_CFG))?)?;

    let vpath = dir.join(VOCAB);
    let vtext = fs::read_to_string(&vpath).map_err(|e| io_err(&vpath, e))?;
    let vkv = parse_kv(&vtext, &vpath.display().to_string())?;
    let n: usize = vkv
        .get("N")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Format(format!("{}: missing or bad N", vpath.display())))?;
    let nv: usize = vkv
        .get("NV")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Format(format!("{}: missing or bad NV", vpath.display())))?;
    if n != cfg.n_text || nv != cfg.n_v {
        return Err(CliError::Format(format!(
            "{}: vocabulary N={n} NV={nv} disagrees with model config N={} NV={}",
            vpath.display(),
            cfg.n_text,
            cfg.n_v
        )));
    }

    let spath = dir.join(STATE);
    let stext = fs::read_to_string(&spath).map_err(|e| io_err(&spath, e))?;
    let skv = parse_kv(&stext, &spath.display().to_string())?;
    let stage: u8 = skv
        .get("stage")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Format(format!("{}: missing or bad stage", spath.display())))?;
    let seed: u64 = skv
        .get("seed")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| CliError::Format(format!("{}: missing or bad seed", spath.display())))?;

    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    for (name, digest) in &entries {
        let file = dir.join(tensor_file(name));
        let bytes = fs::read(&file).map_err(|e| io_err(&file, e))?;
        if &bytes_digest(&bytes) != digest {
            return Err(CliError::Format(format!(
                "{}: checksum mismatch for {name}",
                dir.display()
            )));
        }
        let (dims, data) = mvt::decode(&bytes, &file.display().to_string())?;
        tensors.insert(name.clone(), Tensor::from_vec_checked(dims, data)?);
    }

    Ok(Checkpoint { cfg, seed, stage, tensors })
}

/// The manifest bytes, the object of the determinism guarantee: identical
/// runs must produce identical manifests.
pub fn manifest_text(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST);
    fs::read_to_string(&path).map_err(|e| io_err(&path, e))
}

/// Paths of every file in the checkpoint, for run manifests.
pub fn file_list(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        if entry.path().is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hvt_core::model::Model;

    fn tiny_model() -> Model {
        let mut cfg = ModelConfig::desk();
        cfg.enc_z = 8;
        cfg.z_llm = 8;
        cfg.selector_hidden = 8;
        cfg.max_len = 64;
        let mut model = Model::init(cfg, 3).unwrap();
        // a codebook of distinct one-hot-ish rows
        let mut rows = vec![0.0; cfg.n_v * cfg.enc_z];
        for i in 0..cfg.n_v {
            rows[i * cfg.enc_z + i % cfg.enc_z] = 1.0 + i as f64;
        }
        let cb =
            hvt_core::codebook::Codebook::new(Tensor::from_vec(vec![cfg.n_v, cfg.enc_z], rows).unwrap())
                .unwrap();
        model.set_codebook(cb).unwrap();
        model
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("hvt-ckpt-{tag}-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).unwrap();
        }
        dir
    }

    #[test]
    fn save_load_round_trips_at_f32_precision() {
        let model = tiny_model();
        let ckpt = Checkpoint::capture(&model, 0, 3);
        let dir = temp_dir("round");
        save(&dir, &ckpt).unwrap();
        let back = load(&dir).unwrap();
        assert_eq!(back.stage, 0);
        assert_eq!(back.seed, 3);
        assert_eq!(back.cfg, ckpt.cfg);
        assert_eq!(back.tensors.len(), ckpt.tensors.len());
        for (name, t) in &ckpt.tensors {
            let b = &back.tensors[name];
            assert_eq!(b.dims(), t.dims());
            for (x, y) in t.data().iter().zip(b.data()) {
                assert_eq!(*x as f32, *y as f32, "{name} drifted beyond f32");
            }
        }
        // a reloaded checkpoint must still restore into a working model
        back.restore().unwrap();
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn tampering_is_detected() {
        let model = tiny_model();
        let dir = temp_dir("tamper");
        save(&dir, &Checkpoint::capture(&model, 0, 3)).unwrap();
        let victim = dir.join("projector.fc1.bias.mvt");
        let mut bytes = fs::read(&victim).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&victim, bytes).unwrap();
        let err = load(&dir).unwrap_err();
        assert!(format!("{err}").contains("checksum mismatch"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn save_replaces_existing_checkpoint() {
        let model = tiny_model();
        let dir = temp_dir("replace");
        save(&dir, &Checkpoint::capture(&model, 0, 3)).unwrap();
        save(&dir, &Checkpoint::capture(&model, 1, 3)).unwrap();
        let back = load(&dir).unwrap();
        assert_eq!(back.stage, 1);
        assert!(!dir.with_file_name(format!(
            "{}.tmp",
            dir.file_name().unwrap().to_string_lossy()
        ))
        .exists());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn identical_saves_produce_identical_manifests() {
        let model = tiny_model();
        let ckpt = Checkpoint::capture(&model, 2, 3);
        let a = temp_dir("man-a");
        let b = temp_dir("man-b");
        save(&a, &ckpt).unwrap();
        save(&b, &ckpt).unwrap();
        assert_eq!(manifest_text(&a).unwrap(), manifest_text(&b).unwrap());
        fs::remove_dir_all(&a).unwrap();
        fs::remove_dir_all(&b).unwrap();
    }
}
