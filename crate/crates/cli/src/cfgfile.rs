//! Plain key=value config files. Stage configs carry exactly the keys
//! `stage, steps, lr, batch, data, seed`; anything else is rejected so a
//! typo cannot silently fall back to a default.

use crate::{io_err, CliError, Result};
use hvt_core::train::StagePlan;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Parse `key=value` lines. Blank lines and `#` comments are skipped;
/// duplicate keys are an error.
pub fn parse_kv(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Format(format!("{origin}:{}: expected key=value", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Format(format!(
                "{origin}:{}: duplicate key {key}",
                lineno + 1
            )));
        }
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_kv(&text, &path.display().to_string())
}

pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One stage's training schedule plus the dataset it consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub stage: u8,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub data: PathBuf,
    pub seed: u64,
}

const STAGE_KEYS: [&str; 6] = ["stage", "steps", "lr", "batch", "data", "seed"];

impl StageConfig {
    pub fn from_file(path: &Path) -> Result<StageConfig> {
        let kv = read_kv(path)?;
        let origin = path.display();
        for key in kv.keys() {
            if !STAGE_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{origin}: unknown config key {key}"
                )));
            }
        }
        let get = |k: &str| -> Result<&String> {
            kv.get(k)
                .ok_or_else(|| CliError::Usage(format!("{origin}: missing config key {k}")))
        };
        let parse_num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| CliError::Usage(format!("{origin}: bad value for {k}")))
        };
        let lr: f64 = get("lr")?
            .parse()
            .map_err(|_| CliError::Usage(format!("{origin}: bad value for lr")))?;
        let cfg = StageConfig {
            stage: parse_num("stage")? as u8,
            steps: parse_num("steps")? as usize,
            lr,
            batch: parse_num("batch")? as usize,
            data: PathBuf::from(get("data")?),
            seed: parse_num("seed")?,
        };
        cfg.to_plan().validate()?;
        Ok(cfg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let pairs = vec![
            ("stage".to_string(), self.stage.to_string()),
            ("steps".to_string(), self.steps.to_string()),
            ("lr".to_string(), self.lr.to_string()),
            ("batch".to_string(), self.batch.to_string()),
            ("data".to_string(), self.data.display().to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        write_kv(path, &pairs)
    }

    pub fn to_plan(&self) -> StagePlan {
        StagePlan {
            stage: self.stage,
            steps: self.steps,
            lr: self.lr,
            batch: self.batch,
            seed: self.seed,
            weight_decay: 0.0,
            new_rows_only: false,
        }
    }
}
