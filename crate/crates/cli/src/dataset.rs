//! On-disk toy datasets: synthetic rectangle images as MVT1 `[H,W,3]`
//! tensors, masks as MVM1, captions and instructions as plain text id
//! lists. `generate` and `load` are inverses for everything training
//! consumes.

use crate::{io_err, mvm, mvt, CliError, Result};
use hvt_core::corpus::{make_instruction_samples, make_samples, InstructionSample, Sample};
use hvt_core::encoder::ImageGrid;
use hvt_core::labels::{MaskRaster, SynthConfig};
use hvt_core::train::TrainData;
use hvt_core::SplitRng;
use std::fs;
use std::path::{Path, PathBuf};

pub const DATASET_CFG: &str = "dataset.cfg";

fn write_image(path: &Path, img: &ImageGrid) -> Result<()> {
    mvt::write_raw(path, &[img.height(), img.width(), 3], img.data())
}

fn read_image(path: &Path) -> Result<ImageGrid> {
    let (dims, data) = mvt::read_raw(path)?;
    if dims.len() != 3 || dims[2] != 3 {
        return Err(CliError::Format(format!(
            "{}: expected dims [H,W,3], got {dims:?}",
            path.display()
        )));
    }
    ImageGrid::new(dims[1], dims[0], data).map_err(CliError::Core)
}

fn ids_line(ids: &[usize]) -> String {
    let parts: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
    parts.join(" ")
}

fn parse_ids(text: &str, origin: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|w| {
            w.parse()
                .map_err(|_| CliError::Format(format!("{origin}: bad id {w}")))
        })
        .collect()
}

/// Write a full toy dataset. Returns every file written, for the run
/// manifest. Deterministic in (seed, counts).
pub fn generate(
    dir: &Path,
    count: usize,
    instr_count: usize,
    max_images: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let synth = SynthConfig::desk();
    let rng = SplitRng::new(seed);
    let samples = make_samples(&synth, count, &mut rng.derive("samples"))?;
    let instructions = if instr_count > 0 {
        make_instruction_samples(&synth, instr_count, max_images, &mut rng.derive("instr"))?
    } else {
        Vec::new()
    };

    let mut written = Vec::new();
    for sub in ["images", "masks", "instr"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| io_err(&p, e))?;
    }

    let mut captions = String::new();
    for (i, s) in samples.iter().enumerate() {
        let ipath = dir.join("images").join(format!("img_{i:04}.mvt"));
        write_image(&ipath, &s.image)?;
        written.push(ipath);
        let mpath = dir.join("masks").join(format!("mask_{i:04}.mvm"));
        mvm::write_mask(&mpath, &s.mask)?;
        written.push(mpath);
        captions.push_str(&ids_line(&s.caption));
        captions.push('\n');
    }
    let cpath = dir.join("captions.txt");
    fs::write(&cpath, captions).map_err(|e| io_err(&cpath, e))?;
    written.push(cpath);

    let mut lines = String::new();
    for (i, ins) in instructions.iter().enumerate() {
        for (k, (img, mask)) in ins.images.iter().enumerate() {
            let ipath = dir.join("instr").join(format!("img_{i:04}_{k}.mvt"));
            write_image(&ipath, img)?;
            written.push(ipath);
            let mpath = dir.join("instr").join(format!("mask_{i:04}_{k}.mvm"));
            mvm::write_mask(&mpath, mask)?;
            written.push(mpath);
        }
        lines.push_str(&format!(
            "{}|{}|{}\n",
            ins.images.len(),
            ids_line(&ins.prompt),
            ids_line(&ins.response)
        ));
    }
    let lpath = dir.join("instructions.txt");
    fs::write(&lpath, lines).map_err(|e| io_err(&lpath, e))?;
    written.push(lpath);

    let dcfg = dir.join(DATASET_CFG);
    crate::cfgfile::write_kv(
        &dcfg,
        &[
            ("images".to_string(), count.to_string()),
            ("instructions".to_string(), instr_count.to_string()),
            ("max_images".to_string(), max_images.to_string()),
            ("seed".to_string(), seed.to_string()),
        ],
    )?;
    written.push(dcfg);

    Ok(written)
}

pub fn load(dir: &Path) -> Result<TrainData> {
    let kv = crate::cfgfile::read_kv(&dir.join(DATASET_CFG))?;
    let get = |k: &str| -> Result<usize> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Format(format!("{}: missing or bad {k}", dir.display())))
    };
    let count = get("images")?;
    let instr_count = get("instructions")?;

    let cpath = dir.join("captions.txt");
    let ctext = fs::read_to_string(&cpath).map_err(|e| io_err(&cpath, e))?;
    let caption_lines: Vec<&str> = ctext.lines().collect();
    if caption_lines.len() != count {
        return Err(CliError::Format(format!(
            "{}: {} caption lines for {count} images",
            cpath.display(),
            caption_lines.len()
        )));
    }

    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let image = read_image(&dir.join("images").join(format!("img_{i:04}.mvt")))?;
        let mask = read_mask_sized(&dir.join("masks").join(format!("mask_{i:04}.mvm")), &image)?;
        let caption = parse_ids(caption_lines[i], &cpath.display().to_string())?;
        samples.push(Sample { image, mask, caption });
    }

    let lpath = dir.join("instructions.txt");
    let ltext = fs::read_to_string(&lpath).map_err(|e| io_err(&lpath, e))?;
    let lines: Vec<&str> = ltext.lines().collect();
    if lines.len() != instr_count {
        return Err(CliError::Format(format!(
            "{}: {} instruction lines, expected {instr_count}",
            lpath.display(),
            lines.len()
        )));
    }
    let mut instructions = Vec::with_capacity(instr_count);
    for (i, line) in lines.iter().enumerate() {
        let origin = format!("{}:{}", lpath.display(), i + 1);
        let mut parts = line.splitn(3, '|');
        let k: usize = parts
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| CliError::Format(format!("{origin}: bad image count")))?;
        let prompt = parse_ids(
            parts
                .next()
                .ok_or_else(|| CliError::Format(format!("{origin}: missing prompt")))?,
            &origin,
        )?;
        let response = parse_ids(
            parts
                .next()
                .ok_or_else(|| CliError::Format(format!("{origin}: missing response")))?,
            &origin,
        )?;
        let mut images = Vec::with_capacity(k);
        for j in 0..k {
            let img = read_image(&dir.join("instr").join(format!("img_{i:04}_{j}.mvt")))?;
            let mask =
                read_mask_sized(&dir.join("instr").join(format!("mask_{i:04}_{j}.mvm")), &img)?;
            images.push((img, mask));
        }
        instructions.push(InstructionSample { images, prompt, response });
    }

    Ok(TrainData { samples, instructions })
}

fn read_mask_sized(path: &Path, image: &ImageGrid) -> Result<MaskRaster> {
    let mask = mvm::read_mask(path)?;
    if mask.width() != image.width() || mask.height() != image.height() {
        return Err(CliError::Format(format!(
            "{}: mask {}x{} does not match image {}x{}",
            path.display(),
            mask.width(),
            mask.height(),
            image.width(),
            image.height()
        )));
    }
    Ok(mask)
}
