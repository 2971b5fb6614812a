//! Implementations behind the `hvt` subcommands. Each command does its
//! work under an output root and finishes by writing `manifest.json`
//! there; see `manifest` for the idempotency contract.

use crate::cfgfile::StageConfig;
use crate::manifest::ManifestBuilder;
use crate::pipeline::{default_stage_config, fit_codebook};
use crate::{ckpt, dataset, io_err, mvt, verify, CliError, Result};
use hvt_core::assemble::{assemble_image_block, budget_report, ImageBlock, SegTag};
use hvt_core::math::sigmoid;
use hvt_core::model::{Model, ModelConfig};
use hvt_core::selector::{score_patches, select_top_m};
use hvt_core::train::{run_stage, Checkpoint};
use hvt_core::Tensor;
use std::fs;
use std::path::{Path, PathBuf};

pub fn cmd_gen_data(
    count: usize,
    instr_count: usize,
    max_images: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let written = dataset::generate(out, count, instr_count, max_images, seed)?;

    // ready-to-run stage configs pointing at this dataset
    let mut extra = Vec::new();
    for stage in 1..=4u8 {
        let path = out.join(format!("stage{stage}.cfg"));
        default_stage_config(stage, out, seed).write(&path)?;
        extra.push(path);
    }

    let mut all = written;
    all.extend(extra);
    let mut mb = ManifestBuilder::new(&format!(
        "gen-data --count {count} --instr-count {instr_count} --max-images {max_images} --seed {seed}"
    ));
    mb.seed(seed);
    mb.outputs(out, &all)?;
    mb.write(out)?;
    Ok(())
}

pub fn cmd_train_codebook(
    data: &Path,
    nv: usize,
    iters: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let train_data = dataset::load(data)?;
    let mut cfg = ModelConfig::desk();
    cfg.n_v = nv;
    cfg.validate()?;
    let mut model = Model::init(cfg, seed)?;
    let cb = fit_codebook(&model, &train_data.samples, iters, seed)?;
    model.set_codebook(cb)?;

    ckpt::save(out, &Checkpoint::capture(&model, 0, seed))?;
    let mut mb = ManifestBuilder::new(&format!(
        "train-codebook --nv {nv} --iters {iters} --seed {seed}"
    ));
    mb.seed(seed);
    mb.input(&data.join(dataset::DATASET_CFG))?;
    mb.outputs(out, &ckpt::file_list(out)?)?;
    mb.write(out)?;
    Ok(())
}

pub fn cmd_train(
    stage: u8,
    config: &Path,
    in_ckpt: &Path,
    out_ckpt: &Path,
) -> Result<()> {
    let cfg = StageConfig::from_file(config)?;
    if cfg.stage != stage {
        return Err(CliError::Usage(format!(
            "--stage {stage} disagrees with stage={} in {}",
            cfg.stage,
            config.display()
        )));
    }
    let prior = ckpt::load(in_ckpt)?;
    if prior.stage + 1 != stage {
        // precondition, not usage: the flags are fine, the input is not
        return Err(CliError::Format(format!(
            "stage {stage} requires a stage {} checkpoint, but {} is at stage {}",
            stage.saturating_sub(1),
            in_ckpt.display(),
            prior.stage
        )));
    }
    let mut model = prior.restore()?;
    let data = dataset::load(&cfg.data)?;
    let report = run_stage(&mut model, &data, &cfg.to_plan())?;

    ckpt::save(out_ckpt, &Checkpoint::capture(&model, stage, cfg.seed))?;
    let trace = out_ckpt.join("loss.csv");
    let mut csv = String::new();
    for (step, loss) in report.losses.iter().enumerate() {
        csv.push_str(&format!("{step},{loss}\n"));
    }
    fs::write(&trace, csv).map_err(|e| io_err(&trace, e))?;

    let mut mb = ManifestBuilder::new(&format!("train --stage {stage}"));
    mb.config(config);
    mb.seed(cfg.seed);
    mb.input(config)?;
    mb.input(&in_ckpt.join(ckpt::MANIFEST))?;
    mb.outputs(out_ckpt, &ckpt::file_list(out_ckpt)?)?;
    mb.write(out_ckpt)?;
    Ok(())
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.extension().map(|e| e == "mvt").unwrap_or(false) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Format(format!(
            "{}: no .mvt image files",
            dir.display()
        )));
    }
    Ok(out)
}

pub fn cmd_encode(
    images: &Path,
    alpha: f64,
    ckpt_dir: &Path,
    out: &Path,
    patch_size: Option<usize>,
    export_attention: bool,
) -> Result<()> {
    let loaded = ckpt::load(ckpt_dir)?;
    let model = loaded.restore()?;
    if let Some(p) = patch_size {
        // the encoder weights fix the patch size; the flag can only confirm it
        if p != model.cfg.patch {
            return Err(CliError::Usage(format!(
                "--patch-size {p} conflicts with the checkpoint's patch size {}",
                model.cfg.patch
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let files = list_images(images)?;
    let mut written = Vec::new();
    let mut budget_lines = String::new();
    for (idx, file) in files.iter().enumerate() {
        let (dims, data) = mvt::read_raw(file)?;
        if dims.len() != 3 || dims[2] != 3 {
            return Err(CliError::Format(format!(
                "{}: expected dims [H,W,3], got {dims:?}",
                file.display()
            )));
        }
        let img = hvt_core::encoder::ImageGrid::new(dims[1], dims[0], data)?;
        let stem = file
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| format!("img_{idx}"));

        let cont = model.encode_continuous(&img, idx as u64)?;
        let disc = model.discretize(&cont)?;
        let h = model.h_eos(&disc)?;
        let (projected, _) = model.project(&cont.tokens)?;
        let scores = score_patches(&model.selector, &projected, &h)?;
        let kept = select_top_m(&scores, alpha)?;

        let kpath = out.join(format!("{stem}.kept.txt"));
        let klines: Vec<String> = kept.iter().map(|k| k.to_string()).collect();
        fs::write(&kpath, klines.join("\n") + "\n").map_err(|e| io_err(&kpath, e))?;
        written.push(kpath);

        let probs: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        let spath = out.join(format!("{stem}.scores.mvt"));
        mvt::write_raw(&spath, &[probs.len(), 1], &probs)?;
        written.push(spath);

        let dpath = out.join(format!("{stem}.discrete.txt"));
        let dlines: Vec<String> = disc.indices.iter().map(|d| d.to_string()).collect();
        fs::write(&dpath, dlines.join("\n") + "\n").map_err(|e| io_err(&dpath, e))?;
        written.push(dpath);

        let line = budget_report(cont.tokens.rows(), model.cfg.n_d, alpha)?;
        budget_lines.push_str(&format!(
            "{{\"alpha\":{},\"m\":{},\"nd\":{},\"visual_total\":{},\"quadratic_ratio\":{}}}\n",
            alpha, line.m, line.n_d, line.visual_total, line.quadratic_ratio
        ));

        if export_attention {
            let block = ImageBlock {
                image_id: cont.image_id,
                projected: projected.take_rows(&kept)?,
                discrete: disc.clone(),
            };
            let (rows, mut tags, _) = assemble_image_block(&block, &model.emb, &model.vocab)?;
            // append EOS as the one text position so text attention exists
            let eos_row = model.emb.embed(&[model.vocab.eos_id()])?;
            let mut full = Vec::with_capacity((rows.rows() + 1) * model.cfg.z_llm);
            full.extend_from_slice(rows.data());
            full.extend_from_slice(eos_row.data());
            let seq = Tensor::from_vec(vec![rows.rows() + 1, model.cfg.z_llm], full)?;
            tags.push(SegTag::Text);
            let (out_lm, _) = model.lm.forward(&seq)?;
            let att = out_lm
                .attentions
                .last()
                .ok_or_else(|| CliError::Format("model has no attention layers".to_string()))?;
            let apath = out.join(format!("{stem}.att.mvt"));
            mvt::write_tensor(&apath, att)?;
            written.push(apath);
            let tpath = out.join(format!("{stem}.tags.txt"));
            let tlines: Vec<&str> = tags
                .iter()
                .map(|t| match t {
                    SegTag::Continuous => "C",
                    SegTag::Discrete => "D",
                    SegTag::Text => "T",
                })
                .collect();
            fs::write(&tpath, tlines.join("\n") + "\n").map_err(|e| io_err(&tpath, e))?;
            written.push(tpath);
        }
    }

    let bpath = out.join("budget.jsonl");
    fs::write(&bpath, budget_lines).map_err(|e| io_err(&bpath, e))?;
    written.push(bpath);

    let mut mb = ManifestBuilder::new(&format!("encode --alpha {alpha}"));
    mb.input(&ckpt_dir.join(ckpt::MANIFEST))?;
    mb.outputs(out, &written)?;
    mb.write(out)?;
    Ok(())
}

pub fn cmd_report(alphas: &str, nc: usize, nd: usize, out: Option<&Path>) -> Result<String> {
    let mut lines = String::new();
    for part in alphas.split(',') {
        let alpha: f64 = part
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad alpha {part}")))?;
        let line = budget_report(nc, nd, alpha)?;
        lines.push_str(&format!(
            "{{\"alpha\":{},\"m\":{},\"nd\":{},\"visual_total\":{},\"quadratic_ratio\":{}}}\n",
            alpha, line.m, line.n_d, line.visual_total, line.quadratic_ratio
        ));
    }
    if let Some(root) = out {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let path = root.join("budget.jsonl");
        fs::write(&path, &lines).map_err(|e| io_err(&path, e))?;
        let mut mb = ManifestBuilder::new(&format!("report --alphas {alphas} --nc {nc} --nd {nd}"));
        mb.outputs(root, &[path])?;
        mb.write(root)?;
    }
    Ok(lines)
}

pub fn cmd_verify(suite: &str, seed: u64, out: Option<&Path>) -> Result<String> {
    let results = verify::run_suites(suite, seed)?;
    let summary = serde_json::to_string_pretty(&results).expect("serializable");
    if let Some(root) = out {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let path = root.join("verify.json");
        fs::write(&path, &summary).map_err(|e| io_err(&path, e))?;
        let mut mb = ManifestBuilder::new(&format!("verify --suite {suite} --seed {seed}"));
        mb.seed(seed);
        mb.outputs(root, &[path])?;
        mb.write(root)?;
    }
    for r in &results {
        if !r.passed {
            return Err(CliError::Core(hvt_core::CoreError::Invariant(format!(
                "suite {} failed: {}",
                r.suite, r.detail
            ))));
        }
    }
    Ok(summary)
}
