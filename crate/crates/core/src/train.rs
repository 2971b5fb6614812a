//! Four-stage training protocol with per-stage freeze masks.
//!
//! Every stage applies its mask, snapshots digests of all frozen tensors,
//! trains with deterministic round-robin batches, and re-checks the digests
//! before returning. Any drift in a frozen tensor is an invariant error, not
//! a warning. The stages build on each other in fixed order:
//!
//! 1. selector on patch pseudo-labels (BCE);
//! 2. embedding rows on discrete/caption pairs, both directions;
//! 3. projector on caption prediction from selected continuous rows;
//! 4. embedding + projector + LM jointly on multi-image instructions.

use crate::assemble::{interleave, ImageBlock, PlanItem};
use crate::checksum::tensor_digest;
use crate::codebook::DiscreteSequence;
use crate::corpus::{check_vocab_fits, InstructionSample, Sample, SEP_WORD};
use crate::encoder::ContinuousSequence;
use crate::error::CoreError;
use crate::labels::patch_labels;
use crate::lm::lm_loss_and_backward;
use crate::loss::bce_with_logits;
use crate::model::Model;
use crate::optim::AdamW;
use crate::param::Parameterized;
use crate::selector::{score_patches, select_top_m, selector_inputs, SelectorMlp};
use crate::tensor::Tensor;
use crate::Result;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// One stage's training schedule. `seed` is recorded for provenance; the
/// loops themselves draw no random numbers.
#[derive(Clone, Copy, Debug)]
pub struct StagePlan {
    pub stage: u8,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Stage 2 only: restrict embedding updates to the appended visual rows.
    pub new_rows_only: bool,
}

impl StagePlan {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.stage) {
            return Err(CoreError::Config(format!("unknown stage {}", self.stage)));
        }
        if self.steps == 0 || self.batch == 0 {
            return Err(CoreError::Config(String::from(
                "steps and batch must be positive",
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CoreError::Config(format!("bad learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct StageReport {
    pub stage: u8,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

impl StageReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap_or(&f64::NAN)
    }
}

/// Training inputs shared by the stages.
pub struct TrainData {
    pub samples: Vec<Sample>,
    pub instructions: Vec<InstructionSample>,
}

/// In-memory model snapshot; the on-disk form lives in the companion crate.
#[derive(Debug)]
pub struct Checkpoint {
    pub cfg: crate::model::ModelConfig,
    pub seed: u64,
    /// Last completed stage; 0 means freshly initialized.
    pub stage: u8,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn capture(model: &Model, stage: u8, seed: u64) -> Checkpoint {
        Checkpoint {
            cfg: model.cfg,
            seed,
            stage,
            tensors: model.all_tensors(),
        }
    }

    pub fn restore(&self) -> Result<Model> {
        let mut model = Model::init(self.cfg, self.seed)?;
        model.load_tensors(&self.tensors)?;
        Ok(model)
    }
}

/// Stages must run strictly in order 1 -> 2 -> 3 -> 4.
pub fn check_stage_order(completed: u8, next: u8) -> Result<()> {
    if next != completed + 1 {
        return Err(CoreError::Config(format!(
            "stage {next} cannot follow completed stage {completed}; stages run 1->2->3->4"
        )));
    }
    Ok(())
}

/// Digests of every tensor the current mask freezes, plus the codebook.
pub fn frozen_digests(model: &Model) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = model
        .params()
        .iter()
        .filter(|p| !p.trainable)
        .map(|p| (p.name.clone(), tensor_digest(&p.value)))
        .collect();
    if let Ok(cb) = model.codebook() {
        out.insert(String::from("codebook.codewords"), tensor_digest(cb.codewords()));
    }
    out
}

/// Compare against a pre-training snapshot; any changed frozen tensor is an
/// invariant violation.
pub fn audit_frozen(pre: &BTreeMap<String, String>, model: &Model) -> Result<()> {
    let post = frozen_digests(model);
    for (name, digest) in pre {
        match post.get(name) {
            Some(d) if d == digest => {}
            Some(_) => {
                return Err(CoreError::Invariant(format!(
                    "frozen tensor {name} changed during training"
                )))
            }
            None => {
                return Err(CoreError::Invariant(format!(
                    "frozen tensor {name} disappeared during training"
                )))
            }
        }
    }
    Ok(())
}

fn scale_trainable_grads(model: &mut Model, s: f64) {
    for p in model.params_mut() {
        if p.trainable {
            p.grad.scale(s);
        }
    }
}

fn guard_finite(stage: u8, step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(CoreError::NonFinite(format!(
            "stage {stage} step {step}: loss is {loss}"
        )));
    }
    Ok(())
}

fn optimizer_step(model: &mut Model, opt: &mut AdamW) {
    let mut params = model.params_mut();
    opt.step(&mut params);
}

pub fn run_stage(model: &mut Model, data: &TrainData, plan: &StagePlan) -> Result<StageReport> {
    plan.validate()?;
    match plan.stage {
        1 => run_stage1(model, data, plan),
        2 => run_stage2(model, data, plan),
        3 => run_stage3(model, data, plan),
        4 => run_stage4(model, data, plan),
        _ => unreachable!(),
    }
}

/// All four stages back to back on the same data bundle.
pub fn run_all(
    model: &mut Model,
    data: &TrainData,
    plans: &[StagePlan; 4],
) -> Result<Vec<StageReport>> {
    let mut completed = 0u8;
    let mut reports = Vec::with_capacity(4);
    for plan in plans {
        check_stage_order(completed, plan.stage)?;
        reports.push(run_stage(model, data, plan)?);
        completed = plan.stage;
    }
    Ok(reports)
}

// --- stage 1: selector ---

fn run_stage1(model: &mut Model, data: &TrainData, plan: &StagePlan) -> Result<StageReport> {
    if data.samples.is_empty() {
        return Err(CoreError::Data(String::from("stage 1 needs captioned samples")));
    }
    check_vocab_fits(&model.vocab)?;
    model.apply_stage_mask(1)?;
    let pre = frozen_digests(model);

    // selector inputs depend only on frozen components, so build them once
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let width = 2 * model.cfg.z_llm;
    for (i, sample) in data.samples.iter().enumerate() {
        let cont = model.encode_continuous(&sample.image, i as u64)?;
        let disc = model.discretize(&cont)?;
        let h = model.h_eos(&disc)?;
        let (projected, _) = model.project(&cont.tokens)?;
        let inputs = selector_inputs(&projected, &h)?;
        rows.extend_from_slice(inputs.data());
        labels.extend(patch_labels(&sample.mask, model.cfg.patch)?);
    }
    let n = labels.len();
    let inputs = Tensor::from_vec(alloc::vec![n, width], rows)?;

    let losses = train_selector(&mut model.selector, &inputs, &labels, plan)?;
    audit_frozen(&pre, model)?;
    Ok(StageReport { stage: 1, losses })
}

/// The stage 1 inner loop over a fixed (inputs, labels) table: BCE on
/// selector logits, AdamW over selector parameters only, rows drawn
/// round-robin. Exposed so synthetic label tables can train a selector
/// without a full model around it.
pub fn train_selector(
    sel: &mut SelectorMlp,
    inputs: &Tensor,
    labels: &[f64],
    plan: &StagePlan,
) -> Result<Vec<f64>> {
    let n = labels.len();
    if n == 0 {
        return Err(CoreError::Data(String::from("no selector training rows")));
    }
    if inputs.rows() != n {
        return Err(CoreError::Shape(format!(
            "{} input rows for {n} labels",
            inputs.rows()
        )));
    }
    let width = inputs.cols();
    let mut opt = AdamW::new(plan.lr, plan.weight_decay);
    let mut losses = Vec::with_capacity(plan.steps);
    for step in 0..plan.steps {
        let mut batch_data = Vec::with_capacity(plan.batch * width);
        let mut batch_labels = Vec::with_capacity(plan.batch);
        for b in 0..plan.batch {
            let r = (step * plan.batch + b) % n;
            batch_data.extend_from_slice(inputs.row(r));
            batch_labels.push(labels[r]);
        }
        let x = Tensor::from_vec(alloc::vec![plan.batch, width], batch_data)?;
        let y = Tensor::from_vec(alloc::vec![plan.batch, 1], batch_labels)?;

        sel.zero_grads();
        let (logits, cache) = sel.forward(&x)?;
        let (loss, d_logits) = bce_with_logits(&logits, &y)?;
        guard_finite(1, step, loss)?;
        sel.backward(&cache, &d_logits)?;
        opt.step(&mut sel.params_mut());
        losses.push(loss);
    }
    Ok(losses)
}

// --- stage 2: embedding rows on discrete/caption pairs ---

struct IdItem {
    ids: Vec<usize>,
    supervise_from: usize,
}

fn discrete_ids(model: &Model, disc: &DiscreteSequence) -> Result<Vec<usize>> {
    disc.indices
        .iter()
        .map(|&d| model.vocab.to_unified(d))
        .collect()
}

fn run_stage2(model: &mut Model, data: &TrainData, plan: &StagePlan) -> Result<StageReport> {
    if data.samples.is_empty() {
        return Err(CoreError::Data(String::from("stage 2 needs captioned samples")));
    }
    check_vocab_fits(&model.vocab)?;
    model.apply_stage_mask(2)?;
    let pre = frozen_digests(model);
    let eos = model.vocab.eos_id();

    // both directions per pair: discrete -> caption and caption -> discrete
    let mut items = Vec::with_capacity(2 * data.samples.len());
    for (i, sample) in data.samples.iter().enumerate() {
        let cont = model.encode_continuous(&sample.image, i as u64)?;
        let disc = model.discretize(&cont)?;
        let d_ids = discrete_ids(model, &disc)?;

        let mut fwd = d_ids.clone();
        fwd.push(SEP_WORD);
        let caption_at = fwd.len();
        fwd.extend(&sample.caption);
        fwd.push(eos);
        items.push(IdItem { ids: fwd, supervise_from: caption_at });

        let mut rev = sample.caption.clone();
        rev.push(SEP_WORD);
        let disc_at = rev.len();
        rev.extend(&d_ids);
        rev.push(eos);
        items.push(IdItem { ids: rev, supervise_from: disc_at });
    }

    let n_text = model.vocab.n_text();
    let mut opt = AdamW::new(plan.lr, plan.weight_decay);
    let mut losses = Vec::with_capacity(plan.steps);
    for step in 0..plan.steps {
        model.zero_grads();
        let mut loss_sum = 0.0;
        for b in 0..plan.batch {
            let item = &items[(step * plan.batch + b) % items.len()];
            let input = model.emb.embed(&item.ids)?;
            let token_ids: Vec<Option<usize>> = item.ids.iter().map(|&id| Some(id)).collect();
            let targets: Vec<Option<usize>> = item
                .ids
                .iter()
                .enumerate()
                .map(|(i, &id)| if i >= item.supervise_from { Some(id) } else { None })
                .collect();
            let (loss, _) =
                lm_loss_and_backward(&mut model.lm, &mut model.emb, &input, &targets, &token_ids)?;
            loss_sum += loss;
        }
        let loss = loss_sum / plan.batch as f64;
        guard_finite(2, step, loss)?;
        scale_trainable_grads(model, 1.0 / plan.batch as f64);
        if plan.new_rows_only {
            for r in 0..n_text {
                model.emb.weight.grad.row_mut(r).fill(0.0);
            }
        }
        optimizer_step(model, &mut opt);
        losses.push(loss);
    }

    audit_frozen(&pre, model)?;
    Ok(StageReport { stage: 2, losses })
}

// --- stage 3: projector on caption prediction from selected patches ---

struct Stage3Item {
    selected: Tensor,
    text_ids: Vec<usize>,
}

fn run_stage3(model: &mut Model, data: &TrainData, plan: &StagePlan) -> Result<StageReport> {
    if data.samples.is_empty() {
        return Err(CoreError::Data(String::from("stage 3 needs captioned samples")));
    }
    check_vocab_fits(&model.vocab)?;
    model.apply_stage_mask(3)?;
    let pre = frozen_digests(model);
    let eos = model.vocab.eos_id();
    let alpha = model.cfg.alpha();

    // selection is fixed for the stage: the selector, LM, and embedding are
    // frozen here, and re-selecting as the projector moves would make the
    // training set non-stationary
    let mut items = Vec::with_capacity(data.samples.len());
    for (i, sample) in data.samples.iter().enumerate() {
        let cont = model.encode_continuous(&sample.image, i as u64)?;
        let disc = model.discretize(&cont)?;
        let kept = model.select_patches(&cont, &disc, alpha)?;
        let selected = cont.tokens.take_rows(&kept)?;
        let mut text_ids = alloc::vec![SEP_WORD];
        text_ids.extend(&sample.caption);
        text_ids.push(eos);
        items.push(Stage3Item { selected, text_ids });
    }

    let z = model.cfg.z_llm;
    let mut opt = AdamW::new(plan.lr, plan.weight_decay);
    let mut losses = Vec::with_capacity(plan.steps);
    for step in 0..plan.steps {
        model.zero_grads();
        let mut loss_sum = 0.0;
        for b in 0..plan.batch {
            let item = &items[(step * plan.batch + b) % items.len()];
            let m = item.selected.rows();
            let (projected, pcache) = model.projector.forward(&item.selected)?;
            let text_rows = model.emb.embed(&item.text_ids)?;

            let total = m + item.text_ids.len();
            let mut data_rows = Vec::with_capacity(total * z);
            data_rows.extend_from_slice(projected.data());
            data_rows.extend_from_slice(text_rows.data());
            let input = Tensor::from_vec(alloc::vec![total, z], data_rows)?;

            let mut token_ids = alloc::vec![None; m];
            token_ids.extend(item.text_ids.iter().map(|&id| Some(id)));
            // supervise the caption and EOS, not the separator
            let mut targets = alloc::vec![None; m + 1];
            targets.extend(item.text_ids[1..].iter().map(|&id| Some(id)));

            let (loss, d_input) =
                lm_loss_and_backward(&mut model.lm, &mut model.emb, &input, &targets, &token_ids)?;
            loss_sum += loss;

            let rows: Vec<usize> = (0..m).collect();
            let d_c = d_input.take_rows(&rows)?;
            model.projector.backward(&pcache, &d_c)?;
        }
        let loss = loss_sum / plan.batch as f64;
        guard_finite(3, step, loss)?;
        scale_trainable_grads(model, 1.0 / plan.batch as f64);
        optimizer_step(model, &mut opt);
        losses.push(loss);
    }

    audit_frozen(&pre, model)?;
    Ok(StageReport { stage: 3, losses })
}

// --- stage 4: joint instruction tuning ---

struct Stage4Item {
    images: Vec<(ContinuousSequence, DiscreteSequence)>,
    prompt: Vec<usize>,
    response: Vec<usize>,
}

fn run_stage4(model: &mut Model, data: &TrainData, plan: &StagePlan) -> Result<StageReport> {
    if data.instructions.is_empty() {
        return Err(CoreError::Data(String::from("stage 4 needs instruction samples")));
    }
    check_vocab_fits(&model.vocab)?;
    model.apply_stage_mask(4)?;
    let pre = frozen_digests(model);
    let eos = model.vocab.eos_id();
    let alpha = model.cfg.alpha();

    let mut items = Vec::with_capacity(data.instructions.len());
    let mut next_image_id = 0u64;
    for sample in &data.instructions {
        let mut images = Vec::with_capacity(sample.images.len());
        for (img, _) in &sample.images {
            let cont = model.encode_continuous(img, next_image_id)?;
            let disc = model.discretize(&cont)?;
            next_image_id += 1;
            images.push((cont, disc));
        }
        let mut response = sample.response.clone();
        response.push(eos);
        items.push(Stage4Item {
            images,
            prompt: sample.prompt.clone(),
            response,
        });
    }

    let mut opt = AdamW::new(plan.lr, plan.weight_decay);
    let mut losses = Vec::with_capacity(plan.steps);
    for step in 0..plan.steps {
        model.zero_grads();
        let mut loss_sum = 0.0;
        for b in 0..plan.batch {
            let item = &items[(step * plan.batch + b) % items.len()];

            // selection and projection under the current weights
            let mut blocks = Vec::with_capacity(item.images.len());
            let mut caches = Vec::with_capacity(item.images.len());
            let mut kept_sets = Vec::with_capacity(item.images.len());
            for (cont, disc) in &item.images {
                let h = model.h_eos(disc)?;
                let (projected, pcache) = model.projector.forward(&cont.tokens)?;
                let scores = score_patches(&model.selector, &projected, &h)?;
                let kept = select_top_m(&scores, alpha)?;
                let block_rows = projected.take_rows(&kept)?;
                blocks.push(ImageBlock {
                    image_id: cont.image_id,
                    projected: block_rows,
                    discrete: disc.clone(),
                });
                caches.push(pcache);
                kept_sets.push(kept);
            }

            let texts = alloc::vec![item.prompt.clone(), item.response.clone()];
            let mut plan_items: Vec<PlanItem> =
                (0..blocks.len()).map(PlanItem::Image).collect();
            plan_items.push(PlanItem::Text(0));
            plan_items.push(PlanItem::Text(1));
            let mut seq = interleave(&blocks, &texts, &plan_items, &model.emb, &model.vocab)?;
            let start = seq.len() - item.response.len();
            seq.supervise_range(start..seq.len())?;

            let (loss, d_input) = lm_loss_and_backward(
                &mut model.lm,
                &mut model.emb,
                &seq.embedded,
                &seq.targets,
                &seq.token_ids,
            )?;
            loss_sum += loss;

            // route each image's continuous-row gradients back through the
            // full-projection cache
            for (span_idx, (_, span)) in seq.image_spans.iter().enumerate() {
                let kept = &kept_sets[span_idx];
                let n_c = item.images[span_idx].0.tokens.rows();
                let mut d_full = Tensor::zeros(alloc::vec![n_c, model.cfg.z_llm]);
                for (slot, &patch) in kept.iter().enumerate() {
                    d_full
                        .row_mut(patch)
                        .copy_from_slice(d_input.row(span.start + slot));
                }
                model.projector.backward(&caches[span_idx], &d_full)?;
            }
        }
        let loss = loss_sum / plan.batch as f64;
        guard_finite(4, step, loss)?;
        scale_trainable_grads(model, 1.0 / plan.batch as f64);
        optimizer_step(model, &mut opt);
        losses.push(loss);
    }

    audit_frozen(&pre, model)?;
    Ok(StageReport { stage: 4, losses })
}
