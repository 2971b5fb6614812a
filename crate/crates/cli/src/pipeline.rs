//! Glue shared by the commands, the verify suites, and the acceptance
//! tests: codebook fitting from a sample set, the tuned per-stage default
//! schedules, and selector evaluation on held-out samples.

use crate::cfgfile::StageConfig;
use crate::Result;
use hvt_core::codebook::{pool_to_slots, train_codebook, Codebook};
use hvt_core::corpus::Sample;
use hvt_core::labels::patch_labels;
use hvt_core::model::Model;
use hvt_core::selector::{selector_accuracy, selector_inputs};
use hvt_core::train::StagePlan;
use hvt_core::{SplitRng, Tensor};
use std::path::Path;

/// Fit the discrete codebook on the pooled slot vectors of every sample,
/// exactly as the quantizer will see them.
pub fn fit_codebook(
    model: &Model,
    samples: &[Sample],
    iters: usize,
    seed: u64,
) -> Result<Codebook> {
    let mut rows: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for (i, s) in samples.iter().enumerate() {
        let cont = model.encode_continuous(&s.image, i as u64)?;
        let slots = pool_to_slots(&cont.tokens, model.cfg.n_d)?;
        rows.extend_from_slice(slots.data());
        count += slots.rows();
    }
    let pool = Tensor::from_vec(vec![count, model.cfg.enc_z], rows)?;
    let cb = train_codebook(&pool, model.cfg.n_v, iters, &mut SplitRng::new(seed))?;
    Ok(cb)
}

/// Tuned schedules for the desk-scale toy run. These are the numbers the
/// acceptance gate holds the pipeline to, so `gen-data` emits them too.
pub fn default_plan(stage: u8, seed: u64) -> StagePlan {
    let (steps, lr, batch) = match stage {
        1 => (400, 0.01, 16),
        2 => (300, 0.05, 8),
        3 => (400, 0.01, 8),
        4 => (250, 0.003, 4),
        _ => (1, 0.001, 1),
    };
    StagePlan {
        stage,
        steps,
        lr,
        batch,
        seed,
        weight_decay: 0.0,
        new_rows_only: false,
    }
}

pub fn default_stage_config(stage: u8, data: &Path, seed: u64) -> StageConfig {
    let plan = default_plan(stage, seed);
    StageConfig {
        stage,
        steps: plan.steps,
        lr: plan.lr,
        batch: plan.batch,
        data: data.to_path_buf(),
        seed,
    }
}

/// Selector accuracy on held-out samples, using the model's own frozen
/// feature path for the inputs and the mask overlap rule for labels.
pub fn selector_holdout_accuracy(model: &Model, samples: &[Sample]) -> Result<f64> {
    let width = 2 * model.cfg.z_llm;
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let cont = model.encode_continuous(&s.image, i as u64)?;
        let disc = model.discretize(&cont)?;
        let h = model.h_eos(&disc)?;
        let (projected, _) = model.project(&cont.tokens)?;
        let inputs = selector_inputs(&projected, &h)?;
        rows.extend_from_slice(inputs.data());
        labels.extend(patch_labels(&s.mask, model.cfg.patch)?);
    }
    let n = labels.len();
    let inputs = Tensor::from_vec(vec![n, width], rows)?;
    let acc = selector_accuracy(&model.selector, &inputs, &labels)?;
    Ok(acc)
}
