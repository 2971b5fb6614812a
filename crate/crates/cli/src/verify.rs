//! The `hvt verify` suites: self-contained invariant checks runnable
//! without any prior artifacts. Each suite returns a pass/fail summary
//! with enough detail to see what was measured.

use crate::pipeline::{default_plan, fit_codebook};
use crate::{CliError, Result};
use hvt_core::assemble::budget_report;
use hvt_core::corpus::{make_instruction_samples, make_samples};
use hvt_core::gradcheck::finite_diff_check;
use hvt_core::labels::{patch_labels, MaskRaster, SynthConfig};
use hvt_core::lm::{lm_loss, lm_loss_and_backward, LmConfig, MiniLm};
use hvt_core::loss::bce_with_logits;
use hvt_core::model::{Model, ModelConfig};
use hvt_core::selector::{select_top_m, SelectorMlp};
use hvt_core::train::{run_stage, StagePlan, TrainData};
use hvt_core::vocab::{EmbeddingTable, Projector, UnifiedVocab};
use hvt_core::{Parameter, Parameterized, SplitRng, Tensor};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub passed: bool,
    pub detail: String,
}

pub const SUITES: [&str; 4] = ["grad", "freeze", "oracle", "budget"];

pub fn run_suites(which: &str, seed: u64) -> Result<Vec<SuiteResult>> {
    let names: Vec<&str> = match which {
        "all" => SUITES.to_vec(),
        name if SUITES.contains(&name) => vec![name],
        other => {
            return Err(CliError::Usage(format!(
                "unknown suite {other}; expected grad, freeze, oracle, budget, or all"
            )))
        }
    };
    names
        .into_iter()
        .map(|name| match name {
            // the grad fixture is pinned: gradient correctness is
            // seed-independent, while the checker's conditioning is not
            "grad" => suite_grad(),
            "freeze" => suite_freeze(seed),
            "oracle" => suite_oracle(seed),
            "budget" => suite_budget(),
            _ => unreachable!(),
        })
        .collect()
}

// --- budget ---

fn suite_budget() -> Result<SuiteResult> {
    let a = budget_report(576, 32, 0.25)?;
    let b = budget_report(576, 32, 0.1)?;
    let passed = a.m == 144 && a.visual_total == 176 && b.m == 57 && b.visual_total == 89;
    Ok(SuiteResult {
        suite: "budget".to_string(),
        passed,
        detail: format!(
            "alpha 0.25 -> m={} total={}, alpha 0.1 -> m={} total={}",
            a.m, a.visual_total, b.m, b.visual_total
        ),
    })
}

// --- grad ---

const GRAD_EPS: f64 = 1e-5;
const GRAD_THRESHOLD: f64 = 1e-6;

struct LmHarness {
    lm: MiniLm,
    emb: EmbeddingTable,
}

impl Parameterized for LmHarness {
    fn params(&self) -> Vec<&Parameter> {
        let mut p = self.emb.params();
        p.extend(self.lm.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p: Vec<&mut Parameter> = self.emb.params_mut();
        p.extend(self.lm.params_mut());
        p
    }
}

fn grad_selector() -> f64 {
    let mut sel = SelectorMlp::init(6, 5, &SplitRng::new(15)).unwrap();
    let rng = SplitRng::new(15 ^ 0x5e1);
    let x = Tensor::from_vec(vec![4, 12], rng.derive("x").normal_vec(48, 1.0)).unwrap();
    let y = Tensor::from_vec(vec![4, 1], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let report = finite_diff_check(
        &mut sel,
        |m| {
            let (logits, cache) = m.forward(&x).unwrap();
            let (loss, d) = bce_with_logits(&logits, &y).unwrap();
            m.backward(&cache, &d).unwrap();
            loss
        },
        |m| {
            let (logits, _) = m.forward(&x).unwrap();
            bce_with_logits(&logits, &y).unwrap().0
        },
        GRAD_EPS,
    );
    report.max_rel_err
}

fn grad_projector() -> f64 {
    let mut proj = Projector::init(5, 6, &SplitRng::new(15));
    let rng = SplitRng::new(15 ^ 0x9a0);
    let x = Tensor::from_vec(vec![3, 5], rng.derive("x").normal_vec(15, 1.0)).unwrap();
    // quadratic head: loss = sum(y^2)/2 so d_y = y
    let report = finite_diff_check(
        &mut proj,
        |m| {
            let (y, cache) = m.forward(&x).unwrap();
            m.backward(&cache, &y).unwrap();
            y.data().iter().map(|v| 0.5 * v * v).sum()
        },
        |m| {
            let (y, _) = m.forward(&x).unwrap();
            y.data().iter().map(|v| 0.5 * v * v).sum()
        },
        GRAD_EPS,
    );
    report.max_rel_err
}

fn grad_lm() -> f64 {
    let cfg = LmConfig { z_llm: 4, layers: 1, heads: 2, max_len: 8 };
    let vocab = UnifiedVocab::new(5, 3).unwrap();
    let mut model = LmHarness {
        lm: MiniLm::init(cfg, &SplitRng::new(42)).unwrap(),
        emb: EmbeddingTable::init(vocab, 4, &SplitRng::new(41)),
    };
    // scale the 0.02 init up so no gradient coordinate sits in the
    // roundoff floor of the central difference
    model.emb.weight.value.scale(25.0);
    for p in model.lm.params_mut() {
        if p.name == "lm.pos.weight" {
            p.value.scale(25.0);
        }
    }
    let ids = [0usize, 6, 2, 4];
    let targets: Vec<Option<usize>> =
        ids.iter().enumerate().map(|(i, &t)| if i > 0 { Some(t) } else { None }).collect();
    let token_ids: Vec<Option<usize>> = ids.iter().map(|&t| Some(t)).collect();
    let report = finite_diff_check(
        &mut model,
        |m| {
            let input = m.emb.embed(&ids).unwrap();
            lm_loss_and_backward(&mut m.lm, &mut m.emb, &input, &targets, &token_ids)
                .unwrap()
                .0
        },
        |m| {
            let input = m.emb.embed(&ids).unwrap();
            lm_loss(&m.lm, &m.emb, &input, &targets).unwrap()
        },
        GRAD_EPS,
    );
    report.max_rel_err
}

fn suite_grad() -> Result<SuiteResult> {
    let sel = grad_selector();
    let proj = grad_projector();
    let lm = grad_lm();
    let worst = sel.max(proj).max(lm);
    Ok(SuiteResult {
        suite: "grad".to_string(),
        passed: worst < GRAD_THRESHOLD,
        detail: format!(
            "max rel err selector {sel:.3e}, projector {proj:.3e}, lm+embedding {lm:.3e}; threshold {GRAD_THRESHOLD:.0e}"
        ),
    })
}

// --- oracle ---

/// Reference top-m: full sort by (score desc, index asc), take m, ascending.
pub fn select_oracle(scores: &[f64], alpha: f64) -> Vec<usize> {
    let m = (scores.len() as f64 * alpha).floor() as usize;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = idx.into_iter().take(m).collect();
    kept.sort_unstable();
    kept
}

/// Reference pseudo-labels: per-pixel scan over every patch.
pub fn labels_oracle(mask: &MaskRaster, p: usize) -> Vec<f64> {
    let pw = mask.width() / p;
    let ph = mask.height() / p;
    let mut out = Vec::with_capacity(pw * ph);
    for py in 0..ph {
        for px in 0..pw {
            let mut hit = false;
            for dy in 0..p {
                for dx in 0..p {
                    if mask.at(px * p + dx, py * p + dy) == 1 {
                        hit = true;
                    }
                }
            }
            out.push(if hit { 1.0 } else { 0.0 });
        }
    }
    out
}

fn suite_oracle(seed: u64) -> Result<SuiteResult> {
    let rng = SplitRng::new(seed);

    let mut select_checked = 0usize;
    let mut sel_rng = rng.derive("select");
    let alphas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    for case in 0..200 {
        let n_c = 1 + sel_rng.next_below(64);
        // quantized scores force tie coverage
        let scores: Vec<f64> =
            (0..n_c).map(|_| (sel_rng.next_below(7) as f64) / 3.0).collect();
        let alpha = alphas[case % alphas.len()];
        let expect = select_oracle(&scores, alpha);
        if expect.is_empty() {
            continue;
        }
        let got = select_top_m(&scores, alpha)?;
        if got != expect {
            return Ok(SuiteResult {
                suite: "oracle".to_string(),
                passed: false,
                detail: format!("select_top_m mismatch at case {case}"),
            });
        }
        select_checked += 1;
    }

    let mut label_checked = 0usize;
    let mut lab_rng = rng.derive("labels");
    for case in 0..100 {
        let p = [4usize, 8, 16][case % 3];
        let w = p * (1 + lab_rng.next_below(64 / p));
        let h = p * (1 + lab_rng.next_below(64 / p));
        let data: Vec<u8> = (0..w * h)
            .map(|_| if lab_rng.next_below(5) == 0 { 1 } else { 0 })
            .collect();
        let mask = MaskRaster::new(w, h, data)?;
        if patch_labels(&mask, p)? != labels_oracle(&mask, p) {
            return Ok(SuiteResult {
                suite: "oracle".to_string(),
                passed: false,
                detail: format!("patch_labels mismatch at case {case}"),
            });
        }
        label_checked += 1;
    }

    Ok(SuiteResult {
        suite: "oracle".to_string(),
        passed: true,
        detail: format!(
            "select_top_m {select_checked} cases, patch_labels {label_checked} masks, all exact"
        ),
    })
}

// --- freeze ---

pub fn small_cfg() -> ModelConfig {
    ModelConfig {
        image: 32,
        patch: 8,
        enc_z: 16,
        enc_layers: 1,
        n_d: 4,
        n_v: 8,
        z_llm: 16,
        n_text: 64,
        lm_layers: 1,
        heads: 2,
        max_len: 128,
        selector_hidden: 16,
        alpha_milli: 250,
    }
}

pub fn small_fixture(seed: u64, n_samples: usize, n_instr: usize) -> Result<(Model, TrainData)> {
    let synth = SynthConfig::desk();
    let rng = SplitRng::new(seed);
    let data = TrainData {
        samples: make_samples(&synth, n_samples, &mut rng.derive("samples"))?,
        instructions: make_instruction_samples(&synth, n_instr, 2, &mut rng.derive("instr"))?,
    };
    let mut model = Model::init(small_cfg(), seed)?;
    let cb = fit_codebook(&model, &data.samples, 10, seed ^ 0xc0de)?;
    model.set_codebook(cb)?;
    Ok((model, data))
}

/// Which parameters a stage is allowed to move.
pub fn stage_trainable(stage: u8, name: &str) -> bool {
    match stage {
        1 => name.starts_with("selector."),
        2 => name == "embedding.weight",
        3 => name.starts_with("projector."),
        4 => {
            name == "embedding.weight"
                || name.starts_with("projector.")
                || name.starts_with("lm.")
        }
        _ => false,
    }
}

fn suite_freeze(seed: u64) -> Result<SuiteResult> {
    let (mut model, data) = small_fixture(seed, 4, 3)?;
    let mut audited = 0usize;
    for stage in 1..=4u8 {
        let before = model.all_tensors();
        let plan = StagePlan { steps: 3, batch: 2, ..default_plan(stage, seed) };
        run_stage(&mut model, &data, &plan)?;
        let after = model.all_tensors();
        for (name, t) in &after {
            if stage_trainable(stage, name) {
                continue;
            }
            if t.data() != before[name].data() {
                return Ok(SuiteResult {
                    suite: "freeze".to_string(),
                    passed: false,
                    detail: format!("stage {stage} moved frozen tensor {name}"),
                });
            }
            audited += 1;
        }
    }
    Ok(SuiteResult {
        suite: "freeze".to_string(),
        passed: true,
        detail: format!("{audited} frozen tensors bit-identical across stages 1-4"),
    })
}
