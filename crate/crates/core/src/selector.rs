//! Patch selector: a 3-layer MLP that scores each projected patch against
//! the discrete-context summary, keeping the top floor(n_c * alpha) patches.

use crate::codebook::DiscreteSequence;
use crate::error::CoreError;
use crate::lm::MiniLm;
use crate::loss::bce_with_logits;
use crate::math;
use crate::optim::AdamW;
use crate::param::{Parameter, Parameterized};
use crate::rng::SplitRng;
use crate::tensor::Tensor;
use crate::vocab::{accumulate, accumulate_colsum, EmbeddingTable, UnifiedVocab};
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Scores concat(projected patch, h_eos) with two hidden ReLU layers and a
/// scalar output logit.
pub struct SelectorMlp {
    pub z_llm: usize,
    pub hidden: usize,
    params: Vec<Parameter>,
}

pub struct SelectorCache {
    x: Tensor,
    h1: Tensor,
    h2: Tensor,
}

impl SelectorMlp {
    pub fn init(z_llm: usize, hidden: usize, rng: &SplitRng) -> Result<SelectorMlp> {
        if z_llm == 0 || hidden == 0 {
            return Err(CoreError::Config(String::from("selector dims must be positive")));
        }
        let mk = |name: &str, fan_in: usize, fan_out: usize| {
            let mut sub = rng.derive(name);
            let sd = 1.0 / math::sqrt(fan_in as f64);
            Parameter::new(
                name,
                Tensor::from_vec(
                    alloc::vec![fan_in, fan_out],
                    sub.normal_vec(fan_in * fan_out, sd),
                )
                .unwrap(),
            )
        };
        let params = alloc::vec![
            mk("selector.layer1.weight", 2 * z_llm, hidden),
            Parameter::new("selector.layer1.bias", Tensor::zeros(alloc::vec![hidden])),
            mk("selector.layer2.weight", hidden, hidden),
            Parameter::new("selector.layer2.bias", Tensor::zeros(alloc::vec![hidden])),
            mk("selector.layer3.weight", hidden, 1),
            Parameter::new("selector.layer3.bias", Tensor::zeros(alloc::vec![1])),
        ];
        Ok(SelectorMlp { z_llm, hidden, params })
    }

    fn get(&self, name: &str) -> &Tensor {
        &self.params.iter().find(|p| p.name == name).unwrap().value
    }

    fn get_mut(&mut self, name: &str) -> &mut Parameter {
        self.params.iter_mut().find(|p| p.name == name).unwrap()
    }

    /// Forward over a batch of concatenated inputs (rows of width 2*z_llm).
    /// Returns one logit per row.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, SelectorCache)> {
        if x.cols() != 2 * self.z_llm {
            return Err(CoreError::Shape(format!(
                "selector input width {} != {}",
                x.cols(),
                2 * self.z_llm
            )));
        }
        let mut h1 = x.matmul(self.get("selector.layer1.weight"))?;
        crate::encoder::add_row_bias(&mut h1, self.get("selector.layer1.bias"));
        let r1 = h1.map(relu);
        let mut h2 = r1.matmul(self.get("selector.layer2.weight"))?;
        crate::encoder::add_row_bias(&mut h2, self.get("selector.layer2.bias"));
        let r2 = h2.map(relu);
        let mut logits = r2.matmul(self.get("selector.layer3.weight"))?;
        crate::encoder::add_row_bias(&mut logits, self.get("selector.layer3.bias"));
        Ok((logits, SelectorCache { x: x.clone(), h1, h2 }))
    }

    /// Accumulate parameter gradients for `d_logits` (same shape as the
    /// forward logits, n x 1).
    pub fn backward(&mut self, cache: &SelectorCache, d_logits: &Tensor) -> Result<()> {
        let r2 = cache.h2.map(relu);
        let r1 = cache.h1.map(relu);

        let d_w3 = r2.transpose()?.matmul(d_logits)?;
        let mut d_r2 = d_logits.matmul(&self.get("selector.layer3.weight").transpose()?)?;
        for (g, h) in d_r2.data_mut().iter_mut().zip(cache.h2.data()) {
            *g *= relu_grad(*h);
        }
        let d_w2 = r1.transpose()?.matmul(&d_r2)?;
        let mut d_r1 = d_r2.matmul(&self.get("selector.layer2.weight").transpose()?)?;
        for (g, h) in d_r1.data_mut().iter_mut().zip(cache.h1.data()) {
            *g *= relu_grad(*h);
        }
        let d_w1 = cache.x.transpose()?.matmul(&d_r1)?;

        accumulate(self.get_mut("selector.layer3.weight"), &d_w3);
        accumulate_colsum(self.get_mut("selector.layer3.bias"), d_logits);
        accumulate(self.get_mut("selector.layer2.weight"), &d_w2);
        accumulate_colsum(self.get_mut("selector.layer2.bias"), &d_r2);
        accumulate(self.get_mut("selector.layer1.weight"), &d_w1);
        accumulate_colsum(self.get_mut("selector.layer1.bias"), &d_r1);
        Ok(())
    }
}

impl Parameterized for SelectorMlp {
    fn params(&self) -> Vec<&Parameter> {
        self.params.iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Final-layer hidden state at an EOS token appended after the discrete
/// tokens of one image, under the current LM weights.
pub fn eos_summary(
    lm: &MiniLm,
    emb: &EmbeddingTable,
    vocab: &UnifiedVocab,
    discrete: &DiscreteSequence,
) -> Result<Vec<f64>> {
    let mut ids = Vec::with_capacity(discrete.indices.len() + 1);
    for &d in &discrete.indices {
        ids.push(vocab.to_unified(d)?);
    }
    ids.push(vocab.eos_id());
    let input = emb.embed(&ids)?;
    let (out, _) = lm.forward(&input)?;
    Ok(out.hidden.row(out.hidden.rows() - 1).to_vec())
}

/// Build selector inputs: each projected patch row concatenated with h_eos.
pub fn selector_inputs(projected: &Tensor, h_eos: &[f64]) -> Result<Tensor> {
    if projected.cols() != h_eos.len() {
        return Err(CoreError::Shape(format!(
            "patch width {} != summary width {}",
            projected.cols(),
            h_eos.len()
        )));
    }
    let n = projected.rows();
    let z = projected.cols();
    let mut data = Vec::with_capacity(n * 2 * z);
    for r in 0..n {
        data.extend_from_slice(projected.row(r));
        data.extend_from_slice(h_eos);
    }
    Tensor::from_vec(alloc::vec![n, 2 * z], data)
}

/// Score all patches of one image.
pub fn score_patches(
    sel: &SelectorMlp,
    projected: &Tensor,
    h_eos: &[f64],
) -> Result<Vec<f64>> {
    let inputs = selector_inputs(projected, h_eos)?;
    let (logits, _) = sel.forward(&inputs)?;
    Ok(logits.data().to_vec())
}

/// Keep the top m = floor(n_c * alpha) patches by score. Ties prefer the
/// lower patch index. The result is in ascending patch order.
pub fn select_top_m(scores: &[f64], alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CoreError::Config(format!("alpha {alpha} outside (0, 1]")));
    }
    let n_c = scores.len();
    if n_c == 0 {
        return Err(CoreError::Shape(String::from("no patches to select from")));
    }
    let m = math::floor(n_c as f64 * alpha) as usize;
    if m == 0 {
        return Err(CoreError::Config(format!(
            "alpha {alpha} keeps zero of {n_c} patches"
        )));
    }
    let mut order: Vec<usize> = (0..n_c).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = order[..m].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

/// Number of patches kept at a given ratio.
pub fn kept_count(n_c: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CoreError::Config(format!("alpha {alpha} outside (0, 1]")));
    }
    Ok(math::floor(n_c as f64 * alpha) as usize)
}

#[derive(Clone, Copy, Debug)]
pub struct SelectorTrainCfg {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub weight_decay: f64,
}

/// Train the selector on (input row, binary label) pairs with BCE and AdamW.
/// Batches walk the data round-robin; no randomness. Returns one loss per
/// step.
pub fn train_selector(
    sel: &mut SelectorMlp,
    inputs: &Tensor,
    labels: &[f64],
    cfg: &SelectorTrainCfg,
) -> Result<Vec<f64>> {
    let n = inputs.rows();
    if labels.len() != n {
        return Err(CoreError::Shape(String::from("label count mismatch")));
    }
    if cfg.batch == 0 || cfg.steps == 0 {
        return Err(CoreError::Config(String::from("steps and batch must be positive")));
    }
    let mut opt = AdamW::new(cfg.lr, cfg.weight_decay);
    let mut trace = Vec::with_capacity(cfg.steps);
    let width = inputs.cols();
    for step in 0..cfg.steps {
        let mut batch_data = Vec::with_capacity(cfg.batch * width);
        let mut batch_labels = Vec::with_capacity(cfg.batch);
        for b in 0..cfg.batch {
            let r = (step * cfg.batch + b) % n;
            batch_data.extend_from_slice(inputs.row(r));
            batch_labels.push(labels[r]);
        }
        let x = Tensor::from_vec(alloc::vec![cfg.batch, width], batch_data)?;
        let y = Tensor::from_vec(alloc::vec![cfg.batch, 1], batch_labels)?;

        sel.zero_grads();
        let (logits, cache) = sel.forward(&x)?;
        let (loss, d_logits) = bce_with_logits(&logits, &y)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFinite(format!(
                "selector loss non-finite at step {step}"
            )));
        }
        sel.backward(&cache, &d_logits)?;
        let mut params = sel.params_mut();
        opt.step(&mut params);
        trace.push(loss);
    }
    Ok(trace)
}

/// Fraction of rows the selector classifies correctly at threshold 0.
pub fn selector_accuracy(sel: &SelectorMlp, inputs: &Tensor, labels: &[f64]) -> Result<f64> {
    let (logits, _) = sel.forward(inputs)?;
    let mut hits = 0usize;
    for (r, &y) in labels.iter().enumerate() {
        let pred = if logits.at(r, 0) > 0.0 { 1.0 } else { 0.0 };
        if pred == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}
