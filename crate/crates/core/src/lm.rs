//! Small pre-norm causal decoder with a hand-written backward pass.
//!
//! The model consumes already-embedded rows (text/discrete rows come from
//! the embedding table, continuous rows from the projector), adds learned
//! absolute position embeddings, runs `layers` blocks of multi-head causal
//! attention plus a GELU MLP, and layer-norms the output. The output head is
//! tied to the embedding table: logits = hidden * E^T.
//!
//! Loss convention: targets[i], when present, is the token id expected at
//! position i and is scored against the logits produced at position i-1, so
//! position 0 never carries loss.

use crate::encoder::{add_row_bias, softmax_in_place};
use crate::error::CoreError;
use crate::loss::cross_entropy_logits;
use crate::math;
use crate::param::{Parameter, Parameterized};
use crate::rng::SplitRng;
use crate::tensor::Tensor;
use crate::vocab::{accumulate, accumulate_colsum, EmbeddingTable};
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LmConfig {
    pub z_llm: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z_llm == 0 || self.layers == 0 || self.heads == 0 || self.max_len == 0 {
            return Err(CoreError::Config(String::from("lm dims must be positive")));
        }
        if self.z_llm % self.heads != 0 {
            return Err(CoreError::Config(format!(
                "model width {} not divisible by {} heads",
                self.z_llm, self.heads
            )));
        }
        Ok(())
    }
}

pub struct MiniLm {
    pub cfg: LmConfig,
    params: Vec<Parameter>,
}

pub struct LmOutput {
    /// Final hidden states after the closing layer norm, one row per token.
    pub hidden: Tensor,
    /// Per block, attention weights averaged over heads; strictly lower
    /// triangular plus diagonal.
    pub attentions: Vec<Tensor>,
}

struct LnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

struct BlockCache {
    ln1: LnCache,
    n1: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    att: Vec<Tensor>,
    ctx: Tensor,
    ln2: LnCache,
    n2: Tensor,
    h1: Tensor,
    act: Tensor,
}

pub struct LmCache {
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    rows: usize,
}

fn ln_forward(x: &Tensor, gain: &Tensor, bias: &Tensor) -> (Tensor, LnCache) {
    const EPS: f64 = 1e-5;
    let (n, z) = (x.rows(), x.cols());
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(n);
    for r in 0..n {
        let row = xhat.row_mut(r);
        let mean = row.iter().sum::<f64>() / z as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / z as f64;
        let inv = 1.0 / math::sqrt(var + EPS);
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
        inv_std.push(inv);
    }
    let mut y = xhat.clone();
    for r in 0..n {
        let row = y.row_mut(r);
        for (d, v) in row.iter_mut().enumerate() {
            *v = *v * gain.data()[d] + bias.data()[d];
        }
    }
    (y, LnCache { xhat, inv_std })
}

/// Returns (d_x, d_gain, d_bias).
fn ln_backward(cache: &LnCache, gain: &Tensor, d_y: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, z) = (d_y.rows(), d_y.cols());
    let mut d_x = Tensor::zeros(alloc::vec![n, z]);
    let mut d_gain = Tensor::zeros(alloc::vec![z]);
    let mut d_bias = Tensor::zeros(alloc::vec![z]);
    for r in 0..n {
        let dy = d_y.row(r);
        let xh = cache.xhat.row(r);
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for d in 0..z {
            let dxhat = dy[d] * gain.data()[d];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xh[d];
            d_gain.data_mut()[d] += dy[d] * xh[d];
            d_bias.data_mut()[d] += dy[d];
        }
        let m1 = sum_dxhat / z as f64;
        let m2 = sum_dxhat_xhat / z as f64;
        let inv = cache.inv_std[r];
        let out = d_x.row_mut(r);
        for d in 0..z {
            let dxhat = dy[d] * gain.data()[d];
            out[d] = inv * (dxhat - m1 - xh[d] * m2);
        }
    }
    (d_x, d_gain, d_bias)
}

fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut y = x.matmul(w)?;
    add_row_bias(&mut y, b);
    Ok(y)
}

impl MiniLm {
    pub fn init(cfg: LmConfig, rng: &SplitRng) -> Result<MiniLm> {
        cfg.validate()?;
        let z = cfg.z_llm;
        let mut params = Vec::new();
        params.push(init_normal("lm.pos.weight", cfg.max_len, z, 0.02, rng));
        for i in 0..cfg.layers {
            push_ln(&mut params, &format!("lm.blocks.{i}.ln1"), z);
            for proj in ["q", "k", "v", "o"] {
                let name = format!("lm.blocks.{i}.attn.{proj}");
                params.push(init_normal(
                    &format!("{name}.weight"),
                    z,
                    z,
                    1.0 / math::sqrt(z as f64),
                    rng,
                ));
                // no key bias: softmax is invariant to shifting a whole
                // score row, so a key bias could never receive gradient
                if proj != "k" {
                    params.push(Parameter::new(
                        format!("{name}.bias"),
                        Tensor::zeros(alloc::vec![z]),
                    ));
                }
            }
            push_ln(&mut params, &format!("lm.blocks.{i}.ln2"), z);
            params.push(init_normal(
                &format!("lm.blocks.{i}.mlp.fc1.weight"),
                z,
                4 * z,
                1.0 / math::sqrt(z as f64),
                rng,
            ));
            params.push(Parameter::new(
                format!("lm.blocks.{i}.mlp.fc1.bias"),
                Tensor::zeros(alloc::vec![4 * z]),
            ));
            params.push(init_normal(
                &format!("lm.blocks.{i}.mlp.fc2.weight"),
                4 * z,
                z,
                1.0 / math::sqrt((4 * z) as f64),
                rng,
            ));
            params.push(Parameter::new(
                format!("lm.blocks.{i}.mlp.fc2.bias"),
                Tensor::zeros(alloc::vec![z]),
            ));
        }
        push_ln(&mut params, "lm.ln_f", z);
        Ok(MiniLm { cfg, params })
    }

    pub fn get(&self, name: &str) -> &Tensor {
        match self.params.iter().find(|p| p.name == name) {
            Some(p) => &p.value,
            None => panic!("lm parameter {name} missing"),
        }
    }

    fn add_grad(&mut self, name: &str, d: &Tensor) {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("lm parameter {name} missing"));
        accumulate(p, d);
    }

    fn add_grad_colsum(&mut self, name: &str, d: &Tensor) {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .unwrap_or_else(|| panic!("lm parameter {name} missing"));
        accumulate_colsum(p, d);
    }

    pub fn forward(&self, input: &Tensor) -> Result<(LmOutput, LmCache)> {
        let n = input.rows();
        if n == 0 {
            return Err(CoreError::Shape(String::from("empty sequence")));
        }
        if n > self.cfg.max_len {
            return Err(CoreError::Capacity(format!(
                "sequence length {n} exceeds max_len {}",
                self.cfg.max_len
            )));
        }
        if input.cols() != self.cfg.z_llm {
            return Err(CoreError::Shape(format!(
                "input width {} != model width {}",
                input.cols(),
                self.cfg.z_llm
            )));
        }
        let mut x = input.clone();
        let pos = self.get("lm.pos.weight");
        for r in 0..n {
            let src = pos.row(r);
            let dst = x.row_mut(r);
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += s;
            }
        }
        let mut blocks = Vec::with_capacity(self.cfg.layers);
        let mut attentions = Vec::with_capacity(self.cfg.layers);
        for i in 0..self.cfg.layers {
            let (next, cache, avg_att) = self.block_forward(&x, i)?;
            x = next;
            blocks.push(cache);
            attentions.push(avg_att);
        }
        let (hidden, lnf) = ln_forward(&x, self.get("lm.ln_f.gain"), self.get("lm.ln_f.bias"));
        if !hidden.all_finite() {
            return Err(CoreError::NonFinite(String::from("lm forward produced non-finite hidden state")));
        }
        Ok((
            LmOutput { hidden, attentions },
            LmCache { blocks, lnf, rows: n },
        ))
    }

    fn block_forward(&self, x: &Tensor, i: usize) -> Result<(Tensor, BlockCache, Tensor)> {
        let n = x.rows();
        let z = self.cfg.z_llm;
        let heads = self.cfg.heads;
        let dh = z / heads;
        let scale = 1.0 / math::sqrt(dh as f64);

        let (n1, ln1) = ln_forward(
            x,
            self.get(&format!("lm.blocks.{i}.ln1.gain")),
            self.get(&format!("lm.blocks.{i}.ln1.bias")),
        );
        let q = affine(
            &n1,
            self.get(&format!("lm.blocks.{i}.attn.q.weight")),
            self.get(&format!("lm.blocks.{i}.attn.q.bias")),
        )?;
        let k = n1.matmul(self.get(&format!("lm.blocks.{i}.attn.k.weight")))?;
        let v = affine(
            &n1,
            self.get(&format!("lm.blocks.{i}.attn.v.weight")),
            self.get(&format!("lm.blocks.{i}.attn.v.bias")),
        )?;

        let mut ctx = Tensor::zeros(alloc::vec![n, z]);
        let mut att = Vec::with_capacity(heads);
        for hh in 0..heads {
            let off = hh * dh;
            let mut a = Tensor::zeros(alloc::vec![n, n]);
            for row in 0..n {
                let mut scores = alloc::vec![0.0; row + 1];
                for (j, s) in scores.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for d in 0..dh {
                        dot += q.at(row, off + d) * k.at(j, off + d);
                    }
                    *s = dot * scale;
                }
                softmax_in_place(&mut scores);
                for (j, &w) in scores.iter().enumerate() {
                    a.set(row, j, w);
                    for d in 0..dh {
                        let cur = ctx.at(row, off + d);
                        ctx.set(row, off + d, cur + w * v.at(j, off + d));
                    }
                }
            }
            att.push(a);
        }
        let attn_out = affine(
            &ctx,
            self.get(&format!("lm.blocks.{i}.attn.o.weight")),
            self.get(&format!("lm.blocks.{i}.attn.o.bias")),
        )?;
        let mut x_mid = x.clone();
        x_mid.axpy(1.0, &attn_out)?;

        let (n2, ln2) = ln_forward(
            &x_mid,
            self.get(&format!("lm.blocks.{i}.ln2.gain")),
            self.get(&format!("lm.blocks.{i}.ln2.bias")),
        );
        let h1 = affine(
            &n2,
            self.get(&format!("lm.blocks.{i}.mlp.fc1.weight")),
            self.get(&format!("lm.blocks.{i}.mlp.fc1.bias")),
        )?;
        let act = h1.map(math::gelu);
        let mlp_out = affine(
            &act,
            self.get(&format!("lm.blocks.{i}.mlp.fc2.weight")),
            self.get(&format!("lm.blocks.{i}.mlp.fc2.bias")),
        )?;
        let mut x_out = x_mid;
        x_out.axpy(1.0, &mlp_out)?;

        let mut avg = Tensor::zeros(alloc::vec![n, n]);
        for a in &att {
            avg.axpy(1.0 / heads as f64, a)?;
        }
        Ok((
            x_out,
            BlockCache { ln1, n1, q, k, v, att, ctx, ln2, n2, h1, act },
            avg,
        ))
    }

    /// Backpropagate `d_hidden` (gradient at the post-ln_f output) through
    /// the whole stack. Parameter gradients accumulate in place; the return
    /// value is the gradient with respect to the input rows (position
    /// embedding gradients are already applied).
    pub fn backward(&mut self, cache: &LmCache, d_hidden: &Tensor) -> Result<Tensor> {
        let gain_f = self.get("lm.ln_f.gain").clone();
        let (mut d_x, d_gain_f, d_bias_f) = ln_backward(&cache.lnf, &gain_f, d_hidden);
        self.add_grad("lm.ln_f.gain", &d_gain_f);
        self.add_grad("lm.ln_f.bias", &d_bias_f);

        for i in (0..self.cfg.layers).rev() {
            d_x = self.block_backward(&cache.blocks[i], i, &d_x)?;
        }

        // position rows see the same gradient as the input rows
        let z = self.cfg.z_llm;
        let mut d_pos = Tensor::zeros(alloc::vec![self.cfg.max_len, z]);
        for r in 0..cache.rows {
            d_pos.row_mut(r).copy_from_slice(d_x.row(r));
        }
        self.add_grad("lm.pos.weight", &d_pos);
        Ok(d_x)
    }

    fn block_backward(&mut self, cache: &BlockCache, i: usize, d_out: &Tensor) -> Result<Tensor> {
        let n = d_out.rows();
        let z = self.cfg.z_llm;
        let heads = self.cfg.heads;
        let dh = z / heads;
        let scale = 1.0 / math::sqrt(dh as f64);

        // --- mlp path ---
        let w2 = self.get(&format!("lm.blocks.{i}.mlp.fc2.weight")).clone();
        let w1 = self.get(&format!("lm.blocks.{i}.mlp.fc1.weight")).clone();
        let gain2 = self.get(&format!("lm.blocks.{i}.ln2.gain")).clone();

        let d_w2 = cache.act.transpose()?.matmul(d_out)?;
        let d_a = d_out.matmul(&w2.transpose()?)?;
        let mut d_h1 = d_a;
        for (g, h) in d_h1.data_mut().iter_mut().zip(cache.h1.data()) {
            *g *= math::gelu_grad(*h);
        }
        let d_w1 = cache.n2.transpose()?.matmul(&d_h1)?;
        let d_n2 = d_h1.matmul(&w1.transpose()?)?;
        let (d_x_mid_ln, d_g2, d_b2) = ln_backward(&cache.ln2, &gain2, &d_n2);

        let mut d_x_mid = d_out.clone();
        d_x_mid.axpy(1.0, &d_x_mid_ln)?;

        self.add_grad(&format!("lm.blocks.{i}.mlp.fc2.weight"), &d_w2);
        self.add_grad_colsum(&format!("lm.blocks.{i}.mlp.fc2.bias"), d_out);
        self.add_grad(&format!("lm.blocks.{i}.mlp.fc1.weight"), &d_w1);
        self.add_grad_colsum(&format!("lm.blocks.{i}.mlp.fc1.bias"), &d_h1);
        self.add_grad(&format!("lm.blocks.{i}.ln2.gain"), &d_g2);
        self.add_grad(&format!("lm.blocks.{i}.ln2.bias"), &d_b2);

        // --- attention path ---
        let wo = self.get(&format!("lm.blocks.{i}.attn.o.weight")).clone();
        let wq = self.get(&format!("lm.blocks.{i}.attn.q.weight")).clone();
        let wk = self.get(&format!("lm.blocks.{i}.attn.k.weight")).clone();
        let wv = self.get(&format!("lm.blocks.{i}.attn.v.weight")).clone();
        let gain1 = self.get(&format!("lm.blocks.{i}.ln1.gain")).clone();

        let d_wo = cache.ctx.transpose()?.matmul(&d_x_mid)?;
        let d_ctx = d_x_mid.matmul(&wo.transpose()?)?;

        let mut d_q = Tensor::zeros(alloc::vec![n, z]);
        let mut d_k = Tensor::zeros(alloc::vec![n, z]);
        let mut d_v = Tensor::zeros(alloc::vec![n, z]);
        for hh in 0..heads {
            let off = hh * dh;
            let a = &cache.att[hh];
            for row in 0..n {
                // dA over the causal window, plus dV scatter
                let mut d_a_row = alloc::vec![0.0; row + 1];
                for (j, slot) in d_a_row.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for d in 0..dh {
                        dot += d_ctx.at(row, off + d) * cache.v.at(j, off + d);
                    }
                    *slot = dot;
                    let w = a.at(row, j);
                    for d in 0..dh {
                        let cur = d_v.at(j, off + d);
                        d_v.set(j, off + d, cur + w * d_ctx.at(row, off + d));
                    }
                }
                // softmax backward within the window
                let mut inner = 0.0;
                for (j, &da) in d_a_row.iter().enumerate() {
                    inner += da * a.at(row, j);
                }
                for (j, &da) in d_a_row.iter().enumerate() {
                    let ds = a.at(row, j) * (da - inner) * scale;
                    for d in 0..dh {
                        let cq = d_q.at(row, off + d);
                        d_q.set(row, off + d, cq + ds * cache.k.at(j, off + d));
                        let ck = d_k.at(j, off + d);
                        d_k.set(j, off + d, ck + ds * cache.q.at(row, off + d));
                    }
                }
            }
        }

        let d_wq = cache.n1.transpose()?.matmul(&d_q)?;
        let d_wk = cache.n1.transpose()?.matmul(&d_k)?;
        let d_wv = cache.n1.transpose()?.matmul(&d_v)?;
        let mut d_n1 = d_q.matmul(&wq.transpose()?)?;
        d_n1.axpy(1.0, &d_k.matmul(&wk.transpose()?)?)?;
        d_n1.axpy(1.0, &d_v.matmul(&wv.transpose()?)?)?;
        let (d_x_ln, d_g1, d_b1) = ln_backward(&cache.ln1, &gain1, &d_n1);

        self.add_grad(&format!("lm.blocks.{i}.attn.o.weight"), &d_wo);
        self.add_grad_colsum(&format!("lm.blocks.{i}.attn.o.bias"), &d_x_mid);
        self.add_grad(&format!("lm.blocks.{i}.attn.q.weight"), &d_wq);
        self.add_grad_colsum(&format!("lm.blocks.{i}.attn.q.bias"), &d_q);
        self.add_grad(&format!("lm.blocks.{i}.attn.k.weight"), &d_wk);
        self.add_grad(&format!("lm.blocks.{i}.attn.v.weight"), &d_wv);
        self.add_grad_colsum(&format!("lm.blocks.{i}.attn.v.bias"), &d_v);
        self.add_grad(&format!("lm.blocks.{i}.ln1.gain"), &d_g1);
        self.add_grad(&format!("lm.blocks.{i}.ln1.bias"), &d_b1);

        let mut d_in = d_x_mid;
        d_in.axpy(1.0, &d_x_ln)?;
        Ok(d_in)
    }
}

impl Parameterized for MiniLm {
    fn params(&self) -> Vec<&Parameter> {
        self.params.iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }
}

fn init_normal(name: &str, rows: usize, cols: usize, sd: f64, rng: &SplitRng) -> Parameter {
    let mut sub = rng.derive(name);
    Parameter::new(
        name,
        Tensor::from_vec(alloc::vec![rows, cols], sub.normal_vec(rows * cols, sd)).unwrap(),
    )
}

fn push_ln(params: &mut Vec<Parameter>, prefix: &str, z: usize) {
    params.push(Parameter::new(
        format!("{prefix}.gain"),
        Tensor::filled(alloc::vec![z], 1.0),
    ));
    params.push(Parameter::new(
        format!("{prefix}.bias"),
        Tensor::zeros(alloc::vec![z]),
    ));
}

/// logits = hidden * E^T over the full unified vocabulary.
pub fn tied_logits(hidden: &Tensor, emb: &EmbeddingTable) -> Result<Tensor> {
    hidden.matmul(&emb.weight.value.transpose()?)
}

/// Cross-entropy over the supervised positions. Returns the mean loss.
pub fn lm_loss(
    lm: &MiniLm,
    emb: &EmbeddingTable,
    input: &Tensor,
    targets: &[Option<usize>],
) -> Result<f64> {
    let (out, _) = lm.forward(input)?;
    let logits = tied_logits(&out.hidden, emb)?;
    let (rows, tgts) = gather_loss_rows(&logits, targets)?;
    let (loss, _) = cross_entropy_logits(&rows, &tgts)?;
    Ok(loss)
}

/// Forward, loss, and full backward. Gradients accumulate on the LM and the
/// embedding table; rows whose `token_ids` entry is Some(id) have their
/// input gradient routed onto embedding row id. The returned tensor is the
/// full input gradient so the caller can route the remaining (continuous)
/// rows into the projector.
pub fn lm_loss_and_backward(
    lm: &mut MiniLm,
    emb: &mut EmbeddingTable,
    input: &Tensor,
    targets: &[Option<usize>],
    token_ids: &[Option<usize>],
) -> Result<(f64, Tensor)> {
    let n = input.rows();
    if targets.len() != n || token_ids.len() != n {
        return Err(CoreError::Shape(String::from(
            "targets/token_ids length mismatch with input rows",
        )));
    }
    let (out, cache) = lm.forward(input)?;
    let logits = tied_logits(&out.hidden, emb)?;
    let (rows, tgts) = gather_loss_rows(&logits, targets)?;
    let (loss, d_rows) = cross_entropy_logits(&rows, &tgts)?;

    // scatter row gradients back into the full logits gradient
    let mut d_logits = Tensor::zeros(alloc::vec![n, logits.cols()]);
    let mut ri = 0;
    for (i, t) in targets.iter().enumerate() {
        if i >= 1 && t.is_some() {
            d_logits.row_mut(i - 1).copy_from_slice(d_rows.row(ri));
            ri += 1;
        }
    }

    // tied head: hidden * E^T
    let d_hidden = d_logits.matmul(&emb.weight.value)?;
    let d_emb_head = d_logits.transpose()?.matmul(&out.hidden)?;
    accumulate(&mut emb.weight, &d_emb_head);

    let d_input = lm.backward(&cache, &d_hidden)?;

    // route embedded rows back onto their table rows
    for (r, tid) in token_ids.iter().enumerate() {
        if let Some(id) = tid {
            let src: Vec<f64> = d_input.row(r).to_vec();
            let dst = emb.weight.grad.row_mut(*id);
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += s;
            }
        }
    }
    Ok((loss, d_input))
}

fn gather_loss_rows(logits: &Tensor, targets: &[Option<usize>]) -> Result<(Tensor, Vec<usize>)> {
    let n = logits.rows();
    if targets.len() != n {
        return Err(CoreError::Shape(String::from("targets length mismatch")));
    }
    let mut data = Vec::new();
    let mut tgts = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        if let Some(id) = t {
            if i == 0 {
                return Err(CoreError::Data(String::from(
                    "position 0 cannot carry a prediction target",
                )));
            }
            data.extend_from_slice(logits.row(i - 1));
            tgts.push(*id);
        }
    }
    if tgts.is_empty() {
        return Err(CoreError::Data(String::from("no supervised positions")));
    }
    Ok((
        Tensor::from_vec(alloc::vec![tgts.len(), logits.cols()], data)?,
        tgts,
    ))
}

/// Greedy continuation: repeatedly append the argmax token (ties to the
/// lowest id), embedding it for the next step. Stops after `steps` tokens or
/// on `stop_id`. The stop token, when produced, is included in the output.
pub fn generate_greedy(
    lm: &MiniLm,
    emb: &EmbeddingTable,
    prefix: &Tensor,
    steps: usize,
    stop_id: Option<usize>,
) -> Result<Vec<usize>> {
    if prefix.rows() + steps > lm.cfg.max_len {
        return Err(CoreError::Capacity(format!(
            "prefix {} + {} steps exceeds max_len {}",
            prefix.rows(),
            steps,
            lm.cfg.max_len
        )));
    }
    let mut x = prefix.clone();
    let mut out = Vec::new();
    for _ in 0..steps {
        let (res, _) = lm.forward(&x)?;
        let logits = tied_logits(&res.hidden, emb)?;
        let last = logits.row(logits.rows() - 1);
        let id = argmax_lowest(last);
        out.push(id);
        if stop_id == Some(id) {
            break;
        }
        let row = emb.embed(&[id])?;
        x = append_row(&x, row.row(0))?;
    }
    Ok(out)
}

pub fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn append_row(x: &Tensor, row: &[f64]) -> Result<Tensor> {
    let mut data = Vec::with_capacity((x.rows() + 1) * x.cols());
    data.extend_from_slice(x.data());
    data.extend_from_slice(row);
    Tensor::from_vec(alloc::vec![x.rows() + 1, x.cols()], data)
}
