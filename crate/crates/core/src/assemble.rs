//! Hybrid sequence assembly: per-image [continuous; discrete] blocks
//! interleaved with text runs, plus the token-budget arithmetic.

use crate::codebook::DiscreteSequence;
use crate::error::CoreError;
use crate::selector::kept_count;
use crate::tensor::Tensor;
use crate::vocab::{EmbeddingTable, UnifiedVocab};
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

/// Row provenance inside an assembled sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegTag {
    Continuous,
    Discrete,
    Text,
}

/// One image's contribution: the selected projected patch rows and the
/// discrete indices, both tagged with the same image id.
pub struct ImageBlock {
    pub image_id: u64,
    pub projected: Tensor,
    pub discrete: DiscreteSequence,
}

/// Fully assembled model input plus the bookkeeping training needs.
pub struct HybridSequence {
    pub embedded: Tensor,
    pub tags: Vec<SegTag>,
    pub image_spans: Vec<(u64, Range<usize>)>,
    /// targets[i], when set, is the token expected at position i.
    pub targets: Vec<Option<usize>>,
    /// token_ids[i] is Some(unified id) for embedded rows, None for
    /// continuous rows.
    pub token_ids: Vec<Option<usize>>,
}

impl HybridSequence {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Mark every embedded row in `range` as supervised with its own id.
    pub fn supervise_range(&mut self, range: Range<usize>) -> Result<()> {
        if range.end > self.len() {
            return Err(CoreError::Index(format!(
                "supervision range end {} outside sequence of {}",
                range.end,
                self.len()
            )));
        }
        for i in range {
            match self.token_ids[i] {
                Some(id) => self.targets[i] = Some(id),
                None => {
                    return Err(CoreError::Plan(format!(
                        "cannot supervise continuous row {i}"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Interleaving order: which image block or text run comes next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanItem {
    Image(usize),
    Text(usize),
}

/// Embed one image block: continuous rows first, then the embedded discrete
/// tokens. Returns (rows, tags, token_ids).
pub fn assemble_image_block(
    block: &ImageBlock,
    emb: &EmbeddingTable,
    vocab: &UnifiedVocab,
) -> Result<(Tensor, Vec<SegTag>, Vec<Option<usize>>)> {
    if block.discrete.image_id != block.image_id {
        return Err(CoreError::Data(format!(
            "discrete sequence from image {} attached to image {}",
            block.discrete.image_id, block.image_id
        )));
    }
    if block.projected.cols() != emb.dim() {
        return Err(CoreError::Shape(format!(
            "projected width {} != model width {}",
            block.projected.cols(),
            emb.dim()
        )));
    }
    let m = block.projected.rows();
    let n_d = block.discrete.indices.len();
    let z = emb.dim();

    let mut ids = Vec::with_capacity(n_d);
    for &d in &block.discrete.indices {
        ids.push(vocab.to_unified(d)?);
    }
    let d_rows = emb.embed(&ids)?;

    let mut data = Vec::with_capacity((m + n_d) * z);
    data.extend_from_slice(block.projected.data());
    data.extend_from_slice(d_rows.data());

    let mut tags = alloc::vec![SegTag::Continuous; m];
    tags.extend(alloc::vec![SegTag::Discrete; n_d]);
    let mut token_ids = alloc::vec![None; m];
    token_ids.extend(ids.into_iter().map(Some));

    Ok((Tensor::from_vec(alloc::vec![m + n_d, z], data)?, tags, token_ids))
}

/// Build the full sequence following `plan`. Every image block must appear
/// exactly once; text runs may repeat. Targets start unset.
pub fn interleave(
    blocks: &[ImageBlock],
    texts: &[Vec<usize>],
    plan: &[PlanItem],
    emb: &EmbeddingTable,
    vocab: &UnifiedVocab,
) -> Result<HybridSequence> {
    let mut seen = alloc::vec![0usize; blocks.len()];
    for item in plan {
        match item {
            PlanItem::Image(i) => {
                if *i >= blocks.len() {
                    return Err(CoreError::Plan(format!("image index {i} out of range")));
                }
                seen[*i] += 1;
            }
            PlanItem::Text(t) => {
                if *t >= texts.len() {
                    return Err(CoreError::Plan(format!("text index {t} out of range")));
                }
            }
        }
    }
    for (i, &count) in seen.iter().enumerate() {
        if count != 1 {
            return Err(CoreError::Plan(format!(
                "image {i} appears {count} times in the plan, expected exactly once"
            )));
        }
    }

    let z = emb.dim();
    let mut data = Vec::new();
    let mut tags = Vec::new();
    let mut token_ids = Vec::new();
    let mut image_spans = Vec::new();
    for item in plan {
        match item {
            PlanItem::Image(i) => {
                let start = tags.len();
                let (rows, btags, bids) = assemble_image_block(&blocks[*i], emb, vocab)?;
                data.extend_from_slice(rows.data());
                tags.extend(btags);
                token_ids.extend(bids);
                image_spans.push((blocks[*i].image_id, start..tags.len()));
            }
            PlanItem::Text(t) => {
                let ids = &texts[*t];
                let rows = emb.embed(ids)?;
                data.extend_from_slice(rows.data());
                tags.extend(alloc::vec![SegTag::Text; ids.len()]);
                token_ids.extend(ids.iter().map(|&id| Some(id)));
            }
        }
    }
    if tags.is_empty() {
        return Err(CoreError::Plan(String::from("empty assembly plan")));
    }
    let n = tags.len();
    Ok(HybridSequence {
        embedded: Tensor::from_vec(alloc::vec![n, z], data)?,
        targets: alloc::vec![None; n],
        tags,
        image_spans,
        token_ids,
    })
}

/// One row of the token-budget table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetLine {
    pub alpha: f64,
    pub m: usize,
    pub n_d: usize,
    pub visual_total: usize,
    pub quadratic_ratio: f64,
}

/// Visual token budget at a keeping ratio: m = floor(n_c * alpha) continuous
/// rows plus n_d discrete rows, and the quadratic attention-cost ratio
/// ((m + n_d) / n_c)^2 against the unreduced continuous-only baseline.
pub fn budget_report(n_c: usize, n_d: usize, alpha: f64) -> Result<BudgetLine> {
    if n_c == 0 {
        return Err(CoreError::Config(String::from("n_c must be positive")));
    }
    let m = kept_count(n_c, alpha)?;
    let visual_total = m + n_d;
    let r = visual_total as f64 / n_c as f64;
    Ok(BudgetLine {
        alpha,
        m,
        n_d,
        visual_total,
        quadratic_ratio: r * r,
    })
}

/// Mean over text rows of the attention mass landing on columns of the
/// given tag. None when the sequence has no text rows or no such columns.
pub fn text_mass_on(att: &Tensor, tags: &[SegTag], target: SegTag) -> Option<f64> {
    if att.rows() != tags.len() || att.cols() != tags.len() {
        return None;
    }
    if !tags.iter().any(|t| *t == target) {
        return None;
    }
    let mut total = 0.0;
    let mut rows = 0usize;
    for (r, tag) in tags.iter().enumerate() {
        if *tag != SegTag::Text {
            continue;
        }
        let mut mass = 0.0;
        for (c, ctag) in tags.iter().enumerate() {
            if *ctag == target {
                mass += att.at(r, c);
            }
        }
        total += mass;
        rows += 1;
    }
    if rows == 0 {
        None
    } else {
        Some(total / rows as f64)
    }
}

/// Mean over text rows of the attention mass landing on discrete columns.
pub fn text_to_discrete_mass(att: &Tensor, tags: &[SegTag]) -> Option<f64> {
    text_mass_on(att, tags, SegTag::Discrete)
}
