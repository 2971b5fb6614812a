//! Discrete visual vocabulary: slot pooling, nearest-codeword quantization,
//! and k-means codebook fitting.

use crate::error::CoreError;
use crate::rng::SplitRng;
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Discrete token sequence for one image: codebook indices in slot order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteSequence {
    pub indices: Vec<usize>,
    pub image_id: u64,
}

/// N_v codewords of width z. Rows must be pairwise distinct so nearest-
/// codeword lookup is well defined up to the lowest-index tie rule.
#[derive(Clone, Debug)]
pub struct Codebook {
    codewords: Tensor,
}

impl Codebook {
    pub fn new(codewords: Tensor) -> Result<Codebook> {
        if codewords.dims().len() != 2 {
            return Err(CoreError::Shape(String::from("codebook must be 2-D")));
        }
        let n = codewords.rows();
        if n < 2 {
            return Err(CoreError::Config(format!("codebook needs >= 2 rows, got {n}")));
        }
        if !codewords.all_finite() {
            return Err(CoreError::NonFinite(String::from("codebook contains non-finite values")));
        }
        for a in 0..n {
            for b in a + 1..n {
                if codewords.row(a) == codewords.row(b) {
                    return Err(CoreError::Data(format!("codewords {a} and {b} are identical")));
                }
            }
        }
        Ok(Codebook { codewords })
    }

    pub fn len(&self) -> usize {
        self.codewords.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.codewords.cols()
    }

    pub fn codewords(&self) -> &Tensor {
        &self.codewords
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        self.codewords.row(i)
    }

    /// Index of the nearest codeword by squared L2; ties go to the lowest
    /// index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = sq_dist(x, self.codewords.row(0));
        for i in 1..self.len() {
            let d = sq_dist(x, self.codewords.row(i));
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Average consecutive groups of patch rows into n_d slot rows. Requires the
/// patch count to be divisible by n_d; slot g is the mean of rows
/// [g*(n_c/n_d), (g+1)*(n_c/n_d)).
pub fn pool_to_slots(tokens: &Tensor, n_d: usize) -> Result<Tensor> {
    let n_c = tokens.rows();
    if n_d == 0 {
        return Err(CoreError::Config(String::from("n_d must be positive")));
    }
    if n_c % n_d != 0 {
        return Err(CoreError::Shape(format!(
            "patch count {n_c} not divisible by slot count {n_d}"
        )));
    }
    let group = n_c / n_d;
    let z = tokens.cols();
    let mut out = Tensor::zeros(alloc::vec![n_d, z]);
    for g in 0..n_d {
        for r in 0..group {
            let src = tokens.row(g * group + r);
            let dst = out.row_mut(g);
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += s;
            }
        }
        for d in out.row_mut(g) {
            *d /= group as f64;
        }
    }
    Ok(out)
}

/// Quantize slot rows to nearest-codeword indices.
pub fn quantize(slots: &Tensor, cb: &Codebook, image_id: u64) -> Result<DiscreteSequence> {
    if slots.cols() != cb.dim() {
        return Err(CoreError::Shape(format!(
            "slot width {} != codebook width {}",
            slots.cols(),
            cb.dim()
        )));
    }
    let indices = (0..slots.rows()).map(|r| cb.nearest(slots.row(r))).collect();
    Ok(DiscreteSequence { indices, image_id })
}

/// Mean over rows of the squared distance to the nearest codeword row in
/// `centers`.
pub fn quantization_error(data: &Tensor, centers: &Tensor) -> f64 {
    let mut total = 0.0;
    for r in 0..data.rows() {
        let x = data.row(r);
        let mut best = f64::INFINITY;
        for c in 0..centers.rows() {
            best = best.min(sq_dist(x, centers.row(c)));
        }
        total += best;
    }
    total / data.rows() as f64
}

/// Fit a codebook with k-means++ initialization and `iterations` Lloyd
/// steps. Clusters that come back empty are reseeded to the sample farthest
/// from its assigned center. The returned trace holds the quantization error
/// after initialization and after every iteration; it is non-increasing.
pub fn train_codebook_with_trace(
    data: &Tensor,
    n_v: usize,
    iterations: usize,
    rng: &mut SplitRng,
) -> Result<(Codebook, Vec<f64>)> {
    if n_v < 2 {
        return Err(CoreError::Config(format!("codebook size {n_v} < 2")));
    }
    let n = data.rows();
    if n < n_v {
        return Err(CoreError::Data(format!(
            "{n} samples cannot seed {n_v} codewords"
        )));
    }
    let z = data.cols();
    let mut centers = kmeans_pp_init(data, n_v, rng)?;
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(quantization_error(data, &centers));

    let mut assign = alloc::vec![0usize; n];
    for _ in 0..iterations {
        // assignment
        for (r, slot) in assign.iter_mut().enumerate() {
            let x = data.row(r);
            let mut best = 0;
            let mut best_d = sq_dist(x, centers.row(0));
            for c in 1..n_v {
                let d = sq_dist(x, centers.row(c));
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            *slot = best;
        }
        // update to cluster means
        let mut sums = Tensor::zeros(alloc::vec![n_v, z]);
        let mut counts = alloc::vec![0usize; n_v];
        for (r, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            let src = data.row(r);
            let dst = sums.row_mut(c);
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += s;
            }
        }
        for c in 0..n_v {
            if counts[c] > 0 {
                let dst = sums.row_mut(c);
                for d in dst.iter_mut() {
                    *d /= counts[c] as f64;
                }
                centers.row_mut(c).copy_from_slice(sums.row(c));
            }
        }
        // reseed empties to the currently worst-served samples; each sample
        // is taken at most once
        let mut taken = alloc::vec![false; n];
        for c in 0..n_v {
            if counts[c] > 0 {
                continue;
            }
            let mut far_r = usize::MAX;
            let mut far_d = -1.0;
            for r in 0..n {
                if taken[r] {
                    continue;
                }
                let d = sq_dist(data.row(r), centers.row(assign[r]));
                if d > far_d {
                    far_d = d;
                    far_r = r;
                }
            }
            if far_r != usize::MAX {
                centers.row_mut(c).copy_from_slice(data.row(far_r));
                taken[far_r] = true;
            }
        }
        trace.push(quantization_error(data, &centers));
    }
    Ok((Codebook::new(centers)?, trace))
}

pub fn train_codebook(
    data: &Tensor,
    n_v: usize,
    iterations: usize,
    rng: &mut SplitRng,
) -> Result<Codebook> {
    train_codebook_with_trace(data, n_v, iterations, rng).map(|(cb, _)| cb)
}

fn kmeans_pp_init(data: &Tensor, n_v: usize, rng: &mut SplitRng) -> Result<Tensor> {
    let n = data.rows();
    let z = data.cols();
    let mut centers = Tensor::zeros(alloc::vec![n_v, z]);
    let mut chosen = alloc::vec![false; n];

    let first = rng.next_below(n);
    centers.row_mut(0).copy_from_slice(data.row(first));
    chosen[first] = true;

    let mut d2 = alloc::vec![0.0; n];
    for (r, slot) in d2.iter_mut().enumerate() {
        *slot = sq_dist(data.row(r), centers.row(0));
    }

    for c in 1..n_v {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.next_f64() * total;
            let mut idx = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                r -= w;
                if r <= 0.0 {
                    idx = Some(i);
                    break;
                }
            }
            idx.or_else(|| d2.iter().rposition(|&w| w > 0.0))
        } else {
            // all remaining mass is zero: fall back to any unchosen distinct row
            (0..n).find(|&i| !chosen[i] && !duplicates_center(data.row(i), &centers, c))
        };
        let Some(pick) = pick else {
            return Err(CoreError::Data(String::from(
                "not enough distinct samples for codebook init",
            )));
        };
        centers.row_mut(c).copy_from_slice(data.row(pick));
        chosen[pick] = true;
        for (r, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(data.row(r), centers.row(c)));
        }
    }
    Ok(centers)
}

fn duplicates_center(x: &[f64], centers: &Tensor, upto: usize) -> bool {
    (0..upto).any(|c| centers.row(c) == x)
}
