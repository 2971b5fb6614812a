//! Frozen patch feature extractor.
//!
//! Images are dense HWC grids in [0, 1]. Patchifying a H×W image with patch
//! size p yields (H/p)·(W/p) rows in row-major patch order; each row is the
//! flattened p×p×3 patch. A linear projection lifts rows to the feature
//! width, and zero or more frozen single-head attention blocks mix patches.
//! With zero blocks the encoder is patch-local: permuting input patches
//! permutes output rows identically.

use crate::error::CoreError;
use crate::math;
use crate::param::{Parameter, Parameterized};
use crate::rng::SplitRng;
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub const CHANNELS: usize = 3;

/// Dense image, HWC layout, all values finite and in [0, 1].
#[derive(Clone, Debug)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<ImageGrid> {
        if width == 0 || height == 0 {
            return Err(CoreError::Shape(String::from("image dims must be positive")));
        }
        if data.len() != width * height * CHANNELS {
            return Err(CoreError::Shape(format!(
                "image data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                CHANNELS
            )));
        }
        for &x in &data {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(CoreError::Data(format!("pixel value {x} outside [0,1]")));
            }
        }
        Ok(ImageGrid { width, height, data })
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> f64>(
        width: usize,
        height: usize,
        mut f: F,
    ) -> Result<ImageGrid> {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        ImageGrid::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Continuous token sequence for one image: one feature row per patch, with
/// the (row, col) patch-grid position of each row.
#[derive(Clone, Debug)]
pub struct ContinuousSequence {
    pub tokens: Tensor,
    pub positions: Vec<(usize, usize)>,
    pub image_id: u64,
}

/// Flatten an image into patch rows. Rows follow row-major patch order;
/// within a patch, pixels are row-major with channels innermost.
pub fn patchify(img: &ImageGrid, p: usize) -> Result<(Tensor, Vec<(usize, usize)>)> {
    if p == 0 {
        return Err(CoreError::Config(String::from("patch size must be positive")));
    }
    if img.height % p != 0 || img.width % p != 0 {
        return Err(CoreError::Data(format!(
            "image {}x{} not divisible by patch size {}",
            img.width, img.height, p
        )));
    }
    let rows = img.height / p;
    let cols = img.width / p;
    let dim = p * p * CHANNELS;
    let mut data = Vec::with_capacity(rows * cols * dim);
    let mut positions = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            positions.push((pr, pc));
            for dy in 0..p {
                for dx in 0..p {
                    for c in 0..CHANNELS {
                        data.push(img.pixel(pc * p + dx, pr * p + dy, c));
                    }
                }
            }
        }
    }
    Ok((Tensor::from_vec(alloc::vec![rows * cols, dim], data)?, positions))
}

/// Sinusoidal 2-D position encoding: the first half of the feature width
/// encodes the patch row, the second half the patch column.
pub fn posenc_2d(row: usize, col: usize, z: usize) -> Vec<f64> {
    let mut out = alloc::vec![0.0; z];
    let half = z / 2;
    fill_1d(&mut out[..half], row as f64);
    fill_1d(&mut out[half..], col as f64);
    out
}

fn fill_1d(slot: &mut [f64], pos: f64) {
    let n = slot.len();
    let mut k = 0;
    while 2 * k + 1 < n {
        let angle = pos / math::pow(10000.0, (2 * k) as f64 / n as f64);
        slot[2 * k] = math::sin(angle);
        slot[2 * k + 1] = math::cos(angle);
        k += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub patch: usize,
    pub z: usize,
    pub layers: usize,
}

/// Frozen feature extractor: linear patch projection plus `layers` pre-norm
/// single-head attention blocks. Position encodings are added only when at
/// least one block exists, keeping the zero-block encoder patch-local.
pub struct PatchEncoder {
    pub cfg: EncoderConfig,
    params: Vec<Parameter>,
}

impl PatchEncoder {
    pub fn init(cfg: EncoderConfig, rng: &SplitRng) -> Result<PatchEncoder> {
        if cfg.patch == 0 || cfg.z == 0 {
            return Err(CoreError::Config(String::from(
                "encoder patch and feature width must be positive",
            )));
        }
        let in_dim = cfg.patch * cfg.patch * CHANNELS;
        let mut params = Vec::new();
        params.push(init_weight("encoder.proj.weight", in_dim, cfg.z, rng));
        params.push(Parameter::frozen(
            "encoder.proj.bias",
            Tensor::zeros(alloc::vec![cfg.z]),
        ));
        for i in 0..cfg.layers {
            params.push(Parameter::frozen(
                format!("encoder.blocks.{i}.ln.gain"),
                Tensor::filled(alloc::vec![cfg.z], 1.0),
            ));
            params.push(Parameter::frozen(
                format!("encoder.blocks.{i}.ln.bias"),
                Tensor::zeros(alloc::vec![cfg.z]),
            ));
            for head in ["q", "k", "v", "o"] {
                params.push(init_weight(
                    &format!("encoder.blocks.{i}.attn.{head}.weight"),
                    cfg.z,
                    cfg.z,
                    rng,
                ));
            }
        }
        Ok(PatchEncoder { cfg, params })
    }

    fn get(&self, name: &str) -> &Tensor {
        for p in &self.params {
            if p.name == name {
                return &p.value;
            }
        }
        panic!("encoder parameter {name} missing");
    }

    pub fn encode(&self, img: &ImageGrid, image_id: u64) -> Result<ContinuousSequence> {
        let (rows, positions) = patchify(img, self.cfg.patch)?;
        let mut h = rows.matmul(self.get("encoder.proj.weight"))?;
        add_row_bias(&mut h, self.get("encoder.proj.bias"));
        if self.cfg.layers >= 1 {
            for (i, &(r, c)) in positions.iter().enumerate() {
                let pe = posenc_2d(r, c, self.cfg.z);
                let row = h.row_mut(i);
                for (dst, src) in row.iter_mut().zip(pe.iter()) {
                    *dst += src;
                }
            }
            for i in 0..self.cfg.layers {
                h = self.block(&h, i)?;
            }
        }
        Ok(ContinuousSequence {
            tokens: h,
            positions,
            image_id,
        })
    }

    fn block(&self, h: &Tensor, i: usize) -> Result<Tensor> {
        let normed = layer_norm(
            h,
            self.get(&format!("encoder.blocks.{i}.ln.gain")),
            self.get(&format!("encoder.blocks.{i}.ln.bias")),
        );
        let q = normed.matmul(self.get(&format!("encoder.blocks.{i}.attn.q.weight")))?;
        let k = normed.matmul(self.get(&format!("encoder.blocks.{i}.attn.k.weight")))?;
        let v = normed.matmul(self.get(&format!("encoder.blocks.{i}.attn.v.weight")))?;
        let n = h.rows();
        let z = self.cfg.z;
        let scale = 1.0 / math::sqrt(z as f64);
        let mut mixed = Tensor::zeros(alloc::vec![n, z]);
        let mut scores = alloc::vec![0.0; n];
        for a in 0..n {
            for (b, s) in scores.iter_mut().enumerate() {
                let mut dot = 0.0;
                for d in 0..z {
                    dot += q.at(a, d) * k.at(b, d);
                }
                *s = dot * scale;
            }
            softmax_in_place(&mut scores);
            for (b, &w) in scores.iter().enumerate() {
                for d in 0..z {
                    let cur = mixed.at(a, d);
                    mixed.set(a, d, cur + w * v.at(b, d));
                }
            }
        }
        let out = mixed.matmul(self.get(&format!("encoder.blocks.{i}.attn.o.weight")))?;
        let mut result = h.clone();
        result.axpy(1.0, &out)?;
        Ok(result)
    }
}

impl Parameterized for PatchEncoder {
    fn params(&self) -> Vec<&Parameter> {
        self.params.iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }
}

fn init_weight(name: &str, fan_in: usize, fan_out: usize, rng: &SplitRng) -> Parameter {
    let mut sub = rng.derive(name);
    let sd = 1.0 / math::sqrt(fan_in as f64);
    let data = sub.normal_vec(fan_in * fan_out, sd);
    Parameter::frozen(name, Tensor::from_vec(alloc::vec![fan_in, fan_out], data).unwrap())
}

pub(crate) fn add_row_bias(t: &mut Tensor, bias: &Tensor) {
    let cols = t.cols();
    debug_assert_eq!(cols, bias.len());
    let b = bias.data();
    for r in 0..t.rows() {
        let row = t.row_mut(r);
        for (dst, src) in row.iter_mut().zip(b.iter()) {
            *dst += src;
        }
    }
}

pub(crate) fn layer_norm(t: &Tensor, gain: &Tensor, bias: &Tensor) -> Tensor {
    const EPS: f64 = 1e-5;
    let mut out = t.clone();
    let cols = t.cols();
    for r in 0..t.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
        let inv = 1.0 / math::sqrt(var + EPS);
        for (d, x) in row.iter_mut().enumerate() {
            *x = (*x - mean) * inv * gain.data()[d] + bias.data()[d];
        }
    }
    out
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = math::exp(*x - max);
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}
