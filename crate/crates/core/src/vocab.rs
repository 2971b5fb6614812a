//! Unified text+visual vocabulary, the expanded embedding table, and the
//! trainable projector that lifts patch features into the model width.

use crate::error::CoreError;
use crate::math;
use crate::param::{Parameter, Parameterized};
use crate::rng::SplitRng;
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Id layout: text ids occupy [0, n_text); discrete visual index d maps to
/// the unified id n_text + d. The EOS token is the last text id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnifiedVocab {
    n_text: usize,
    n_visual: usize,
}

impl UnifiedVocab {
    pub fn new(n_text: usize, n_visual: usize) -> Result<UnifiedVocab> {
        if n_text < 2 || n_visual < 1 {
            return Err(CoreError::Config(format!(
                "vocab needs >= 2 text ids and >= 1 visual id, got {n_text}/{n_visual}"
            )));
        }
        Ok(UnifiedVocab { n_text, n_visual })
    }

    pub fn n_text(&self) -> usize {
        self.n_text
    }

    pub fn n_visual(&self) -> usize {
        self.n_visual
    }

    pub fn total(&self) -> usize {
        self.n_text + self.n_visual
    }

    pub fn eos_id(&self) -> usize {
        self.n_text - 1
    }

    pub fn to_unified(&self, d: usize) -> Result<usize> {
        if d >= self.n_visual {
            return Err(CoreError::Index(format!(
                "discrete index {d} outside codebook of {}",
                self.n_visual
            )));
        }
        Ok(self.n_text + d)
    }

    pub fn is_visual(&self, id: usize) -> bool {
        id >= self.n_text && id < self.total()
    }

    pub fn to_discrete(&self, id: usize) -> Option<usize> {
        if self.is_visual(id) {
            Some(id - self.n_text)
        } else {
            None
        }
    }
}

/// Embedding table over the unified vocabulary, one trainable weight matrix.
pub struct EmbeddingTable {
    pub weight: Parameter,
}

impl EmbeddingTable {
    pub fn init(vocab: UnifiedVocab, z_llm: usize, rng: &SplitRng) -> EmbeddingTable {
        let name = "embedding.weight";
        let mut sub = rng.derive(name);
        let data = sub.normal_vec(vocab.total() * z_llm, 0.02);
        EmbeddingTable {
            weight: Parameter::new(
                name,
                Tensor::from_vec(alloc::vec![vocab.total(), z_llm], data).unwrap(),
            ),
        }
    }

    pub fn rows(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn embed(&self, ids: &[usize]) -> Result<Tensor> {
        let mut out = Tensor::zeros(alloc::vec![ids.len(), self.dim()]);
        for (r, &id) in ids.iter().enumerate() {
            if id >= self.rows() {
                return Err(CoreError::Index(format!(
                    "token id {id} outside embedding table of {}",
                    self.rows()
                )));
            }
            out.row_mut(r).copy_from_slice(self.weight.value.row(id));
        }
        Ok(out)
    }

    /// Scatter-add output gradients back onto the rows used by `ids`.
    /// Repeated ids accumulate.
    pub fn accumulate_grad(&mut self, ids: &[usize], d_out: &Tensor) -> Result<()> {
        if d_out.rows() != ids.len() || d_out.cols() != self.dim() {
            return Err(CoreError::Shape(String::from("embedding grad shape mismatch")));
        }
        for (r, &id) in ids.iter().enumerate() {
            let src = d_out.row(r);
            let dst = self.weight.grad.row_mut(id);
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += s;
            }
        }
        Ok(())
    }
}

impl Parameterized for EmbeddingTable {
    fn params(&self) -> Vec<&Parameter> {
        alloc::vec![&self.weight]
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        alloc::vec![&mut self.weight]
    }
}

/// Grow a text-only embedding matrix by n_visual rows. Existing rows are
/// copied bit-exactly; new rows are drawn Normal(0, 0.02) from the
/// "embedding.weight" substream of `rng`.
pub fn expand_embeddings(base: &Tensor, n_visual: usize, rng: &SplitRng) -> Result<EmbeddingTable> {
    if base.dims().len() != 2 {
        return Err(CoreError::Shape(String::from("base embeddings must be 2-D")));
    }
    if n_visual == 0 {
        return Err(CoreError::Config(String::from("n_visual must be positive")));
    }
    let z = base.cols();
    let name = "embedding.weight";
    let mut data = Vec::with_capacity((base.rows() + n_visual) * z);
    data.extend_from_slice(base.data());
    let mut sub = rng.derive(name);
    data.extend(sub.normal_vec(n_visual * z, 0.02));
    Ok(EmbeddingTable {
        weight: Parameter::new(
            name,
            Tensor::from_vec(alloc::vec![base.rows() + n_visual, z], data)?,
        ),
    })
}

/// Two-layer projector from encoder width z to model width z_llm with a GELU
/// between. Trainable; backward accumulates parameter gradients.
pub struct Projector {
    params: Vec<Parameter>,
    pub z: usize,
    pub z_llm: usize,
}

pub struct ProjectorCache {
    x: Tensor,
    h1: Tensor,
}

impl Projector {
    pub fn init(z: usize, z_llm: usize, rng: &SplitRng) -> Projector {
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
            mk("projector.fc1.weight", z, z_llm),
            Parameter::new("projector.fc1.bias", Tensor::zeros(alloc::vec![z_llm])),
            mk("projector.fc2.weight", z_llm, z_llm),
            Parameter::new("projector.fc2.bias", Tensor::zeros(alloc::vec![z_llm])),
        ];
        Projector { params, z, z_llm }
    }

    fn get(&self, name: &str) -> &Tensor {
        &self.params.iter().find(|p| p.name == name).unwrap().value
    }

    fn get_mut(&mut self, name: &str) -> &mut Parameter {
        self.params.iter_mut().find(|p| p.name == name).unwrap()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ProjectorCache)> {
        if x.cols() != self.z {
            return Err(CoreError::Shape(format!(
                "projector input width {} != {}",
                x.cols(),
                self.z
            )));
        }
        let mut h1 = x.matmul(self.get("projector.fc1.weight"))?;
        crate::encoder::add_row_bias(&mut h1, self.get("projector.fc1.bias"));
        let a = h1.map(math::gelu);
        let mut y = a.matmul(self.get("projector.fc2.weight"))?;
        crate::encoder::add_row_bias(&mut y, self.get("projector.fc2.bias"));
        Ok((y, ProjectorCache { x: x.clone(), h1 }))
    }

    pub fn backward(&mut self, cache: &ProjectorCache, d_out: &Tensor) -> Result<()> {
        let a = cache.h1.map(math::gelu);
        // fc2
        let d_w2 = a.transpose()?.matmul(d_out)?;
        accumulate(self.get_mut("projector.fc2.weight"), &d_w2);
        accumulate_colsum(self.get_mut("projector.fc2.bias"), d_out);
        let d_a = d_out.matmul(&self.get("projector.fc2.weight").transpose()?)?;
        // gelu
        let mut d_h1 = d_a;
        for (g, h) in d_h1.data_mut().iter_mut().zip(cache.h1.data()) {
            *g *= math::gelu_grad(*h);
        }
        // fc1
        let d_w1 = cache.x.transpose()?.matmul(&d_h1)?;
        accumulate(self.get_mut("projector.fc1.weight"), &d_w1);
        accumulate_colsum(self.get_mut("projector.fc1.bias"), &d_h1);
        Ok(())
    }
}

impl Parameterized for Projector {
    fn params(&self) -> Vec<&Parameter> {
        self.params.iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }
}

pub(crate) fn accumulate(p: &mut Parameter, d: &Tensor) {
    for (g, s) in p.grad.data_mut().iter_mut().zip(d.data()) {
        *g += s;
    }
}

pub(crate) fn accumulate_colsum(p: &mut Parameter, d: &Tensor) {
    let cols = d.cols();
    let g = p.grad.data_mut();
    for r in 0..d.rows() {
        for c in 0..cols {
            g[c] += d.at(r, c);
        }
    }
}
