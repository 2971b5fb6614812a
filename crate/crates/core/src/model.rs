//! Whole-pipeline bundle: frozen encoder, codebook, projector, selector,
//! embedding table, and the causal LM, built from one seed.

use crate::codebook::{pool_to_slots, quantize, Codebook, DiscreteSequence};
use crate::encoder::{ContinuousSequence, EncoderConfig, ImageGrid, PatchEncoder};
use crate::error::CoreError;
use crate::lm::{LmConfig, MiniLm};
use crate::param::{Parameter, Parameterized};
use crate::rng::SplitRng;
use crate::selector::{eos_summary, score_patches, select_top_m, SelectorMlp};
use crate::tensor::Tensor;
use crate::vocab::{EmbeddingTable, Projector, ProjectorCache, UnifiedVocab};
use crate::Result;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Square image side in pixels.
    pub image: usize,
    pub patch: usize,
    pub enc_z: usize,
    pub enc_layers: usize,
    /// Discrete slots per image.
    pub n_d: usize,
    /// Codebook size.
    pub n_v: usize,
    pub z_llm: usize,
    /// Base text vocabulary size; EOS is the last text id.
    pub n_text: usize,
    pub lm_layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub selector_hidden: usize,
    /// Default patch keeping ratio, overridable at encode time.
    pub alpha_milli: usize,
}

impl ModelConfig {
    pub fn desk() -> ModelConfig {
        ModelConfig {
            image: 32,
            patch: 8,
            enc_z: 32,
            enc_layers: 1,
            n_d: 4,
            n_v: 64,
            z_llm: 64,
            n_text: 64,
            lm_layers: 2,
            heads: 2,
            max_len: 512,
            selector_hidden: 64,
            alpha_milli: 250,
        }
    }

    /// Default ratio as a float; stored in thousandths so the config stays
    /// integral and exact.
    pub fn alpha(&self) -> f64 {
        self.alpha_milli as f64 / 1000.0
    }

    /// Patches per image.
    pub fn n_c(&self) -> usize {
        (self.image / self.patch) * (self.image / self.patch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.image % self.patch != 0 {
            return Err(CoreError::Config(format!(
                "image {} not divisible by patch {}",
                self.image, self.patch
            )));
        }
        if self.n_d == 0 || self.n_c() % self.n_d != 0 {
            return Err(CoreError::Config(format!(
                "patch count {} not divisible by n_d {}",
                self.n_c(),
                self.n_d
            )));
        }
        if self.n_v < 2 {
            return Err(CoreError::Config(String::from("codebook size must be >= 2")));
        }
        if self.n_text < 2 {
            return Err(CoreError::Config(String::from("text vocab must be >= 2")));
        }
        if !(self.alpha_milli >= 1 && self.alpha_milli <= 1000) {
            return Err(CoreError::Config(format!(
                "alpha_milli {} outside 1..=1000",
                self.alpha_milli
            )));
        }
        self.lm().validate()
    }

    pub fn lm(&self) -> LmConfig {
        LmConfig {
            z_llm: self.z_llm,
            layers: self.lm_layers,
            heads: self.heads,
            max_len: self.max_len,
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            patch: self.patch,
            z: self.enc_z,
            layers: self.enc_layers,
        }
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let pairs: [(&str, usize); 13] = [
            ("image", self.image),
            ("patch", self.patch),
            ("enc_z", self.enc_z),
            ("enc_layers", self.enc_layers),
            ("n_d", self.n_d),
            ("n_v", self.n_v),
            ("z_llm", self.z_llm),
            ("n_text", self.n_text),
            ("lm_layers", self.lm_layers),
            ("heads", self.heads),
            ("max_len", self.max_len),
            ("selector_hidden", self.selector_hidden),
            ("alpha_milli", self.alpha_milli),
        ];
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<ModelConfig> {
        let get = |k: &str| -> Result<usize> {
            let raw = kv
                .get(k)
                .ok_or_else(|| CoreError::Config(format!("missing model config key {k}")))?;
            raw.parse()
                .map_err(|_| CoreError::Config(format!("bad value for {k}: {raw}")))
        };
        let cfg = ModelConfig {
            image: get("image")?,
            patch: get("patch")?,
            enc_z: get("enc_z")?,
            enc_layers: get("enc_layers")?,
            n_d: get("n_d")?,
            n_v: get("n_v")?,
            z_llm: get("z_llm")?,
            n_text: get("n_text")?,
            lm_layers: get("lm_layers")?,
            heads: get("heads")?,
            max_len: get("max_len")?,
            selector_hidden: get("selector_hidden")?,
            alpha_milli: get("alpha_milli")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub struct Model {
    pub cfg: ModelConfig,
    pub vocab: UnifiedVocab,
    pub encoder: PatchEncoder,
    pub codebook: Option<Codebook>,
    pub emb: EmbeddingTable,
    pub projector: Projector,
    pub selector: SelectorMlp,
    pub lm: MiniLm,
}

impl Model {
    /// Build every component from one seed via named substreams.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let root = SplitRng::new(seed);
        let vocab = UnifiedVocab::new(cfg.n_text, cfg.n_v)?;
        Ok(Model {
            cfg,
            vocab,
            encoder: PatchEncoder::init(cfg.encoder(), &root.derive("encoder"))?,
            codebook: None,
            emb: EmbeddingTable::init(vocab, cfg.z_llm, &root.derive("embedding")),
            projector: Projector::init(cfg.enc_z, cfg.z_llm, &root.derive("projector")),
            selector: SelectorMlp::init(cfg.z_llm, cfg.selector_hidden, &root.derive("selector"))?,
            lm: MiniLm::init(cfg.lm(), &root.derive("lm"))?,
        })
    }

    pub fn set_codebook(&mut self, cb: Codebook) -> Result<()> {
        if cb.dim() != self.cfg.enc_z {
            return Err(CoreError::Shape(format!(
                "codebook width {} != encoder width {}",
                cb.dim(),
                self.cfg.enc_z
            )));
        }
        if cb.len() != self.cfg.n_v {
            return Err(CoreError::Shape(format!(
                "codebook has {} codewords, config says {}",
                cb.len(),
                self.cfg.n_v
            )));
        }
        self.codebook = Some(cb);
        Ok(())
    }

    pub fn codebook(&self) -> Result<&Codebook> {
        self.codebook
            .as_ref()
            .ok_or_else(|| CoreError::Config(String::from("codebook not fitted")))
    }

    pub fn encode_continuous(&self, img: &ImageGrid, image_id: u64) -> Result<ContinuousSequence> {
        if img.width() != self.cfg.image || img.height() != self.cfg.image {
            return Err(CoreError::Data(format!(
                "image {}x{} does not match configured side {}",
                img.width(),
                img.height(),
                self.cfg.image
            )));
        }
        self.encoder.encode(img, image_id)
    }

    pub fn discretize(&self, cont: &ContinuousSequence) -> Result<DiscreteSequence> {
        let slots = pool_to_slots(&cont.tokens, self.cfg.n_d)?;
        quantize(&slots, self.codebook()?, cont.image_id)
    }

    pub fn h_eos(&self, disc: &DiscreteSequence) -> Result<Vec<f64>> {
        eos_summary(&self.lm, &self.emb, &self.vocab, disc)
    }

    pub fn project(&self, tokens: &Tensor) -> Result<(Tensor, ProjectorCache)> {
        self.projector.forward(tokens)
    }

    /// Indices of the patches kept for one image at ratio alpha, under the
    /// current selector, projector, embedding, and LM weights.
    pub fn select_patches(
        &self,
        cont: &ContinuousSequence,
        disc: &DiscreteSequence,
        alpha: f64,
    ) -> Result<Vec<usize>> {
        let h = self.h_eos(disc)?;
        let (projected, _) = self.project(&cont.tokens)?;
        let scores = score_patches(&self.selector, &projected, &h)?;
        select_top_m(&scores, alpha)
    }

    /// Freeze/unfreeze per training stage:
    /// 1: selector only; 2: embedding only; 3: projector only;
    /// 4: everything except the encoder and the selector.
    pub fn apply_stage_mask(&mut self, stage: u8) -> Result<()> {
        let rule: fn(&str) -> bool = match stage {
            1 => |n| n.starts_with("selector."),
            2 => |n| n == "embedding.weight",
            3 => |n| n.starts_with("projector."),
            4 => |n| !n.starts_with("encoder.") && !n.starts_with("selector."),
            _ => return Err(CoreError::Config(format!("unknown stage {stage}"))),
        };
        for p in self.params_mut() {
            let name = p.name.clone();
            p.trainable = rule(&name) && !name.starts_with("encoder.");
        }
        Ok(())
    }

    /// Every tensor that belongs in a checkpoint, keyed by name. Includes
    /// the codebook when fitted.
    pub fn all_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for p in self.params() {
            out.insert(p.name.clone(), p.value.clone());
        }
        if let Some(cb) = &self.codebook {
            out.insert(String::from("codebook.codewords"), cb.codewords().clone());
        }
        out
    }

    /// Replace parameter values (and the codebook) from a checkpoint map.
    /// Every parameter must be present with the right shape; unknown names
    /// other than the codebook are rejected.
    pub fn load_tensors(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        let mut known = alloc::vec![];
        for p in self.params_mut() {
            let t = tensors.get(&p.name).ok_or_else(|| {
                CoreError::Data(format!("checkpoint missing tensor {}", p.name))
            })?;
            if t.dims() != p.value.dims() {
                return Err(CoreError::Shape(format!(
                    "checkpoint tensor {} has shape {:?}, expected {:?}",
                    p.name,
                    t.dims(),
                    p.value.dims()
                )));
            }
            p.value = t.clone();
            p.grad = Tensor::zeros(t.dims().to_vec());
            known.push(p.name.clone());
        }
        for name in tensors.keys() {
            if name == "codebook.codewords" {
                continue;
            }
            if !known.iter().any(|k| k == name) {
                return Err(CoreError::Data(format!("unknown checkpoint tensor {name}")));
            }
        }
        if let Some(cb) = tensors.get("codebook.codewords") {
            self.set_codebook(Codebook::new(cb.clone())?)?;
        }
        Ok(())
    }
}

impl Parameterized for Model {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = self.emb.params();
        out.extend(self.projector.params());
        out.extend(self.selector.params());
        out.extend(self.lm.params());
        out.extend(self.encoder.params());
        out
    }
    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = self.emb.params_mut();
        out.extend(self.projector.params_mut());
        out.extend(self.selector.params_mut());
        out.extend(self.lm.params_mut());
        out.extend(self.encoder.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::train_codebook;
    use crate::labels::{synth_sample, SynthConfig};

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            image: 16,
            patch: 8,
            enc_z: 8,
            enc_layers: 0,
            n_d: 2,
            n_v: 4,
            z_llm: 8,
            n_text: 16,
            lm_layers: 1,
            heads: 2,
            max_len: 64,
            selector_hidden: 8,
            alpha_milli: 500,
        }
    }

    fn fitted_model(seed: u64) -> Model {
        let mut model = Model::init(small_cfg(), seed).unwrap();
        let mut rng = SplitRng::new(seed ^ 0xABCD);
        let data = Tensor::from_vec(alloc::vec![12, 8], rng.normal_vec(96, 1.0)).unwrap();
        let cb = train_codebook(&data, 4, 5, &mut rng.derive("cb")).unwrap();
        model.set_codebook(cb).unwrap();
        model
    }

    #[test]
    fn desk_config_validates_and_counts_patches() {
        let cfg = ModelConfig::desk();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_c(), 16);
        assert_eq!(cfg.alpha(), 0.25);
    }

    #[test]
    fn config_kv_round_trips() {
        let cfg = ModelConfig::desk();
        let kv: BTreeMap<String, String> = cfg.to_kv().into_iter().collect();
        let back = ModelConfig::from_kv(&kv).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Model::init(small_cfg(), 7).unwrap();
        let b = Model::init(small_cfg(), 7).unwrap();
        let c = Model::init(small_cfg(), 8).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value.data(), pb.value.data());
        }
        let diff = a
            .params()
            .iter()
            .zip(c.params().iter())
            .any(|(x, y)| x.value.data() != y.value.data());
        assert!(diff);
    }

    #[test]
    fn stage_masks_freeze_the_right_components() {
        let mut m = fitted_model(3);
        m.apply_stage_mask(1).unwrap();
        for p in m.params() {
            assert_eq!(p.trainable, p.name.starts_with("selector."), "{}", p.name);
        }
        m.apply_stage_mask(2).unwrap();
        for p in m.params() {
            assert_eq!(p.trainable, p.name == "embedding.weight", "{}", p.name);
        }
        m.apply_stage_mask(3).unwrap();
        for p in m.params() {
            assert_eq!(p.trainable, p.name.starts_with("projector."), "{}", p.name);
        }
        m.apply_stage_mask(4).unwrap();
        for p in m.params() {
            let want = !p.name.starts_with("encoder.") && !p.name.starts_with("selector.");
            assert_eq!(p.trainable, want, "{}", p.name);
        }
        assert!(m.apply_stage_mask(5).is_err());
    }

    #[test]
    fn pipeline_runs_end_to_end_on_one_image() {
        let model = fitted_model(11);
        let synth = SynthConfig {
            width: 16,
            height: 16,
            min_rect: 4,
            max_rect: 8,
            bg_level: 0.2,
            fg_level: 0.9,
            noise: 0.02,
        };
        let (img, _) = synth_sample(&synth, &mut SplitRng::new(40)).unwrap();
        let cont = model.encode_continuous(&img, 9).unwrap();
        assert_eq!(cont.tokens.dims(), &[4, 8]);
        let disc = model.discretize(&cont).unwrap();
        assert_eq!(disc.indices.len(), 2);
        assert!(disc.indices.iter().all(|&d| d < 4));
        let kept = model.select_patches(&cont, &disc, 0.5).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(kept.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn missing_codebook_is_a_config_error() {
        let model = Model::init(small_cfg(), 2).unwrap();
        let synth = SynthConfig {
            width: 16,
            height: 16,
            min_rect: 4,
            max_rect: 8,
            bg_level: 0.2,
            fg_level: 0.9,
            noise: 0.02,
        };
        let (img, _) = synth_sample(&synth, &mut SplitRng::new(41)).unwrap();
        let cont = model.encode_continuous(&img, 0).unwrap();
        assert!(matches!(model.discretize(&cont), Err(CoreError::Config(_))));
    }

    #[test]
    fn tensors_round_trip_through_load() {
        let model = fitted_model(21);
        let tensors = model.all_tensors();
        assert!(tensors.contains_key("codebook.codewords"));
        let mut fresh = Model::init(small_cfg(), 99).unwrap();
        fresh.load_tensors(&tensors).unwrap();
        for (pa, pb) in model.params().iter().zip(fresh.params().iter()) {
            assert_eq!(pa.value.data(), pb.value.data(), "{}", pa.name);
        }
        assert_eq!(
            fresh.codebook().unwrap().codewords().data(),
            model.codebook().unwrap().codewords().data()
        );

        // wrong shape is rejected
        let mut bad = tensors.clone();
        bad.insert(
            String::from("selector.layer3.bias"),
            Tensor::zeros(alloc::vec![2]),
        );
        let mut fresh = Model::init(small_cfg(), 99).unwrap();
        assert!(fresh.load_tensors(&bad).is_err());

        // missing tensor is rejected
        let mut bad = tensors.clone();
        bad.remove("projector.fc1.weight");
        let mut fresh = Model::init(small_cfg(), 99).unwrap();
        assert!(fresh.load_tensors(&bad).is_err());
    }

    #[test]
    fn image_size_guard() {
        let model = fitted_model(5);
        let img = ImageGrid::from_fn(8, 8, |_, _, _| 0.5).unwrap();
        assert!(matches!(
            model.encode_continuous(&img, 0),
            Err(CoreError::Data(_))
        ));
    }
}
