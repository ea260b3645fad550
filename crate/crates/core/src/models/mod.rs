//! CNN, QV-CNN, ViT and QV-ViT classifiers over 32x32 feature images.

mod checkpoint;
mod cnn;
mod train;
mod vit;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use cnn::CnnBody;
pub use train::{batch_plan, class_weights, train, EpochRecord, TrainConfig, HISTORY_HEADER};
pub use vit::{VitBlock, VitBody};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureImage;
use crate::qv::{QVConfig, QvBlock};
use crate::tensor::nn::Param;
use crate::tensor::{no_grad, Tensor, Var};

pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Cnn,
    QvCnn,
    Vit,
    QvVit,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Cnn, Arch::QvCnn, Arch::Vit, Arch::QvVit];

    pub fn has_qv(self) -> bool {
        matches!(self, Arch::QvCnn | Arch::QvVit)
    }

    pub fn is_vit(self) -> bool {
        matches!(self, Arch::Vit | Arch::QvVit)
    }

    /// Classifier name as used in result tables.
    pub fn table_name(self) -> &'static str {
        match self {
            Arch::Cnn => "CNN",
            Arch::QvCnn => "QV-CNN",
            Arch::Vit => "ViT",
            Arch::QvVit => "QV-ViT",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Cnn => "cnn",
            Arch::QvCnn => "qv-cnn",
            Arch::Vit => "vit",
            Arch::QvVit => "qv-vit",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cnn" => Ok(Arch::Cnn),
            "qv-cnn" => Ok(Arch::QvCnn),
            "vit" => Ok(Arch::Vit),
            "qv-vit" => Ok(Arch::QvVit),
            _ => Err(Error::Config(format!(
                "unknown arch '{s}' (expected cnn, qv-cnn, vit, qv-vit)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    Patch,
    Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub qv: Option<QVConfig>,
    pub in_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub cnn_channels: Vec<usize>,
    pub cnn_kernel: usize,
    pub vit_layers: usize,
    pub vit_heads: usize,
    pub vit_patch: usize,
    pub vit_embed_dim: usize,
    pub vit_mlp_dim: usize,
    pub token_mode: TokenMode,
    pub classes: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(arch: Arch) -> Self {
        ModelConfig {
            arch,
            qv: arch.has_qv().then(QVConfig::default),
            in_channels: 1,
            input_height: 32,
            input_width: 32,
            cnn_channels: vec![64, 64, 128, 128, 256, 256],
            cnn_kernel: 3,
            vit_layers: 8,
            vit_heads: 4,
            vit_patch: 8,
            vit_embed_dim: 1024,
            vit_mlp_dim: 2048,
            token_mode: TokenMode::Patch,
            classes: NUM_CLASSES,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes != NUM_CLASSES {
            return Err(Error::Config(format!(
                "classes must be {NUM_CLASSES}, got {}",
                self.classes
            )));
        }
        if self.in_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Config(
                "input channels and size must be positive".into(),
            ));
        }
        match (&self.qv, self.arch.has_qv()) {
            (Some(q), true) => {
                q.validate()?;
                if q.in_channels != self.in_channels {
                    return Err(Error::Config(format!(
                        "qv in_channels {} differs from model in_channels {}",
                        q.in_channels, self.in_channels
                    )));
                }
                let reach = 2 * q.max_shift();
                if self.input_height <= reach || self.input_width <= reach {
                    return Err(Error::Config(format!(
                        "input {}x{} too small for qv shifts",
                        self.input_height, self.input_width
                    )));
                }
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::Config(format!(
                    "arch {} takes no qv block",
                    self.arch
                )))
            }
            (None, true) => {
                return Err(Error::Config(format!(
                    "arch {} needs a qv block config",
                    self.arch
                )))
            }
        }
        if self.arch.is_vit() {
            if self.vit_heads == 0 || self.vit_embed_dim % self.vit_heads != 0 {
                return Err(Error::Config(format!(
                    "vit_embed_dim {} is not divisible by vit_heads {}",
                    self.vit_embed_dim, self.vit_heads
                )));
            }
            if self.token_mode == TokenMode::Patch
                && (self.vit_patch == 0
                    || self.input_height % self.vit_patch != 0
                    || self.input_width % self.vit_patch != 0)
            {
                return Err(Error::Config(format!(
                    "input {}x{} is not divisible by patch size {}",
                    self.input_height, self.input_width, self.vit_patch
                )));
            }
            if self.vit_layers == 0 || self.vit_mlp_dim == 0 {
                return Err(Error::Config(
                    "vit layers and mlp dim must be positive".into(),
                ));
            }
        } else {
            if self.cnn_channels.is_empty() || self.cnn_channels.contains(&0) {
                return Err(Error::Config(
                    "cnn_channels must be non-empty and positive".into(),
                ));
            }
            if self.cnn_kernel % 2 == 0 {
                return Err(Error::Config(format!(
                    "cnn_kernel must be odd, got {}",
                    self.cnn_kernel
                )));
            }
        }
        Ok(())
    }

    /// Channels entering the CNN / ViT body.
    pub fn body_channels(&self) -> usize {
        self.qv.as_ref().map_or(self.in_channels, |q| q.filters)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.input_height, self.input_width, self.in_channels)
    }
}

enum Body {
    Cnn(CnnBody),
    Vit(VitBody),
}

/// A classifier producing `[N, 2]` logits, class 0 spoof, class 1 bonafide.
pub struct Model {
    cfg: ModelConfig,
    qv: Option<QvBlock>,
    body: Body,
}

impl Model {
    pub fn build(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let qv = match &cfg.qv {
            Some(q) => Some(QvBlock::new("qv", q.clone(), &mut rng)?),
            None => None,
        };
        let body = if cfg.arch.is_vit() {
            Body::Vit(VitBody::new(&cfg, &mut rng)?)
        } else {
            Body::Cnn(CnnBody::new(&cfg, &mut rng))
        };
        Ok(Model { cfg, qv, body })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Trainable parameters in a stable order.
    pub fn params(&self) -> Vec<Param> {
        let mut out = Vec::new();
        if let Some(q) = &self.qv {
            q.params(&mut out);
        }
        match &self.body {
            Body::Cnn(b) => b.params(&mut out),
            Body::Vit(b) => b.params(&mut out),
        }
        out
    }

    /// Non-trainable state saved with the parameters (batch-norm running
    /// statistics) as `(name, values)`.
    pub fn buffers(&self) -> Vec<(String, std::rc::Rc<std::cell::RefCell<Vec<f32>>>)> {
        match &self.body {
            Body::Cnn(b) => b.buffers(),
            Body::Vit(_) => Vec::new(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.var.value().numel()).sum()
    }

    /// The QV block's wave maps for a batch, if this model has one.
    pub fn qv_block(&self) -> Option<&QvBlock> {
        self.qv.as_ref()
    }

    pub fn forward(&self, x: &Var, train: bool) -> Result<Var> {
        let s = x.shape();
        let (h, w, c) = self.cfg.input_shape();
        if s.len() != 4 || s[1] != c || s[2] != h || s[3] != w {
            return Err(Error::Shape(format!(
                "{} expects input [N, {c}, {h}, {w}], got {s:?}",
                self.cfg.arch
            )));
        }
        let x = match &self.qv {
            Some(q) => q.forward(x)?,
            None => x.clone(),
        };
        match &self.body {
            Body::Cnn(b) => b.forward(&x, train),
            Body::Vit(b) => b.forward(&x),
        }
    }

    /// Logits in evaluation mode without recording gradients.
    pub fn logits(&self, images: &[&FeatureImage]) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(SCORE_BATCH) {
            let x = Var::constant(images_to_tensor(chunk, self.cfg.input_shape())?);
            let z = no_grad(|| self.forward(&x, false))?;
            let v = z.value();
            out.extend(v.data().chunks(2).map(|r| [r[0] as f64, r[1] as f64]));
        }
        Ok(out)
    }

    /// `logit(bonafide) - logit(spoof)` per image, input order preserved.
    pub fn score(&self, images: &[&FeatureImage]) -> Result<Vec<f64>> {
        let scores: Vec<f64> = self.logits(images)?.iter().map(|z| z[1] - z[0]).collect();
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite score for input {i}")));
        }
        Ok(scores)
    }
}

const SCORE_BATCH: usize = 64;

/// Stacks `(y, x, c)` feature images into an `[N, C, H, W]` tensor.
pub fn images_to_tensor(images: &[&FeatureImage], expect: (usize, usize, usize)) -> Result<Tensor> {
    let (h, w, c) = expect;
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for (i, img) in images.iter().enumerate() {
        if img.shape() != expect {
            return Err(Error::Shape(format!(
                "image {i} has shape {:?} (h, w, c), model expects {expect:?}",
                img.shape()
            )));
        }
        data.extend(img.to_chw().into_iter().map(|v| v as f32));
    }
    Tensor::from_vec(&[images.len(), c, h, w], data)
}

#[cfg(test)]
mod tests;
