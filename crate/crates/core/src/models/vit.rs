use rand::Rng;

use super::{ModelConfig, TokenMode};
use crate::error::Result;
use crate::tensor::nn::{kaiming_uniform, LayerNorm, Linear, MultiHeadAttention, Param};
use crate::tensor::{ops, Var};

/// Pre-norm transformer encoder layer.
pub struct VitBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub mlp_in: Linear,
    pub mlp_out: Linear,
}

impl VitBlock {
    fn new(name: &str, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let d = cfg.vit_embed_dim;
        Ok(VitBlock {
            norm1: LayerNorm::new(&format!("{name}.norm1"), d),
            attn: MultiHeadAttention::new(&format!("{name}.attn"), d, cfg.vit_heads, rng)?,
            norm2: LayerNorm::new(&format!("{name}.norm2"), d),
            mlp_in: Linear::new(&format!("{name}.mlp_in"), d, cfg.vit_mlp_dim, rng),
            mlp_out: Linear::new(&format!("{name}.mlp_out"), cfg.vit_mlp_dim, d, rng),
        })
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let h = ops::add(x, &self.attn.forward(&self.norm1.forward(x)?)?)?;
        let m = ops::relu(&self.mlp_in.forward(&self.norm2.forward(&h)?)?);
        ops::add(&h, &self.mlp_out.forward(&m)?)
    }

    fn params(&self, out: &mut Vec<Param>) {
        self.norm1.params(out);
        self.attn.params(out);
        self.norm2.params(out);
        self.mlp_in.params(out);
        self.mlp_out.params(out);
    }
}

/// Tokenize, embed, prepend a class token, add positions, encode, and
/// classify from the class token.
pub struct VitBody {
    pub token_mode: TokenMode,
    pub patch: usize,
    pub embed: Linear,
    pub class_token: Param,
    pub positions: Param,
    pub blocks: Vec<VitBlock>,
    pub norm: LayerNorm,
    pub head: Linear,
}

impl VitBody {
    /// Tokens per image excluding the class token.
    pub fn num_tokens(cfg: &ModelConfig) -> usize {
        match cfg.token_mode {
            TokenMode::Patch => {
                (cfg.input_height / cfg.vit_patch) * (cfg.input_width / cfg.vit_patch)
            }
            TokenMode::Channel => cfg.body_channels(),
        }
    }

    fn token_width(cfg: &ModelConfig) -> usize {
        match cfg.token_mode {
            TokenMode::Patch => cfg.body_channels() * cfg.vit_patch * cfg.vit_patch,
            TokenMode::Channel => cfg.input_height * cfg.input_width,
        }
    }

    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let d = cfg.vit_embed_dim;
        let tokens = Self::num_tokens(cfg);
        let embed = Linear::new("vit.embed", Self::token_width(cfg), d, rng);
        let class_token = Param::new("vit.class_token", Var::leaf(kaiming_uniform(&[d], d, rng)));
        let positions = Param::new(
            "vit.positions",
            Var::leaf(kaiming_uniform(&[tokens + 1, d], d, rng)),
        );
        let blocks = (0..cfg.vit_layers)
            .map(|i| VitBlock::new(&format!("vit.block{i}"), cfg, rng))
            .collect::<Result<_>>()?;
        Ok(VitBody {
            token_mode: cfg.token_mode,
            patch: cfg.vit_patch,
            embed,
            class_token,
            positions,
            blocks,
            norm: LayerNorm::new("vit.norm", d),
            head: Linear::new("vit.head", d, cfg.classes, rng),
        })
    }

    /// `[N, C, H, W]` to the embedded sequence `[N, 1 + tokens, d]` fed to
    /// the encoder.
    pub fn tokens(&self, x: &Var) -> Result<Var> {
        let t = match self.token_mode {
            TokenMode::Patch => ops::patchify(x, self.patch)?,
            TokenMode::Channel => {
                let s = x.shape();
                ops::reshape(x, &[s[0], s[1], s[2] * s[3]])?
            }
        };
        let e = self.embed.forward(&t)?;
        let seq = ops::prepend_token(&e, &self.class_token.var)?;
        ops::add_broadcast(&seq, &self.positions.var)
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let mut h = self.tokens(x)?;
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        let h = self.norm.forward(&h)?;
        self.head.forward(&ops::select_token(&h, 0)?)
    }

    pub fn params(&self, out: &mut Vec<Param>) {
        self.embed.params(out);
        out.push(self.class_token.clone());
        out.push(self.positions.clone());
        for b in &self.blocks {
            b.params(out);
        }
        self.norm.params(out);
        self.head.params(out);
    }
}
