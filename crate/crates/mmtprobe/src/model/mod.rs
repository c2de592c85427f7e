//! The four translation architectures: attentive NMT and the INIT,
//! DIRECT, and HIER multimodal fusion variants, all 2-layer
//! bidirectional-GRU encoders with 2-layer conditional-GRU decoders.

mod checkpoint;
mod gru;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gru::{gru_step, GruVars};
pub use network::{
    attend, decoder_step, encode_source, forward_loss, fuse, init_states_from_pool5,
    prepare_decoder, AttentionPrep, DecoderSetup, EncoderInit, StepOutput,
};
pub use params::{BoundParams, ParameterSet};

use crate::error::{Error, Result};
use crate::features::FeatureLayout;
use serde::{Deserialize, Serialize};

/// How (and whether) image features enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    /// Text-only attentive baseline; features are ignored entirely.
    Nmt,
    /// Encoder/decoder states initialized from a nonlinear transform of
    /// pooled features.
    Init,
    /// Linear projection of the concatenated text and image attention
    /// contexts.
    Direct,
    /// A second attention layer over the per-modality contexts.
    Hier,
}

impl FusionKind {
    pub const ALL: [FusionKind; 4] = [
        FusionKind::Nmt,
        FusionKind::Init,
        FusionKind::Direct,
        FusionKind::Hier,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            FusionKind::Nmt => "nmt",
            FusionKind::Init => "init",
            FusionKind::Direct => "direct",
            FusionKind::Hier => "hier",
        }
    }

    pub fn parse(s: &str) -> Result<FusionKind> {
        match s.to_lowercase().as_str() {
            "nmt" => Ok(FusionKind::Nmt),
            "init" => Ok(FusionKind::Init),
            "direct" => Ok(FusionKind::Direct),
            "hier" => Ok(FusionKind::Hier),
            other => Err(Error::Config(format!("unknown fusion kind {other:?}"))),
        }
    }

    /// Feature layout this fusion consumes, if any.
    pub fn required_layout(&self) -> Option<FeatureLayout> {
        match self {
            FusionKind::Nmt => None,
            FusionKind::Init => Some(FeatureLayout::Pooled),
            FusionKind::Direct | FusionKind::Hier => Some(FeatureLayout::Spatial),
        }
    }

    pub fn uses_visual_attention(&self) -> bool {
        matches!(self, FusionKind::Direct | FusionKind::Hier)
    }
}

/// Architecture hyperparameters. The encoder is always 2-layer
/// bidirectional and the decoder 2-layer conditional; `hidden` is the
/// per-direction GRU size, so annotations are 2×hidden wide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub fusion: FusionKind,
    pub emb_dim: usize,
    pub hidden: usize,
    /// MLP attention size; defaults to `hidden`.
    pub attn_dim: usize,
    pub dropout_src_emb: f64,
    pub dropout_enc_out: f64,
    pub dropout_dec_out: f64,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Feature channel count C; ignored by NMT.
    pub feat_channels: usize,
    /// Spatial positions H·W the visual attention runs over.
    pub feat_positions: usize,
}

impl ModelConfig {
    /// Paper-scale defaults: 200-dim embeddings, 400 hidden units,
    /// ResNet-50 feature geometry (2048 channels, 8×8 grid).
    pub fn paper_scale(fusion: FusionKind, src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            fusion,
            emb_dim: 200,
            hidden: 400,
            attn_dim: 400,
            dropout_src_emb: 0.4,
            dropout_enc_out: 0.5,
            dropout_dec_out: 0.5,
            src_vocab,
            tgt_vocab,
            feat_channels: 2048,
            feat_positions: 64,
        }
    }

    /// Annotation width: both encoder directions concatenated.
    pub fn ann_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("emb_dim", self.emb_dim),
            ("hidden", self.hidden),
            ("attn_dim", self.attn_dim),
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, p) in [
            ("dropout_src_emb", self.dropout_src_emb),
            ("dropout_enc_out", self.dropout_enc_out),
            ("dropout_dec_out", self.dropout_dec_out),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        if self.fusion.uses_visual_attention()
            && (self.feat_channels == 0 || self.feat_positions == 0)
        {
            return Err(Error::config(
                "spatial fusion needs feat_channels and feat_positions",
            ));
        }
        if self.fusion == FusionKind::Init && self.feat_channels == 0 {
            return Err(Error::config("INIT fusion needs feat_channels"));
        }
        Ok(())
    }
}
