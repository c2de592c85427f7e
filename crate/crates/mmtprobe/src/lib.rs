//! Probing the visual grounding of multimodal machine translation.
//!
//! The crate trains attentive GRU translation models — a text-only
//! baseline and three image-fusion variants — on parallel corpora whose
//! source side can be systematically degraded (color deprivation, entity
//! masking, progressive masking). Decoding-time congruence probes
//! (reversed or shuffled image features) and MT metrics with
//! randomization-based significance testing measure how much the models
//! actually use the image.
//!
//! Start with the runnable examples (`cargo run --example <name>`); the
//! `mmtprobe` binary exposes the same pipeline as subcommands.

pub mod decode;
pub mod error;
pub mod eval;
pub mod exp;
pub mod features;
pub mod model;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
