//! Named parameter storage, seeded initialization, and tape binding.
//!
//! GRU gate weights are stored fused: `w`/`u` hold the update, reset,
//! and candidate blocks stacked along columns in that order, `b` the
//! matching 1×3h bias row.

use super::{FusionKind, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// All learnable weights of one model, keyed by dotted names. Iteration
/// order is the sorted name order, so initialization and optimizer
/// traversal are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
}

/// Which parameters exist for a config, with shapes. Biases (any name
/// ending in `.b` or `_bias`) start at zero; matrices are
/// Xavier-uniform.
fn shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (e, h, a) = (cfg.emb_dim, cfg.hidden, cfg.attn_dim);
    let ann = cfg.ann_dim();
    let c = cfg.feat_channels;
    let mut out: Vec<(String, Vec<usize>)> = vec![
        ("src_emb".into(), vec![cfg.src_vocab, e]),
        ("tgt_emb".into(), vec![cfg.tgt_vocab, e]),
        ("out_bias".into(), vec![1, cfg.tgt_vocab]),
        ("readout.ws".into(), vec![h, e]),
        ("readout.we".into(), vec![e, e]),
        ("readout.wc".into(), vec![ann, e]),
        ("att.text.w".into(), vec![h, a]),
        ("att.text.u".into(), vec![ann, a]),
        ("att.text.v".into(), vec![a, 1]),
    ];
    for (layer, input) in [("l1", e), ("l2", ann)] {
        for dir in ["fwd", "bwd"] {
            out.push((format!("enc.{layer}.{dir}.w"), vec![input, 3 * h]));
            out.push((format!("enc.{layer}.{dir}.u"), vec![h, 3 * h]));
            out.push((format!("enc.{layer}.{dir}.b"), vec![1, 3 * h]));
        }
    }
    out.push(("dec.gru1.w".into(), vec![e, 3 * h]));
    out.push(("dec.gru1.u".into(), vec![h, 3 * h]));
    out.push(("dec.gru1.b".into(), vec![1, 3 * h]));
    out.push(("dec.gru2.w".into(), vec![ann, 3 * h]));
    out.push(("dec.gru2.u".into(), vec![h, 3 * h]));
    out.push(("dec.gru2.b".into(), vec![1, 3 * h]));

    if cfg.fusion.uses_visual_attention() {
        out.push(("att.img.w".into(), vec![h, a]));
        out.push(("att.img.u".into(), vec![c, a]));
        out.push(("att.img.v".into(), vec![a, 1]));
    }
    match cfg.fusion {
        FusionKind::Direct => {
            out.push(("fuse.direct.w".into(), vec![ann + c, ann]));
        }
        FusionKind::Hier => {
            out.push(("fuse.hier.proj_text".into(), vec![ann, ann]));
            out.push(("fuse.hier.proj_img".into(), vec![c, ann]));
            out.push(("att.hier.w".into(), vec![h, a]));
            out.push(("att.hier.u".into(), vec![ann, a]));
            out.push(("att.hier.v".into(), vec![a, 1]));
        }
        FusionKind::Init => {
            for gru in ["enc.l1.fwd", "enc.l1.bwd", "enc.l2.fwd", "enc.l2.bwd", "dec"] {
                out.push((format!("init.{gru}.w"), vec![c, h]));
                out.push((format!("init.{gru}.b"), vec![1, h]));
            }
        }
        FusionKind::Nmt => {}
    }
    out
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b") || name.ends_with("_bias")
}

impl ParameterSet {
    /// Seeded initialization: Xavier-uniform matrices with limit
    /// √(6/(fan_in+fan_out)), zero biases. The same (config, seed) pair
    /// always yields bit-identical parameters.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let mut tensors = BTreeMap::new();
        let mut spec = shapes(cfg);
        spec.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, shape) in spec {
            let numel: usize = shape.iter().product();
            let data = if is_bias(&name) {
                vec![0.0; numel]
            } else {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                (0..numel).map(|_| rng.gen_range(-limit..limit)).collect()
            };
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        Ok(ParameterSet { tensors })
    }

    pub fn from_tensors(tensors: BTreeMap<String, Tensor>) -> ParameterSet {
        ParameterSet { tensors }
    }

    /// Verify this set has exactly the parameters `cfg` calls for, with
    /// matching shapes.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let mut expected = shapes(cfg);
        expected.sort_by(|a, b| a.0.cmp(&b.0));
        if expected.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "parameter count {} does not match config ({} expected)",
                self.tensors.len(),
                expected.len()
            )));
        }
        for (name, shape) in expected {
            match self.tensors.get(&name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::Config(format!(
                        "parameter {name} has shape {:?}, config expects {shape:?}",
                        t.shape()
                    )))
                }
                None => return Err(Error::Config(format!("parameter {name} missing"))),
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[name]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors.get_mut(name).expect("unknown parameter")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Record every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone(), true)))
            .collect();
        BoundParams { vars }
    }
}

/// Tape handles for one binding of a [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn from_vars(vars: BTreeMap<String, Var>) -> BoundParams {
        BoundParams { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}
