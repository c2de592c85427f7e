//! Forward passes: bidirectional encoder, MLP attention over text and
//! image positions, the three fusion schemes, the conditional-GRU
//! decoder step, and the teacher-forced batch loss.
//!
//! Everything is batched with the batch as the row dimension; decoding
//! uses the same code with single-row batches.

use super::gru::{gru_step, GruVars};
use super::{BoundParams, FusionKind, ModelConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureSet};
use crate::tensor::{Tape, Tensor, Var};
use crate::text::Batch;
use rand::Rng;

/// Additive score for masked attention positions. Large enough to zero
/// them out under softmax, small enough to stay NaN-free.
const MASK_BIAS: f64 = -1e30;

/// Initial states from pooled features (INIT fusion): one per encoder
/// GRU plus the decoder's first block.
pub struct EncoderInit {
    pub enc: [Var; 4],
    pub dec: Var,
}

/// tanh(W·f + b) for each encoder direction/layer and the decoder.
/// `pooled` is a B×C constant of pool5 rows.
pub fn init_states_from_pool5(
    tape: &mut Tape,
    bound: &BoundParams,
    pooled: Var,
) -> Result<EncoderInit> {
    let mut states = Vec::with_capacity(5);
    for gru in ["enc.l1.fwd", "enc.l1.bwd", "enc.l2.fwd", "enc.l2.bwd", "dec"] {
        let w = bound.var(&format!("init.{gru}.w"));
        let b = bound.var(&format!("init.{gru}.b"));
        let pre = tape.matmul(pooled, w)?;
        let pre = tape.add(pre, b)?;
        states.push(tape.tanh(pre)?);
    }
    Ok(EncoderInit {
        enc: [states[0], states[1], states[2], states[3]],
        dec: states[4],
    })
}

/// Run one GRU direction over a step sequence with state carry-through
/// on padding: h_t = h_{t−1} + m_t ∘ (GRU(x_t, h_{t−1}) − h_{t−1}).
fn run_direction(
    tape: &mut Tape,
    gru: &GruVars,
    inputs: &[Var],
    step_masks: &[Var],
    init: Var,
    hidden: usize,
    reverse: bool,
) -> Result<Vec<Var>> {
    let order: Vec<usize> = if reverse {
        (0..inputs.len()).rev().collect()
    } else {
        (0..inputs.len()).collect()
    };
    let mut h = init;
    let mut out = vec![init; inputs.len()];
    for t in order {
        let fresh = gru_step(tape, gru, inputs[t], h, hidden)?;
        let delta = tape.sub(fresh, h)?;
        let gated = tape.mul(delta, step_masks[t])?;
        h = tape.add(h, gated)?;
        out[t] = h;
    }
    Ok(out)
}

/// Encode a padded id batch into per-step annotations (T entries of
/// B×2·hidden). Padded positions carry exactly zero annotations; when
/// `training`, source embeddings get the embedding dropout and the
/// annotations the encoder-output dropout.
pub fn encode_source<R: Rng>(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    source: &[Vec<usize>],
    source_mask: &[Vec<f64>],
    init: Option<&EncoderInit>,
    training: bool,
    rng: &mut R,
) -> Result<Vec<Var>> {
    let batch = source.len();
    let t_len = source.first().map_or(0, Vec::len);
    if batch == 0 || t_len == 0 {
        return Err(Error::contract("encode_source on an empty sequence"));
    }
    let src_emb = bound.var("src_emb");
    let hidden = cfg.hidden;

    // per-step embedded columns and padding carry masks
    let mut embedded = Vec::with_capacity(t_len);
    let mut carry = Vec::with_capacity(t_len);
    let mut ann_mask = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let ids: Vec<usize> = (0..batch).map(|b| source[b][t]).collect();
        let emb = tape.embedding_lookup(src_emb, &ids)?;
        let emb = tape.dropout(emb, cfg.dropout_src_emb, training, rng)?;
        embedded.push(emb);
        let col: Vec<f64> = (0..batch).map(|b| source_mask[b][t]).collect();
        carry.push(tape.constant(expand_column(&col, hidden)));
        ann_mask.push(tape.constant(expand_column(&col, cfg.ann_dim())));
    }

    let zeros = tape.constant(Tensor::zeros(&[batch, hidden]));
    let inits = match init {
        Some(i) => i.enc,
        None => [zeros; 4],
    };

    let l1f = GruVars::named(bound, "enc.l1.fwd");
    let l1b = GruVars::named(bound, "enc.l1.bwd");
    let fwd = run_direction(tape, &l1f, &embedded, &carry, inits[0], hidden, false)?;
    let bwd = run_direction(tape, &l1b, &embedded, &carry, inits[1], hidden, true)?;
    let mut layer1 = Vec::with_capacity(t_len);
    for t in 0..t_len {
        layer1.push(tape.concat(&[fwd[t], bwd[t]], 1)?);
    }

    let l2f = GruVars::named(bound, "enc.l2.fwd");
    let l2b = GruVars::named(bound, "enc.l2.bwd");
    let fwd2 = run_direction(tape, &l2f, &layer1, &carry, inits[2], hidden, false)?;
    let bwd2 = run_direction(tape, &l2b, &layer1, &carry, inits[3], hidden, true)?;

    let mut annotations = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let ann = tape.concat(&[fwd2[t], bwd2[t]], 1)?;
        let ann = tape.mul(ann, ann_mask[t])?; // zero padded rows
        let ann = tape.dropout(ann, cfg.dropout_enc_out, training, rng)?;
        annotations.push(ann);
    }
    Ok(annotations)
}

fn expand_column(col: &[f64], width: usize) -> Tensor {
    let mut data = Vec::with_capacity(col.len() * width);
    for &v in col {
        data.extend(std::iter::repeat(v).take(width));
    }
    Tensor::new(vec![col.len(), width], data).expect("mask shape")
}

/// Keys with their precomputed U-projections and optional mask bias for
/// one attention head.
pub struct AttentionPrep {
    pub keys: Vec<Var>,
    pub keys_u: Vec<Var>,
    pub mask_bias: Option<Var>,
    pub key_dim: usize,
}

impl AttentionPrep {
    /// Project `keys` (each B×key_dim) through `u` [key_dim×attn]. The
    /// optional mask has one row per batch entry; a row with no real
    /// positions is a contract error.
    pub fn new(
        tape: &mut Tape,
        u: Var,
        keys: Vec<Var>,
        mask: Option<&[Vec<f64>]>,
        key_dim: usize,
    ) -> Result<AttentionPrep> {
        let keys_u = keys
            .iter()
            .map(|&k| tape.matmul(k, u))
            .collect::<Result<Vec<_>>>()?;
        let mask_bias = match mask {
            None => None,
            Some(rows) => {
                let t = keys.len();
                let mut data = Vec::with_capacity(rows.len() * t);
                for (b, row) in rows.iter().enumerate() {
                    if row[..t].iter().all(|&m| m == 0.0) {
                        return Err(Error::Contract(format!(
                            "attention over sample {b}: every position is masked"
                        )));
                    }
                    data.extend(row[..t].iter().map(|&m| if m == 0.0 { MASK_BIAS } else { 0.0 }));
                }
                Some(tape.constant(Tensor::new(vec![rows.len(), t], data)?))
            }
        };
        Ok(AttentionPrep {
            keys,
            keys_u,
            mask_bias,
            key_dim,
        })
    }
}

/// MLP attention: scores eᵢ = vᵀ tanh(W·query + U·keyᵢ), masked softmax,
/// context = Σ αᵢ·keyᵢ. Returns (context B×key_dim, weights B×T).
pub fn attend(
    tape: &mut Tape,
    w: Var,
    v: Var,
    prep: &AttentionPrep,
    query: Var,
) -> Result<(Var, Var)> {
    let qw = tape.matmul(query, w)?;
    let mut scores = Vec::with_capacity(prep.keys_u.len());
    for &ku in &prep.keys_u {
        let pre = tape.add(qw, ku)?;
        let act = tape.tanh(pre)?;
        scores.push(tape.matmul(act, v)?);
    }
    let mut scores = tape.concat(&scores, 1)?;
    if let Some(bias) = prep.mask_bias {
        scores = tape.add(scores, bias)?;
    }
    let weights = tape.softmax(scores, 1)?;

    let ones = tape.constant(Tensor::row(vec![1.0; prep.key_dim]));
    let mut context: Option<Var> = None;
    for (t, &key) in prep.keys.iter().enumerate() {
        let alpha = tape.narrow(weights, 1, t, 1)?;
        let spread = tape.matmul(alpha, ones)?;
        let term = tape.mul(spread, key)?;
        context = Some(match context {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok((context.expect("at least one key"), weights))
}

/// Combine the textual and visual contexts per the fusion kind. NMT and
/// INIT pass the text context through unchanged (INIT fuses at state
/// initialization); DIRECT projects the concatenation; HIER projects
/// both into the annotation space and attends over the two rows.
pub fn fuse(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    query: Var,
    c_text: Var,
    c_img: Option<Var>,
) -> Result<Var> {
    match cfg.fusion {
        FusionKind::Nmt | FusionKind::Init => Ok(c_text),
        FusionKind::Direct => {
            let c_img = c_img.ok_or_else(|| {
                Error::contract("DIRECT fusion needs an image context")
            })?;
            let both = tape.concat(&[c_text, c_img], 1)?;
            tape.matmul(both, bound.var("fuse.direct.w"))
        }
        FusionKind::Hier => {
            let c_img = c_img.ok_or_else(|| {
                Error::contract("HIER fusion needs an image context")
            })?;
            let pt = tape.matmul(c_text, bound.var("fuse.hier.proj_text"))?;
            let pi = tape.matmul(c_img, bound.var("fuse.hier.proj_img"))?;
            let prep = AttentionPrep::new(
                tape,
                bound.var("att.hier.u"),
                vec![pt, pi],
                None,
                cfg.ann_dim(),
            )?;
            let (ctx, _w) = attend(
                tape,
                bound.var("att.hier.w"),
                bound.var("att.hier.v"),
                &prep,
                query,
            )?;
            Ok(ctx)
        }
    }
}

/// Everything a decoder needs that is fixed across steps.
pub struct DecoderSetup {
    pub text: AttentionPrep,
    pub vis: Option<AttentionPrep>,
    /// Transposed target embedding for the tied readout projection.
    tgt_emb_t: Var,
    pub init_state: Var,
    pub batch: usize,
}

/// Build the per-batch decoder context: attention preps over the
/// annotations and (for DIRECT/HIER) over the mapped feature rows, plus
/// the initial decoder state.
pub fn prepare_decoder(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    annotations: Vec<Var>,
    source_mask: &[Vec<f64>],
    features: Option<&FeatureSet>,
    mapped_rows: &[usize],
    init: Option<&EncoderInit>,
) -> Result<DecoderSetup> {
    let batch = source_mask.len();
    let text = AttentionPrep::new(
        tape,
        bound.var("att.text.u"),
        annotations,
        Some(source_mask),
        cfg.ann_dim(),
    )?;

    let vis = if cfg.fusion.uses_visual_attention() {
        let fs = features.ok_or_else(|| {
            Error::contract("DIRECT/HIER fusion needs a feature set")
        })?;
        if fs.layout() != FeatureLayout::Spatial {
            return Err(Error::contract(
                "visual attention needs spatial features (got pooled)",
            ));
        }
        if fs.positions() != cfg.feat_positions || fs.channels() != cfg.feat_channels {
            return Err(Error::Config(format!(
                "feature geometry {}×{} does not match config {}×{}",
                fs.channels(),
                fs.positions(),
                cfg.feat_channels,
                cfg.feat_positions
            )));
        }
        let mut keys = Vec::with_capacity(fs.positions());
        for p in 0..fs.positions() {
            let mut data = Vec::with_capacity(batch * fs.channels());
            for &row in mapped_rows {
                data.extend(fs.position_vector(row, p));
            }
            keys.push(tape.constant(Tensor::new(vec![batch, fs.channels()], data)?));
        }
        Some(AttentionPrep::new(
            tape,
            bound.var("att.img.u"),
            keys,
            None,
            cfg.feat_channels,
        )?)
    } else {
        None
    };

    let init_state = match init {
        Some(i) => i.dec,
        None => tape.constant(Tensor::zeros(&[batch, cfg.hidden])),
    };
    let tgt_emb_t = tape.transpose(bound.var("tgt_emb"))?;
    Ok(DecoderSetup {
        text,
        vis,
        tgt_emb_t,
        init_state,
        batch,
    })
}

pub struct StepOutput {
    pub logits: Var,
    pub state: Var,
    pub attn_text: Var,
    pub attn_img: Option<Var>,
}

/// One conditional-GRU decoder step: GRU₁ advances on the previous
/// token's embedding, attention runs off the intermediate state, GRU₂
/// consumes the fused context, and the deep-output readout ties the
/// logits to the target embedding.
pub fn decoder_step<R: Rng>(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    setup: &DecoderSetup,
    prev_ids: &[usize],
    state: Var,
    training: bool,
    rng: &mut R,
) -> Result<StepOutput> {
    let emb = tape.embedding_lookup(bound.var("tgt_emb"), prev_ids)?;
    let gru1 = GruVars::named(bound, "dec.gru1");
    let s_mid = gru_step(tape, &gru1, emb, state, cfg.hidden)?;

    let (c_text, attn_text) = attend(
        tape,
        bound.var("att.text.w"),
        bound.var("att.text.v"),
        &setup.text,
        s_mid,
    )?;
    let (c_img, attn_img) = match &setup.vis {
        Some(prep) => {
            let (c, w) = attend(
                tape,
                bound.var("att.img.w"),
                bound.var("att.img.v"),
                prep,
                s_mid,
            )?;
            (Some(c), Some(w))
        }
        None => (None, None),
    };
    let context = fuse(tape, bound, cfg, s_mid, c_text, c_img)?;

    let gru2 = GruVars::named(bound, "dec.gru2");
    let s_new = gru_step(tape, &gru2, context, s_mid, cfg.hidden)?;

    // deep output: r = tanh(W_s·s + W_e·emb + W_c·context)
    let rs = tape.matmul(s_new, bound.var("readout.ws"))?;
    let re = tape.matmul(emb, bound.var("readout.we"))?;
    let rc = tape.matmul(context, bound.var("readout.wc"))?;
    let sum = tape.add(rs, re)?;
    let sum = tape.add(sum, rc)?;
    let r = tape.tanh(sum)?;
    let r = tape.dropout(r, cfg.dropout_dec_out, training, rng)?;

    let logits = tape.matmul(r, setup.tgt_emb_t)?;
    let logits = tape.add(logits, bound.var("out_bias"))?;
    Ok(StepOutput {
        logits,
        state: s_new,
        attn_text,
        attn_img,
    })
}

/// Teacher-forced loss of one padded batch: mean masked cross-entropy
/// over all target positions. `congruence_map` routes image indices to
/// feature rows; NMT never touches the features.
pub fn forward_loss<R: Rng>(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    batch: &Batch,
    features: Option<&FeatureSet>,
    congruence_map: &[usize],
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let mapped_rows: Vec<usize> = if cfg.fusion == FusionKind::Nmt {
        Vec::new()
    } else {
        batch
            .image_indices
            .iter()
            .map(|&i| {
                congruence_map.get(i).copied().ok_or(Error::Index {
                    what: "image index",
                    index: i,
                    size: congruence_map.len(),
                })
            })
            .collect::<Result<_>>()?
    };

    let init = match cfg.fusion {
        FusionKind::Init => {
            let fs = features
                .ok_or_else(|| Error::contract("INIT fusion needs a feature set"))?;
            if fs.layout() != FeatureLayout::Pooled {
                return Err(Error::contract(
                    "INIT fusion needs pooled features (got spatial)",
                ));
            }
            let mut data = Vec::with_capacity(batch.size() * fs.channels());
            for &row in &mapped_rows {
                data.extend_from_slice(fs.row(row));
            }
            let pooled =
                tape.constant(Tensor::new(vec![batch.size(), fs.channels()], data)?);
            Some(init_states_from_pool5(tape, bound, pooled)?)
        }
        _ => None,
    };

    let annotations = encode_source(
        tape,
        bound,
        cfg,
        &batch.source,
        &batch.source_mask,
        init.as_ref(),
        training,
        rng,
    )?;
    let feats_for_attention = if cfg.fusion.uses_visual_attention() {
        features
    } else {
        None
    };
    let setup = prepare_decoder(
        tape,
        bound,
        cfg,
        annotations,
        &batch.source_mask,
        feats_for_attention,
        &mapped_rows,
        init.as_ref(),
    )?;

    let steps = batch.tgt_len().saturating_sub(1);
    if steps == 0 {
        return Err(Error::contract("target sequences need at least BOS + one token"));
    }
    let mut state = setup.init_state;
    let mut logit_blocks = Vec::with_capacity(steps);
    let mut targets = Vec::with_capacity(steps * batch.size());
    let mut mask = Vec::with_capacity(steps * batch.size());
    for t in 0..steps {
        let prev: Vec<usize> = (0..batch.size()).map(|b| batch.target[b][t]).collect();
        let out = decoder_step(tape, bound, cfg, &setup, &prev, state, training, rng)?;
        state = out.state;
        logit_blocks.push(out.logits);
        for b in 0..batch.size() {
            targets.push(batch.target[b][t + 1]);
            mask.push(batch.target_mask[b][t + 1]);
        }
    }
    let logits = tape.concat(&logit_blocks, 0)?;
    tape.masked_cross_entropy(logits, &targets, &mask)
}
