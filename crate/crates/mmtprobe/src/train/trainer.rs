//! Epoch loop: batched teacher forcing, ADAM with clipping, per-epoch
//! dev decoding, best-checkpoint tracking, patience-based early stop.

use super::adam::{adam_step, clip_global_norm, gather_grads, OptimState};
use super::TrainConfig;
use crate::decode::{default_max_len, Translator};
use crate::error::{Error, Result};
use crate::eval::meteor_lite;
use crate::features::{remap_order, CongruenceMode, FeatureSet};
use crate::model::{forward_loss, Checkpoint, ModelConfig, ParameterSet};
use crate::tensor::Tape;
use crate::text::{batches, encode_corpus, stitch_hyphens, Corpus, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_score: f64,
    pub is_best: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// `epoch,train_loss,dev_score,best` rows.
    pub fn write_history(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "epoch,train_loss,dev_score,best")?;
        for r in &self.history {
            writeln!(
                f,
                "{},{:.8},{:.8},{}",
                r.epoch,
                r.train_loss,
                r.dev_score,
                if r.is_best { 1 } else { 0 }
            )?;
        }
        Ok(())
    }
}

/// Strict-improvement early stopping.
struct StopRule {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

impl StopRule {
    fn new(patience: usize) -> StopRule {
        StopRule {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
        }
    }

    /// Record a score; true when it strictly improves on the best.
    fn observe(&mut self, epoch: usize, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    fn should_stop(&self, epoch: usize) -> bool {
        epoch - self.best_epoch >= self.patience
    }
}

/// Train one model. Corpora arrive already degraded (train and dev under
/// the same spec). `train_congruence` is congruent for normal training
/// and blinded for the blinding probe; blinding also applies to the dev
/// decode. The whole run is a pure function of (data, configs, seed).
#[allow(clippy::too_many_arguments)]
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    train_features: Option<&FeatureSet>,
    dev_features: Option<&FeatureSet>,
    train_congruence: CongruenceMode,
    history_path: Option<&Path>,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if train_corpus.is_empty() || dev_corpus.is_empty() {
        return Err(Error::contract("training needs non-empty train and dev corpora"));
    }

    let needs_features = model_cfg.fusion.required_layout().is_some();
    let train_map = if needs_features {
        let fs = train_features
            .ok_or_else(|| Error::contract("this fusion kind needs training features"))?;
        if fs.rows() < train_corpus.len() {
            return Err(Error::Config(format!(
                "training features have {} rows for {} sentences",
                fs.rows(),
                train_corpus.len()
            )));
        }
        remap_order(train_congruence, train_corpus.len())?
    } else {
        Vec::new()
    };
    let dev_map = if needs_features {
        remap_order(train_congruence, dev_corpus.len())?
    } else {
        Vec::new()
    };

    let train_samples = encode_corpus(train_corpus, src_vocab, tgt_vocab);
    let dev_samples = encode_corpus(dev_corpus, src_vocab, tgt_vocab);
    let dev_refs: Vec<Vec<String>> = dev_corpus
        .samples
        .iter()
        .map(|s| stitch_hyphens(&s.target))
        .collect();

    let mut params = ParameterSet::init(model_cfg, train_cfg.seed)?;
    let mut optim = OptimState::new(&params);
    let mut rule = StopRule::new(train_cfg.patience);
    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut stopped_early = false;

    for epoch in 1..=train_cfg.max_epochs {
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
        dropout_rng.set_stream(1000 + epoch as u64);
        let mut loss_sum = 0.0;
        let epoch_batches = batches(&train_samples, train_cfg.batch_size, train_cfg.seed, epoch);
        let n_batches = epoch_batches.len();
        for (bi, batch) in epoch_batches.into_iter().enumerate() {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let loss = forward_loss(
                &mut tape,
                &bound,
                model_cfg,
                &batch,
                train_features,
                &train_map,
                true,
                &mut dropout_rng,
            )?;
            let loss_val = tape.value(loss).scalar_value();
            if !loss_val.is_finite() {
                let norms: Vec<String> = params
                    .iter()
                    .map(|(n, t)| format!("{n}={:.3e}", t.l2_norm()))
                    .collect();
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    detail: format!("parameter norms: {}", norms.join(" ")),
                });
            }
            loss_sum += loss_val;
            tape.backward(loss)?;
            let mut grads = gather_grads(&tape, &bound);
            drop(tape);
            clip_global_norm(&mut grads, train_cfg.clip_norm);
            adam_step(&mut params, &grads, &mut optim, train_cfg);
        }
        let train_loss = loss_sum / n_batches as f64;

        let dev_score = evaluate_dev(
            model_cfg,
            &params,
            &dev_samples,
            &dev_refs,
            tgt_vocab,
            dev_features,
            &dev_map,
            train_cfg.beam_for_dev,
        )?;
        let is_best = rule.observe(epoch, dev_score);
        if is_best {
            best_params = params.clone();
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            dev_score,
            is_best,
        });
        if rule.should_stop(epoch) {
            stopped_early = true;
            break;
        }
    }

    let outcome = TrainOutcome {
        checkpoint: Checkpoint {
            config: model_cfg.clone(),
            params: best_params,
            src_vocab_hash: src_vocab.content_hash(),
            tgt_vocab_hash: tgt_vocab.content_hash(),
        },
        best_epoch: rule.best_epoch,
        best_score: rule.best,
        history,
        stopped_early,
    };
    if let Some(path) = history_path {
        outcome.write_history(path)?;
    }
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_dev(
    model_cfg: &ModelConfig,
    params: &ParameterSet,
    dev_samples: &[crate::text::EncodedSample],
    dev_refs: &[Vec<String>],
    tgt_vocab: &Vocabulary,
    dev_features: Option<&FeatureSet>,
    dev_map: &[usize],
    beam: usize,
) -> Result<f64> {
    let needs_features = model_cfg.fusion.required_layout().is_some();
    let mut translator = Translator::new(model_cfg, params);
    let mut hyp_tokens = Vec::with_capacity(dev_samples.len());
    for s in dev_samples {
        let feat = if needs_features {
            dev_features.map(|fs| (fs, dev_map[s.image_index]))
        } else {
            None
        };
        let max_len = default_max_len(s.source.len());
        let hyp = if beam == 1 {
            translator.greedy(&s.source, feat, max_len)?
        } else {
            translator
                .beam(&s.source, feat, beam, max_len)?
                .into_iter()
                .next()
                .expect("non-empty n-best")
        };
        let tokens: Vec<String> = hyp
            .surface_ids()
            .iter()
            .map(|&id| tgt_vocab.token(id).to_string())
            .collect();
        hyp_tokens.push(stitch_hyphens(&tokens));
    }
    Ok(meteor_lite(&hyp_tokens, dev_refs)?.corpus_score)
}
