//! Greedy and length-synchronous beam decoding.

use super::Hypothesis;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::model::{
    decoder_step, encode_source, init_states_from_pool5, prepare_decoder, BoundParams,
    DecoderSetup, FusionKind, ModelConfig, ParameterSet,
};
use crate::tensor::{Tape, Tensor, Var};
use crate::text::{BOS_ID, EOS_ID};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default decode-length cap: 2×source length + 5.
pub fn default_max_len(source_len: usize) -> usize {
    2 * source_len + 5
}

/// Decodes sentences one at a time against a fixed model. Parameters
/// are bound to the internal tape once; per-sentence nodes are rolled
/// back afterwards.
pub struct Translator<'a> {
    cfg: &'a ModelConfig,
    tape: Tape,
    bound: BoundParams,
    mark: usize,
}

impl<'a> Translator<'a> {
    pub fn new(cfg: &'a ModelConfig, params: &ParameterSet) -> Translator<'a> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let mark = tape.len();
        Translator {
            cfg,
            tape,
            bound,
            mark,
        }
    }

    /// Argmax decoding from BOS until EOS or `max_len`; ties go to the
    /// lowest token id.
    pub fn greedy(
        &mut self,
        source: &[usize],
        features: Option<(&FeatureSet, usize)>,
        max_len: usize,
    ) -> Result<Hypothesis> {
        self.tape.truncate(self.mark);
        let setup = self.setup_sentence(source, features)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hyp = Hypothesis::empty(self.cfg.fusion.uses_visual_attention());
        let mut state = setup.init_state;
        let mut prev = BOS_ID;
        for _ in 0..max_len {
            let out = decoder_step(
                &mut self.tape,
                &self.bound,
                self.cfg,
                &setup,
                &[prev],
                state,
                false,
                &mut rng,
            )?;
            let logp = log_softmax_row(self.tape.value(out.logits).row_slice(0));
            let (token, lp) = argmax_lowest_id(&logp);
            hyp.push_step(
                token,
                lp,
                self.tape.value(out.attn_text).row_slice(0).to_vec(),
                out.attn_img
                    .map(|w| self.tape.value(w).row_slice(0).to_vec()),
            );
            state = out.state;
            prev = token;
            if token == EOS_ID {
                hyp.finished = true;
                break;
            }
        }
        self.tape.truncate(self.mark);
        Ok(hyp)
    }

    /// Length-synchronous beam search over summed log-probabilities (no
    /// length normalization). Finished hypotheses retire; the n-best
    /// (n = beam) come back sorted best-first.
    pub fn beam(
        &mut self,
        source: &[usize],
        features: Option<(&FeatureSet, usize)>,
        beam: usize,
        max_len: usize,
    ) -> Result<Vec<Hypothesis>> {
        if beam == 0 {
            return Err(Error::config("beam width must be at least 1"));
        }
        self.tape.truncate(self.mark);
        let setup = self.setup_sentence(source, features)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let with_img = self.cfg.fusion.uses_visual_attention();

        struct Alive {
            hyp: Hypothesis,
            state: Var,
        }
        let mut alive = vec![Alive {
            hyp: Hypothesis::empty(with_img),
            state: setup.init_state,
        }];
        let mut finished: Vec<Hypothesis> = Vec::new();

        for _ in 0..max_len {
            if alive.is_empty() {
                break;
            }
            // expand every alive hypothesis by every token
            struct Cand {
                parent: usize,
                token: usize,
                score: f64,
                lp: f64,
            }
            let mut cands: Vec<Cand> = Vec::with_capacity(alive.len() * self.cfg.tgt_vocab);
            let mut steps = Vec::with_capacity(alive.len());
            for (i, a) in alive.iter().enumerate() {
                let prev = a.hyp.tokens.last().copied().unwrap_or(BOS_ID);
                let out = decoder_step(
                    &mut self.tape,
                    &self.bound,
                    self.cfg,
                    &setup,
                    &[prev],
                    a.state,
                    false,
                    &mut rng,
                )?;
                let logp = log_softmax_row(self.tape.value(out.logits).row_slice(0));
                for (v, &lp) in logp.iter().enumerate() {
                    cands.push(Cand {
                        parent: i,
                        token: v,
                        score: a.hyp.log_prob + lp,
                        lp,
                    });
                }
                steps.push(out);
            }
            cands.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.parent.cmp(&b.parent))
                    .then(a.token.cmp(&b.token))
            });

            let mut next: Vec<Alive> = Vec::with_capacity(beam);
            for c in cands {
                if next.len() >= beam {
                    break;
                }
                let parent = &alive[c.parent];
                let step = &steps[c.parent];
                let mut hyp = parent.hyp.clone();
                hyp.push_step(
                    c.token,
                    c.lp,
                    self.tape.value(step.attn_text).row_slice(0).to_vec(),
                    step.attn_img
                        .map(|w| self.tape.value(w).row_slice(0).to_vec()),
                );
                if c.token == EOS_ID {
                    hyp.finished = true;
                    finished.push(hyp);
                } else {
                    next.push(Alive {
                        hyp,
                        state: step.state,
                    });
                }
            }
            alive = next;
        }

        finished.extend(alive.into_iter().map(|a| a.hyp));
        finished.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.tokens.cmp(&b.tokens))
        });
        finished.truncate(beam);
        self.tape.truncate(self.mark);
        if finished.is_empty() {
            return Err(Error::contract("beam search produced no hypotheses"));
        }
        Ok(finished)
    }

    fn setup_sentence(
        &mut self,
        source: &[usize],
        features: Option<(&FeatureSet, usize)>,
    ) -> Result<DecoderSetup> {
        if source.is_empty() {
            return Err(Error::contract("cannot decode an empty source"));
        }
        let src = vec![source.to_vec()];
        let mask = vec![vec![1.0; source.len()]];
        let mapped = features.map(|(_, row)| vec![row]).unwrap_or_default();

        let init = match self.cfg.fusion {
            FusionKind::Init => {
                let (fs, row) = features.ok_or_else(|| {
                    Error::contract("INIT decoding needs a pooled feature row")
                })?;
                let pooled = self
                    .tape
                    .constant(Tensor::row(fs.pooled_row(row)?.to_vec()));
                Some(init_states_from_pool5(&mut self.tape, &self.bound, pooled)?)
            }
            _ => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let annotations = encode_source(
            &mut self.tape,
            &self.bound,
            self.cfg,
            &src,
            &mask,
            init.as_ref(),
            false,
            &mut rng,
        )?;
        let fs_for_attn = if self.cfg.fusion.uses_visual_attention() {
            features.map(|(fs, _)| fs)
        } else {
            None
        };
        prepare_decoder(
            &mut self.tape,
            &self.bound,
            self.cfg,
            annotations,
            &mask,
            fs_for_attn,
            &mapped,
            init.as_ref(),
        )
    }
}

fn log_softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn argmax_lowest_id(logp: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in logp.iter().enumerate() {
        if v > logp[best] {
            best = i;
        }
    }
    (best, logp[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg(fusion: FusionKind, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            fusion,
            emb_dim: 8,
            hidden: 12,
            attn_dim: 12,
            dropout_src_emb: 0.3,
            dropout_enc_out: 0.3,
            dropout_dec_out: 0.3,
            src_vocab: 10,
            tgt_vocab,
            feat_channels: 8,
            feat_positions: 4,
        }
    }

    #[test]
    fn greedy_respects_max_len_of_one() {
        let cfg = toy_cfg(FusionKind::Nmt, 8);
        let params = ParameterSet::init(&cfg, 1).unwrap();
        let mut tr = Translator::new(&cfg, &params);
        let hyp = tr.greedy(&[5, 6, EOS_ID], None, 1).unwrap();
        assert_eq!(hyp.tokens.len(), 1);
    }

    #[test]
    fn greedy_is_deterministic() {
        let cfg = toy_cfg(FusionKind::Nmt, 8);
        let params = ParameterSet::init(&cfg, 2).unwrap();
        let mut tr = Translator::new(&cfg, &params);
        let a = tr.greedy(&[5, 6, 7, EOS_ID], None, 12).unwrap();
        let b = tr.greedy(&[5, 6, 7, EOS_ID], None, 12).unwrap();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.log_prob.to_bits(), b.log_prob.to_bits());
    }

    #[test]
    fn greedy_equals_beam_one() {
        for seed in 0..25u64 {
            let cfg = toy_cfg(FusionKind::Nmt, 9);
            let params = ParameterSet::init(&cfg, seed).unwrap();
            let mut tr = Translator::new(&cfg, &params);
            for src_seed in 0..8usize {
                let src = vec![4 + (src_seed % 5), 5 + (src_seed % 4), EOS_ID];
                let g = tr.greedy(&src, None, 10).unwrap();
                let b = tr.beam(&src, None, 1, 10).unwrap();
                assert_eq!(g.tokens, b[0].tokens, "seed {seed} src {src_seed}");
                assert!((g.log_prob - b[0].log_prob).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beam_score_dominates_greedy() {
        for seed in 0..20u64 {
            let cfg = toy_cfg(FusionKind::Nmt, 9);
            let params = ParameterSet::init(&cfg, 100 + seed).unwrap();
            let mut tr = Translator::new(&cfg, &params);
            let src = vec![4, 7, 5, EOS_ID];
            let g = tr.greedy(&src, None, 8).unwrap();
            let b = tr.beam(&src, None, 4, 8).unwrap();
            assert!(
                b[0].log_prob >= g.log_prob - 1e-12,
                "seed {seed}: beam {} < greedy {}",
                b[0].log_prob,
                g.log_prob
            );
        }
    }

    #[test]
    fn nbest_is_sorted_and_within_beam() {
        let cfg = toy_cfg(FusionKind::Nmt, 9);
        let params = ParameterSet::init(&cfg, 5).unwrap();
        let mut tr = Translator::new(&cfg, &params);
        let hyps = tr.beam(&[4, 5, EOS_ID], None, 6, 7).unwrap();
        assert!(hyps.len() <= 6);
        for w in hyps.windows(2) {
            assert!(w[0].log_prob >= w[1].log_prob);
        }
        // hypothesis invariant: log-prob is the exact sum of step scores
        for h in &hyps {
            let sum: f64 = h.step_log_probs.iter().sum();
            assert!((h.log_prob - sum).abs() < 1e-12);
            if h.finished {
                assert_eq!(h.tokens.last(), Some(&EOS_ID));
            }
        }
    }
}
