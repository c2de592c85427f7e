//! Inference probes: greedy/beam decoding, corpus translation under
//! congruence modes, and attention export.

mod search;
mod translate;

pub use search::{default_max_len, Translator};
pub use translate::{export_attention, translate_corpus, TranslateOptions};

/// One decoded candidate. `tokens` are generated target ids (BOS
/// excluded); a finished hypothesis ends with EOS. Attention rows are
/// recorded per emitted token.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    pub step_log_probs: Vec<f64>,
    /// Per step: weights over source positions.
    pub attn_text: Vec<Vec<f64>>,
    /// Per step: weights over image grid cells (visual-attention models
    /// only).
    pub attn_img: Option<Vec<Vec<f64>>>,
}

impl Hypothesis {
    pub(crate) fn empty(with_img: bool) -> Hypothesis {
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
            step_log_probs: Vec::new(),
            attn_text: Vec::new(),
            attn_img: if with_img { Some(Vec::new()) } else { None },
        }
    }

    pub(crate) fn push_step(
        &mut self,
        token: usize,
        log_prob: f64,
        attn_text: Vec<f64>,
        attn_img: Option<Vec<f64>>,
    ) {
        self.tokens.push(token);
        self.log_prob += log_prob;
        self.step_log_probs.push(log_prob);
        self.attn_text.push(attn_text);
        if let (Some(all), Some(row)) = (self.attn_img.as_mut(), attn_img) {
            all.push(row);
        }
    }

    /// Generated ids without the terminating EOS.
    pub fn surface_ids(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&last, rest)) if last == crate::text::EOS_ID => rest,
            _ => &self.tokens,
        }
    }
}
