//! Corpus BLEU (n ≤ 4, uniform weights) with add-ε smoothing on zero
//! n-gram counts.

use super::MetricReport;
use crate::error::{Error, Result};
use std::collections::HashMap;

const MAX_N: usize = 4;
const SMOOTH_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    clipped: [usize; MAX_N],
    total: [usize; MAX_N],
    hyp_len: usize,
    ref_len: usize,
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut map = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *map.entry(w).or_insert(0) += 1;
        }
    }
    map
}

fn pair_counts(hyp: &[String], reference: &[String]) -> Counts {
    let mut c = Counts {
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        ..Default::default()
    };
    for n in 1..=MAX_N {
        let refs = ngram_counts(reference, n);
        for (gram, count) in ngram_counts(hyp, n) {
            c.total[n - 1] += count;
            c.clipped[n - 1] += count.min(refs.get(gram).copied().unwrap_or(0));
        }
    }
    c
}

/// BLEU from accumulated counts. Orders with no hypothesis n-grams are
/// neutral (precision 1); zero clipped counts floor at ε.
fn bleu_from_counts(c: &Counts) -> f64 {
    if c.hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_N {
        let p = if c.total[n] == 0 {
            1.0
        } else if c.clipped[n] == 0 {
            SMOOTH_EPS / c.total[n] as f64
        } else {
            c.clipped[n] as f64 / c.total[n] as f64
        };
        log_sum += p.ln();
    }
    let precision = (log_sum / MAX_N as f64).exp();
    let bp = if c.hyp_len < c.ref_len {
        (1.0 - c.ref_len as f64 / c.hyp_len as f64).exp()
    } else {
        1.0
    };
    bp * precision
}

/// Corpus BLEU plus per-sentence scores (each sentence scored with the
/// same smoothed formula).
pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<MetricReport> {
    if hyps.len() != refs.len() {
        return Err(Error::Alignment(format!(
            "{} hypotheses vs {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut total = Counts::default();
    let mut sentence_scores = Vec::with_capacity(hyps.len());
    for (h, r) in hyps.iter().zip(refs) {
        let c = pair_counts(h, r);
        for n in 0..MAX_N {
            total.clipped[n] += c.clipped[n];
            total.total[n] += c.total[n];
        }
        total.hyp_len += c.hyp_len;
        total.ref_len += c.ref_len;
        sentence_scores.push(bleu_from_counts(&c));
    }
    Ok(MetricReport {
        metric: "bleu".into(),
        corpus_score: bleu_from_counts(&total),
        sentence_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_corpus_scores_one() {
        let c = vec![toks("the cat sat on the mat"), toks("a b")];
        let r = bleu(&c, &c).unwrap();
        assert!((r.corpus_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_hypotheses_hit_the_documented_floor() {
        let hyps = vec![toks("a b"), toks("c")];
        let refs = vec![toks("a b"), toks("c")];
        let r = bleu(&hyps, &refs).unwrap();
        // no 3-grams or 4-grams exist anywhere: those orders are neutral
        assert!((r.corpus_score - 1.0).abs() < 1e-12);
        // a zero CLIPPED count (mismatching bigrams) floors at ε instead
        let hyps = vec![toks("a x")];
        let refs = vec![toks("a b")];
        let r = bleu(&hyps, &refs).unwrap();
        assert!(r.corpus_score > 0.0 && r.corpus_score < 0.01);
    }

    #[test]
    fn hand_computed_three_pair_fixture() {
        // worked independently from the formula:
        //   pair 1: hyp == ref, 6 tokens
        //   pair 2: hyp "a quick brown fox", ref "the quick brown fox jumps"
        //   pair 3: hyp "hello world", ref "hello there world"
        // totals: p1 = 11/12, p2 = 7/9, p3 = 5/6, p4 = 3/4,
        //   hyp_len = 12, ref_len = 14 → BP = exp(1 − 14/12)
        let hyps = vec![
            toks("the cat sat on the mat"),
            toks("a quick brown fox"),
            toks("hello world"),
        ];
        let refs = vec![
            toks("the cat sat on the mat"),
            toks("the quick brown fox jumps"),
            toks("hello there world"),
        ];
        let expect = (1.0f64 - 14.0 / 12.0).exp()
            * ((11.0f64 / 12.0).ln() * 0.25
                + (7.0f64 / 9.0).ln() * 0.25
                + (5.0f64 / 6.0).ln() * 0.25
                + (3.0f64 / 4.0).ln() * 0.25)
                .exp();
        let r = bleu(&hyps, &refs).unwrap();
        assert!(
            (r.corpus_score - expect).abs() < 1e-9,
            "{} vs {expect}",
            r.corpus_score
        );
    }

    #[test]
    fn permutation_equivariant() {
        let hyps = vec![toks("a b c"), toks("d e f g"), toks("h")];
        let refs = vec![toks("a b x"), toks("d e f q"), toks("h")];
        let a = bleu(&hyps, &refs).unwrap().corpus_score;
        let hp = vec![hyps[1].clone(), hyps[2].clone(), hyps[0].clone()];
        let rp = vec![refs[1].clone(), refs[2].clone(), refs[0].clone()];
        let b = bleu(&hp, &rp).unwrap().corpus_score;
        assert_eq!(a, b);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(bleu(&[toks("a")], &[]).is_err());
    }
}
