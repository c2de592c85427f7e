//! METEOR-lite: exact-match unigram METEOR with the standard parameters
//! (α = 0.9, β = 3, γ = 0.5) and no stemming/synonym/paraphrase stages.
//! Absolute values therefore differ from the official scorer.
//!
//! The aligner maximizes matches first (forced by per-token counts) and
//! then minimizes chunks with a beam search over partial alignments,
//! which is exact for the sentence lengths this corpus sees.

use super::MetricReport;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap};

const ALPHA: f64 = 0.9;
const BETA: f64 = 3.0;
const GAMMA: f64 = 0.5;
const ALIGN_BEAM: usize = 64;

/// Sufficient statistics of one aligned sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorStats {
    pub matches: usize,
    pub chunks: usize,
    pub hyp_len: usize,
    pub ref_len: usize,
}

pub fn score_from_stats(s: &MeteorStats) -> f64 {
    if s.matches == 0 || s.hyp_len == 0 || s.ref_len == 0 {
        return 0.0;
    }
    let p = s.matches as f64 / s.hyp_len as f64;
    let r = s.matches as f64 / s.ref_len as f64;
    let f = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let frag = s.chunks as f64 / s.matches as f64;
    let penalty = GAMMA * frag.powf(BETA);
    f * (1.0 - penalty)
}

/// Align one sentence pair: maximum exact matches, then fewest chunks.
pub fn align(hyp: &[String], reference: &[String]) -> MeteorStats {
    let ref_counts: HashMap<&str, usize> =
        reference.iter().fold(HashMap::new(), |mut m, t| {
            *m.entry(t.as_str()).or_insert(0) += 1;
        m
    });
    let hyp_counts: HashMap<&str, usize> = hyp.iter().fold(HashMap::new(), |mut m, t| {
        *m.entry(t.as_str()).or_insert(0) += 1;
        m
    });
    // required matches per token type: min(count_hyp, count_ref)
    let mut required: HashMap<&str, usize> = HashMap::new();
    let mut total_matches = 0;
    for (tok, &hc) in &hyp_counts {
        if let Some(&rc) = ref_counts.get(tok) {
            let m = hc.min(rc);
            required.insert(tok, m);
            total_matches += m;
        }
    }
    if total_matches == 0 {
        return MeteorStats {
            matches: 0,
            chunks: 0,
            hyp_len: hyp.len(),
            ref_len: reference.len(),
        };
    }

    // hyp occurrences of a token may be skipped only while enough later
    // occurrences remain to reach the required match count
    let mut remaining_occurrences: HashMap<&str, usize> = hyp_counts.clone();

    // beam state: used ref positions, last matched (hyp, ref), chunks,
    // matches still required per token (tracked via skipped counts)
    #[derive(Clone)]
    struct State {
        used: Vec<u64>,
        last: Option<(usize, usize)>,
        chunks: usize,
        matched: usize,
        skipped: BTreeMap<String, usize>,
    }
    let words = (reference.len() + 63) / 64;
    let mut beam = vec![State {
        used: vec![0u64; words],
        last: None,
        chunks: 0,
        matched: 0,
        skipped: BTreeMap::new(),
    }];

    for (hi, tok) in hyp.iter().enumerate() {
        let need = required.get(tok.as_str()).copied().unwrap_or(0);
        let occ_left = remaining_occurrences
            .get_mut(tok.as_str())
            .expect("token counted");
        *occ_left -= 1;
        let occ_after = *occ_left;

        let mut next: Vec<State> = Vec::new();
        for st in &beam {
            let already = st.skipped.get(tok.as_str()).copied().unwrap_or(0);
            let matched_of_tok = hyp_counts[tok.as_str()] - occ_after - 1 - already;
            let still_needed = need.saturating_sub(matched_of_tok);
            // skipping is allowed if later occurrences can still cover
            // the requirement
            if need == 0 || occ_after >= still_needed {
                let mut s = st.clone();
                if need > 0 {
                    *s.skipped.entry(tok.clone()).or_insert(0) += 1;
                }
                next.push(s);
            }
            if still_needed > 0 {
                for (ri, rt) in reference.iter().enumerate() {
                    if rt != tok || st.used[ri / 64] >> (ri % 64) & 1 == 1 {
                        continue;
                    }
                    let mut s = st.clone();
                    s.used[ri / 64] |= 1 << (ri % 64);
                    let contiguous = matches!(s.last, Some((lh, lr)) if lh + 1 == hi && lr + 1 == ri);
                    if !contiguous {
                        s.chunks += 1;
                    }
                    s.last = Some((hi, ri));
                    s.matched += 1;
                    next.push(s);
                }
            }
        }
        // dedup identical (used, last, skipped) keeping fewest chunks,
        // then keep the most promising states
        next.sort_by(|a, b| {
            a.used
                .cmp(&b.used)
                .then(a.last.cmp(&b.last))
                .then_with(|| a.skipped.cmp(&b.skipped))
                .then(a.chunks.cmp(&b.chunks))
        });
        next.dedup_by(|a, b| a.used == b.used && a.last == b.last && a.skipped == b.skipped);
        next.sort_by(|a, b| a.chunks.cmp(&b.chunks).then(b.matched.cmp(&a.matched)));
        next.truncate(ALIGN_BEAM);
        beam = next;
    }

    let best = beam
        .iter()
        .filter(|s| s.matched == total_matches)
        .min_by_key(|s| s.chunks)
        .expect("a maximal matching always survives the beam");
    MeteorStats {
        matches: total_matches,
        chunks: best.chunks,
        hyp_len: hyp.len(),
        ref_len: reference.len(),
    }
}

pub fn sentence_score(hyp: &[String], reference: &[String]) -> f64 {
    score_from_stats(&align(hyp, reference))
}

/// Corpus METEOR-lite: the score formula applied to statistics summed
/// over all sentence pairs, plus per-sentence scores.
pub fn meteor_lite(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<MetricReport> {
    if hyps.len() != refs.len() {
        return Err(Error::Alignment(format!(
            "{} hypotheses vs {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut total = MeteorStats {
        matches: 0,
        chunks: 0,
        hyp_len: 0,
        ref_len: 0,
    };
    let mut sentence_scores = Vec::with_capacity(hyps.len());
    for (h, r) in hyps.iter().zip(refs) {
        let s = align(h, r);
        total.matches += s.matches;
        total.chunks += s.chunks;
        total.hyp_len += s.hyp_len;
        total.ref_len += s.ref_len;
        sentence_scores.push(score_from_stats(&s));
    }
    Ok(MetricReport {
        metric: "meteor-lite".into(),
        corpus_score: score_from_stats(&total),
        sentence_scores,
    })
}
