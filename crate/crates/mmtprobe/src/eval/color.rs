//! Per-sentence color accuracy over the color-deprived subset.

use super::MetricReport;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Target-language color lexicon: surface form → canonical class, so
/// inflected forms (bleu/bleue/bleus) conflate. File format is
/// `surface TAB class`, one per line, `#` comments allowed.
#[derive(Debug, Clone, Default)]
pub struct ColorLexicon {
    map: BTreeMap<String, String>,
}

impl ColorLexicon {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        ColorLexicon { map }
    }

    pub fn parse(text: &str) -> Result<ColorLexicon> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let surface = parts.next().unwrap().trim().to_lowercase();
            let class = parts
                .next()
                .ok_or_else(|| Error::Format {
                    offset: lineno as u64 + 1,
                    msg: "expected `surface<TAB>class` (offset is the line number)".into(),
                })?
                .trim()
                .to_uppercase();
            map.insert(surface, class);
        }
        Ok(ColorLexicon { map })
    }

    pub fn load(path: &Path) -> Result<ColorLexicon> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Canonical classes mentioned in a token sequence.
    pub fn classes_in(&self, tokens: &[String]) -> BTreeSet<String> {
        tokens
            .iter()
            .filter_map(|t| self.map.get(t.as_str()).cloned())
            .collect()
    }
}

/// Mean per-sentence color accuracy over sentences selected by
/// `deprived_mask` whose reference mentions at least one color:
/// |classes(hyp) ∩ classes(ref)| / |classes(ref)|.
pub fn color_accuracy(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    deprived_mask: &[bool],
    lexicon: &ColorLexicon,
) -> Result<MetricReport> {
    if hyps.len() != refs.len() || deprived_mask.len() != refs.len() {
        return Err(Error::Alignment(format!(
            "{} hypotheses, {} references, {} mask entries",
            hyps.len(),
            refs.len(),
            deprived_mask.len()
        )));
    }
    if lexicon.is_empty() {
        return Err(Error::contract("color accuracy needs a non-empty lexicon"));
    }
    let mut scores = Vec::new();
    for ((h, r), &selected) in hyps.iter().zip(refs).zip(deprived_mask) {
        if !selected {
            continue;
        }
        let ref_classes = lexicon.classes_in(r);
        if ref_classes.is_empty() {
            continue; // no reference colors: excluded
        }
        let hyp_classes = lexicon.classes_in(h);
        let hit = ref_classes.intersection(&hyp_classes).count();
        scores.push(hit as f64 / ref_classes.len() as f64);
    }
    if scores.is_empty() {
        return Err(Error::contract(
            "color accuracy selection is empty: no deprived sentence has reference colors",
        ));
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(MetricReport {
        metric: "color-acc".into(),
        corpus_score: mean,
        sentence_scores: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn lex() -> ColorLexicon {
        ColorLexicon::parse("bleu\tBLUE\nbleue\tBLUE\nbleus\tBLUE\nrouge\tRED\nblanc\tWHITE\n")
            .unwrap()
    }

    #[test]
    fn exact_color_match_scores_one() {
        let r = color_accuracy(
            &[toks("une robe bleue")],
            &[toks("la robe bleue")],
            &[true],
            &lex(),
        )
        .unwrap();
        assert_eq!(r.corpus_score, 1.0);
    }

    #[test]
    fn wrong_color_scores_zero() {
        let r = color_accuracy(
            &[toks("un mur blanc")],
            &[toks("un mur bleu")],
            &[true],
            &lex(),
        )
        .unwrap();
        assert_eq!(r.corpus_score, 0.0);
    }

    #[test]
    fn partial_set_ratio() {
        // ref {BLUE, RED}, hyp {RED} → 0.5
        let r = color_accuracy(
            &[toks("un chapeau rouge")],
            &[toks("un chapeau bleu et rouge")],
            &[true],
            &lex(),
        )
        .unwrap();
        assert_eq!(r.corpus_score, 0.5);
    }

    #[test]
    fn inflections_conflate_to_one_class() {
        let r = color_accuracy(
            &[toks("des murs bleus")],
            &[toks("un mur bleu")],
            &[true],
            &lex(),
        )
        .unwrap();
        assert_eq!(r.corpus_score, 1.0);
    }

    #[test]
    fn unselected_and_colorless_sentences_are_excluded() {
        let r = color_accuracy(
            &[toks("rouge"), toks("bleu"), toks("sans couleur")],
            &[toks("rouge"), toks("rouge"), toks("rien ici")],
            &[true, false, true],
            &lex(),
        )
        .unwrap();
        // only sentence 0 counts: sentence 1 unselected, sentence 2 has
        // no reference color
        assert_eq!(r.sentence_scores.len(), 1);
        assert_eq!(r.corpus_score, 1.0);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let err = color_accuracy(
            &[toks("bleu")],
            &[toks("rien")],
            &[true],
            &lex(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn adding_a_correct_color_never_lowers_the_score() {
        let refs = [toks("bleu et rouge"), toks("blanc")];
        let hyps = [toks("un rouge"), toks("rien")];
        for (h, r) in hyps.iter().zip(&refs) {
            let base = color_accuracy(
                std::slice::from_ref(h),
                std::slice::from_ref(r),
                &[true],
                &lex(),
            )
            .unwrap()
            .corpus_score;
            // append each missing correct color in turn
            for color in lex().classes_in(r) {
                let surface = match color.as_str() {
                    "BLUE" => "bleu",
                    "RED" => "rouge",
                    _ => "blanc",
                };
                let mut extended = h.clone();
                extended.push(surface.to_string());
                let after = color_accuracy(
                    &[extended],
                    std::slice::from_ref(r),
                    &[true],
                    &lex(),
                )
                .unwrap()
                .corpus_score;
                assert!(after >= base - 1e-15);
            }
        }
    }
}
