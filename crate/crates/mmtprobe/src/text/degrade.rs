//! Source-side input degradation: color deprivation, entity masking,
//! progressive masking. Every scheme preserves sentence length and never
//! touches the target side.

use crate::error::{Error, Result};
use crate::text::corpus::Corpus;
use crate::text::tokenizer::MASK_TOKEN;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

/// Default English color lexicon shipped with the crate, one word per
/// line.
pub const DEFAULT_COLOR_LEXICON: &str = include_str!("../../data/colors_en.txt");

/// Which degradation to apply, with its resources.
#[derive(Debug, Clone)]
pub enum DegradationSpec {
    None,
    Color { lexicon: BTreeSet<String> },
    Entity { annotations: EntityAnnotations },
    Progressive { k: usize },
}

impl DegradationSpec {
    /// Color deprivation with an explicit lexicon.
    pub fn color(lexicon: BTreeSet<String>) -> Result<Self> {
        if lexicon.is_empty() {
            return Err(Error::contract("color deprivation needs a non-empty lexicon"));
        }
        Ok(DegradationSpec::Color { lexicon })
    }

    /// Color deprivation with the built-in 20-term English lexicon.
    pub fn color_default() -> Self {
        DegradationSpec::Color {
            lexicon: parse_color_lexicon(DEFAULT_COLOR_LEXICON),
        }
    }

    /// Progressive masking; the experiment grid uses even k in [0, 30].
    pub fn progressive(k: usize) -> Result<Self> {
        if k % 2 != 0 || k > 30 {
            return Err(Error::Config(format!(
                "progressive masking expects even k in [0, 30], got {k}"
            )));
        }
        Ok(DegradationSpec::Progressive { k })
    }

    pub fn label(&self) -> String {
        match self {
            DegradationSpec::None => "none".into(),
            DegradationSpec::Color { .. } => "color".into(),
            DegradationSpec::Entity { .. } => "entity".into(),
            DegradationSpec::Progressive { k } => format!("progressive{k}"),
        }
    }
}

/// Per-sample token indices of visually depictable entity head nouns.
#[derive(Debug, Clone, Default)]
pub struct EntityAnnotations {
    by_sample: BTreeMap<usize, Vec<usize>>,
}

impl EntityAnnotations {
    pub fn new(by_sample: BTreeMap<usize, Vec<usize>>) -> Self {
        let by_sample = by_sample
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_unstable();
                v.dedup();
                (k, v)
            })
            .collect();
        EntityAnnotations { by_sample }
    }

    pub fn indices(&self, sample: usize) -> &[usize] {
        self.by_sample.get(&sample).map_or(&[], |v| v.as_slice())
    }

    /// TSV format: `sample-index TAB comma-separated token indices`.
    pub fn load_tsv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut by_sample = BTreeMap::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let sample: usize = parts
                .next()
                .unwrap()
                .trim()
                .parse()
                .map_err(|_| bad_tsv(path, lineno))?;
            let idx_part = parts.next().ok_or_else(|| bad_tsv(path, lineno))?;
            let mut indices = Vec::new();
            for piece in idx_part.split(',') {
                let piece = piece.trim();
                if piece.is_empty() {
                    continue;
                }
                indices.push(piece.parse().map_err(|_| bad_tsv(path, lineno))?);
            }
            by_sample.insert(sample, indices);
        }
        Ok(EntityAnnotations::new(by_sample))
    }
}

fn bad_tsv(path: &Path, lineno: usize) -> Error {
    Error::Format {
        offset: lineno as u64 + 1,
        msg: format!(
            "{}: expected `sample-index<TAB>i,j,...` (offset is the line number)",
            path.display()
        ),
    }
}

/// One color word per line; blank lines and `#` comments ignored.
pub fn parse_color_lexicon(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

pub fn load_color_lexicon(path: &Path) -> Result<BTreeSet<String>> {
    Ok(parse_color_lexicon(&std::fs::read_to_string(path)?))
}

/// Replace every token in the lexicon with `[v]`; length preserved.
pub fn apply_color_deprivation(tokens: &[String], lexicon: &BTreeSet<String>) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            if lexicon.contains(t.as_str()) {
                MASK_TOKEN.to_string()
            } else {
                t.clone()
            }
        })
        .collect()
}

/// Replace the tokens at `indices` with `[v]`; out-of-range indices are
/// annotation errors naming the sample.
pub fn apply_entity_masking(
    tokens: &[String],
    indices: &[usize],
    sample: usize,
) -> Result<Vec<String>> {
    let mut out = tokens.to_vec();
    for &i in indices {
        if i >= tokens.len() {
            return Err(Error::Annotation {
                sample,
                index: i,
                len: tokens.len(),
            });
        }
        out[i] = MASK_TOKEN.to_string();
    }
    Ok(out)
}

/// Replace every token at position ≥ k with `[v]`; `k ≥ len` leaves the
/// sentence unchanged.
pub fn apply_progressive_masking(tokens: &[String], k: usize) -> Vec<String> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i >= k {
                MASK_TOKEN.to_string()
            } else {
                t.clone()
            }
        })
        .collect()
}

/// Masking statistics over one degraded split.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationStats {
    pub total_tokens: usize,
    pub masked_tokens: usize,
    pub affected_sentences: usize,
    /// Per-sample flag: did this sentence change?
    pub affected: Vec<bool>,
}

impl DegradationStats {
    pub fn masked_fraction(&self) -> f64 {
        if self.total_tokens == 0 {
            0.0
        } else {
            self.masked_tokens as f64 / self.total_tokens as f64
        }
    }
}

/// Degrade every source sentence of `corpus` under `spec`; targets are
/// untouched. Returns the transformed corpus and its statistics.
pub fn degrade_corpus(corpus: &Corpus, spec: &DegradationSpec) -> Result<(Corpus, DegradationStats)> {
    let mut out = corpus.clone();
    let mut total = 0;
    let mut masked = 0;
    let mut affected = Vec::with_capacity(corpus.len());
    for (i, sample) in out.samples.iter_mut().enumerate() {
        total += sample.source.len();
        let degraded = match spec {
            DegradationSpec::None => sample.source.clone(),
            DegradationSpec::Color { lexicon } => {
                apply_color_deprivation(&sample.source, lexicon)
            }
            DegradationSpec::Entity { annotations } => {
                apply_entity_masking(&sample.source, annotations.indices(i), i)?
            }
            DegradationSpec::Progressive { k } => {
                apply_progressive_masking(&sample.source, *k)
            }
        };
        let changed = degraded
            .iter()
            .zip(&sample.source)
            .filter(|(d, s)| d != s)
            .count();
        masked += changed;
        affected.push(changed > 0);
        sample.source = degraded;
    }
    let stats = DegradationStats {
        total_tokens: total,
        masked_tokens: masked,
        affected_sentences: affected.iter().filter(|&&a| a).count(),
        affected,
    };
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::corpus::ParallelSample;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    const LADY: &str = "a lady in a blue dress singing";

    #[test]
    fn color_deprivation_masks_the_blue_dress() {
        let lex: BTreeSet<String> = ["blue".to_string()].into();
        assert_eq!(
            apply_color_deprivation(&toks(LADY), &lex),
            toks("a lady in a [v] dress singing")
        );
    }

    #[test]
    fn color_deprivation_without_color_words_is_identity() {
        let lex = parse_color_lexicon(DEFAULT_COLOR_LEXICON);
        let t = toks("a lady singing");
        assert_eq!(apply_color_deprivation(&t, &lex), t);
    }

    #[test]
    fn color_deprivation_masks_every_occurrence() {
        let lex: BTreeSet<String> = ["red".to_string()].into();
        assert_eq!(
            apply_color_deprivation(&toks("red red herring"), &lex),
            toks("[v] [v] herring")
        );
    }

    #[test]
    fn default_lexicon_has_twenty_terms() {
        assert_eq!(parse_color_lexicon(DEFAULT_COLOR_LEXICON).len(), 20);
    }

    #[test]
    fn entity_masking_hits_listed_indices() {
        assert_eq!(
            apply_entity_masking(&toks(LADY), &[1, 5], 0).unwrap(),
            toks("a [v] in a blue [v] singing")
        );
    }

    #[test]
    fn entity_masking_empty_and_full() {
        let t = toks(LADY);
        assert_eq!(apply_entity_masking(&t, &[], 0).unwrap(), t);
        let all: Vec<usize> = (0..t.len()).collect();
        assert!(apply_entity_masking(&t, &all, 0)
            .unwrap()
            .iter()
            .all(|x| x == MASK_TOKEN));
    }

    #[test]
    fn entity_masking_reports_sample_and_index() {
        let err = apply_entity_masking(&toks("a b"), &[7], 42).unwrap_err();
        match err {
            Error::Annotation { sample, index, len } => {
                assert_eq!((sample, index, len), (42, 7, 2));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn progressive_masking_table_rows() {
        assert_eq!(
            apply_progressive_masking(&toks(LADY), 4),
            toks("a lady in a [v] [v] [v]")
        );
        assert_eq!(
            apply_progressive_masking(&toks(LADY), 2),
            toks("a lady [v] [v] [v] [v] [v]")
        );
        assert_eq!(
            apply_progressive_masking(&toks(LADY), 0),
            toks("[v] [v] [v] [v] [v] [v] [v]")
        );
    }

    #[test]
    fn progressive_masking_beyond_length_is_identity() {
        let t = toks(LADY);
        assert_eq!(apply_progressive_masking(&t, 100), t);
    }

    #[test]
    fn progressive_spec_validates_k() {
        assert!(DegradationSpec::progressive(4).is_ok());
        assert!(DegradationSpec::progressive(3).is_err());
        assert!(DegradationSpec::progressive(32).is_err());
    }

    fn corpus_of(sources: &[&str]) -> Corpus {
        Corpus {
            samples: sources
                .iter()
                .map(|s| ParallelSample {
                    source: toks(s),
                    target: toks("une phrase"),
                    image_index: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn degrade_none_is_identity_with_zero_stats() {
        let c = corpus_of(&[LADY, "two dogs"]);
        let (out, stats) = degrade_corpus(&c, &DegradationSpec::None).unwrap();
        assert_eq!(out.samples, c.samples);
        assert_eq!(stats.masked_tokens, 0);
        assert_eq!(stats.masked_fraction(), 0.0);
        assert_eq!(stats.affected_sentences, 0);
    }

    #[test]
    fn degrade_corpus_counts_exactly() {
        let c = corpus_of(&["a blue and red hat", "no colors"]);
        let spec = DegradationSpec::color_default();
        let (out, stats) = degrade_corpus(&c, &spec).unwrap();
        assert_eq!(out.samples[0].source, toks("a [v] and [v] hat"));
        assert_eq!(stats.total_tokens, 7);
        assert_eq!(stats.masked_tokens, 2);
        assert_eq!(stats.masked_fraction(), 2.0 / 7.0);
        assert_eq!(stats.affected, vec![true, false]);
        // targets untouched
        assert_eq!(out.samples[0].target, c.samples[0].target);
    }

    #[test]
    fn degradation_is_idempotent_and_length_preserving() {
        let c = corpus_of(&[LADY, "a red bird", "three tall trees"]);
        let ann = EntityAnnotations::new(
            [(0usize, vec![1usize, 5]), (1, vec![2]), (2, vec![1, 2])].into(),
        );
        let specs = [
            DegradationSpec::color_default(),
            DegradationSpec::Entity { annotations: ann },
            DegradationSpec::progressive(2).unwrap(),
        ];
        for spec in &specs {
            let (once, stats1) = degrade_corpus(&c, spec).unwrap();
            for (a, b) in once.samples.iter().zip(&c.samples) {
                assert_eq!(a.source.len(), b.source.len(), "{}", spec.label());
            }
            let (twice, stats2) = degrade_corpus(&once, spec).unwrap();
            assert_eq!(once.samples, twice.samples, "{}", spec.label());
            assert_eq!(stats2.masked_tokens, 0, "{}", spec.label());
            assert!(stats1.masked_tokens > 0);
        }
    }

    #[test]
    fn progressive_masks_are_monotone_in_k() {
        let t = toks(LADY);
        for j in (0..=30).step_by(2) {
            for k in (j..=30).step_by(2) {
                let dj = apply_progressive_masking(&t, j);
                let dk = apply_progressive_masking(&t, k);
                for (a, b) in dj.iter().zip(&dk) {
                    // every position masked at k is masked at j ≤ k
                    if b == MASK_TOKEN {
                        assert_eq!(a, MASK_TOKEN, "j={j} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn annotations_tsv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.tsv");
        std::fs::write(&path, "0\t1,5\n2\t0\n").unwrap();
        let ann = EntityAnnotations::load_tsv(&path).unwrap();
        assert_eq!(ann.indices(0), &[1, 5]);
        assert_eq!(ann.indices(1), &[] as &[usize]);
        assert_eq!(ann.indices(2), &[0]);
    }
}
