//! Corpus translation under a congruence mode, with optional attention
//! export.

use super::{default_max_len, Hypothesis, Translator};
use crate::error::{Error, Result};
use crate::features::{remap_order, CongruenceMode, FeatureSet};
use crate::model::Checkpoint;
use crate::text::{encode_sample, stitch_hyphens, Corpus, Vocabulary};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct TranslateOptions {
    pub mode: CongruenceMode,
    pub beam: usize,
    /// Cap on decode length; `None` = 2×source length + 5.
    pub max_len: Option<usize>,
    /// Directory for per-sample attention CSVs.
    pub attn_dir: Option<std::path::PathBuf>,
}

impl Default for TranslateOptions {
    fn default() -> Self {
        TranslateOptions {
            mode: CongruenceMode::Congruent,
            beam: 12,
            max_len: None,
            attn_dir: None,
        }
    }
}

/// Decode every sentence of `corpus`, detokenize (hyphens stitched), and
/// write one sentence per line to `out_path`. Feature rows are resolved
/// through the congruence index map. Returns the decoded hypotheses in
/// corpus order.
pub fn translate_corpus(
    ckpt: &Checkpoint,
    corpus: &Corpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    features: Option<&FeatureSet>,
    opts: &TranslateOptions,
    out_path: &Path,
) -> Result<Vec<Hypothesis>> {
    if src_vocab.content_hash() != ckpt.src_vocab_hash
        || tgt_vocab.content_hash() != ckpt.tgt_vocab_hash
    {
        return Err(Error::Config(
            "vocabulary hash mismatch: these vocab files are not the ones the \
             checkpoint was trained with; re-run preparation with the original files"
                .into(),
        ));
    }
    let needs_features = ckpt.config.fusion.required_layout().is_some();
    let map = if needs_features {
        let fs = features.ok_or_else(|| {
            Error::contract("this fusion kind needs --features at decode time")
        })?;
        if fs.rows() < corpus.len() {
            return Err(Error::Config(format!(
                "feature set has {} rows but the corpus has {} sentences",
                fs.rows(),
                corpus.len()
            )));
        }
        remap_order(opts.mode, corpus.len())?
    } else {
        Vec::new()
    };

    if let Some(dir) = &opts.attn_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut translator = Translator::new(&ckpt.config, &ckpt.params);
    let mut out = std::fs::File::create(out_path)?;
    let mut hyps = Vec::with_capacity(corpus.len());
    for (i, sample) in corpus.samples.iter().enumerate() {
        let enc = encode_sample(sample, src_vocab, tgt_vocab);
        let feat = if needs_features {
            features.map(|fs| (fs, map[sample.image_index]))
        } else {
            None
        };
        let max_len = opts.max_len.unwrap_or_else(|| default_max_len(enc.source.len()));
        let hyp = if opts.beam == 1 {
            translator.greedy(&enc.source, feat, max_len)?
        } else {
            translator
                .beam(&enc.source, feat, opts.beam, max_len)?
                .into_iter()
                .next()
                .expect("beam returns at least one hypothesis")
        };
        let tokens: Vec<String> = hyp
            .surface_ids()
            .iter()
            .map(|&id| tgt_vocab.token(id).to_string())
            .collect();
        writeln!(out, "{}", stitch_hyphens(&tokens).join(" "))?;
        if let Some(dir) = &opts.attn_dir {
            export_attention(&hyp, &sample.source, tgt_vocab, dir, i)?;
        }
        hyps.push(hyp);
    }
    Ok(hyps)
}

/// Write the recorded attention of one hypothesis as CSV matrices:
/// rows = output tokens, columns = source tokens (text) or grid cells
/// (image). Files are `sample_<i>.text.csv` and `sample_<i>.image.csv`.
pub fn export_attention(
    hyp: &Hypothesis,
    source_tokens: &[String],
    tgt_vocab: &Vocabulary,
    dir: &Path,
    sample_index: usize,
) -> Result<()> {
    if hyp.attn_text.is_empty() {
        return Err(Error::contract(
            "no attention recorded; decode before exporting",
        ));
    }
    let text_path = dir.join(format!("sample_{sample_index}.text.csv"));
    let mut f = std::fs::File::create(&text_path)?;
    // header: source tokens plus the implicit EOS column
    let mut header: Vec<String> = vec!["output".into()];
    header.extend(source_tokens.iter().cloned());
    header.push("</s>".into());
    writeln!(f, "{}", header.join(","))?;
    for (t, row) in hyp.attn_text.iter().enumerate() {
        let cells: Vec<String> = std::iter::once(tgt_vocab.token(hyp.tokens[t]).to_string())
            .chain(row.iter().map(|v| format!("{v:.9}")))
            .collect();
        writeln!(f, "{}", cells.join(","))?;
    }

    if let Some(img) = &hyp.attn_img {
        let img_path = dir.join(format!("sample_{sample_index}.image.csv"));
        let mut f = std::fs::File::create(&img_path)?;
        let cols = img.first().map_or(0, Vec::len);
        let mut header: Vec<String> = vec!["output".into()];
        header.extend((0..cols).map(|p| format!("cell{p}")));
        writeln!(f, "{}", header.join(","))?;
        for (t, row) in img.iter().enumerate() {
            let cells: Vec<String> = std::iter::once(tgt_vocab.token(hyp.tokens[t]).to_string())
                .chain(row.iter().map(|v| format!("{v:.9}")))
                .collect();
            writeln!(f, "{}", cells.join(","))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{synthesize_features, FeatureLayout};
    use crate::model::{FusionKind, ModelConfig, ParameterSet};
    use crate::text::{ParallelSample, Vocabulary};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tiny_world(fusion: FusionKind) -> (Checkpoint, Corpus, Vocabulary, Vocabulary, FeatureSet) {
        let corpus = Corpus {
            samples: (0..4)
                .map(|i| ParallelSample {
                    source: toks(["a dog", "a cat", "a bird", "a fish"][i]),
                    target: toks(["un chien", "un chat", "un oiseau", "un poisson"][i]),
                    image_index: i,
                })
                .collect(),
        };
        let src_sents: Vec<Vec<String>> = corpus.samples.iter().map(|s| s.source.clone()).collect();
        let tgt_sents: Vec<Vec<String>> = corpus.samples.iter().map(|s| s.target.clone()).collect();
        let sv = Vocabulary::build(src_sents.iter().map(|s| s.as_slice())).unwrap();
        let tv = Vocabulary::build(tgt_sents.iter().map(|s| s.as_slice())).unwrap();
        let cfg = ModelConfig {
            fusion,
            emb_dim: 8,
            hidden: 12,
            attn_dim: 12,
            dropout_src_emb: 0.3,
            dropout_enc_out: 0.3,
            dropout_dec_out: 0.3,
            src_vocab: sv.len(),
            tgt_vocab: tv.len(),
            feat_channels: 8,
            feat_positions: 4,
        };
        let params = ParameterSet::init(&cfg, 3).unwrap();
        let ckpt = Checkpoint {
            config: cfg,
            params,
            src_vocab_hash: sv.content_hash(),
            tgt_vocab_hash: tv.content_hash(),
        };
        let feats =
            synthesize_features(&[0, 1, 2, 3], 4, 8, 0.1, 9, FeatureLayout::Spatial).unwrap();
        (ckpt, corpus, sv, tv, feats)
    }

    #[test]
    fn output_line_count_matches_corpus() {
        let (ckpt, corpus, sv, tv, feats) = tiny_world(FusionKind::Direct);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("hyps.txt");
        let opts = TranslateOptions {
            beam: 2,
            ..Default::default()
        };
        translate_corpus(&ckpt, &corpus, &sv, &tv, Some(&feats), &opts, &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn nmt_outputs_are_identical_under_congruence_swap() {
        let (ckpt, corpus, sv, tv, feats) = tiny_world(FusionKind::Nmt);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("congruent.txt");
        let b = dir.path().join("incongruent.txt");
        let mut opts = TranslateOptions {
            beam: 1,
            ..Default::default()
        };
        translate_corpus(&ckpt, &corpus, &sv, &tv, Some(&feats), &opts, &a).unwrap();
        opts.mode = CongruenceMode::Incongruent;
        translate_corpus(&ckpt, &corpus, &sv, &tv, Some(&feats), &opts, &b).unwrap();
        assert_eq!(
            std::fs::read(&a).unwrap(),
            std::fs::read(&b).unwrap()
        );
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let (ckpt, corpus, sv, tv, feats) = tiny_world(FusionKind::Direct);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        let opts = TranslateOptions {
            beam: 3,
            ..Default::default()
        };
        translate_corpus(&ckpt, &corpus, &sv, &tv, Some(&feats), &opts, &a).unwrap();
        translate_corpus(&ckpt, &corpus, &sv, &tv, Some(&feats), &opts, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn vocab_hash_mismatch_is_refused() {
        let (ckpt, corpus, sv, tv, feats) = tiny_world(FusionKind::Direct);
        let other = Vocabulary::build([toks("different world")].iter().map(|s| s.as_slice()))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.txt");
        let err = translate_corpus(
            &ckpt,
            &corpus,
            &other,
            &tv,
            Some(&feats),
            &TranslateOptions::default(),
            &out,
        )
        .unwrap_err();
        assert!(err.to_string().contains("vocabulary hash mismatch"));
        drop(sv);
    }

    #[test]
    fn attention_export_rows_sum_to_one() {
        let (ckpt, corpus, sv, tv, feats) = tiny_world(FusionKind::Direct);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("hyps.txt");
        let attn = dir.path().join("attn");
        let opts = TranslateOptions {
            beam: 1,
            attn_dir: Some(attn.clone()),
            ..Default::default()
        };
        translate_corpus(&ckpt, &corpus, &sv, &tv, Some(&feats), &opts, &out).unwrap();
        for name in ["sample_0.text.csv", "sample_0.image.csv"] {
            let text = std::fs::read_to_string(attn.join(name)).unwrap();
            let mut lines = text.lines();
            let _header = lines.next().unwrap();
            let mut rows = 0;
            for line in lines {
                let sum: f64 = line
                    .split(',')
                    .skip(1)
                    .map(|v| v.parse::<f64>().unwrap())
                    .sum();
                assert!((sum - 1.0).abs() <= 1e-6, "{name}: row sums to {sum}");
                rows += 1;
            }
            assert!(rows >= 1);
        }
    }

    #[test]
    fn nmt_exports_no_image_matrix() {
        let (ckpt, corpus, sv, tv, _) = tiny_world(FusionKind::Nmt);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("hyps.txt");
        let attn = dir.path().join("attn");
        let opts = TranslateOptions {
            beam: 1,
            attn_dir: Some(attn.clone()),
            ..Default::default()
        };
        translate_corpus(&ckpt, &corpus, &sv, &tv, None, &opts, &out).unwrap();
        assert!(attn.join("sample_0.text.csv").exists());
        assert!(!attn.join("sample_0.image.csv").exists());
    }
}
