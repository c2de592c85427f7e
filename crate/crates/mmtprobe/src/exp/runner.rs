//! The experiment grid: degrade → train → translate → evaluate per
//! (system, seed, congruence), with content-hash caching, parallel
//! cells, and report emission.

use super::manifest::{hash_file, hash_parts, CellRecord, Manifest};
use super::{DataPaths, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{
    bleu, color_accuracy, format_mean_stdev, gain_drop_report, mean_stdev, meteor_lite,
    significance_test, Cell, ColorLexicon, Metric, MetricReport,
};
use crate::features::{load_features, CongruenceMode, FeatureLayout, FeatureSet};
use crate::model::{save_checkpoint, FusionKind, ModelConfig};
use crate::text::{
    degrade_corpus, load_color_lexicon, parse_color_lexicon, stitch_hyphens, Corpus,
    DegradationSpec, DegradationStats, EntityAnnotations, Vocabulary, DEFAULT_COLOR_LEXICON,
};
use crate::train::{train, TrainConfig};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Worker cap: MMTPROBE_THREADS, else the machine's parallelism,
/// bounded by the number of cells.
pub fn worker_count(cells: usize) -> usize {
    let cap = std::env::var("MMTPROBE_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
    cap.min(cells.max(1)).max(1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub runs: Vec<f64>,
    pub mean: f64,
    pub stdev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub degradation: String,
    pub progressive_k: Option<usize>,
    pub train_masked_fraction: f64,
    pub train_unmasked_fraction: f64,
    /// "system|mode|metric" → per-seed corpus scores (×100 scale).
    pub scores: BTreeMap<String, ScoreSummary>,
    pub gain_drop: Vec<String>,
    pub failures: Vec<String>,
    pub cells_trained: usize,
    pub cells_reused: usize,
}

struct Prepared {
    train: Corpus,
    dev: Corpus,
    test: Corpus,
    test_stats: DegradationStats,
    train_stats: DegradationStats,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    train_features: Option<FeatureSet>,
    dev_features: Option<FeatureSet>,
    test_features: Option<FeatureSet>,
    tgt_colors: Option<ColorLexicon>,
    test_refs: Vec<Vec<String>>,
    data_hash: String,
}

#[derive(Clone)]
struct CellPlan {
    system: FusionKind,
    seed: u64,
    blinded: bool,
}

impl CellPlan {
    fn name(&self) -> String {
        if self.blinded {
            format!("{}-s{}-blinded", self.system.label(), self.seed)
        } else {
            format!("{}-s{}", self.system.label(), self.seed)
        }
    }

    fn variant(&self) -> String {
        if self.blinded {
            format!("{}+blind", self.system.label())
        } else {
            self.system.label().to_string()
        }
    }
}

fn load_degradation(
    cfg: &ExperimentConfig,
    data: &DataPaths,
    split: &str,
) -> Result<DegradationSpec> {
    match cfg.degradation.kind.as_str() {
        "none" => Ok(DegradationSpec::None),
        "color" => {
            let lexicon = match &data.color_lexicon {
                Some(p) => load_color_lexicon(p)?,
                None => parse_color_lexicon(DEFAULT_COLOR_LEXICON),
            };
            DegradationSpec::color(lexicon)
        }
        "entity" => {
            let path = match split {
                "train" => &data.annotations_train,
                "dev" => &data.annotations_dev,
                _ => &data.annotations_test,
            };
            let path = path.as_ref().ok_or_else(|| {
                Error::Config(format!("entity masking needs annotations_{split}"))
            })?;
            Ok(DegradationSpec::Entity {
                annotations: EntityAnnotations::load_tsv(path)?,
            })
        }
        "progressive" => {
            let k = cfg.degradation.k.ok_or_else(|| {
                Error::config("progressive masking needs degradation.k")
            })?;
            DegradationSpec::progressive(k)
        }
        other => Err(Error::Config(format!("unknown degradation kind {other:?}"))),
    }
}

fn load_feature_file(path: &Option<PathBuf>) -> Result<Option<FeatureSet>> {
    match path {
        None => Ok(None),
        Some(p) => {
            let fs = load_features(p)?;
            // visual attention consumes depth-normalized vectors
            let fs = if fs.layout() == FeatureLayout::Spatial {
                fs.normalize_depth()?
            } else {
                fs
            };
            Ok(Some(fs))
        }
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let d = &cfg.data;
    let train_clean = Corpus::load(&d.train_src, &d.train_tgt)?;
    let dev_clean = Corpus::load(&d.dev_src, &d.dev_tgt)?;
    let test_clean = Corpus::load(&d.test_src, &d.test_tgt)?;

    // vocabularies come from the undegraded train+dev text, so sizes
    // match the full word-level vocabularies regardless of scheme
    let src_sents: Vec<&[String]> = train_clean
        .samples
        .iter()
        .chain(&dev_clean.samples)
        .map(|s| s.source.as_slice())
        .collect();
    let tgt_sents: Vec<&[String]> = train_clean
        .samples
        .iter()
        .chain(&dev_clean.samples)
        .map(|s| s.target.as_slice())
        .collect();
    let src_vocab = Vocabulary::build(src_sents.into_iter())?;
    let tgt_vocab = Vocabulary::build(tgt_sents.into_iter())?;

    let (train, train_stats) = degrade_corpus(&train_clean, &load_degradation(cfg, d, "train")?)?;
    let (dev, _) = degrade_corpus(&dev_clean, &load_degradation(cfg, d, "dev")?)?;
    let (test, test_stats) = degrade_corpus(&test_clean, &load_degradation(cfg, d, "test")?)?;

    let test_refs = test
        .samples
        .iter()
        .map(|s| stitch_hyphens(&s.target))
        .collect();

    let tgt_colors = match &d.tgt_color_lexicon {
        Some(p) => Some(ColorLexicon::load(p)?),
        None => None,
    };

    // everything that identifies the inputs, for cache keys
    let mut parts: Vec<(String, String)> = vec![
        ("degradation".into(), cfg.degradation.kind.clone()),
        ("k".into(), format!("{:?}", cfg.degradation.k)),
        ("model".into(), format!("{:?}", cfg.model)),
        ("train".into(), format!("{:?}", cfg.train)),
        ("beam".into(), cfg.beam.to_string()),
        ("blind_order".into(), format!("{:?}", cfg.blind_order)),
    ];
    for (label, path) in [
        ("train_src", Some(&d.train_src)),
        ("train_tgt", Some(&d.train_tgt)),
        ("dev_src", Some(&d.dev_src)),
        ("dev_tgt", Some(&d.dev_tgt)),
        ("test_src", Some(&d.test_src)),
        ("test_tgt", Some(&d.test_tgt)),
        ("train_features", d.train_features.as_ref()),
        ("dev_features", d.dev_features.as_ref()),
        ("test_features", d.test_features.as_ref()),
        ("annotations_train", d.annotations_train.as_ref()),
        ("annotations_dev", d.annotations_dev.as_ref()),
        ("annotations_test", d.annotations_test.as_ref()),
        ("color_lexicon", d.color_lexicon.as_ref()),
        ("tgt_color_lexicon", d.tgt_color_lexicon.as_ref()),
    ] {
        let h = match path {
            Some(p) => hash_file(p)?,
            None => "absent".into(),
        };
        parts.push((label.to_string(), h));
    }
    let refs: Vec<(&str, &str)> = parts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let data_hash = hash_parts(&refs);

    Ok(Prepared {
        train,
        dev,
        test,
        train_stats,
        test_stats,
        src_vocab,
        tgt_vocab,
        train_features: load_feature_file(&d.train_features)?,
        dev_features: load_feature_file(&d.dev_features)?,
        test_features: load_feature_file(&d.test_features)?,
        tgt_colors,
        test_refs,
        data_hash,
    })
}

fn model_config(cfg: &ExperimentConfig, prep: &Prepared, fusion: FusionKind) -> ModelConfig {
    let (channels, positions) = prep
        .train_features
        .as_ref()
        .map(|f| (f.channels(), f.positions()))
        .unwrap_or((0, 0));
    ModelConfig {
        fusion,
        emb_dim: cfg.model.emb_dim,
        hidden: cfg.model.hidden,
        attn_dim: if cfg.model.attn_dim == 0 {
            cfg.model.hidden
        } else {
            cfg.model.attn_dim
        },
        dropout_src_emb: cfg.model.dropout_src_emb,
        dropout_enc_out: cfg.model.dropout_enc_out,
        dropout_dec_out: cfg.model.dropout_dec_out,
        src_vocab: prep.src_vocab.len(),
        tgt_vocab: prep.tgt_vocab.len(),
        feat_channels: channels,
        feat_positions: positions,
    }
}

fn parse_congruence(label: &str, cfg: &ExperimentConfig, seed: u64) -> Result<CongruenceMode> {
    match label {
        "congruent" => Ok(CongruenceMode::Congruent),
        "incongruent" => Ok(CongruenceMode::Incongruent),
        "blinded" => Ok(CongruenceMode::Blinded {
            order: cfg.blind_order,
            seed,
        }),
        other => Err(Error::Config(format!("unknown congruence mode {other:?}"))),
    }
}

/// Run one grid cell end to end; returns the produced outputs.
fn run_cell(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    plan: &CellPlan,
) -> Result<BTreeMap<String, String>> {
    let cell_dir = cfg.output_dir.join("cells").join(plan.name());
    std::fs::create_dir_all(&cell_dir)?;
    let mcfg = model_config(cfg, prep, plan.system);
    let tcfg = TrainConfig {
        lr: cfg.train.lr,
        batch_size: cfg.train.batch_size,
        clip_norm: cfg.train.clip_norm,
        weight_decay: cfg.train.weight_decay,
        decay_mode: cfg.train.decay_mode,
        patience: cfg.train.patience,
        max_epochs: cfg.train.max_epochs,
        seed: plan.seed,
        beam_for_dev: cfg.train.beam_for_dev,
    };
    let train_mode = if plan.blinded {
        CongruenceMode::Blinded {
            order: cfg.blind_order,
            seed: plan.seed,
        }
    } else {
        CongruenceMode::Congruent
    };

    let history_path = cell_dir.join("history.csv");
    let outcome = train(
        &mcfg,
        &tcfg,
        &prep.train,
        &prep.dev,
        &prep.src_vocab,
        &prep.tgt_vocab,
        prep.train_features.as_ref(),
        prep.dev_features.as_ref(),
        train_mode,
        Some(&history_path),
    )?;
    let ckpt_path = cell_dir.join("checkpoint.mmcp");
    save_checkpoint(&outcome.checkpoint, &ckpt_path)?;

    let mut outputs = BTreeMap::new();
    let rel = |p: &Path| -> String {
        p.strip_prefix(&cfg.output_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    outputs.insert(rel(&history_path), hash_file(&history_path)?);
    outputs.insert(rel(&ckpt_path), hash_file(&ckpt_path)?);

    let modes: Vec<String> = if plan.blinded {
        vec!["blinded".into()]
    } else {
        cfg.congruence.clone()
    };
    for mode_label in &modes {
        let mode = parse_congruence(mode_label, cfg, plan.seed)?;
        let hyp_path = cell_dir.join(format!("hyps-{mode_label}.txt"));
        let opts = crate::decode::TranslateOptions {
            mode,
            beam: cfg.beam,
            max_len: None,
            attn_dir: None,
        };
        let hyps = crate::decode::translate_corpus(
            &outcome.checkpoint,
            &prep.test,
            &prep.src_vocab,
            &prep.tgt_vocab,
            prep.test_features.as_ref(),
            &opts,
            &hyp_path,
        )?;
        outputs.insert(rel(&hyp_path), hash_file(&hyp_path)?);

        let hyp_tokens: Vec<Vec<String>> = hyps
            .iter()
            .map(|h| {
                let toks: Vec<String> = h
                    .surface_ids()
                    .iter()
                    .map(|&id| prep.tgt_vocab.token(id).to_string())
                    .collect();
                stitch_hyphens(&toks)
            })
            .collect();
        for metric in &cfg.metrics {
            let report = match metric {
                Metric::MeteorLite => meteor_lite(&hyp_tokens, &prep.test_refs)?,
                Metric::Bleu => bleu(&hyp_tokens, &prep.test_refs)?,
                Metric::ColorAcc => {
                    let lexicon = prep.tgt_colors.as_ref().ok_or_else(|| {
                        Error::config("color-acc needs data.tgt_color_lexicon")
                    })?;
                    color_accuracy(
                        &hyp_tokens,
                        &prep.test_refs,
                        &prep.test_stats.affected,
                        lexicon,
                    )?
                }
            };
            let eval_path = cell_dir.join(format!("eval-{mode_label}-{}.json", metric.label()));
            std::fs::write(&eval_path, serde_json::to_string_pretty(&report)?)?;
            outputs.insert(rel(&eval_path), hash_file(&eval_path)?);
        }
    }
    Ok(outputs)
}

/// Execute the full grid. Failed cells are recorded in the manifest and
/// reported in the summary; healthy cells proceed regardless.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let prep = prepare(cfg)?;

    // persist the vocabularies next to the results
    prep.src_vocab.save(&cfg.output_dir.join("vocab.src.txt"))?;
    prep.tgt_vocab.save(&cfg.output_dir.join("vocab.tgt.txt"))?;

    let mut plans: Vec<CellPlan> = Vec::new();
    for system in &cfg.systems {
        let fusion = FusionKind::parse(system)?;
        for &seed in &cfg.seeds {
            plans.push(CellPlan {
                system: fusion,
                seed,
                blinded: false,
            });
            if cfg.blinding && fusion != FusionKind::Nmt {
                plans.push(CellPlan {
                    system: fusion,
                    seed,
                    blinded: true,
                });
            }
        }
    }

    let manifest_path = cfg.output_dir.join("manifest.json");
    let previous = Manifest::load_or_default(&manifest_path);
    let key_of = |plan: &CellPlan| {
        hash_parts(&[
            ("data", prep.data_hash.as_str()),
            ("system", plan.system.label()),
            ("seed", &plan.seed.to_string()),
            ("blinded", if plan.blinded { "1" } else { "0" }),
        ])
    };

    let mut manifest = Manifest::default();
    let mut todo: VecDeque<CellPlan> = VecDeque::new();
    let mut reused = 0usize;
    for plan in &plans {
        let key = key_of(plan);
        if previous.reusable(&plan.name(), &key, &cfg.output_dir) {
            manifest
                .cells
                .insert(plan.name(), previous.cells[&plan.name()].clone());
            reused += 1;
        } else {
            todo.push_back(plan.clone());
        }
    }

    let trained = todo.len();
    let queue = Mutex::new(todo);
    let results: Mutex<Vec<(String, CellRecord)>> = Mutex::new(Vec::new());
    let workers = worker_count(trained);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let plan = match queue.lock().unwrap().pop_front() {
                    Some(p) => p,
                    None => break,
                };
                let key = key_of(&plan);
                let record = match run_cell(cfg, &prep, &plan) {
                    Ok(outputs) => CellRecord {
                        key,
                        status: "ok".into(),
                        outputs,
                    },
                    Err(e) => CellRecord {
                        key,
                        status: format!("failed: {e}"),
                        outputs: BTreeMap::new(),
                    },
                };
                results.lock().unwrap().push((plan.name(), record));
            });
        }
    });
    for (name, record) in results.into_inner().unwrap() {
        manifest.cells.insert(name, record);
    }
    manifest.save(&manifest_path)?;

    let summary = summarize(cfg, &prep, &plans, &manifest, reused, trained)?;
    std::fs::write(
        cfg.output_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    write_reports(cfg, &summary)?;
    Ok(summary)
}

fn read_report(cfg: &ExperimentConfig, cell: &str, mode: &str, metric: Metric) -> Option<MetricReport> {
    let path = cfg
        .output_dir
        .join("cells")
        .join(cell)
        .join(format!("eval-{mode}-{}.json", metric.label()));
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn summarize(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    plans: &[CellPlan],
    manifest: &Manifest,
    reused: usize,
    trained: usize,
) -> Result<RunSummary> {
    let failures: Vec<String> = manifest
        .cells
        .iter()
        .filter(|(_, r)| !r.succeeded())
        .map(|(n, r)| format!("{n}: {}", r.status))
        .collect();

    // (variant, mode, metric) → per-seed ×100 corpus scores, and cells
    // for the gain/drop table
    let mut scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut table_cells: BTreeMap<(String, String), Cell> = BTreeMap::new();
    for plan in plans {
        if !manifest.cells.get(&plan.name()).is_some_and(CellRecord::succeeded) {
            continue;
        }
        let modes: Vec<String> = if plan.blinded {
            vec!["blinded".into()]
        } else {
            cfg.congruence.clone()
        };
        for mode in &modes {
            for &metric in &cfg.metrics {
                if let Some(mut report) = read_report(cfg, &plan.name(), mode, metric) {
                    report.corpus_score *= 100.0;
                    for s in &mut report.sentence_scores {
                        *s *= 100.0;
                    }
                    scores
                        .entry(format!("{}|{mode}|{}", plan.variant(), metric.label()))
                        .or_default()
                        .push(report.corpus_score);
                    if metric == cfg.metrics[0] && !plan.blinded {
                        table_cells
                            .entry((plan.variant(), mode.clone()))
                            .or_default()
                            .runs
                            .push(report);
                    }
                }
            }
        }
    }

    let gain_drop = {
        let systems: Vec<&str> = cfg.systems.iter().map(String::as_str).collect();
        let complete = systems.iter().all(|s| {
            table_cells.contains_key(&(s.to_string(), "congruent".into()))
                && (*s == "nmt" || table_cells.contains_key(&(s.to_string(), "incongruent".into())))
        });
        if complete && systems.contains(&"nmt") && systems.len() > 1 {
            gain_drop_report(&table_cells, &systems, "nmt", 10_000, 1)?
                .into_iter()
                .map(|row| format!("{}: {}", row.system, row.rendered))
                .collect()
        } else {
            Vec::new()
        }
    };

    Ok(RunSummary {
        degradation: cfg.degradation.kind.clone(),
        progressive_k: cfg.degradation.k,
        train_masked_fraction: prep.train_stats.masked_fraction(),
        train_unmasked_fraction: 1.0 - prep.train_stats.masked_fraction(),
        scores: scores
            .into_iter()
            .map(|(k, runs)| {
                let (mean, stdev) = mean_stdev(&runs);
                (k, ScoreSummary { runs, mean, stdev })
            })
            .collect(),
        gain_drop,
        failures,
        cells_trained: trained,
        cells_reused: reused,
    })
}

fn write_reports(cfg: &ExperimentConfig, summary: &RunSummary) -> Result<()> {
    let dir = cfg.output_dir.join("reports");
    std::fs::create_dir_all(&dir)?;

    // long-form CSV of every run
    let mut csv = String::from("system,mode,metric,scores,mean,stdev\n");
    for (key, s) in &summary.scores {
        let mut it = key.split('|');
        let (sys, mode, metric) = (
            it.next().unwrap_or(""),
            it.next().unwrap_or(""),
            it.next().unwrap_or(""),
        );
        let runs: Vec<String> = s.runs.iter().map(|v| format!("{v:.4}")).collect();
        csv.push_str(&format!(
            "{sys},{mode},{metric},{},{:.4},{:.4}\n",
            runs.join(";"),
            s.mean,
            s.stdev
        ));
    }
    std::fs::write(dir.join("scores.csv"), csv)?;

    // markdown table per metric: rows = variants, columns = modes
    let mut variants: Vec<String> = Vec::new();
    let mut modes: Vec<String> = Vec::new();
    let mut metrics: Vec<String> = Vec::new();
    for key in summary.scores.keys() {
        let mut it = key.split('|');
        let (sys, mode, metric) = (
            it.next().unwrap_or("").to_string(),
            it.next().unwrap_or("").to_string(),
            it.next().unwrap_or("").to_string(),
        );
        if !variants.contains(&sys) {
            variants.push(sys);
        }
        if !modes.contains(&mode) {
            modes.push(mode);
        }
        if !metrics.contains(&metric) {
            metrics.push(metric);
        }
    }
    let mut md = format!(
        "# Scores ({} degradation), mean ± stdev over seeds, ×100 scale\n\n",
        summary.degradation
    );
    for metric in &metrics {
        md.push_str(&format!("## {metric}\n\n| system |"));
        for m in &modes {
            md.push_str(&format!(" {m} |"));
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(modes.len()));
        md.push('\n');
        for v in &variants {
            md.push_str(&format!("| {v} |"));
            for m in &modes {
                let cell = summary
                    .scores
                    .get(&format!("{v}|{m}|{metric}"))
                    .map(|s| format_mean_stdev(&s.runs))
                    .unwrap_or_else(|| "—".into());
                md.push_str(&format!(" {cell} |"));
            }
            md.push('\n');
        }
        md.push('\n');
    }
    if !summary.gain_drop.is_empty() {
        md.push_str("## Gain (↓ incongruence drop)\n\n");
        for row in &summary.gain_drop {
            md.push_str(&format!("- {row}\n"));
        }
    }
    std::fs::write(dir.join("scores.md"), md)?;
    Ok(())
}

/// Assemble a progressive-masking curve from several completed result
/// directories (one per k; `None` = undegraded). Scores come from each
/// directory's summary.json, congruent decode, first metric.
pub fn progressive_curve_from_dirs(
    dirs: &[(Option<usize>, PathBuf)],
    metric: Metric,
    baseline: &str,
) -> Result<String> {
    let mut points = Vec::new();
    for (k, dir) in dirs {
        let text = std::fs::read_to_string(dir.join("summary.json"))?;
        let summary: RunSummary = serde_json::from_str(&text)?;
        let mut scores = BTreeMap::new();
        for (key, s) in &summary.scores {
            let mut it = key.split('|');
            let (sys, mode, m) = (
                it.next().unwrap_or(""),
                it.next().unwrap_or(""),
                it.next().unwrap_or(""),
            );
            if mode == "congruent" && m == metric.label() {
                scores.insert(sys.to_string(), s.mean);
            }
        }
        points.push(crate::eval::CurvePoint {
            k: *k,
            scores,
            unmasked_fraction: summary.train_unmasked_fraction,
        });
    }
    points.sort_by_key(|p| p.k.map_or(usize::MAX, |k| k));
    crate::eval::progressive_curve_csv(&points, baseline)
}

/// Compare two systems' per-sentence scores from completed result dirs,
/// pooling matched seeds.
pub fn significance_from_dirs(
    dir: &Path,
    system_a: &str,
    system_b: &str,
    mode: &str,
    metric: Metric,
    seeds: &[u64],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    let gather = |system: &str| -> Result<Vec<Vec<f64>>> {
        let mut runs = Vec::new();
        for &s in seeds {
            let path = dir
                .join("cells")
                .join(format!("{system}-s{s}"))
                .join(format!("eval-{mode}-{}.json", metric.label()));
            let report: MetricReport =
                serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| {
                    Error::Config(format!("{}: {e}", path.display()))
                })?)?;
            runs.push(report.sentence_scores);
        }
        Ok(runs)
    };
    significance_test(&gather(system_a)?, &gather(system_b)?, resamples, seed)
}
