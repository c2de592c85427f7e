//! Command-line front end: each subcommand is a thin wrapper over the
//! library. `cargo run --example <name>` shows the same pipeline as
//! embeddable code.

use clap::{Args, Parser, Subcommand};
use mmtprobe::decode::TranslateOptions;
use mmtprobe::error::Result;
use mmtprobe::eval::{
    bleu, color_accuracy, meteor_lite, significance_test, ColorLexicon, Metric, MetricReport,
};
use mmtprobe::exp::{
    generate_synthetic, progressive_curve_from_dirs, run_experiment, significance_from_dirs,
    write_synthetic, ExperimentConfig, FeatureClassMode, SyntheticTaskSpec,
};
use mmtprobe::features::{load_features, BlindOrder, CongruenceMode};
use mmtprobe::model::load_checkpoint;
use mmtprobe::text::{
    degrade_corpus, load_color_lexicon, parse_color_lexicon, stitch_hyphens, tokenize, Corpus,
    DegradationSpec, EntityAnnotations, Side, Vocabulary, DEFAULT_COLOR_LEXICON,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mmtprobe", version, about = "Probe visual grounding in multimodal MT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build vocabularies from train+dev text and report their sizes.
    Prepare(PrepareArgs),
    /// Apply a degradation scheme to a corpus and report masking stats.
    Degrade(DegradeArgs),
    /// Generate the synthetic color-grounding dataset.
    Synth(SynthArgs),
    /// Train one system (a single grid cell, including its probes).
    Train(TrainArgs),
    /// Decode a corpus with a checkpoint under a congruence mode.
    Translate(TranslateArgs),
    /// Score a hypothesis file against references.
    Evaluate(EvaluateArgs),
    /// Approximate-randomization significance between two systems.
    Significance(SignificanceArgs),
    /// Render reports from one or more completed result directories.
    Report(ReportArgs),
    /// Run the full experiment grid from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    train_src: PathBuf,
    #[arg(long)]
    train_tgt: PathBuf,
    #[arg(long)]
    dev_src: PathBuf,
    #[arg(long)]
    dev_tgt: PathBuf,
    /// Where vocab.src.txt / vocab.tgt.txt land.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DegradeArgs {
    /// Source-side text file (one sentence per line).
    #[arg(long)]
    src: PathBuf,
    /// Matching target file (only used for line-alignment checking).
    #[arg(long)]
    tgt: PathBuf,
    /// none | color | entity | progressive
    #[arg(long)]
    scheme: String,
    /// k for progressive masking.
    #[arg(long)]
    k: Option<usize>,
    /// Color lexicon file; the built-in 20-term list when absent.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Entity annotation TSV.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Degraded source text output.
    #[arg(long)]
    out: PathBuf,
    /// Optional 0/1 per-sentence affected-mask output.
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 5000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    dev: usize,
    #[arg(long, default_value_t = 500)]
    test: usize,
    #[arg(long, default_value_t = 8)]
    colors: usize,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    #[arg(long, default_value_t = 32)]
    channels: usize,
    /// color | scene (what the features encode)
    #[arg(long, default_value = "color")]
    classes: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// nmt | init | hier | direct
    #[arg(long)]
    system: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Train (and decode) with incongruent features.
    #[arg(long, default_value_t = false)]
    blinded: bool,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    src: PathBuf,
    /// Target side is only needed for line alignment; reuse src if absent.
    #[arg(long)]
    tgt: Option<PathBuf>,
    #[arg(long)]
    vocab_src: PathBuf,
    #[arg(long)]
    vocab_tgt: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    beam: usize,
    /// congruent | incongruent | blinded
    #[arg(long, default_value = "congruent")]
    congruence: String,
    /// reversed | shuffled (blinded mode)
    #[arg(long, default_value = "shuffled")]
    blind_order: String,
    /// Seed for the blinded shuffle.
    #[arg(long, default_value_t = 1)]
    blind_seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-sample attention CSVs.
    #[arg(long)]
    attn_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, name = "ref")]
    reference: PathBuf,
    /// meteor-lite | bleu | color-acc
    #[arg(long, default_value = "meteor-lite")]
    metric: String,
    /// 0/1 per-sentence deprived mask (color-acc).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Target color lexicon TSV (color-acc).
    #[arg(long)]
    color_lexicon: Option<PathBuf>,
    /// Also dump the full MetricReport JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SignificanceArgs {
    /// MetricReport JSON files of system A, one per optimizer run.
    #[arg(long, num_args = 1.., required = true)]
    a: Vec<PathBuf>,
    /// MetricReport JSON files of system B (matched runs).
    #[arg(long, num_args = 1.., required = true)]
    b: Vec<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    resamples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Completed result directories (several for a progressive curve).
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    #[arg(long, default_value = "meteor-lite")]
    metric: String,
    /// Emit the progressive-masking curve CSV over the given dirs.
    #[arg(long, default_value_t = false)]
    progressive: bool,
    /// Baseline system for gains.
    #[arg(long, default_value = "nmt")]
    baseline: String,
    /// Significance between two systems: "<a>,<b>,<mode>" e.g. "direct,nmt,congruent".
    #[arg(long)]
    compare: Option<String>,
    #[arg(long, num_args = 1.., default_values_t = [1u64, 2, 3])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    resamples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn read_tokenized(path: &PathBuf) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| stitch_hyphens(&tokenize(l)))
        .collect())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Prepare(a) => {
            let train = Corpus::load(&a.train_src, &a.train_tgt)?;
            let dev = Corpus::load(&a.dev_src, &a.dev_tgt)?;
            let src: Vec<&[String]> = train
                .samples
                .iter()
                .chain(&dev.samples)
                .map(|s| s.source.as_slice())
                .collect();
            let tgt: Vec<&[String]> = train
                .samples
                .iter()
                .chain(&dev.samples)
                .map(|s| s.target.as_slice())
                .collect();
            let sv = Vocabulary::build(src.into_iter())?;
            let tv = Vocabulary::build(tgt.into_iter())?;
            std::fs::create_dir_all(&a.out_dir)?;
            sv.save(&a.out_dir.join("vocab.src.txt"))?;
            tv.save(&a.out_dir.join("vocab.tgt.txt"))?;
            println!(
                "source vocabulary: {} entries (hash {})",
                sv.len(),
                sv.content_hash()
            );
            println!(
                "target vocabulary: {} entries (hash {})",
                tv.len(),
                tv.content_hash()
            );
        }
        Command::Degrade(a) => {
            let corpus = Corpus::load(&a.src, &a.tgt)?;
            let spec = match a.scheme.as_str() {
                "none" => DegradationSpec::None,
                "color" => {
                    let lexicon = match &a.lexicon {
                        Some(p) => load_color_lexicon(p)?,
                        None => parse_color_lexicon(DEFAULT_COLOR_LEXICON),
                    };
                    DegradationSpec::color(lexicon)?
                }
                "entity" => DegradationSpec::Entity {
                    annotations: EntityAnnotations::load_tsv(a.annotations.as_ref().ok_or_else(
                        || mmtprobe::Error::config("entity masking needs --annotations"),
                    )?)?,
                },
                "progressive" => DegradationSpec::progressive(a.k.ok_or_else(|| {
                    mmtprobe::Error::config("progressive masking needs --k")
                })?)?,
                other => {
                    return Err(mmtprobe::Error::Config(format!(
                        "unknown scheme {other:?}"
                    )))
                }
            };
            let (degraded, stats) = degrade_corpus(&corpus, &spec)?;
            degraded.write_side(&a.out, Side::Source)?;
            if let Some(mask_out) = &a.mask_out {
                let lines: Vec<&str> = stats
                    .affected
                    .iter()
                    .map(|&b| if b { "1" } else { "0" })
                    .collect();
                std::fs::write(mask_out, lines.join("\n") + "\n")?;
            }
            println!(
                "{} tokens, {} masked ({:.2}%), {} of {} sentences affected",
                stats.total_tokens,
                stats.masked_tokens,
                100.0 * stats.masked_fraction(),
                stats.affected_sentences,
                degraded.len()
            );
        }
        Command::Synth(a) => {
            let spec = SyntheticTaskSpec {
                train_size: a.train,
                dev_size: a.dev,
                test_size: a.test,
                color_classes: a.colors,
                noise_sigma: a.sigma,
                feature_channels: a.channels,
                feature_classes: match a.classes.as_str() {
                    "color" => FeatureClassMode::Color,
                    "scene" => FeatureClassMode::Scene,
                    other => {
                        return Err(mmtprobe::Error::Config(format!(
                            "unknown class mode {other:?}"
                        )))
                    }
                },
                seed: a.seed,
                ..Default::default()
            };
            let ds = generate_synthetic(&spec)?;
            write_synthetic(&ds, &a.out_dir)?;
            println!(
                "wrote {} train / {} dev / {} test sentences to {}",
                spec.train_size,
                spec.dev_size,
                spec.test_size,
                a.out_dir.display()
            );
        }
        Command::Train(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            cfg.systems = vec![a.system.clone()];
            cfg.seeds = vec![a.seed];
            cfg.blinding = a.blinded;
            if a.blinded {
                // the blinded cell carries its own probes
                cfg.congruence = vec!["congruent".into()];
            }
            let summary = run_experiment(&cfg)?;
            println!(
                "trained {} cell(s), reused {}; failures: {}",
                summary.cells_trained,
                summary.cells_reused,
                summary.failures.len()
            );
            return Ok(summary.failures.is_empty());
        }
        Command::Translate(a) => {
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let tgt_path = a.tgt.clone().unwrap_or_else(|| a.src.clone());
            let corpus = Corpus::load(&a.src, &tgt_path)?;
            let sv = Vocabulary::load(&a.vocab_src)?;
            let tv = Vocabulary::load(&a.vocab_tgt)?;
            let features = match &a.features {
                Some(p) => {
                    let fs = load_features(p)?;
                    Some(if fs.layout() == mmtprobe::features::FeatureLayout::Spatial {
                        fs.normalize_depth()?
                    } else {
                        fs
                    })
                }
                None => None,
            };
            let order = match a.blind_order.as_str() {
                "reversed" => BlindOrder::Reversed,
                "shuffled" => BlindOrder::Shuffled,
                other => {
                    return Err(mmtprobe::Error::Config(format!(
                        "unknown blind order {other:?}"
                    )))
                }
            };
            let mode = match a.congruence.as_str() {
                "congruent" => CongruenceMode::Congruent,
                "incongruent" => CongruenceMode::Incongruent,
                "blinded" => CongruenceMode::Blinded {
                    order,
                    seed: a.blind_seed,
                },
                other => {
                    return Err(mmtprobe::Error::Config(format!(
                        "unknown congruence mode {other:?}"
                    )))
                }
            };
            let opts = TranslateOptions {
                mode,
                beam: a.beam,
                max_len: None,
                attn_dir: a.attn_out.clone(),
            };
            mmtprobe::decode::translate_corpus(
                &ckpt,
                &corpus,
                &sv,
                &tv,
                features.as_ref(),
                &opts,
                &a.out,
            )?;
            println!("wrote {} translations to {}", corpus.len(), a.out.display());
        }
        Command::Evaluate(a) => {
            let hyps = read_tokenized(&a.hyp)?;
            let refs = read_tokenized(&a.reference)?;
            let report = match Metric::parse(&a.metric)? {
                Metric::MeteorLite => meteor_lite(&hyps, &refs)?,
                Metric::Bleu => bleu(&hyps, &refs)?,
                Metric::ColorAcc => {
                    let lexicon = ColorLexicon::load(a.color_lexicon.as_ref().ok_or_else(
                        || mmtprobe::Error::config("color-acc needs --color-lexicon"),
                    )?)?;
                    let mask: Vec<bool> = match &a.mask {
                        Some(p) => std::fs::read_to_string(p)?
                            .lines()
                            .map(|l| l.trim() == "1")
                            .collect(),
                        None => vec![true; refs.len()],
                    };
                    color_accuracy(&hyps, &refs, &mask, &lexicon)?
                }
            };
            println!("{}: {:.4}", report.metric, report.corpus_score);
            if let Some(out) = &a.out {
                std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Significance(a) => {
            let load = |paths: &[PathBuf]| -> Result<Vec<Vec<f64>>> {
                paths
                    .iter()
                    .map(|p| {
                        let r: MetricReport =
                            serde_json::from_str(&std::fs::read_to_string(p)?)?;
                        Ok(r.sentence_scores)
                    })
                    .collect()
            };
            let p = significance_test(&load(&a.a)?, &load(&a.b)?, a.resamples, a.seed)?;
            println!("p-value: {p:.6}");
        }
        Command::Report(a) => {
            let metric = Metric::parse(&a.metric)?;
            if a.progressive {
                let mut dirs = Vec::new();
                for d in &a.results {
                    let text = std::fs::read_to_string(d.join("summary.json"))?;
                    let summary: mmtprobe::exp::RunSummary = serde_json::from_str(&text)?;
                    let k = if summary.degradation == "progressive" {
                        summary.progressive_k
                    } else {
                        None
                    };
                    dirs.push((k, d.clone()));
                }
                print!(
                    "{}",
                    progressive_curve_from_dirs(&dirs, metric, &a.baseline)?
                );
            } else if let Some(compare) = &a.compare {
                let parts: Vec<&str> = compare.split(',').collect();
                if parts.len() != 3 {
                    return Err(mmtprobe::Error::config(
                        "--compare expects \"systemA,systemB,mode\"",
                    ));
                }
                let p = significance_from_dirs(
                    &a.results[0],
                    parts[0],
                    parts[1],
                    parts[2],
                    metric,
                    &a.seeds,
                    a.resamples,
                    a.seed,
                )?;
                println!("p-value ({} vs {}, {}): {p:.6}", parts[0], parts[1], parts[2]);
            } else {
                for d in &a.results {
                    let path = d.join("reports").join("scores.md");
                    println!("{}", std::fs::read_to_string(&path)?);
                }
            }
        }
        Command::Run(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let summary = run_experiment(&cfg)?;
            println!(
                "cells trained: {}, reused: {}",
                summary.cells_trained, summary.cells_reused
            );
            for (key, s) in &summary.scores {
                println!("  {key}: mean {:.2} ± {:.2}", s.mean, s.stdev);
            }
            for row in &summary.gain_drop {
                println!("  gain/drop {row}");
            }
            for f in &summary.failures {
                eprintln!("FAILED {f}");
            }
            return Ok(summary.failures.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
