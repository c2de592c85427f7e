//! Experiment orchestration: configuration, the (scheme × system ×
//! seed × congruence) grid, synthetic dataset generation, and report
//! emission.

mod manifest;
mod runner;
mod synthetic;

pub use manifest::{hash_bytes, hash_file, hash_parts, CellRecord, Manifest};
pub use runner::{
    progressive_curve_from_dirs, run_experiment, significance_from_dirs, worker_count,
    RunSummary, ScoreSummary,
};
pub use synthetic::{
    generate_synthetic, write_synthetic, FeatureClassMode, SyntheticDataset, SyntheticSplit,
    SyntheticTaskSpec,
};

use crate::error::{Error, Result};
use crate::eval::Metric;
use crate::features::BlindOrder;
use crate::train::DecayMode;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Where the corpora and resources live. Source/target files are plain
/// UTF-8, one sentence per line, line-aligned; features are MMTF files
/// row-aligned to their split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataPaths {
    pub train_src: PathBuf,
    pub train_tgt: PathBuf,
    pub dev_src: PathBuf,
    pub dev_tgt: PathBuf,
    pub test_src: PathBuf,
    pub test_tgt: PathBuf,
    #[serde(default)]
    pub train_features: Option<PathBuf>,
    #[serde(default)]
    pub dev_features: Option<PathBuf>,
    #[serde(default)]
    pub test_features: Option<PathBuf>,
    /// Entity annotation TSVs, one per split (sample-index TAB indices).
    #[serde(default)]
    pub annotations_train: Option<PathBuf>,
    #[serde(default)]
    pub annotations_dev: Option<PathBuf>,
    #[serde(default)]
    pub annotations_test: Option<PathBuf>,
    /// Source color lexicon (one word per line); built-in list when
    /// absent.
    #[serde(default)]
    pub color_lexicon: Option<PathBuf>,
    /// Target color lexicon (`surface TAB class`), for color accuracy.
    #[serde(default)]
    pub tgt_color_lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradationConfig {
    /// none | color | entity | progressive
    #[serde(default = "default_kind")]
    pub kind: String,
    /// k for progressive masking.
    #[serde(default)]
    pub k: Option<usize>,
}

fn default_kind() -> String {
    "none".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSettings {
    #[serde(default = "d_emb")]
    pub emb_dim: usize,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    /// 0 means "use hidden".
    #[serde(default)]
    pub attn_dim: usize,
    #[serde(default = "d_p04")]
    pub dropout_src_emb: f64,
    #[serde(default = "d_p05")]
    pub dropout_enc_out: f64,
    #[serde(default = "d_p05")]
    pub dropout_dec_out: f64,
}

fn d_emb() -> usize {
    200
}
fn d_hidden() -> usize {
    400
}
fn d_p04() -> f64 {
    0.4
}
fn d_p05() -> f64 {
    0.5
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            emb_dim: d_emb(),
            hidden: d_hidden(),
            attn_dim: 0,
            dropout_src_emb: d_p04(),
            dropout_enc_out: d_p05(),
            dropout_dec_out: d_p05(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSettings {
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_clip")]
    pub clip_norm: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default)]
    pub decay_mode: DecayMode,
    #[serde(default = "d_patience")]
    pub patience: usize,
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_one")]
    pub beam_for_dev: usize,
}

fn d_lr() -> f64 {
    4e-4
}
fn d_batch() -> usize {
    64
}
fn d_clip() -> f64 {
    1.0
}
fn d_wd() -> f64 {
    1e-5
}
fn d_patience() -> usize {
    10
}
fn d_max_epochs() -> usize {
    100
}
fn d_one() -> usize {
    1
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            lr: d_lr(),
            batch_size: d_batch(),
            clip_norm: d_clip(),
            weight_decay: d_wd(),
            decay_mode: DecayMode::Coupled,
            patience: d_patience(),
            max_epochs: d_max_epochs(),
            beam_for_dev: d_one(),
        }
    }
}

/// One experiment: a degradation scheme trained and probed across
/// systems, seeds, and congruence modes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub data: DataPaths,
    #[serde(default = "default_degradation")]
    pub degradation: DegradationConfig,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "default_systems")]
    pub systems: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_congruence")]
    pub congruence: Vec<String>,
    /// Also train blinded variants of every multimodal system.
    #[serde(default)]
    pub blinding: bool,
    #[serde(default)]
    pub blind_order: BlindOrder,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "d_beam")]
    pub beam: usize,
}

fn default_degradation() -> DegradationConfig {
    DegradationConfig {
        kind: default_kind(),
        k: None,
    }
}
fn default_systems() -> Vec<String> {
    vec!["nmt".into(), "init".into(), "hier".into(), "direct".into()]
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_congruence() -> Vec<String> {
    vec!["congruent".into(), "incongruent".into()]
}
fn default_metrics() -> Vec<Metric> {
    vec![Metric::MeteorLite]
}
fn d_beam() -> usize {
    12
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // paths in the file are relative to the file's directory
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.output_dir);
        let d = &mut self.data;
        for p in [
            &mut d.train_src,
            &mut d.train_tgt,
            &mut d.dev_src,
            &mut d.dev_tgt,
            &mut d.test_src,
            &mut d.test_tgt,
        ] {
            fix(p);
        }
        for p in [
            &mut d.train_features,
            &mut d.dev_features,
            &mut d.test_features,
            &mut d.annotations_train,
            &mut d.annotations_dev,
            &mut d.annotations_test,
            &mut d.color_lexicon,
            &mut d.tgt_color_lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}
