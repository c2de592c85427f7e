//! Corpus metrics (METEOR-lite, BLEU, color accuracy), multi-run
//! significance testing, and report shapes.

mod bleu;
mod color;
mod meteor;
mod report;
mod significance;

pub use bleu::bleu;
pub use color::{color_accuracy, ColorLexicon};
pub use meteor::{align, meteor_lite, sentence_score, MeteorStats};
pub use report::{
    format_mean_stdev, gain_drop_report, mean_stdev, progressive_curve_csv, stars, Cell,
    CurvePoint, GainDropRow,
};
pub use significance::significance_test;

use serde::{Deserialize, Serialize};

/// Corpus-level score plus per-sentence scores of one system run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub corpus_score: f64,
    pub sentence_scores: Vec<f64>,
}

/// Which metric to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    MeteorLite,
    Bleu,
    ColorAcc,
}

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::MeteorLite => "meteor-lite",
            Metric::Bleu => "bleu",
            Metric::ColorAcc => "color-acc",
        }
    }

    pub fn parse(s: &str) -> crate::Result<Metric> {
        match s.to_lowercase().as_str() {
            "meteor-lite" | "meteor" => Ok(Metric::MeteorLite),
            "bleu" => Ok(Metric::Bleu),
            "color-acc" | "color" => Ok(Metric::ColorAcc),
            other => Err(crate::Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}
