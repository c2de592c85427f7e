//! Report shapes: gain / incongruence-drop tables, progressive-masking
//! curves, and mean ± stdev formatting.

use super::significance::significance_test;
use super::MetricReport;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Mean and sample standard deviation (n−1; zero for a single value).
pub fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `70.6 ± 0.5` style, one decimal.
pub fn format_mean_stdev(values: &[f64]) -> String {
    let (m, s) = mean_stdev(values);
    format!("{m:.1} ± {s:.1}")
}

/// Significance stars: `**` at p ≤ 0.01, `*` at p ≤ 0.05.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}

/// Runs of one (system, congruence) cell.
#[derive(Debug, Clone, Default)]
pub struct Cell {
    pub runs: Vec<MetricReport>,
}

impl Cell {
    pub fn mean_corpus_score(&self) -> f64 {
        mean_stdev(&self.corpus_scores()).0
    }

    pub fn corpus_scores(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.corpus_score).collect()
    }

    fn sentence_runs(&self) -> Vec<Vec<f64>> {
        self.runs.iter().map(|r| r.sentence_scores.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GainDropRow {
    pub system: String,
    pub gain: f64,
    pub drop: f64,
    /// Significance of the gain against the baseline (congruent runs).
    pub p_gain: f64,
    pub rendered: String,
}

/// Per multimodal system: gain = score(MMT, congruent) − score(baseline,
/// congruent); drop = score(MMT, congruent) − score(MMT, incongruent);
/// rendered `+g (↓ d)` with significance stars. Missing cells are an
/// error naming the absent runs.
pub fn gain_drop_report(
    cells: &BTreeMap<(String, String), Cell>,
    systems: &[&str],
    baseline: &str,
    resamples: usize,
    seed: u64,
) -> Result<Vec<GainDropRow>> {
    let get = |system: &str, congruence: &str| -> Result<&Cell> {
        cells
            .get(&(system.to_string(), congruence.to_string()))
            .filter(|c| !c.runs.is_empty())
            .ok_or_else(|| {
                Error::Config(format!(
                    "gain/drop report: no runs for ({system}, {congruence})"
                ))
            })
    };
    let base = get(baseline, "congruent")?;
    let base_score = base.mean_corpus_score();
    let mut rows = Vec::new();
    for &system in systems {
        if system == baseline {
            continue;
        }
        let congruent = get(system, "congruent")?;
        let incongruent = get(system, "incongruent")?;
        let score = congruent.mean_corpus_score();
        let gain = score - base_score;
        let drop = score - incongruent.mean_corpus_score();
        let p_gain = significance_test(
            &congruent.sentence_runs(),
            &base.sentence_runs(),
            resamples,
            seed,
        )?;
        let rendered = format!("{gain:+.1}{} (↓ {drop:.1})", stars(p_gain));
        rows.push(GainDropRow {
            system: system.to_string(),
            gain,
            drop,
            p_gain,
            rendered,
        });
    }
    Ok(rows)
}

/// One progressive-masking grid point: k (None = undegraded), corpus
/// score per system, and the fraction of unmasked training words.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub k: Option<usize>,
    pub scores: BTreeMap<String, f64>,
    pub unmasked_fraction: f64,
}

/// Plottable CSV: one row per k with per-system scores, each multimodal
/// system's gain over the baseline, and the unmasked-word fraction.
pub fn progressive_curve_csv(points: &[CurvePoint], baseline: &str) -> Result<String> {
    if points.is_empty() {
        return Ok(String::new());
    }
    let systems: Vec<&String> = points[0].scores.keys().collect();
    let mut header: Vec<String> = vec!["k".into()];
    header.extend(systems.iter().map(|s| s.to_string()));
    header.extend(
        systems
            .iter()
            .filter(|s| s.as_str() != baseline)
            .map(|s| format!("gain_{s}")),
    );
    header.push("unmasked_fraction".into());
    let mut out = header.join(",") + "\n";

    for p in points {
        let base = *p.scores.get(baseline).ok_or_else(|| {
            Error::Config(format!("curve point lacks the baseline system {baseline}"))
        })?;
        let mut row: Vec<String> = vec![p.k.map_or("full".into(), |k| k.to_string())];
        for s in &systems {
            let v = p.scores.get(*s).ok_or_else(|| {
                Error::Config(format!("curve point lacks system {s}"))
            })?;
            row.push(format!("{v:.4}"));
        }
        for s in &systems {
            if s.as_str() != baseline {
                row.push(format!("{:.4}", p.scores[*s] - base));
            }
        }
        row.push(format!("{:.6}", p.unmasked_fraction));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(corpus: f64, sentences: Vec<f64>) -> MetricReport {
        MetricReport {
            metric: "meteor-lite".into(),
            corpus_score: corpus,
            sentence_scores: sentences,
        }
    }

    #[test]
    fn single_run_prints_zero_stdev() {
        assert_eq!(format_mean_stdev(&[70.6]), "70.6 ± 0.0");
    }

    #[test]
    fn fixture_mean_stdev() {
        assert_eq!(format_mean_stdev(&[70.1, 70.6, 71.1]), "70.6 ± 0.5");
    }

    #[test]
    fn paper_footnote_fixture() {
        // baseline 50.5, system 53.9 congruent / 47.4 incongruent
        let mut cells = BTreeMap::new();
        cells.insert(
            ("nmt".to_string(), "congruent".to_string()),
            Cell {
                runs: vec![report(50.5, vec![50.0, 51.0])],
            },
        );
        cells.insert(
            ("init".to_string(), "congruent".to_string()),
            Cell {
                runs: vec![report(53.9, vec![53.0, 54.8])],
            },
        );
        cells.insert(
            ("init".to_string(), "incongruent".to_string()),
            Cell {
                runs: vec![report(47.4, vec![47.0, 47.8])],
            },
        );
        let rows = gain_drop_report(&cells, &["nmt", "init"], "nmt", 200, 5).unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].gain - 3.4).abs() < 1e-9);
        assert!((rows[0].drop - 6.5).abs() < 1e-9);
        assert!(rows[0].rendered.starts_with("+3.4"));
        assert!(rows[0].rendered.ends_with("(↓ 6.5)"));
    }

    #[test]
    fn equal_scores_give_zero_gain_and_drop() {
        let mut cells = BTreeMap::new();
        for (sys, cong) in [("nmt", "congruent"), ("hier", "congruent"), ("hier", "incongruent")] {
            cells.insert(
                (sys.to_string(), cong.to_string()),
                Cell {
                    runs: vec![report(60.0, vec![60.0; 4])],
                },
            );
        }
        let rows = gain_drop_report(&cells, &["nmt", "hier"], "nmt", 100, 1).unwrap();
        assert_eq!(rows[0].gain, 0.0);
        assert_eq!(rows[0].drop, 0.0);
        // identical per-sentence scores: p = 1, no stars
        assert_eq!(rows[0].p_gain, 1.0);
        assert!(!rows[0].rendered.contains('*'));
    }

    #[test]
    fn missing_cell_is_an_error_naming_the_cell() {
        let mut cells = BTreeMap::new();
        cells.insert(
            ("nmt".to_string(), "congruent".to_string()),
            Cell {
                runs: vec![report(50.0, vec![50.0])],
            },
        );
        let err = gain_drop_report(&cells, &["nmt", "direct"], "nmt", 10, 1).unwrap_err();
        assert!(err.to_string().contains("direct"), "{err}");
    }

    #[test]
    fn curve_single_point_and_gain_column() {
        let mut scores = BTreeMap::new();
        scores.insert("nmt".to_string(), 40.0);
        scores.insert("direct".to_string(), 47.25);
        let csv = progressive_curve_csv(
            &[CurvePoint {
                k: Some(4),
                scores,
                unmasked_fraction: 0.57,
            }],
            "nmt",
        )
        .unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "k,direct,nmt,gain_direct,unmasked_fraction");
        assert_eq!(lines[1], "4,47.2500,40.0000,7.2500,0.570000");
    }
}
