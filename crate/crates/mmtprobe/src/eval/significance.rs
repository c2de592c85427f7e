//! Stratified approximate randomization over (run, sentence) pairs.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-sided approximate randomization test between two systems, each
/// given as per-sentence score vectors from one or more matched
/// optimizer runs.
///
/// Observed statistic: |mean(A) − mean(B)| over all (run, sentence)
/// cells. Each resample flips every cell's A/B assignment with
/// probability ½ within its matched run pair; the p-value is
/// (1 + #{resampled Δ ≥ observed Δ}) / (1 + resamples), so p never
/// reaches 0 and p(A, B) = p(B, A) for the same seed.
pub fn significance_test(
    runs_a: &[Vec<f64>],
    runs_b: &[Vec<f64>],
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if runs_a.is_empty() || runs_a.len() != runs_b.len() {
        return Err(Error::Alignment(format!(
            "need matched run counts, got {} vs {}",
            runs_a.len(),
            runs_b.len()
        )));
    }
    let sentences = runs_a[0].len();
    if sentences == 0 {
        return Err(Error::Alignment("runs contain no sentences".into()));
    }
    for run in runs_a.iter().chain(runs_b) {
        if run.len() != sentences {
            return Err(Error::Alignment(format!(
                "per-sentence vectors are misaligned: {} vs {sentences}",
                run.len()
            )));
        }
    }

    let cells = (runs_a.len() * sentences) as f64;
    let mean =
        |runs: &[Vec<f64>]| runs.iter().flatten().sum::<f64>() / cells;
    let observed = (mean(runs_a) - mean(runs_b)).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(500);
    let mut at_least = 0usize;
    for _ in 0..resamples {
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        for (ra, rb) in runs_a.iter().zip(runs_b) {
            for (&a, &b) in ra.iter().zip(rb) {
                if rng.gen::<bool>() {
                    sum_a += b;
                    sum_b += a;
                } else {
                    sum_a += a;
                    sum_b += b;
                }
            }
        }
        let delta = ((sum_a - sum_b) / cells).abs();
        if delta >= observed {
            at_least += 1;
        }
    }
    Ok((1 + at_least) as f64 / (1 + resamples) as f64)
}
