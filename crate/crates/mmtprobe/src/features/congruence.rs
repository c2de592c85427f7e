//! Image–sentence congruence: the index maps that align, reverse, or
//! scramble feature rows against the corpus.

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Ordering used when a model is blinded (trained and decoded with
/// incongruent features).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BlindOrder {
    /// Reverse sample order, like decode-time incongruence.
    Reversed,
    /// Seeded fixed-point-free shuffle, so the misalignment is not
    /// learnable from position.
    #[default]
    Shuffled,
}

/// How feature rows are assigned to sentences.
///
/// `Incongruent` (reverse order) applies at decoding only; `Blinded`
/// applies at training and decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum CongruenceMode {
    Congruent,
    Incongruent,
    Blinded { order: BlindOrder, seed: u64 },
}

impl CongruenceMode {
    pub fn label(&self) -> &'static str {
        match self {
            CongruenceMode::Congruent => "congruent",
            CongruenceMode::Incongruent => "incongruent",
            CongruenceMode::Blinded { .. } => "blinded",
        }
    }

    pub fn applies_at_training(&self) -> bool {
        matches!(self, CongruenceMode::Blinded { .. })
    }
}

/// Index map from sentence position to feature row for a corpus of `n`
/// rows: identity, reversal, or a seeded derangement that is fixed for
/// the whole run.
pub fn remap_order(mode: CongruenceMode, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::contract("remap_order over an empty corpus"));
    }
    Ok(match mode {
        CongruenceMode::Congruent => (0..n).collect(),
        CongruenceMode::Incongruent => (0..n).rev().collect(),
        CongruenceMode::Blinded { order, seed } => match order {
            BlindOrder::Reversed => (0..n).rev().collect(),
            BlindOrder::Shuffled => derangement(n, seed),
        },
    })
}

/// Seeded shuffle with fixed points removed deterministically.
fn derangement(n: usize, seed: u64) -> Vec<usize> {
    let mut map: Vec<usize> = (0..n).collect();
    if n < 2 {
        return map;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(300);
    map.shuffle(&mut rng);
    // pair up remaining fixed points; a lone leftover swaps with its
    // cyclic successor (which cannot become fixed: map is a bijection)
    let fixed: Vec<usize> = (0..n).filter(|&i| map[i] == i).collect();
    for pair in fixed.chunks(2) {
        match *pair {
            [a, b] => map.swap(a, b),
            [a] => {
                let b = (a + 1) % n;
                map.swap(a, b);
            }
            _ => unreachable!(),
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reversed_three() {
        assert_eq!(
            remap_order(CongruenceMode::Incongruent, 3).unwrap(),
            vec![2, 1, 0]
        );
    }

    #[test]
    fn reversing_twice_is_identity() {
        let n = 17;
        let rev = remap_order(CongruenceMode::Incongruent, n).unwrap();
        let id: Vec<usize> = (0..n).map(|i| rev[rev[i]]).collect();
        assert_eq!(id, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn congruent_is_identity() {
        assert_eq!(
            remap_order(CongruenceMode::Congruent, 4).unwrap(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn blinded_shuffle_is_reproducible_and_moves_everything() {
        let mode = CongruenceMode::Blinded {
            order: BlindOrder::Shuffled,
            seed: 99,
        };
        let a = remap_order(mode, 1000).unwrap();
        let b = remap_order(mode, 1000).unwrap();
        assert_eq!(a, b);
        let moved = a.iter().enumerate().filter(|&(i, &m)| i != m).count();
        assert!(moved >= 990, "moved only {moved} of 1000");
        // still a permutation
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn blinded_derangements_have_no_fixed_points() {
        for seed in 0..50 {
            for n in [2usize, 3, 5, 64, 101] {
                let map = derangement(n, seed);
                assert!(
                    map.iter().enumerate().all(|(i, &m)| i != m),
                    "seed {seed} n {n}: {map:?}"
                );
                let mut sorted = map.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
