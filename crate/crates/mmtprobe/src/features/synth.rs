//! Synthetic feature generation: a desk-scale stand-in for CNN features
//! where each image's class (its masked color, or a richer scene label)
//! is recoverable from the feature vector by construction.

use super::{FeatureLayout, FeatureSet};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Build one feature row per label: one-hot(label) in the first
/// `k_classes` channels plus Gaussian noise (σ = `sigma`) in all
/// `channels`, then L2-normalized. The spatial layout tiles each vector
/// over a 2×2 grid. Values are snapped through f32 so file round-trips
/// are bit-exact.
pub fn synthesize_features(
    labels: &[usize],
    k_classes: usize,
    channels: usize,
    sigma: f64,
    seed: u64,
    layout: FeatureLayout,
) -> Result<FeatureSet> {
    if k_classes > channels {
        return Err(Error::Config(format!(
            "{k_classes} classes do not fit in {channels} channels"
        )));
    }
    if labels.is_empty() {
        return Err(Error::contract("synthesize_features needs at least one label"));
    }
    for &l in labels {
        if l >= k_classes {
            return Err(Error::Index {
                what: "class label",
                index: l,
                size: k_classes,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(400);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let (h, w) = match layout {
        FeatureLayout::Pooled => (1usize, 1usize),
        FeatureLayout::Spatial => (2, 2),
    };
    let mut data = Vec::with_capacity(labels.len() * channels * h * w);
    for &label in labels {
        let mut vec: Vec<f64> = (0..channels)
            .map(|c| {
                let hot = if c == label { 1.0 } else { 0.0 };
                hot + sigma * normal.sample(&mut rng)
            })
            .collect();
        let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > crate::tensor::ZERO_NORM_EPS {
            for v in &mut vec {
                *v /= norm;
            }
        }
        // channel-outermost C×H×W with the vector tiled over the grid
        for &v in &vec {
            let snapped = v as f32 as f64;
            for _ in 0..h * w {
                data.push(snapped);
            }
        }
    }
    FeatureSet::new(layout, labels.len(), channels, h, w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_full_classes_gives_basis_vectors() {
        let labels = vec![0, 1, 2, 3];
        let fs =
            synthesize_features(&labels, 4, 4, 0.0, 1, FeatureLayout::Pooled).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            let row = fs.row(i);
            for (c, &v) in row.iter().enumerate() {
                let expect = if c == l { 1.0 } else { 0.0 };
                assert_eq!(v, expect);
            }
        }
    }

    #[test]
    fn same_seed_is_identical() {
        let labels: Vec<usize> = (0..40).map(|i| i % 8).collect();
        let a = synthesize_features(&labels, 8, 32, 0.1, 7, FeatureLayout::Spatial).unwrap();
        let b = synthesize_features(&labels, 8, 32, 0.1, 7, FeatureLayout::Spatial).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_classes_is_a_configuration_error() {
        assert!(synthesize_features(&[0], 9, 8, 0.1, 1, FeatureLayout::Pooled).is_err());
    }

    #[test]
    fn spatial_tiles_the_pooled_vector() {
        let labels = vec![2, 5];
        let sp = synthesize_features(&labels, 8, 16, 0.1, 3, FeatureLayout::Spatial).unwrap();
        assert_eq!(sp.grid(), (2, 2));
        for r in 0..sp.rows() {
            let p0 = sp.position_vector(r, 0);
            for p in 1..4 {
                assert_eq!(sp.position_vector(r, p), p0, "row {r} position {p}");
            }
        }
        // pooling the tiled grid recovers the vector exactly
        let pooled = sp.global_average_pool().unwrap();
        for r in 0..sp.rows() {
            assert_eq!(pooled.row(r), sp.position_vector(r, 0).as_slice());
        }
    }

    #[test]
    fn nearest_centroid_recovers_labels() {
        // classification oracle: at σ = 0.1, K = 8, C = 32, the one-hot
        // structure must dominate the noise
        let labels: Vec<usize> = (0..500).map(|i| (i * 13 + 5) % 8).collect();
        let fs = synthesize_features(&labels, 8, 32, 0.1, 11, FeatureLayout::Pooled).unwrap();
        let mut correct = 0;
        for (i, &l) in labels.iter().enumerate() {
            let row = fs.row(i);
            // centroids are the unit basis vectors: nearest = argmax channel
            let argmax = row[..8]
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if argmax == l {
                correct += 1;
            }
        }
        let acc = correct as f64 / labels.len() as f64;
        assert!(acc >= 0.99, "nearest-centroid accuracy {acc}");
    }
}
