//! Sample encoding and padded mini-batching.

use crate::text::corpus::{Corpus, ParallelSample};
use crate::text::vocab::{Vocabulary, BOS_ID, EOS_ID, PAD_ID};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Id-encoded sentence pair. Source carries a trailing EOS; target is
/// wrapped BOS … EOS. Unknown tokens map to UNK.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub image_index: usize,
}

pub fn encode_sample(
    sample: &ParallelSample,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> EncodedSample {
    let mut source: Vec<usize> = sample.source.iter().map(|t| src_vocab.encode(t)).collect();
    source.push(EOS_ID);
    let mut target = Vec::with_capacity(sample.target.len() + 2);
    target.push(BOS_ID);
    target.extend(sample.target.iter().map(|t| tgt_vocab.encode(t)));
    target.push(EOS_ID);
    EncodedSample {
        source,
        target,
        image_index: sample.image_index,
    }
}

pub fn encode_corpus(
    corpus: &Corpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Vec<EncodedSample> {
    corpus
        .samples
        .iter()
        .map(|s| encode_sample(s, src_vocab, tgt_vocab))
        .collect()
}

/// Padded batch; masks hold 1.0 on real positions and 0.0 on padding.
#[derive(Debug, Clone)]
pub struct Batch {
    /// B×T source ids, PAD-padded.
    pub source: Vec<Vec<usize>>,
    pub source_mask: Vec<Vec<f64>>,
    /// B×T' target ids (BOS … EOS), PAD-padded.
    pub target: Vec<Vec<usize>>,
    pub target_mask: Vec<Vec<f64>>,
    pub image_indices: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.source.len()
    }

    pub fn src_len(&self) -> usize {
        self.source.first().map_or(0, |s| s.len())
    }

    pub fn tgt_len(&self) -> usize {
        self.target.first().map_or(0, |t| t.len())
    }

    fn from_samples(samples: &[&EncodedSample]) -> Batch {
        let t_src = samples.iter().map(|s| s.source.len()).max().unwrap_or(0);
        let t_tgt = samples.iter().map(|s| s.target.len()).max().unwrap_or(0);
        let mut batch = Batch {
            source: Vec::with_capacity(samples.len()),
            source_mask: Vec::with_capacity(samples.len()),
            target: Vec::with_capacity(samples.len()),
            target_mask: Vec::with_capacity(samples.len()),
            image_indices: Vec::with_capacity(samples.len()),
        };
        for s in samples {
            let mut src = s.source.clone();
            let mut src_mask = vec![1.0; src.len()];
            src.resize(t_src, PAD_ID);
            src_mask.resize(t_src, 0.0);
            let mut tgt = s.target.clone();
            let mut tgt_mask = vec![1.0; tgt.len()];
            tgt.resize(t_tgt, PAD_ID);
            tgt_mask.resize(t_tgt, 0.0);
            batch.source.push(src);
            batch.source_mask.push(src_mask);
            batch.target.push(tgt);
            batch.target_mask.push(tgt_mask);
            batch.image_indices.push(s.image_index);
        }
        batch
    }
}

/// Window factor for length bucketing: samples are shuffled, sorted by
/// source length within windows of this many batches, then emitted in
/// window order.
const BUCKET_WINDOW_BATCHES: usize = 32;

/// Padded batches for one epoch. The sequence is a pure function of
/// (seed, epoch): the same pair always yields the same batches.
pub fn batches(
    samples: &[EncodedSample],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);

    let window = BUCKET_WINDOW_BATCHES * batch_size;
    for chunk in order.chunks_mut(window.max(1)) {
        // stable: equal lengths keep their shuffled order
        chunk.sort_by_key(|&i| samples[i].source.len());
    }

    order
        .chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&EncodedSample> = chunk.iter().map(|&i| &samples[i]).collect();
            Batch::from_samples(&refs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::vocab::{UNK_ID, MASK_ID};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn vocabs() -> (Vocabulary, Vocabulary) {
        let src = [toks("a blue dress"), toks("a dog")];
        let tgt = [toks("une robe bleue"), toks("un chien")];
        (
            Vocabulary::build(src.iter().map(|s| s.as_slice())).unwrap(),
            Vocabulary::build(tgt.iter().map(|s| s.as_slice())).unwrap(),
        )
    }

    #[test]
    fn encode_wraps_and_maps_oov() {
        let (sv, tv) = vocabs();
        let sample = ParallelSample {
            source: toks("a zebra"),
            target: toks("un chien"),
            image_index: 3,
        };
        let e = encode_sample(&sample, &sv, &tv);
        assert_eq!(e.source.last(), Some(&EOS_ID));
        assert_eq!(e.source[1], UNK_ID);
        assert_eq!(e.target.first(), Some(&BOS_ID));
        assert_eq!(e.target.last(), Some(&EOS_ID));
        assert_eq!(e.image_index, 3);
    }

    #[test]
    fn mask_token_encodes_to_reserved_id() {
        let (sv, tv) = vocabs();
        let sample = ParallelSample {
            source: toks("a [v]"),
            target: toks("un chien"),
            image_index: 0,
        };
        let e = encode_sample(&sample, &sv, &tv);
        assert_eq!(e.source[1], MASK_ID);
    }

    fn synthetic_samples(n: usize) -> Vec<EncodedSample> {
        (0..n)
            .map(|i| EncodedSample {
                source: vec![5 + i % 7; 3 + i % 5],
                target: vec![BOS_ID, 5, EOS_ID],
                image_index: i,
            })
            .collect()
    }

    #[test]
    fn oversize_batch_holds_everything() {
        let samples = synthetic_samples(10);
        let b = batches(&samples, 100, 1, 0);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].size(), 10);
    }

    #[test]
    fn same_seed_and_epoch_is_deterministic() {
        let samples = synthetic_samples(257);
        let a = batches(&samples, 16, 9, 4);
        let b = batches(&samples, 16, 9, 4);
        let flat = |bs: &[Batch]| -> Vec<usize> {
            bs.iter().flat_map(|b| b.image_indices.clone()).collect()
        };
        assert_eq!(flat(&a), flat(&b));
        // different epoch shuffles differently
        let c = batches(&samples, 16, 9, 5);
        assert_ne!(flat(&a), flat(&c));
    }

    #[test]
    fn batches_partition_the_corpus() {
        let samples = synthetic_samples(101);
        let bs = batches(&samples, 8, 3, 2);
        let mut seen: Vec<usize> = bs.iter().flat_map(|b| b.image_indices.clone()).collect();
        seen.sort_unstable();
        let expected: Vec<usize> = (0..101).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn padding_and_masks_agree() {
        let samples = synthetic_samples(9);
        for b in batches(&samples, 4, 7, 0) {
            for (row, mask) in b.source.iter().zip(&b.source_mask) {
                assert_eq!(row.len(), b.src_len());
                for (id, m) in row.iter().zip(mask) {
                    if *m == 0.0 {
                        assert_eq!(*id, PAD_ID);
                    }
                }
            }
        }
    }
}
