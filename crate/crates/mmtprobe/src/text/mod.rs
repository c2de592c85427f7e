//! Text pipeline: tokenization, vocabularies, corpora, degradation
//! schemes, and batching.

pub mod batch;
pub mod corpus;
pub mod degrade;
pub mod tokenizer;
pub mod vocab;

pub use batch::{batches, encode_corpus, encode_sample, Batch, EncodedSample};
pub use corpus::{Corpus, ParallelSample, Side};
pub use degrade::{
    apply_color_deprivation, apply_entity_masking, apply_progressive_masking, degrade_corpus,
    load_color_lexicon, parse_color_lexicon, DegradationSpec, DegradationStats,
    EntityAnnotations, DEFAULT_COLOR_LEXICON,
};
pub use tokenizer::{stitch_hyphens, tokenize, HYPHEN_MARKER, MASK_TOKEN};
pub use vocab::{Vocabulary, BOS_ID, EOS_ID, MASK_ID, PAD_ID, UNK_ID};
