//! Synthetic color-grounding task: template sentences whose color word
//! exists only in the image features once the source is deprived.
//!
//! Source template: `a <N1> in a <COLOR> <N2> <VERB> [<ADV>…]`.
//! The target is a deterministic token-level transduction into a
//! distinct lexicon with French-style noun–adjective order (the color
//! follows the garment noun).

use crate::error::{Error, Result};
use crate::eval::ColorLexicon;
use crate::features::{synthesize_features, FeatureLayout, FeatureSet};
use crate::text::{Corpus, ParallelSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

const COLORS: [(&str, &str, &str); 8] = [
    // source, target surface, canonical class
    ("red", "rouge", "RED"),
    ("blue", "bleue", "BLUE"),
    ("green", "verte", "GREEN"),
    ("yellow", "jaune", "YELLOW"),
    ("black", "noire", "BLACK"),
    ("white", "blanche", "WHITE"),
    ("pink", "rose", "PINK"),
    ("brown", "brune", "BROWN"),
];

const NOUNS1: [(&str, &str); 8] = [
    ("lady", "dame"),
    ("man", "homme"),
    ("woman", "femme"),
    ("boy", "garcon"),
    ("girl", "fille"),
    ("dog", "chien"),
    ("cat", "chat"),
    ("rider", "cavalier"),
];

const NOUNS2: [(&str, &str); 8] = [
    ("dress", "robe"),
    ("shirt", "chemise"),
    ("hat", "chapeau"),
    ("coat", "manteau"),
    ("scarf", "echarpe"),
    ("jacket", "veste"),
    ("cap", "casquette"),
    ("vest", "gilet"),
];

const VERBS: [(&str, &str); 8] = [
    ("singing", "chantant"),
    ("running", "courant"),
    ("sleeping", "dormant"),
    ("walking", "marchant"),
    ("jumping", "sautant"),
    ("dancing", "dansant"),
    ("reading", "lisant"),
    ("waving", "saluant"),
];

const ADVERBS: [(&str, &str); 4] = [
    ("today", "aujourdhui"),
    ("outside", "dehors"),
    ("quietly", "calmement"),
    ("proudly", "fierement"),
];

/// What the synthesized feature vector encodes per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureClassMode {
    /// The masked color only (K = color_classes).
    #[default]
    Color,
    /// The (N1, color, N2) scene combination, so the image recovers
    /// more of the sentence the more of it is masked.
    Scene,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Color classes in play, ≤ 8.
    pub color_classes: usize,
    pub noun1_count: usize,
    pub noun2_count: usize,
    pub verb_count: usize,
    /// Up to this many trailing adverbs per sentence.
    pub adverb_max: usize,
    pub noise_sigma: f64,
    pub feature_channels: usize,
    pub feature_classes: FeatureClassMode,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec {
            train_size: 5000,
            dev_size: 500,
            test_size: 500,
            color_classes: 8,
            noun1_count: 8,
            noun2_count: 8,
            verb_count: 8,
            adverb_max: 2,
            noise_sigma: 0.1,
            feature_channels: 32,
            feature_classes: FeatureClassMode::Color,
            seed: 1,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 || self.dev_size == 0 || self.test_size == 0 {
            return Err(Error::config("every split needs at least one sentence"));
        }
        if self.color_classes == 0 || self.color_classes > COLORS.len() {
            return Err(Error::Config(format!(
                "color_classes must be 1..={}, got {}",
                COLORS.len(),
                self.color_classes
            )));
        }
        for (name, v, max) in [
            ("noun1_count", self.noun1_count, NOUNS1.len()),
            ("noun2_count", self.noun2_count, NOUNS2.len()),
            ("verb_count", self.verb_count, VERBS.len()),
            ("adverb_max", self.adverb_max, ADVERBS.len()),
        ] {
            if (name != "adverb_max" && v == 0) || v > max {
                return Err(Error::Config(format!("{name} must be 1..={max}, got {v}")));
            }
        }
        if self.k_classes() > self.feature_channels {
            return Err(Error::Config(format!(
                "{} feature classes do not fit in {} channels",
                self.k_classes(),
                self.feature_channels
            )));
        }
        Ok(())
    }

    /// Number of distinct feature classes under the configured mode.
    pub fn k_classes(&self) -> usize {
        match self.feature_classes {
            FeatureClassMode::Color => self.color_classes,
            FeatureClassMode::Scene => {
                self.noun1_count * self.color_classes * self.noun2_count
            }
        }
    }
}

/// One generated split plus its per-sample color labels.
#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub corpus: Corpus,
    /// Color class index per sample.
    pub colors: Vec<usize>,
    /// Feature class label per sample (equals `colors` in Color mode).
    pub feature_labels: Vec<usize>,
}

/// The full dataset: three splits with spatial features per split, the
/// source color lexicon, and the target color lexicon.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticTaskSpec,
    pub train: SyntheticSplit,
    pub dev: SyntheticSplit,
    pub test: SyntheticSplit,
    pub train_features: FeatureSet,
    pub dev_features: FeatureSet,
    pub test_features: FeatureSet,
}

impl SyntheticDataset {
    /// Source-side color words in play (for color deprivation).
    pub fn source_color_lexicon(&self) -> std::collections::BTreeSet<String> {
        COLORS[..self.spec.color_classes]
            .iter()
            .map(|(s, _, _)| s.to_string())
            .collect()
    }

    /// Target-side surface → canonical class map (for color accuracy).
    pub fn target_color_lexicon(&self) -> ColorLexicon {
        let map: BTreeMap<String, String> = COLORS[..self.spec.color_classes]
            .iter()
            .map(|(_, t, c)| (t.to_string(), c.to_string()))
            .collect();
        ColorLexicon::new(map)
    }

    /// Canonical class name of a color index.
    pub fn class_name(color: usize) -> &'static str {
        COLORS[color].2
    }
}

fn transduce(source: &[String]) -> Vec<String> {
    // token-level mapping with the color moved after the garment noun
    let lookup = |tok: &str| -> String {
        if tok == "a" {
            return "une".into();
        }
        if tok == "in" {
            return "dans".into();
        }
        for (s, t, _) in COLORS {
            if tok == s {
                return t.into();
            }
        }
        for (s, t) in NOUNS1.iter().chain(&NOUNS2).chain(&VERBS).chain(&ADVERBS) {
            if tok == *s {
                return (*t).into();
            }
        }
        tok.into()
    };
    let mut out: Vec<String> = source.iter().map(|t| lookup(t)).collect();
    // reorder: positions 4 (color) and 5 (garment noun) swap
    if out.len() >= 6 {
        out.swap(4, 5);
    }
    out
}

fn generate_split(
    spec: &SyntheticTaskSpec,
    size: usize,
    stream: u64,
) -> (SyntheticSplit, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    // colors stratified (every class equally frequent) but at shuffled
    // positions, so no index arithmetic correlates with the class
    let mut color_list: Vec<usize> = (0..size).map(|i| i % spec.color_classes).collect();
    use rand::seq::SliceRandom;
    color_list.shuffle(&mut rng);
    let mut samples = Vec::with_capacity(size);
    let mut colors = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for (i, &color) in color_list.iter().enumerate() {
        let n1 = rng.gen_range(0..spec.noun1_count);
        let n2 = rng.gen_range(0..spec.noun2_count);
        let verb = rng.gen_range(0..spec.verb_count);
        let n_adv = if spec.adverb_max == 0 {
            0
        } else {
            rng.gen_range(0..=spec.adverb_max)
        };
        let mut source: Vec<String> = vec![
            "a".into(),
            NOUNS1[n1].0.into(),
            "in".into(),
            "a".into(),
            COLORS[color].0.into(),
            NOUNS2[n2].0.into(),
            VERBS[verb].0.into(),
        ];
        for _ in 0..n_adv {
            source.push(ADVERBS[rng.gen_range(0..ADVERBS.len())].0.into());
        }
        let target = transduce(&source);
        samples.push(ParallelSample {
            source,
            target,
            image_index: i,
        });
        colors.push(color);
        labels.push(match spec.feature_classes {
            FeatureClassMode::Color => color,
            FeatureClassMode::Scene => {
                (n1 * spec.color_classes + color) * spec.noun2_count + n2
            }
        });
    }
    (
        SyntheticSplit {
            corpus: Corpus { samples },
            colors,
            feature_labels: labels.clone(),
        },
        labels,
    )
}

/// Generate the three splits with matching spatial feature sets. The
/// same spec and seed always produce identical data.
pub fn generate_synthetic(spec: &SyntheticTaskSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let (train, train_labels) = generate_split(spec, spec.train_size, 600);
    let (dev, dev_labels) = generate_split(spec, spec.dev_size, 601);
    let (test, test_labels) = generate_split(spec, spec.test_size, 602);
    let k = spec.k_classes();
    let make = |labels: &[usize], stream: u64| {
        synthesize_features(
            labels,
            k,
            spec.feature_channels,
            spec.noise_sigma,
            spec.seed.wrapping_add(stream),
            FeatureLayout::Spatial,
        )
    };
    Ok(SyntheticDataset {
        spec: spec.clone(),
        train_features: make(&train_labels, 610)?,
        dev_features: make(&dev_labels, 611)?,
        test_features: make(&test_labels, 612)?,
        train,
        dev,
        test,
    })
}

/// Write the dataset under `dir`: per split `<split>.src` / `<split>.tgt`
/// (clean text), `<split>.features.mmtf`, and `<split>.truth.tsv`
/// (sample index TAB color class); plus `colors.src.txt` (one color word
/// per line) and `colors.tgt.tsv` (surface TAB class).
pub fn write_synthetic(ds: &SyntheticDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, split, features) in [
        ("train", &ds.train, &ds.train_features),
        ("dev", &ds.dev, &ds.dev_features),
        ("test", &ds.test, &ds.test_features),
    ] {
        split
            .corpus
            .write_side(&dir.join(format!("{name}.src")), crate::text::Side::Source)?;
        split
            .corpus
            .write_side(&dir.join(format!("{name}.tgt")), crate::text::Side::Target)?;
        crate::features::write_features(features, &dir.join(format!("{name}.features.mmtf")))?;
        let mut f = std::fs::File::create(dir.join(format!("{name}.truth.tsv")))?;
        for (i, &c) in split.colors.iter().enumerate() {
            writeln!(f, "{i}\t{}", SyntheticDataset::class_name(c))?;
        }
    }
    let mut f = std::fs::File::create(dir.join("colors.src.txt"))?;
    for c in ds.source_color_lexicon() {
        writeln!(f, "{c}")?;
    }
    let mut f = std::fs::File::create(dir.join("colors.tgt.tsv"))?;
    for (_, t, class) in &COLORS[..ds.spec.color_classes] {
        writeln!(f, "{t}\t{class}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::degrade::{apply_color_deprivation, degrade_corpus, DegradationSpec};

    #[test]
    fn transduction_matches_the_handwritten_fixture() {
        let pairs = [
            ("a lady in a blue dress singing", "une dame dans une robe bleue chantant"),
            ("a man in a red hat running", "une homme dans une chapeau rouge courant"),
            ("a dog in a green coat sleeping", "une chien dans une manteau verte dormant"),
            ("a girl in a white scarf walking", "une fille dans une echarpe blanche marchant"),
            ("a boy in a black shirt jumping", "une garcon dans une chemise noire sautant"),
            ("a cat in a pink jacket dancing", "une chat dans une veste rose dansant"),
            ("a woman in a yellow cap reading", "une femme dans une casquette jaune lisant"),
            ("a rider in a brown vest waving", "une cavalier dans une gilet brune saluant"),
            (
                "a lady in a blue dress singing today",
                "une dame dans une robe bleue chantant aujourdhui",
            ),
            (
                "a man in a red coat walking outside quietly",
                "une homme dans une manteau rouge marchant dehors calmement",
            ),
        ];
        for (src, expect) in pairs {
            let source: Vec<String> = src.split_whitespace().map(String::from).collect();
            let got = transduce(&source).join(" ");
            assert_eq!(got, expect, "source {src:?}");
        }
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let spec = SyntheticTaskSpec {
            train_size: 40,
            dev_size: 10,
            test_size: 10,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.train.corpus.samples, b.train.corpus.samples);
        assert_eq!(a.test_features, b.test_features);
        // and written bytes are stable
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_synthetic(&a, d1.path()).unwrap();
        write_synthetic(&b, d2.path()).unwrap();
        for name in ["train.src", "test.tgt", "train.features.mmtf", "test.truth.tsv"] {
            assert_eq!(
                std::fs::read(d1.path().join(name)).unwrap(),
                std::fs::read(d2.path().join(name)).unwrap(),
                "{name}"
            );
        }
    }

    #[test]
    fn masking_hides_exactly_the_color() {
        let spec = SyntheticTaskSpec {
            train_size: 30,
            dev_size: 5,
            test_size: 5,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let lex = ds.source_color_lexicon();
        for (sample, &color) in ds.train.corpus.samples.iter().zip(&ds.train.colors) {
            let masked = apply_color_deprivation(&sample.source, &lex);
            assert_eq!(masked[4], "[v]");
            assert_eq!(sample.source[4], COLORS[color].0);
            let changed = masked
                .iter()
                .zip(&sample.source)
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(changed, 1, "only the color is masked");
        }
        // degradation marks every sentence as affected
        let (_, stats) = degrade_corpus(
            &ds.train.corpus,
            &DegradationSpec::color(lex).unwrap(),
        )
        .unwrap();
        assert_eq!(stats.affected_sentences, 30);
    }

    #[test]
    fn colors_are_stratified_per_split() {
        let spec = SyntheticTaskSpec {
            train_size: 80,
            dev_size: 16,
            test_size: 16,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        for split in [&ds.train, &ds.dev, &ds.test] {
            let mut counts = vec![0usize; spec.color_classes];
            for &c in &split.colors {
                counts[c] += 1;
            }
            let (min, max) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(max - min <= 1, "{counts:?}");
        }
    }

    #[test]
    fn scene_mode_multiplies_classes() {
        let spec = SyntheticTaskSpec {
            train_size: 10,
            dev_size: 2,
            test_size: 2,
            noun1_count: 3,
            noun2_count: 4,
            color_classes: 5,
            feature_channels: 64,
            feature_classes: FeatureClassMode::Scene,
            ..Default::default()
        };
        assert_eq!(spec.k_classes(), 60);
        let ds = generate_synthetic(&spec).unwrap();
        assert!(ds.train.feature_labels.iter().all(|&l| l < 60));
        // labels disagree with bare colors in scene mode
        assert_ne!(ds.train.feature_labels, ds.train.colors);
    }

    #[test]
    fn class_overflow_is_a_config_error() {
        let spec = SyntheticTaskSpec {
            feature_channels: 4,
            ..Default::default()
        };
        assert!(generate_synthetic(&spec).is_err());
    }
}
