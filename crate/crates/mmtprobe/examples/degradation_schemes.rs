//! The three input degradations applied to one sentence, plus corpus
//! statistics.

use mmtprobe::text::{
    apply_color_deprivation, apply_entity_masking, apply_progressive_masking, degrade_corpus,
    parse_color_lexicon, tokenize, Corpus, DegradationSpec, EntityAnnotations, ParallelSample,
    DEFAULT_COLOR_LEXICON,
};

fn main() -> mmtprobe::Result<()> {
    let sentence = tokenize("A lady in a blue dress singing");
    let lexicon = parse_color_lexicon(DEFAULT_COLOR_LEXICON);

    println!("original:            {}", sentence.join(" "));
    println!(
        "color deprivation:   {}",
        apply_color_deprivation(&sentence, &lexicon).join(" ")
    );
    println!(
        "entity masking:      {}",
        apply_entity_masking(&sentence, &[1, 5], 0)?.join(" ")
    );
    for k in [4, 2, 0] {
        println!(
            "progressive k = {k}:   {}",
            apply_progressive_masking(&sentence, k).join(" ")
        );
    }

    // per-corpus statistics
    let corpus = Corpus {
        samples: [
            "a lady in a blue dress singing",
            "two dogs chase a red ball",
            "a man reads a newspaper",
        ]
        .iter()
        .map(|s| ParallelSample {
            source: tokenize(s),
            target: tokenize("une phrase cible"),
            image_index: 0,
        })
        .collect(),
    };
    let annotations =
        EntityAnnotations::new([(0, vec![1, 5]), (1, vec![1, 5]), (2, vec![1, 4])].into());
    for spec in [
        DegradationSpec::color_default(),
        DegradationSpec::Entity { annotations },
        DegradationSpec::progressive(4)?,
    ] {
        let (_, stats) = degrade_corpus(&corpus, &spec)?;
        println!(
            "\n{}: {} of {} tokens masked ({:.1}%), {} sentences affected",
            spec.label(),
            stats.masked_tokens,
            stats.total_tokens,
            100.0 * stats.masked_fraction(),
            stats.affected_sentences
        );
    }
    Ok(())
}
