//! Full-scale convergence check for the synthetic grounding task.

use mmtprobe::exp::{generate_synthetic, SyntheticTaskSpec};
use mmtprobe::features::CongruenceMode;
use mmtprobe::model::{FusionKind, ModelConfig};
use mmtprobe::text::{degrade_corpus, DegradationSpec, Vocabulary};
use mmtprobe::train::{train, TrainConfig};

fn main() -> mmtprobe::Result<()> {
    let spec = SyntheticTaskSpec {
        train_size: 5000,
        dev_size: 500,
        test_size: 500,
        adverb_max: 0,
        ..Default::default()
    };
    let ds = generate_synthetic(&spec)?;
    let color = DegradationSpec::color(ds.source_color_lexicon())?;
    let (train_deg, _) = degrade_corpus(&ds.train.corpus, &color)?;
    let (dev_deg, _) = degrade_corpus(&ds.dev.corpus, &color)?;
    let srcs: Vec<&[String]> = train_deg.samples.iter().chain(&dev_deg.samples).map(|s| s.source.as_slice()).collect();
    let tgts: Vec<&[String]> = train_deg.samples.iter().chain(&dev_deg.samples).map(|s| s.target.as_slice()).collect();
    let sv = Vocabulary::build(srcs.into_iter())?;
    let tv = Vocabulary::build(tgts.into_iter())?;
    for fusion in [FusionKind::Direct, FusionKind::Nmt] {
        let mcfg = ModelConfig {
            fusion,
            emb_dim: 64,
            hidden: 128,
            attn_dim: 128,
            dropout_src_emb: 0.2,
            dropout_enc_out: 0.2,
            dropout_dec_out: 0.2,
            src_vocab: sv.len(),
            tgt_vocab: tv.len(),
            feat_channels: ds.train_features.channels(),
            feat_positions: ds.train_features.positions(),
        };
        let tcfg = TrainConfig { lr: 2e-3, patience: 6, max_epochs: 6, ..TrainConfig::default_with_seed(1) };
        let t0 = std::time::Instant::now();
        let out = train(&mcfg, &tcfg, &train_deg, &dev_deg, &sv, &tv,
            Some(&ds.train_features), Some(&ds.dev_features), CongruenceMode::Congruent, None)?;
        println!("{} ({:.0?}):", fusion.label(), t0.elapsed());
        for r in &out.history {
            println!("  epoch {}: loss {:.4} dev {:.4}{}", r.epoch, r.train_loss, r.dev_score, if r.is_best {" *"} else {""});
        }
    }
    Ok(())
}
