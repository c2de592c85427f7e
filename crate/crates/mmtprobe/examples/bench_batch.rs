//! Rough timing of one training batch and one greedy decode at the
//! synthetic-task scale. Handy when tuning performance.

use mmtprobe::decode::Translator;
use mmtprobe::exp::{generate_synthetic, SyntheticTaskSpec};
use mmtprobe::model::{forward_loss, FusionKind, ModelConfig, ParameterSet};
use mmtprobe::tensor::Tape;
use mmtprobe::text::{batches, degrade_corpus, encode_corpus, DegradationSpec, Vocabulary};
use mmtprobe::train::{adam_step, clip_global_norm, gather_grads, OptimState, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() -> mmtprobe::Result<()> {
    let spec = SyntheticTaskSpec {
        train_size: 640,
        dev_size: 64,
        test_size: 64,
        adverb_max: 0,
        ..Default::default()
    };
    let ds = generate_synthetic(&spec)?;
    let color = DegradationSpec::color(ds.source_color_lexicon())?;
    let (train_deg, _) = degrade_corpus(&ds.train.corpus, &color)?;
    let srcs: Vec<&[String]> = train_deg.samples.iter().map(|s| s.source.as_slice()).collect();
    let tgts: Vec<&[String]> = train_deg.samples.iter().map(|s| s.target.as_slice()).collect();
    let sv = Vocabulary::build(srcs.into_iter())?;
    let tv = Vocabulary::build(tgts.into_iter())?;
    let mcfg = ModelConfig {
        fusion: FusionKind::Direct,
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
    let tcfg = TrainConfig { lr: 2e-3, ..TrainConfig::default_with_seed(1) };
    let samples = encode_corpus(&train_deg, &sv, &tv);
    let map: Vec<usize> = (0..samples.len()).collect();
    let batch_list = batches(&samples, 64, 1, 0);
    let mut params = ParameterSet::init(&mcfg, 1)?;
    let mut optim = OptimState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // warmup + timed loop
    let mut t_bind = 0.0;
    let mut t_fwd = 0.0;
    let mut t_bwd = 0.0;
    let mut t_opt = 0.0;
    let reps = 10;
    for i in 0..reps {
        let b = &batch_list[i % batch_list.len()];
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let t1 = Instant::now();
        let loss = forward_loss(&mut tape, &bound, &mcfg, b, Some(&ds.train_features), &map, true, &mut rng)?;
        let t2 = Instant::now();
        tape.backward(loss)?;
        let t3 = Instant::now();
        let mut grads = gather_grads(&tape, &bound);
        drop(tape);
        clip_global_norm(&mut grads, 1.0);
        adam_step(&mut params, &grads, &mut optim, &tcfg);
        let t4 = Instant::now();
        t_bind += (t1 - t0).as_secs_f64();
        t_fwd += (t2 - t1).as_secs_f64();
        t_bwd += (t3 - t2).as_secs_f64();
        t_opt += (t4 - t3).as_secs_f64();
    }
    println!("per batch (B=64): bind {:.1}ms  forward {:.1}ms  backward {:.1}ms  optim {:.1}ms",
        1e3 * t_bind / reps as f64, 1e3 * t_fwd / reps as f64,
        1e3 * t_bwd / reps as f64, 1e3 * t_opt / reps as f64);

    let t0 = Instant::now();
    let mut tr = Translator::new(&mcfg, &params);
    let n = 64;
    for s in samples.iter().take(n) {
        tr.greedy(&s.source, Some((&ds.train_features, map[s.image_index])), 20)?;
    }
    println!("greedy decode: {:.2}ms/sentence", 1e3 * t0.elapsed().as_secs_f64() / n as f64);
    Ok(())
}
