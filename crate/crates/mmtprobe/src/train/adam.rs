//! ADAM with global-norm gradient clipping and L2 weight decay.

use super::{DecayMode, TrainConfig};
use crate::model::{BoundParams, ParameterSet};
use crate::tensor::{Tape, Tensor};
use std::collections::BTreeMap;

/// First/second moment buffers and the step counter.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: usize,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl OptimState {
    pub fn new(params: &ParameterSet) -> OptimState {
        let zeros = |p: &ParameterSet| {
            p.iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect()
        };
        OptimState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

/// Copy trainable-leaf gradients out of the tape, keyed by parameter
/// name.
pub fn gather_grads(tape: &Tape, bound: &BoundParams) -> BTreeMap<String, Tensor> {
    bound
        .iter()
        .filter_map(|(name, &var)| tape.grad(var).map(|g| (name.clone(), g.clone())))
        .collect()
}

/// Scale all gradients by max_norm/‖g‖ when the global L2 norm exceeds
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// One bias-corrected ADAM update over every parameter. Missing
/// gradients count as zero. Coupled decay adds wd·θ to the gradient
/// first; decoupled decay subtracts lr·wd·θ separately.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &BTreeMap<String, Tensor>,
    state: &mut OptimState,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for (name, theta) in params.iter_mut() {
        let m = state.m.get_mut(name).expect("moment buffer").data_mut();
        let v = state.v.get_mut(name).expect("moment buffer").data_mut();
        let g = grads.get(name).map(|g| g.data());
        for (i, x) in theta.data_mut().iter_mut().enumerate() {
            let mut gi = g.map_or(0.0, |g| g[i]);
            if cfg.decay_mode == DecayMode::Coupled {
                gi += cfg.weight_decay * *x;
            }
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let mut delta = m_hat / (v_hat.sqrt() + state.eps);
            if cfg.decay_mode == DecayMode::Decoupled {
                delta += cfg.weight_decay * *x;
            }
            *x -= cfg.lr * delta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FusionKind, ModelConfig};

    fn scalar_params(value: f64) -> ParameterSet {
        let mut map = BTreeMap::new();
        map.insert("theta".to_string(), Tensor::scalar(value));
        ParameterSet::from_tensors(map)
    }

    fn train_cfg(lr: f64, wd: f64) -> TrainConfig {
        TrainConfig {
            lr,
            weight_decay: wd,
            ..TrainConfig::default_with_seed(1)
        }
    }

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut params = scalar_params(0.7);
        let mut state = OptimState::new(&params);
        let mut grads = BTreeMap::new();
        grads.insert("theta".to_string(), Tensor::scalar(0.0));
        adam_step(&mut params, &grads, &mut state, &train_cfg(0.01, 0.0));
        assert_eq!(params.get("theta").scalar_value(), 0.7);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut params = scalar_params(0.0);
        let mut state = OptimState::new(&params);
        let mut grads = BTreeMap::new();
        grads.insert("theta".to_string(), Tensor::scalar(1.0));
        let lr = 4e-4;
        adam_step(&mut params, &grads, &mut state, &train_cfg(lr, 0.0));
        let theta = params.get("theta").scalar_value();
        assert!((theta + lr).abs() < lr * 1e-6, "theta {theta}");
    }

    #[test]
    fn converges_on_a_quadratic() {
        // f(θ) = ‖θ − θ*‖², ∇f = 2(θ − θ*)
        let target = [0.3, -0.7, 1.1];
        let mut map = BTreeMap::new();
        map.insert("theta".to_string(), Tensor::row(vec![0.0; 3]));
        let mut params = ParameterSet::from_tensors(map);
        let mut state = OptimState::new(&params);
        let cfg = train_cfg(0.05, 0.0);
        for _ in 0..500 {
            let g: Vec<f64> = params
                .get("theta")
                .data()
                .iter()
                .zip(&target)
                .map(|(x, t)| 2.0 * (x - t))
                .collect();
            let mut grads = BTreeMap::new();
            grads.insert("theta".to_string(), Tensor::row(g));
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        for (x, t) in params.get("theta").data().iter().zip(&target) {
            assert!((x - t).abs() < 1e-3, "{x} vs {t}");
        }
    }

    #[test]
    fn coupled_decay_shrinks_weights() {
        let mut params = scalar_params(1.0);
        let mut state = OptimState::new(&params);
        let grads = BTreeMap::new(); // absent gradient = 0
        adam_step(&mut params, &grads, &mut state, &train_cfg(0.01, 1e-2));
        assert!(params.get("theta").scalar_value() < 1.0);
    }

    #[test]
    fn clip_scales_to_unit_norm() {
        let mut grads = BTreeMap::new();
        grads.insert("g".to_string(), Tensor::row(vec![3.0, 4.0]));
        let pre = clip_global_norm(&mut grads, 1.0);
        assert_eq!(pre, 5.0);
        let g = grads["g"].data();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut grads = BTreeMap::new();
        grads.insert("g".to_string(), Tensor::row(vec![0.3, 0.4]));
        clip_global_norm(&mut grads, 1.0);
        assert_eq!(grads["g"].data(), &[0.3, 0.4]);
    }

    #[test]
    fn clip_bounds_the_global_norm_and_never_grows_entries() {
        for seed in 0..20u64 {
            let mut grads = BTreeMap::new();
            for j in 0..3 {
                let data: Vec<f64> = (0..5)
                    .map(|i| ((seed * 31 + j * 7 + i) % 13) as f64 - 6.0)
                    .collect();
                grads.insert(format!("g{j}"), Tensor::row(data));
            }
            let before: Vec<f64> = grads.values().flat_map(|g| g.data().to_vec()).collect();
            clip_global_norm(&mut grads, 1.0);
            let after: Vec<f64> = grads.values().flat_map(|g| g.data().to_vec()).collect();
            let norm: f64 = after.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= 1.0 + 1e-12, "seed {seed}: norm {norm}");
            for (b, a) in before.iter().zip(&after) {
                assert!(a.abs() <= b.abs() + 1e-15);
            }
        }
    }

    #[test]
    fn gather_grads_names_match_parameters() {
        let cfg = ModelConfig {
            fusion: FusionKind::Nmt,
            emb_dim: 4,
            hidden: 4,
            attn_dim: 4,
            dropout_src_emb: 0.0,
            dropout_enc_out: 0.0,
            dropout_dec_out: 0.0,
            src_vocab: 8,
            tgt_vocab: 8,
            feat_channels: 4,
            feat_positions: 4,
        };
        let params = ParameterSet::init(&cfg, 1).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        // loss touching one parameter
        let w = bound.var("readout.ws");
        let ones_l = tape.constant(Tensor::row(vec![1.0; 4]));
        let ones_r = tape.constant(Tensor::column(vec![1.0; 4]));
        let rowsum = tape.matmul(w, ones_r).unwrap();
        let s = tape.matmul(ones_l, rowsum).unwrap();
        tape.backward(s).unwrap();
        let grads = gather_grads(&tape, &bound);
        assert!(grads.contains_key("readout.ws"));
        assert!(!grads.contains_key("src_emb")); // unreached
    }
}
