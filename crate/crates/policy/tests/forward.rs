mod common;

use common::{random_model, random_sequence, tokens};
use signdpo_core::skeleton::BodyPart;
use signdpo_core::vocab::EOS;
use signdpo_policy::{sequence_log_likelihood, ModelConfig, PolicyError, PolicyModel};

#[test]
fn zero_head_gives_uniform_distributions() {
    let model = PolicyModel::new(ModelConfig::desk(50), 1).unwrap();
    let x = random_sequence(10, 2);
    let trace = model.forward(&x, &tokens(&[5, 9, 17])).unwrap();
    let u = -(50f64).ln();
    assert!(trace.token_logprobs.iter().all(|&l| (l - u).abs() < 1e-12));
    assert!((trace.log_likelihood() - 3.0 * u).abs() < 1e-9);
    assert!((trace.log_likelihood() + 11.7361).abs() < 1e-4);
}

#[test]
fn rows_are_log_distributions_and_attention_normalizes() {
    let cfg = ModelConfig::desk(30);
    let model = random_model(cfg.clone(), 3, 0.3);
    let x = random_sequence(12, 4);
    let trace = model.forward(&x, &tokens(&[4, 8, 12, 20, EOS])).unwrap();
    for i in 0..5 {
        let lse = trace.step_logprobs(i).iter().map(|l| l.exp()).sum::<f64>().ln();
        assert!(lse.abs() < 1e-5);
    }
    let att = &trace.attention;
    assert_eq!(att.prefix_len(), cfg.prefix_len);
    assert_eq!(att.frame_len(), 12);
    assert_eq!((att.layers(), att.heads(), att.target_len()), (2, 4, 5));
    att.check_rows_normalized(1e-5).unwrap();
}

#[test]
fn forward_is_deterministic() {
    let model = random_model(ModelConfig::desk(20), 5, 0.2);
    let x = random_sequence(9, 6);
    let y = tokens(&[4, 5, 6]);
    let a = model.forward(&x, &y).unwrap();
    let b = model.forward(&x, &y).unwrap();
    assert_eq!(a.token_logprobs, b.token_logprobs);
    assert_eq!(a.attention, b.attention);
}

#[test]
fn likelihood_matches_gather_oracle() {
    for seed in 0..10 {
        let model = random_model(ModelConfig::tiny(11), seed, 0.5);
        let x = random_sequence(3 + seed as usize % 4, 100 + seed);
        let y = tokens(&[4, 7, 10, EOS][..1 + seed as usize % 4]);
        let trace = model.forward(&x, &y).unwrap();
        let oracle: f64 = y
            .tokens
            .iter()
            .enumerate()
            .map(|(i, &t)| trace.token_logprobs[i * 11 + t as usize])
            .sum();
        let ll = sequence_log_likelihood(&trace, &y).unwrap();
        assert!((ll - oracle).abs() < 1e-9);
        assert!(ll <= 0.0);
        if y.tokens.len() == 1 {
            assert_eq!(ll, trace.step_logprobs(0)[4]);
        }
    }
}

#[test]
fn teacher_forcing_is_causal() {
    // step i depends only on y_<i
    let model = random_model(ModelConfig::desk(20), 8, 0.3);
    let x = random_sequence(8, 9);
    let a = model.forward(&x, &tokens(&[4, 5, 6, 7])).unwrap();
    let b = model.forward(&x, &tokens(&[4, 5, 19, 11])).unwrap();
    for i in 0..3 {
        for (p, q) in a.step_logprobs(i).iter().zip(b.step_logprobs(i)) {
            assert!((p - q).abs() < 1e-12);
        }
    }
    assert_ne!(a.step_logprobs(3), b.step_logprobs(3));
}

#[test]
fn input_errors() {
    let model = PolicyModel::new(ModelConfig::tiny(11), 0).unwrap();
    let x = random_sequence(3, 0);
    assert!(matches!(model.forward(&x, &tokens(&[4, 11])), Err(PolicyError::Input(_))));
    assert!(matches!(model.forward(&x, &tokens(&[])), Err(PolicyError::Input(_))));
    let trace = model.forward(&x, &tokens(&[4, 5])).unwrap();
    assert!(matches!(
        sequence_log_likelihood(&trace, &tokens(&[4])),
        Err(PolicyError::Input(_))
    ));
}

#[test]
fn parts_are_encoded_independently() {
    let model = random_model(ModelConfig::desk(20), 11, 0.3);
    let x = random_sequence(7, 12);
    let mut frames = x.frames.clone();
    for f in &mut frames {
        for kp in &mut f[x.layout.range(BodyPart::RightHand)] {
            *kp = signdpo_core::Keypoint::ZERO;
        }
    }
    let masked = x.with_frames(frames);
    let a = model.part_features(&x).unwrap();
    let b = model.part_features(&masked).unwrap();
    for part in BodyPart::ALL {
        let same = a[part.index()] == b[part.index()];
        assert_eq!(same, part != BodyPart::RightHand, "{part:?}");
    }
    assert_ne!(model.memory(&x).unwrap(), model.memory(&masked).unwrap());
}

#[test]
fn parameter_count_depends_only_on_config() {
    let cfg = ModelConfig::desk(50);
    let a = PolicyModel::new(cfg.clone(), 1).unwrap();
    let b = PolicyModel::new(cfg.clone(), 2).unwrap();
    assert_eq!(a.num_params(), b.num_params());
    assert_eq!(a.layout(), b.layout());
    assert_ne!(a.params(), b.params());
    let bigger = PolicyModel::new(ModelConfig { vocab_size: 51, ..cfg }, 1).unwrap();
    assert_eq!(bigger.num_params(), a.num_params() + 2 * 32 + 1);
}

#[test]
fn invalid_configs_are_rejected() {
    let cfg = ModelConfig::desk(50);
    assert!(PolicyModel::new(ModelConfig { heads: 5, ..cfg.clone() }, 0).is_err());
    assert!(PolicyModel::new(ModelConfig { ffn_dim: 0, ..cfg.clone() }, 0).is_err());
    assert!(PolicyModel::new(ModelConfig { vocab_size: 4, ..cfg }, 0).is_err());
}
