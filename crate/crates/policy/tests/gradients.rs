mod common;

use common::{random_model, random_sequence, tokens};
use rand::Rng;
use signdpo_core::rng::seeded;
use signdpo_core::vocab::EOS;
use signdpo_policy::{backward, ModelConfig, PolicyError, PolicyModel};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[test]
fn log_likelihood_gradient_matches_central_differences() {
    let cfg = ModelConfig::tiny(11);
    let model = random_model(cfg, 21, 0.5);
    let x = random_sequence(3, 22);
    let y = tokens(&[4, 9, EOS]);
    let trace = model.forward(&x, &y).unwrap();
    let grad = backward(&model, &[(&trace, 1.0)]).unwrap();
    let mut rng = seeded(23);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 60 {
        let i = rng.random_range(0..model.num_params());
        // the input centre is a fixed buffer outside the tape
        if !model.layout().locate(i).unwrap().trainable {
            continue;
        }
        checked += 1;
        let mut m = model.clone();
        m.params_mut()[i] += h;
        let up = m.log_likelihood(&x, &y).unwrap();
        m.params_mut()[i] -= 2.0 * h;
        let down = m.log_likelihood(&x, &y).unwrap();
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(rel_err(grad[i], fd));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn weighted_traces_sum_their_gradients() {
    let model = random_model(ModelConfig::tiny(11), 31, 0.5);
    let (x1, x2) = (random_sequence(3, 1), random_sequence(4, 2));
    let t1 = model.forward(&x1, &tokens(&[4, 5])).unwrap();
    let t2 = model.forward(&x2, &tokens(&[6, EOS])).unwrap();
    let g1 = backward(&model, &[(&t1, 1.0)]).unwrap();
    let g2 = backward(&model, &[(&t2, 1.0)]).unwrap();
    let g = backward(&model, &[(&t1, 0.5), (&t2, -2.0)]).unwrap();
    for i in 0..g.len() {
        assert!((g[i] - (0.5 * g1[i] - 2.0 * g2[i])).abs() < 1e-12);
    }
}

#[test]
fn constant_loss_has_zero_gradient() {
    let model = random_model(ModelConfig::tiny(11), 1, 0.5);
    let x = random_sequence(3, 1);
    let t = model.forward(&x, &tokens(&[4])).unwrap();
    let g = backward(&model, &[(&t, 0.0)]).unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
    assert!(backward(&model, &[]).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn lm_loss_pushes_realized_token_bias_up_at_init() {
    let model = PolicyModel::new(ModelConfig::desk(30), 4).unwrap();
    let x = random_sequence(8, 5);
    let t = model.forward(&x, &tokens(&[7])).unwrap();
    // loss = -log p
    let g = backward(&model, &[(&t, -1.0)]).unwrap();
    let bias = model.layout().view("dec.out_b").unwrap().offset;
    assert!((g[bias + 7] + (1.0 - 1.0 / 30.0)).abs() < 1e-12);
    assert!((g[bias + 8] - 1.0 / 30.0).abs() < 1e-12);
}

#[test]
fn non_finite_coefficient_is_reported() {
    let model = PolicyModel::new(ModelConfig::tiny(11), 4).unwrap();
    let x = random_sequence(3, 5);
    let t = model.forward(&x, &tokens(&[7])).unwrap();
    assert!(matches!(
        backward(&model, &[(&t, f64::NAN)]),
        Err(PolicyError::Numeric { .. })
    ));
}
