use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use regcal::metrics::{self, uncertainty_records};
use regcal::optim::Adam;
use regcal::toymodel::{
    batch_loss_grad, generate, mc_predict, train, Masks, Mlp, SyntheticSpec, ToyModelConfig,
};
use regcal::{calibrate, intervals, validate, LikelihoodKind, Target};

fn small_run(seed: u64, dropout_p: f64) -> (regcal::toymodel::Splits, regcal::toymodel::ToyModel) {
    let spec = SyntheticSpec { m_train: 64, m_val: 32, m_test: 128, seed, ..Default::default() };
    let splits = generate(&spec).unwrap();
    let cfg = ToyModelConfig {
        hidden: vec![16, 16],
        epochs: 300,
        step_size: 3e-3,
        dropout_p,
        seed,
        ..Default::default()
    };
    let (model, trace) = train(&splits, &cfg).unwrap();
    assert_eq!(trace.epochs.len(), 300);
    (splits, model)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for probe in 0..20 {
        let mut net = Mlp::new(1, &[6, 5], &mut rng);
        // perturb every weight, the zero-initialised variance head included
        for p in net.params.iter_mut() {
            *p += 0.1 * (rng.random::<f64>() - 0.5);
        }
        let xs: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * 2.0 - 0.5 + 0.1 * rng.random::<f64>()).collect();
        let masks: Vec<Option<Masks>> = xs.iter().map(|_| Some(net.sample_masks(0.3, &mut rng))).collect();
        let wd = 1e-3;

        let mut grad = vec![0.0; net.num_params()];
        batch_loss_grad(&net, &xs, &ys, &masks, wd, &mut grad);
        let i = rng.random_range(0..net.num_params());
        let h = 1e-4;
        let mut scratch = vec![0.0; net.num_params()];
        let orig = net.params[i];
        net.params[i] = orig + h;
        let up = batch_loss_grad(&net, &xs, &ys, &masks, wd, &mut scratch);
        net.params[i] = orig - h;
        let down = batch_loss_grad(&net, &xs, &ys, &masks, wd, &mut scratch);
        net.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
        assert!(rel <= 1e-4, "probe {probe} param {i}: analytic {} numeric {numeric}", grad[i]);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-4);
}

#[test]
fn zero_step_leaves_weights_and_pure_decay_shrinks_them() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Mlp::new(1, &[8, 8], &mut rng);
    let frozen = net.params.clone();
    let wd = 1e-2;
    let decay_grad = |p: &[f64]| p.iter().map(|w| 2.0 * wd * w).collect::<Vec<_>>();

    let mut adam = Adam::new(net.num_params(), 0.0);
    for _ in 0..10 {
        let g = decay_grad(&net.params);
        adam.step(&mut net.params, &g);
    }
    assert_eq!(net.params, frozen);

    let mut adam = Adam::new(net.num_params(), 1e-4);
    let mut norm = net.sq_norm();
    for _ in 0..200 {
        let g = decay_grad(&net.params);
        adam.step(&mut net.params, &g);
        let next = net.sq_norm();
        assert!(next < norm, "{next} >= {norm}");
        norm = next;
    }
}

#[test]
fn trained_model_beats_constant_predictor() {
    let (splits, model) = small_run(1, 0.1);
    let test = mc_predict(&model, &splits.test, 10, 3, "t").unwrap();
    let recs = uncertainty_records(&test);
    assert!(metrics::mse(&recs) < splits.test.target_variance());
}

#[test]
fn no_dropout_single_pass_has_no_epistemic_part() {
    let (splits, model) = small_run(2, 0.0);
    for n in [1, 5] {
        let set = mc_predict(&model, &splits.test, n, 9, "t").unwrap();
        assert!(uncertainty_records(&set).iter().all(|r| r.epistemic == 0.0));
    }
    let (_, model) = small_run(2, 0.2);
    let set = mc_predict(&model, &splits.test, 1, 9, "t").unwrap();
    assert!(uncertainty_records(&set).iter().all(|r| r.epistemic == 0.0));
}

#[test]
fn mc_predictions_are_deterministic_and_feed_the_pipeline() {
    let (splits, model) = small_run(3, 0.2);
    let a = mc_predict(&model, &splits.val, 25, 42, "val-").unwrap();
    let b = mc_predict(&model, &splits.val, 25, 42, "val-").unwrap();
    assert_eq!(a, b);
    assert!(validate(&a).is_empty());
    assert_eq!(a.passes(), 25);
    assert_eq!(a.records[0].id, "val-00000");
    let c = mc_predict(&model, &splits.val, 25, 43, "val-").unwrap();
    assert_ne!(a, c);

    let test = mc_predict(&model, &splits.test, 25, 44, "test-").unwrap();
    let val = uncertainty_records(&a);
    let calib = calibrate::fit_sigma(&val, LikelihoodKind::Gaussian, Target::Predictive, &Default::default()).unwrap();
    let recs = calibrate::apply_set(&test, &calib).unwrap();
    assert_eq!(recs.len(), test.len());
    metrics::uce(&recs, 10, Target::Predictive).unwrap();
    intervals::coverage(&recs, &intervals::DEFAULT_LEVELS).unwrap();
}

#[test]
fn same_seed_same_weights() {
    let (_, a) = small_run(4, 0.2);
    let (_, b) = small_run(4, 0.2);
    assert_eq!(a.net.params, b.net.params);
}
