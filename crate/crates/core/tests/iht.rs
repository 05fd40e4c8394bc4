mod common;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdnn::data::{synth_blobs, Dataset};
use sdnn::iht::{
    budget, change_ratio, layer_budget, progressive_ratio, random_threshold_model, run_iht, threshold_model,
    train_plain, Budgets, LayerMask, Phase, RunStatus, SparsityPlan, SupportMask, ThresholdingMode, TrainConfig,
    TrainData, Trainer,
};
use sdnn::nn::{Architecture, Layer, LayerKind, LossSpec, NetworkModel, SgdConfig};
use sdnn::Tensor;

fn blobs(seed: u64) -> Dataset<f64> {
    synth_blobs(3, 30, 6, 4.0, seed).unwrap()
}

fn small_model(seed: u64) -> NetworkModel<f64> {
    common::random_model(&Architecture::mlp(&[6, 10, 3]), seed)
}

fn cfg(s1: usize, s2: usize, cycles: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        s1,
        s2,
        cycle_count: cycles,
        batch_size: 8,
        seed,
        optimizer: SgdConfig {
            learning_rate: 0.05,
            momentum: 0.9,
        },
        ..TrainConfig::default()
    }
}

fn weight_budgets(model: &NetworkModel<f64>, k: impl Fn(usize) -> usize) -> Budgets {
    model
        .layers()
        .iter()
        .map(|l| l.kind.has_parameters().then(|| k(l.weights.len())))
        .collect()
}

#[test]
fn budget_examples() {
    assert!((progressive_ratio(0.1, 0.8, 50, 100) - 0.45).abs() < 1e-12);
    assert_eq!(progressive_ratio(0.1, 0.8, 0, 100), 0.1);
    assert_eq!(progressive_ratio(0.1, 0.8, 100, 100), 0.8);
    assert_eq!(budget(0.5, 1000), (500, false));
    // r = 0.9 keeps a tenth: a 10× reduction in parameters.
    assert_eq!(budget(0.9, 1000), (100, false));
    assert_eq!(budget(0.99, 10), (1, true));
    assert_eq!(budget(0.25, 2), (2, false));
    assert_eq!(budget(0.75, 2), (1, false));
    let plan = SparsityPlan {
        final_ratio: vec![0.8],
        start_ratio: Some(vec![0.1]),
    };
    assert_eq!(layer_budget(&plan, 0, 1000, 50, 100), 550);
    assert_eq!(layer_budget(&SparsityPlan::uniform(0.5), 0, 1000, 7, 7), 500);
    assert_eq!(SparsityPlan::uniform(0.6).start_for(0), 0.3);
}

#[test]
fn plan_validation() {
    assert!(SparsityPlan::uniform(1.0).validate(2).is_err());
    assert!(SparsityPlan::uniform(-0.1).validate(2).is_err());
    let p = SparsityPlan {
        final_ratio: vec![0.5, 0.2],
        start_ratio: Some(vec![0.6, 0.1]),
    };
    assert!(p.validate(2).is_err());
    assert!(SparsityPlan::uniform(0.5).validate(3).is_ok());
    assert!(SparsityPlan { final_ratio: vec![0.1, 0.2], start_ratio: None }.validate(3).is_err());
}

fn one_fc(weights: Vec<f64>) -> NetworkModel<f64> {
    let n = weights.len();
    let mut l = Layer::zeros(LayerKind::FullyConnected { inputs: n, outputs: 1 });
    l.weights = Tensor::from_vec(&[1, n], weights).unwrap();
    NetworkModel::from_layers(vec![n], vec![l, Layer::zeros(LayerKind::Softmax)]).unwrap()
}

#[test]
fn threshold_examples() {
    let mut m = one_fc(vec![0.9, -0.1, 0.5, 0.05]);
    let mask = threshold_model(&mut m, &vec![Some(2), None]).unwrap();
    assert_eq!(m.layers()[0].weights.data(), &[0.9, 0.0, 0.5, 0.0]);
    assert_eq!(mask.layers[0].bits, vec![true, false, true, false]);
    assert!(mask.layers[1].is_empty());

    let orig = one_fc(vec![0.9, -0.1, 0.5, 0.05]);
    let mut m = orig.clone();
    let mask = threshold_model(&mut m, &vec![Some(4), None]).unwrap();
    assert_eq!(m, orig);
    assert_eq!(mask, SupportMask::full(&orig));
    assert!(threshold_model(&mut m, &vec![Some(1)]).is_err());
}

#[test]
fn half_of_a_random_layer_is_kept_by_magnitude() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut m = one_fc(w.clone());
    threshold_model(&mut m, &vec![Some(500), None]).unwrap();
    let out = m.layers()[0].weights.data();
    assert_eq!(out.iter().filter(|v| **v != 0.0).count(), 500);
    let mut mags: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let cutoff = mags[499];
    for (o, x) in out.iter().zip(&w) {
        if x.abs() > cutoff {
            assert_eq!(o, x);
        } else if x.abs() < cutoff {
            assert_eq!(*o, 0.0);
        }
    }
}

#[test]
fn random_thresholding_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let orig = one_fc(w);

    let mut m = orig.clone();
    random_threshold_model(&mut m, &vec![Some(1000), None], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(m, orig);

    let (mut a, mut b) = (orig.clone(), orig.clone());
    let ma = random_threshold_model(&mut a, &vec![Some(500), None], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let mb = random_threshold_model(&mut b, &vec![Some(500), None], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!((ma.clone(), a.clone()), (mb, b));
    assert_eq!(ma.layers[0].popcount(), 500);
    assert_eq!(a.layers()[0].weights.count_nonzero(), 500);
    // Not simply the magnitude top half.
    let mut hard = orig.clone();
    assert_ne!(threshold_model(&mut hard, &vec![Some(500), None]).unwrap(), ma);
}

fn mask_of(bits: &[bool]) -> SupportMask {
    SupportMask {
        layers: vec![LayerMask {
            shape: vec![1, bits.len()],
            bits: bits.to_vec(),
        }],
    }
}

#[test]
fn change_ratio_examples() {
    let a = mask_of(&[true, true, true, true, false, false, false, false]);
    let same = change_ratio(&a, &a).unwrap();
    assert_eq!(same.aggregate, 0.0);
    let disjoint = change_ratio(&a, &mask_of(&[false, false, false, false, true, true, true, true])).unwrap();
    assert_eq!(disjoint.aggregate, 1.0);
    let swapped = change_ratio(&a, &mask_of(&[true, true, false, false, true, true, false, false])).unwrap();
    assert_eq!(swapped.per_layer, vec![Some(0.5)]);
    assert!(change_ratio(&a, &mask_of(&[true, false])).is_err());
}

/// Single sample x = 1 with label 0 into FC(1 → 2), so the logits are
/// `w + b` and the gradient of both `w_i` and `b_i` is `p_i − [i = 0]`.
fn toy() -> (NetworkModel<f64>, Dataset<f64>, TrainConfig) {
    let mut l = Layer::zeros(LayerKind::FullyConnected { inputs: 1, outputs: 2 });
    l.weights = Tensor::from_vec(&[2, 1], vec![0.3, 0.8]).unwrap();
    l.bias = Tensor::vector(vec![0.1, -0.2]);
    let m = NetworkModel::from_layers(vec![1], vec![l, Layer::zeros(LayerKind::Softmax)]).unwrap();
    let ds = Dataset::new(Tensor::from_vec(&[1, 1], vec![1.0]).unwrap(), vec![0], 2).unwrap();
    let c = TrainConfig {
        s1: 1,
        s2: 1,
        cycle_count: 1,
        batch_size: 1,
        optimizer: SgdConfig {
            learning_rate: 0.5,
            momentum: 0.0,
        },
        loss: LossSpec::default(),
        eval_train: false,
        ..TrainConfig::default()
    };
    (m, ds, c)
}

/// Hand-derived descent on (w0, w1, b0, b1); `pinned` holds one weight at 0.
fn toy_oracle(mut w: [f64; 2], mut b: [f64; 2], lr: f64, steps: usize, pinned: Option<usize>) -> Vec<[f64; 4]> {
    let mut out = Vec::new();
    for _ in 0..steps {
        let z = [w[0] + b[0], w[1] + b[1]];
        let p1 = 1.0 / (1.0 + (z[0] - z[1]).exp());
        let p0 = 1.0 - p1;
        let g = [p0 - 1.0, p1];
        for i in 0..2 {
            if pinned != Some(i) {
                w[i] -= lr * g[i];
            }
        }
        b[0] -= lr * g[0];
        b[1] -= lr * g[1];
        out.push([w[0], w[1], b[0], b[1]]);
    }
    out
}

fn toy_params(m: &NetworkModel<f64>) -> [f64; 4] {
    let l = &m.layers()[0];
    [l.weights.data()[0], l.weights.data()[1], l.bias.data()[0], l.bias.data()[1]]
}

#[test]
fn toy_masked_and_restored_trajectories() {
    let (m, ds, c) = toy();
    let mut t = Trainer::new(m, &c, TrainData { train: &ds, test: None }).unwrap();
    let mask = t
        .threshold(&vec![Some(1), None], ThresholdingMode::Hard, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    // |0.8| > |0.3|: parameter 0 is truncated.
    assert_eq!(mask.layers[0].bits, vec![false, true]);

    let oracle = toy_oracle([0.0, 0.8], [0.1, -0.2], 0.5, 6, Some(0));
    for o in &oracle {
        t.finetune_masked(&mask, 1, 1).unwrap();
        let g = toy_params(&t.model);
        for (a, b) in g.iter().zip(o) {
            assert!((a - b).abs() < 1e-14, "{g:?} vs {o:?}");
        }
    }
    assert_eq!(t.model.layers()[0].weights.data()[0], 0.0);

    let start = toy_params(&t.model);
    let oracle = toy_oracle([start[0], start[1]], [start[2], start[3]], 0.5, 4, None);
    for o in &oracle {
        t.restore_and_train(1, 1).unwrap();
        let g = toy_params(&t.model);
        for (a, b) in g.iter().zip(o) {
            assert!((a - b).abs() < 1e-14, "{g:?} vs {o:?}");
        }
    }
    // Gradient on the truncated weight is nonzero, so restoring revives it.
    assert_ne!(t.model.layers()[0].weights.data()[0], 0.0);
}

#[test]
fn full_mask_step_equals_unmasked_step() {
    let ds = blobs(1);
    let c = cfg(1, 1, 1, 3);
    let mut a = Trainer::new(small_model(4), &c, TrainData { train: &ds, test: None }).unwrap();
    let mut b = Trainer::new(small_model(4), &c, TrainData { train: &ds, test: None }).unwrap();
    let full = SupportMask::full(&a.model);
    let batch: Vec<usize> = (0..8).collect();
    a.step(&ds, &batch, Some(&full)).unwrap();
    b.step(&ds, &batch, None).unwrap();
    assert_eq!(a.model, b.model);
}

#[test]
fn all_false_mask_keeps_layer_at_zero_and_confines_every_step() {
    let ds = blobs(2);
    let c = cfg(1, 1, 1, 5);
    let mut t = Trainer::new(small_model(6), &c, TrainData { train: &ds, test: None }).unwrap();
    let budgets = weight_budgets(&t.model, |p| p / 3);
    let mut mask = t.threshold(&budgets, ThresholdingMode::Hard, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    mask.layers[0].bits.iter_mut().for_each(|b| *b = false);
    mask.apply(&mut t.model, Some(&mut t.opt));
    let order: Vec<usize> = (0..ds.len()).collect();
    for _ in 0..5 {
        for batch in order.chunks(8) {
            t.step(&ds, batch, Some(&mask)).unwrap();
            assert!(mask.confines(&t.model));
            assert_eq!(t.model.layers()[0].weights.count_nonzero(), 0);
            for (v, m) in t.opt.velocity.iter().zip(&mask.layers) {
                assert!(v.weights.data().iter().zip(&m.bits).all(|(x, k)| *k || *x == 0.0));
            }
        }
    }
    assert!(t.model.layers()[0].bias.data().iter().any(|b| *b != 0.0));
}

#[test]
fn finetune_refuses_unconfined_model() {
    let ds = blobs(2);
    let c = cfg(1, 1, 1, 5);
    let mut t = Trainer::new(small_model(6), &c, TrainData { train: &ds, test: None }).unwrap();
    let mut mask = SupportMask::full(&t.model);
    mask.layers[0].bits[0] = false;
    assert!(t.finetune_masked(&mask, 1, 1).is_err());
}

#[test]
fn zero_ratio_run_is_bitwise_plain_training() {
    let ds = blobs(3);
    let test = blobs(33);
    for (s1, s2, cycles) in [(1, 1, 1), (2, 3, 3), (1, 2, 2)] {
        let c = cfg(s1, s2, cycles, 17);
        let data = TrainData { train: &ds, test: Some(&test) };
        let iht = run_iht(small_model(8), &c, &SparsityPlan::uniform(0.0), data).unwrap();
        let plain = train_plain(small_model(8), &c, data, c.total_epochs()).unwrap();
        assert_eq!(iht.model, plain.model);
        let bits = |m: &NetworkModel<f64>| -> Vec<u64> {
            m.layers().iter().flat_map(|l| l.weights.data().iter().chain(l.bias.data()).map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&iht.model), bits(&plain.model));
        assert_eq!(iht.metrics.epochs_completed, plain.metrics.epochs_completed);
    }
}

#[test]
fn runs_are_deterministic() {
    let ds = blobs(4);
    let c = TrainConfig {
        flip_probability: 0.0,
        ..cfg(2, 2, 3, 99)
    };
    let run = || run_iht(small_model(1), &c, &SparsityPlan::uniform(0.7), TrainData { train: &ds, test: None }).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.model, b.model);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn run_structure_and_metrics() {
    let ds = blobs(5);
    let test = blobs(55);
    let c = cfg(2, 3, 3, 4);
    let plan = SparsityPlan::uniform(0.8);
    let out = run_iht(small_model(2), &c, &plan, TrainData { train: &ds, test: Some(&test) }).unwrap();
    let m = &out.metrics;
    assert_eq!(m.status, RunStatus::Completed);
    assert_eq!(m.total_epochs, 15);
    assert_eq!(m.epochs_completed, 15);
    let phases: Vec<Phase> = m.epochs.iter().map(|e| e.phase).collect();
    use Phase::*;
    assert_eq!(
        phases,
        vec![Init, Init, Finetune, Finetune, Finetune, Restore, Restore, Finetune, Finetune, Finetune, Restore, Restore, Finetune, Finetune, Finetune]
    );
    assert_eq!(m.cycles.len(), 3);
    assert!(m.cycles[0].change_ratio.is_none());
    let sizes = &m.layer_sizes;
    assert_eq!(sizes, &vec![60, 30]);
    // Ramp from 0.4 to 0.8 over the three events.
    for (cyc, r) in m.cycles.iter().zip([0.4, 0.6, 0.8]) {
        assert!(cyc.ratios.iter().all(|x| (x - r).abs() < 1e-12), "{:?}", cyc.ratios);
        for ((k, nz), p) in cyc.budgets.iter().zip(&cyc.nonzeros_after_threshold).zip(sizes) {
            assert_eq!(*k, budget(r, *p).0);
            assert!(nz <= k);
        }
        if let Some(cr) = &cyc.change_ratio {
            assert!((0.0..=1.0).contains(&cr.aggregate));
            assert!(cr.per_layer.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    assert_eq!(m.final_budgets, vec![12, 6]);
    assert!(m.final_nonzeros.iter().zip(&m.final_budgets).all(|(n, k)| n <= k));
    assert_eq!(out.model.nonzero_weights().iter().sum::<usize>(), m.final_nonzeros.iter().sum::<usize>());
    assert!(m.final_test.is_some());
    let json = serde_json::to_value(m).unwrap();
    assert_eq!(json["status"]["status"], "completed");
}

#[test]
fn linear_model_separates_wide_blobs() {
    let ds = synth_blobs::<f64>(3, 100, 8, 10.0, 12).unwrap();
    let arch = Architecture::mlp(&[8, 3]);
    let model = common::random_model(&arch, 3);
    let c = cfg(5, 1, 1, 1);
    let out = train_plain(model, &c, TrainData { train: &ds, test: None }, 5).unwrap();
    assert!(out.metrics.final_train.unwrap().accuracy >= 0.99);
}

#[test]
fn divergence_is_recorded_not_raised() {
    let ds = blobs(6);
    let mut c = cfg(1, 2, 2, 3);
    c.optimizer.learning_rate = 1e6;
    c.optimizer.momentum = 0.99;
    let out = run_iht(small_model(3), &c, &SparsityPlan::uniform(0.5), TrainData { train: &ds, test: None }).unwrap();
    match &out.metrics.status {
        RunStatus::Diverged { phase, reason, .. } => {
            assert!(!reason.is_empty());
            assert!(matches!(phase, Phase::Init | Phase::Finetune | Phase::Restore));
        }
        s => panic!("expected divergence, got {s:?}"),
    }
    assert!(out.metrics.final_train.is_none());
}

#[test]
fn random_thresholding_mode_completes_or_reports() {
    let ds = blobs(7);
    let mut c = cfg(1, 2, 3, 8);
    c.thresholding = ThresholdingMode::Random;
    let out = run_iht(small_model(5), &c, &SparsityPlan::uniform(0.5), TrainData { train: &ds, test: None }).unwrap();
    match out.metrics.status {
        RunStatus::Completed => {
            assert!(out.metrics.final_nonzeros.iter().zip(&out.metrics.final_budgets).all(|(n, k)| n <= k))
        }
        RunStatus::Diverged { .. } => assert!(out.metrics.epochs_completed < c.total_epochs()),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = blobs(8);
    let data = TrainData { train: &ds, test: None };
    for c in [cfg(0, 1, 1, 0), cfg(1, 0, 1, 0), cfg(1, 1, 0, 0)] {
        assert!(run_iht(small_model(1), &c, &SparsityPlan::uniform(0.5), data).is_err());
    }
    let wrong = synth_blobs::<f64>(3, 5, 4, 1.0, 0).unwrap();
    assert!(run_iht(small_model(1), &cfg(1, 1, 1, 0), &SparsityPlan::uniform(0.5), TrainData { train: &wrong, test: None }).is_err());
}

fn prop_config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(4),
        ..Config::default()
    }
}

proptest! {
    #![proptest_config(prop_config(300))]

    #[test]
    fn progressive_ratio_is_monotone_with_fixed_endpoints(
        a in 0.0f64..0.99, b in 0.0f64..0.99, horizon in 1usize..200,
    ) {
        let (start, end) = if a <= b { (a, b) } else { (b, a) };
        prop_assert_eq!(progressive_ratio(start, end, 0, horizon), start);
        prop_assert_eq!(progressive_ratio(start, end, horizon, horizon), end);
        let mut prev = start;
        for t in 0..=horizon {
            let r = progressive_ratio(start, end, t, horizon);
            prop_assert!(r >= prev - 1e-15 && r <= end + 1e-15);
            prev = r;
        }
    }

    #[test]
    fn thresholding_keeps_largest_per_layer(seed in any::<u64>(), ratio in 0.0f64..0.99) {
        let mut m = small_model(seed);
        let orig = m.clone();
        let budgets = weight_budgets(&m, |p| budget(ratio, p).0);
        let mask = threshold_model(&mut m, &budgets).unwrap();
        for ((l, o), (k, mk)) in m.layers().iter().zip(orig.layers()).zip(budgets.iter().zip(&mask.layers)) {
            let Some(k) = k else { continue };
            prop_assert_eq!(l.weights.count_nonzero(), (*k).min(o.weights.count_nonzero()));
            prop_assert_eq!(mk.popcount(), *k);
            let kept = o.weights.data().iter().zip(&mk.bits).filter(|(_, b)| **b).map(|(v, _)| v.abs()).fold(f64::INFINITY, f64::min);
            let dropped = o.weights.data().iter().zip(&mk.bits).filter(|(_, b)| !**b).map(|(v, _)| v.abs()).fold(0.0, f64::max);
            prop_assert!(kept >= dropped);
            prop_assert_eq!(&l.bias, &o.bias);
        }
    }
}

proptest! {
    #![proptest_config(prop_config(24))]

    #[test]
    fn cardinality_holds_after_every_run(
        seed in 0u64..1000, ratio in 0.0f64..0.98, s1 in 1usize..3, s2 in 1usize..3, cycles in 1usize..4,
        random in any::<bool>(),
    ) {
        let ds = blobs(seed);
        let mut c = cfg(s1, s2, cycles, seed);
        if random {
            c.thresholding = ThresholdingMode::Random;
        }
        let out = run_iht(small_model(seed), &c, &SparsityPlan::uniform(ratio), TrainData { train: &ds, test: None }).unwrap();
        if out.metrics.status == RunStatus::Completed {
            let sizes = &out.metrics.layer_sizes;
            for ((nz, k), p) in out.metrics.final_nonzeros.iter().zip(&out.metrics.final_budgets).zip(sizes) {
                prop_assert!(nz <= k);
                prop_assert_eq!(*k, budget(ratio, *p).0);
            }
        }
        for cyc in &out.metrics.cycles {
            for (nz, k) in cyc.nonzeros_after_threshold.iter().zip(&cyc.budgets) {
                prop_assert!(nz <= k);
            }
        }
    }
}
