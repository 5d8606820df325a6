mod common;

use lazykrr::continuous::{BlendedModel, HierModel};
use lazykrr::datasets;
use lazykrr::dense::DenseModel;
use lazykrr::kernels::{Activation, KernelSpec};
use lazykrr::learn::{train_hybrid, HybridConfig, HybridModel, LossKind};
use lazykrr::par::Parallelism;
use lazykrr::sparse::SparseModel;
use lazykrr::PointSet;
use proptest::prelude::*;

#[test]
fn error_bounds_hold_dense_and_sparse() {
    for seed in 0..25 {
        for sparse in [false, true] {
            let (excess, mono) = common::error_bound_excess(seed, sparse);
            assert!(excess <= 1e-6, "seed {seed} sparse {sparse}: {excess:e}");
            assert!(mono <= 1e-10, "seed {seed}: {mono:e}");
        }
    }
}

#[test]
fn blending_reduces_jumps() {
    let wins = (0..20)
        .filter(|&s| {
            let (b, k) = common::jump_pair(s, Activation::Gaussian, 4, Activation::Exponential, 0.3);
            b < k
        })
        .count();
    assert_eq!(wins, 20);
    for j in [2, 8] {
        let (b, k) = common::jump_pair(3, Activation::Gaussian, j, Activation::Gaussian, 0.3);
        assert!(b < k, "J={j}: {b} vs {k}");
    }
}

#[test]
fn parallel_and_sequential_agree_bitwise() {
    let mut r = common::rng(2);
    let x = common::normal(&mut r, 600, 3);
    let y = common::normal(&mut r, 600, 2);
    let z = common::normal(&mut r, 300, 3);
    let spec = KernelSpec::standard(&x).unwrap();
    let dense = DenseModel::fit(spec.clone(), x.clone(), y.clone(), 1e-9).unwrap();
    assert_eq!(
        dense.predict_with(&z, Parallelism::Sequential).unwrap(),
        dense.predict_with(&z, Parallelism::Parallel).unwrap()
    );
    let blended = BlendedModel::new(SparseModel::build(spec.clone(), x.clone(), y.clone(), 20, 1e-9).unwrap(), 4, Activation::Exponential).unwrap();
    assert_eq!(
        blended.predict_with(&z, Parallelism::Sequential).unwrap(),
        blended.predict_with(&z, Parallelism::Parallel).unwrap()
    );
    let hier = HierModel::fit(spec, x, y, 20, 50, 1e-9).unwrap();
    assert_eq!(
        hier.predict_with(&z, Parallelism::Sequential).unwrap(),
        hier.predict_with(&z, Parallelism::Parallel).unwrap()
    );
}

#[test]
fn full_sized_hybrid_step_runs() {
    let mut r = common::rng(4);
    let states = common::normal(&mut r, 128, 8);
    let targets = common::normal(&mut r, 128, 4);
    let model = HybridModel::init(&states, 64, 4, 64, KernelSpec::standard(&states).unwrap(), 0).unwrap();
    let config = HybridConfig {
        epochs: 1,
        batch: 128,
        ..HybridConfig::default()
    };
    let run = train_hybrid(model, &states, &targets, &config).unwrap();
    assert_eq!(run.curve.len(), 1);
    assert!(run.curve[0].is_finite());
}

fn regression_task() -> (PointSet, PointSet) {
    let mut r = common::rng(21);
    let states = common::normal(&mut r, 256, 4);
    let targets = PointSet::from_fn(256, 2, |i, j| {
        let s = states.row(i);
        if j == 0 {
            (2.0 * s[0]).sin() + s[1] * s[2]
        } else {
            (s[3] - s[0]).abs() - 0.5
        }
    });
    (states, targets)
}

#[test]
fn learned_kernels_do_not_lose_to_frozen_baseline() {
    let (states, targets) = regression_task();
    let spec = KernelSpec::standard(&states).unwrap();
    for loss in [LossKind::Mse, LossKind::SmoothL1] {
        let base = HybridConfig {
            epochs: 30,
            batch: 32,
            loss,
            seed: 5,
            ..HybridConfig::default()
        };
        let model = HybridModel::init(&states, 16, 2, 16, spec.clone(), 8).unwrap();
        let learned = train_hybrid(model.clone(), &states, &targets, &base).unwrap();
        let frozen = train_hybrid(model, &states, &targets, &HybridConfig { freeze_kernels: true, ..base }).unwrap();
        let (a, b) = (learned.curve.last().unwrap(), frozen.curve.last().unwrap());
        assert!(a <= b, "{loss:?}: learned {a} vs frozen {b}");
    }
}

#[test]
fn hybrid_training_is_deterministic() {
    let (states, targets) = regression_task();
    let model = HybridModel::init(&states, 8, 2, 8, KernelSpec::standard(&states).unwrap(), 1).unwrap();
    let config = HybridConfig {
        epochs: 3,
        ..HybridConfig::default()
    };
    let a = train_hybrid(model.clone(), &states, &targets, &config).unwrap();
    let b = train_hybrid(model, &states, &targets, &config).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model.params, b.model.params);
}

#[test]
fn hierarchical_readout_beats_linear_on_curved_boundary() {
    let data = datasets::nonlinear_boundary(1500, 0.0, 3).unwrap();
    let (train, test) = data.split(1000);
    let s = lazykrr::protocol::ReadoutSettings {
        bandwidth: 30,
        coarse: 50,
        ..Default::default()
    };
    use lazykrr::protocol::{evaluate_readout, Method};
    let linear = evaluate_readout(Method::Linear, &train, &test, &s).unwrap();
    for m in [Method::SparseSk, Method::Blended, Method::Hierarchical] {
        let acc = evaluate_readout(m, &train, &test, &s).unwrap();
        assert!(acc > linear + 0.1, "{m}: {acc} vs linear {linear}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn full_bandwidth_sparse_equals_dense(seed in 0u64..10_000, n in 2usize..40, d in 1usize..5) {
        let mut r = common::rng(seed);
        let x = common::normal(&mut r, n, d);
        let y = common::normal(&mut r, n, 1);
        let z = common::normal(&mut r, 10, d);
        let spec = common::spec_for(&x, common::pd_combo(seed));
        let dense = DenseModel::fit(spec.clone(), x.clone(), y.clone(), 1e-9).unwrap().predict(&z).unwrap();
        let sparse = SparseModel::build(spec, x, y, n, 1e-9).unwrap().predict(&z).unwrap();
        prop_assert!(dense.sub(&sparse).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn sparse_interpolates_at_nodes(seed in 0u64..10_000, n in 2usize..60, m in 1usize..12) {
        let mut r = common::rng(seed);
        let x = common::normal(&mut r, n, 2);
        let y = common::normal(&mut r, n, 2);
        // exp(−r) only: Gaussian local systems can need jitter and stop interpolating
        let spec = common::spec_for(&x, common::pd_combo(2 * (seed % 2)));
        let pred = SparseModel::build(spec, x.clone(), y.clone(), m, 1e-9).unwrap().predict(&x).unwrap();
        prop_assert!(pred.sub(&y).unwrap().max_abs() / (1.0 + y.max_abs()) < 1e-5);
    }
}
