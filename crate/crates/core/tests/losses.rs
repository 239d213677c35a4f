mod common;

use std::f64::consts::PI;

use common::rel_err;
use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use sympose::geometry::pose::axis_angle;
use sympose::geometry::Pose;
use sympose::losses::*;
use sympose::symmetry::{SymmetryKind, SymmetrySet};

fn cuboid_symmetries() -> SymmetrySet {
    let mut s = SymmetrySet::identity_only("cuboid", [0.0; 3]);
    for a in [Vector3::x(), Vector3::y(), Vector3::z()] {
        s.transforms.push(axis_angle(&a, PI));
        s.kinds.push(SymmetryKind::Discrete);
    }
    s
}

struct Case {
    points: Vec<[f64; 3]>,
    keypoints: Vec<[f64; 3]>,
    pose: Pose,
    inst: InstanceTargets,
    pred: Array2<f64>,
}

fn case(seed: u64, sym: &SymmetrySet) -> Case {
    let mut rng = sympose::rng::stream(seed, "loss-test", 0);
    let mut u = |s: f64| rng.gen_range(-s..s);
    let points: Vec<[f64; 3]> = (0..12).map(|_| [u(0.2), u(0.2), 0.6 + u(0.1)]).collect();
    let keypoints: Vec<[f64; 3]> = (0..8).map(|_| [u(0.08), u(0.05), u(0.03)]).collect();
    let pose = Pose::random(&mut sympose::rng::stream(seed, "loss-test", 1), 0.5);
    let indices: Vec<usize> = (2..11).collect();
    let inst = InstanceTargets::new(3, &points, indices, &keypoints, [0.0; 3], &pose, sym).unwrap();
    let pred = Array2::from_shape_fn((12, 24), |_| u(0.2));
    Case {
        points,
        keypoints,
        pose,
        inst,
        pred,
    }
}

/// Mean over instance points of summed per-keypoint L2 error against the
/// keypoints transformed by `s`, computed from scratch.
fn plain_loss(c: &Case, s: &Matrix3<f64>) -> f64 {
    let kps: Vec<Vector3<f64>> = c
        .keypoints
        .iter()
        .map(|k| c.pose.rotation * (s * Vector3::from(*k)) + c.pose.translation)
        .collect();
    let mut total = 0.0;
    for &i in &c.inst.indices {
        for (j, k) in kps.iter().enumerate() {
            let target = k - Vector3::from(c.points[i]);
            let pred = Vector3::new(c.pred[(i, 3 * j)], c.pred[(i, 3 * j + 1)], c.pred[(i, 3 * j + 2)]);
            total += (pred - target).norm();
        }
    }
    total / c.inst.indices.len() as f64
}

#[test]
fn identity_only_equals_plain_loss() {
    for seed in 0..20 {
        let c = case(seed, &SymmetrySet::identity_only("x", [0.0; 3]));
        let (l, k) = symmetry_keypoint_loss(c.pred.view(), &c.inst, None).unwrap();
        assert_eq!(k, 0);
        assert!((l - plain_loss(&c, &Matrix3::identity())).abs() < 1e-12);
    }
}

#[test]
fn matches_enumerated_minimum_and_never_exceeds_identity() {
    let sym = cuboid_symmetries();
    for seed in 0..100 {
        let c = case(seed, &sym);
        let (l, k) = symmetry_keypoint_loss(c.pred.view(), &c.inst, None).unwrap();
        let all: Vec<f64> = sym.transforms.iter().map(|s| plain_loss(&c, s)).collect();
        let min = all.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((l - min).abs() < 1e-9);
        assert!((all[k] - min).abs() < 1e-9);
        let (plain, _) = symmetry_keypoint_loss(c.pred.view(), &c.inst.without_symmetry(), None).unwrap();
        assert!(l <= plain);
    }
}

#[test]
fn zero_at_every_symmetric_variant() {
    let sym = cuboid_symmetries();
    let c = case(7, &sym);
    for (k, variant) in c.inst.keypoint_variants.iter().enumerate() {
        let mut pred = c.pred.clone();
        for (r, &i) in c.inst.indices.iter().enumerate() {
            pred.row_mut(i).assign(&variant.row(r));
        }
        let (l, arg) = symmetry_keypoint_loss(pred.view(), &c.inst, None).unwrap();
        assert!(l.abs() < 1e-12);
        assert_eq!(arg, k);
    }
}

#[test]
fn keypoint_gradient_matches_finite_differences() {
    let sym = cuboid_symmetries();
    for seed in 0..20 {
        let c = case(100 + seed, &sym);
        let mut grad = Array2::zeros(c.pred.dim());
        let (_, k) = symmetry_keypoint_loss(c.pred.view(), &c.inst, Some(&mut grad)).unwrap();
        let h = 1e-5;
        for &(i, col) in &[(2usize, 0usize), (5, 7), (10, 23), (0, 4)] {
            let f = |d: f64| {
                let mut p = c.pred.clone();
                p[(i, col)] += d;
                let (l, kk) = symmetry_keypoint_loss(p.view(), &c.inst, None).unwrap();
                assert_eq!(kk, k, "argmin changed within the step");
                l
            };
            let num = (f(h) - f(-h)) / (2.0 * h);
            assert!(rel_err(grad[(i, col)], num) < 1e-4, "seed {seed}: {} vs {num}", grad[(i, col)]);
        }
    }
}

#[test]
fn empty_instance_is_an_error() {
    let c = case(1, &cuboid_symmetries());
    let mut inst = c.inst.clone();
    inst.indices.clear();
    assert!(matches!(
        symmetry_keypoint_loss(c.pred.view(), &inst, None),
        Err(sympose::Error::EmptyInstance)
    ));
    assert!(InstanceTargets::new(1, &c.points, vec![], &c.keypoints, [0.0; 3], &c.pose, &cuboid_symmetries()).is_err());
}

#[test]
fn center_loss_closed_forms() {
    let c = case(3, &cuboid_symmetries());
    let mut pred = Array2::zeros((12, 3));
    for (r, &i) in c.inst.indices.iter().enumerate() {
        pred.row_mut(i).assign(&c.inst.center_offsets.row(r));
    }
    assert_eq!(center_loss(pred.view(), &c.inst, None).unwrap(), 0.0);
    let b = 0.03;
    for &i in &c.inst.indices {
        pred[(i, 1)] += b;
    }
    assert!((center_loss(pred.view(), &c.inst, None).unwrap() - b / 3.0).abs() < 1e-12);

    let mut rng = sympose::rng::stream(3, "center", 0);
    let pred = Array2::from_shape_fn((12, 3), |_| rng.gen_range(-0.3..0.3));
    let mut direct = 0.0;
    for (r, &i) in c.inst.indices.iter().enumerate() {
        for a in 0..3 {
            direct += (pred[(i, a)] - c.inst.center_offsets[(r, a)]).abs();
        }
    }
    direct /= 3.0 * c.inst.indices.len() as f64;
    assert!((center_loss(pred.view(), &c.inst, None).unwrap() - direct).abs() < 1e-9);

    let mut grad = Array2::zeros((12, 3));
    center_loss(pred.view(), &c.inst, Some(&mut grad)).unwrap();
    let h = 1e-6;
    let mut p = pred.clone();
    p[(4, 2)] += h;
    let up = center_loss(p.view(), &c.inst, None).unwrap();
    p[(4, 2)] -= 2.0 * h;
    let down = center_loss(p.view(), &c.inst, None).unwrap();
    assert!(rel_err(grad[(4, 2)], (up - down) / (2.0 * h)) < 1e-4);
}

fn random_logits(seed: u64, n: usize, k: usize) -> (Array2<f64>, Vec<usize>) {
    let mut rng = sympose::rng::stream(seed, "focal", 0);
    let logits = Array2::from_shape_fn((n, k), |_| rng.gen_range(-3.0..3.0));
    let labels = (0..n).map(|_| rng.gen_range(0..k)).collect();
    (logits, labels)
}

fn focal_oracle(logits: &Array2<f64>, labels: &[usize], gamma: f64, alpha: f64) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let exps: Vec<f64> = logits.row(i).iter().map(|z| z.exp()).collect();
        let pt = exps[y] / exps.iter().sum::<f64>();
        total += -alpha * (1.0 - pt).powf(gamma) * pt.ln();
    }
    total / labels.len() as f64
}

#[test]
fn focal_loss_against_scalar_formula() {
    for seed in 0..10 {
        let (logits, labels) = random_logits(seed, 30, 7);
        let l = focal_loss(logits.view(), &labels, FocalParams::default(), None).unwrap();
        assert!((l - focal_oracle(&logits, &labels, 2.0, 0.25)).abs() < 1e-9);
        let ce = focal_loss(logits.view(), &labels, FocalParams { gamma: 0.0, alpha: 1.0 }, None).unwrap();
        assert!((ce - focal_oracle(&logits, &labels, 0.0, 1.0)).abs() < 1e-9);
    }
    let mut confident = Array2::zeros((4, 3));
    for i in 0..4 {
        confident[(i, 1)] = 60.0;
    }
    assert!(focal_loss(confident.view(), &[1; 4], FocalParams::default(), None).unwrap() < 1e-20);
}

#[test]
fn focal_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let (logits, labels) = random_logits(50 + seed, 10, 6);
        for params in [FocalParams::default(), FocalParams { gamma: 0.0, alpha: 1.0 }] {
            let mut grad = Array2::zeros(logits.dim());
            focal_loss(logits.view(), &labels, params, Some(&mut grad)).unwrap();
            for &(i, c) in &[(0usize, 0usize), (3, 5), (9, 2), (6, labels[6])] {
                let h = 1e-5;
                let mut p = logits.clone();
                p[(i, c)] += h;
                let up = focal_loss(p.view(), &labels, params, None).unwrap();
                p[(i, c)] -= 2.0 * h;
                let down = focal_loss(p.view(), &labels, params, None).unwrap();
                assert!(rel_err(grad[(i, c)], (up - down) / (2.0 * h)) < 1e-4);
            }
        }
    }
}

#[test]
fn multitask_weights() {
    let ones = LossComponents {
        keypoint: 1.0,
        semantic: 1.0,
        center: 1.0,
    };
    assert_eq!(multitask_loss(ones, LossWeights::default()), 4.0);
    assert_eq!(multitask_loss(LossComponents::default(), LossWeights::default()), 0.0);
    assert!(LossWeights::new(-1.0, 1.0, 1.0).is_err());
}

proptest! {
    #[test]
    fn multitask_is_linear(k in 0.0f64..10.0, s in 0.0f64..10.0, c in 0.0f64..10.0, a in 0.0f64..5.0) {
        let w = LossWeights::default();
        let base = multitask_loss(LossComponents { keypoint: k, semantic: s, center: c }, w);
        let scaled = multitask_loss(LossComponents { keypoint: a * k, semantic: a * s, center: a * c }, w);
        prop_assert!((scaled - a * base).abs() <= 1e-12 * (1.0 + base.abs() * a));
        let bumped = multitask_loss(LossComponents { keypoint: k + 1.0, semantic: s, center: c }, w);
        prop_assert!((bumped - base - 2.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_loss_bounded_by_identity(seed in 0u64..10_000) {
        let c = case(seed, &cuboid_symmetries());
        let (l, _) = symmetry_keypoint_loss(c.pred.view(), &c.inst, None).unwrap();
        let (plain, _) = symmetry_keypoint_loss(c.pred.view(), &c.inst.without_symmetry(), None).unwrap();
        prop_assert!(l <= plain);
    }
}
