//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails. `SYMPOSE_ACCEPTANCE=1,5,6` runs a subset.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::{ref_pixel_to_point, ref_point_to_pixel, rel_err, toy};
use nalgebra::{Matrix3, Vector3};
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sympose::experiment::{evaluate_model, samples_for, train_on_samples, TrainSettings};
use sympose::fusion::{pixel_to_point_fuse, point_to_pixel_fuse, PointFeatureMap};
use sympose::geometry::{axis_angle, rotation_angle, rotation_distance, Pose};
use sympose::keypoints::SalienceMode;
use sympose::losses::{symmetry_keypoint_loss, InstanceTargets};
use sympose::mesh::{self, closest_point_on_triangle, Mesh};
use sympose::metrics::{add_error, adds_error, auc, precision_at, ObjectErrors};
use sympose::pipeline::{catalog_models, estimate_scene, oracle_estimate, scene_errors, ClassModel, Model};
use sympose::rng::stream;
use sympose::scenegen::{generate_scenes, occluded_scene, CameraMode, SceneBundle};
use sympose::symmetry::{discover_symmetries, DiscoveryConfig, SymmetryKind, SymmetrySet};
use sympose::voting::{least_squares_fit, VoteConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("SYMPOSE_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "least-squares fitting", c1_least_squares),
        (2, "symmetry discovery fixtures", c2_symmetry_fixtures),
        (3, "symmetry-aware loss", c3_loss),
        (4, "fusion operators", c4_fusion),
        (5, "metrics", c5_metrics),
        (6, "oracle pipeline", c6_oracle_pipeline),
        (7, "trained pipeline", c7_trained),
        (8, "multi-view benefit", c8_multiview),
        (9, "wiggle robustness", c9_wiggle),
        (10, "determinism across thread counts", c10_determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let o = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!o.pass);
        println!(
            "criterion {n:>2} {name}: {} ({}; {:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1 ------------------------------------------------------------------------

fn c1_least_squares() -> Outcome {
    let t = Instant::now();
    let mut rng = stream(1, "acceptance-lsq", 0);
    let noise = Normal::new(0.0, 0.001).unwrap();
    let (mut worst_r, mut worst_t) = (0.0f64, 0.0f64);
    let (mut rot_noisy, mut trans_noisy) = (Vec::new(), Vec::new());
    for _ in 0..1000 {
        let model: Vec<[f64; 3]> = (0..8).map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]).collect();
        let truth = Pose::random(&mut rng, 1.0);
        let detected: Vec<[f64; 3]> = model.iter().map(|m| truth.apply_arr(*m)).collect();
        let est = least_squares_fit(&detected, &model).unwrap();
        worst_r = worst_r.max(rotation_distance(&est.rotation, &truth.rotation));
        worst_t = worst_t.max((est.translation - truth.translation).norm());
        let noisy: Vec<[f64; 3]> = detected
            .iter()
            .map(|d| [d[0] + noise.sample(&mut rng), d[1] + noise.sample(&mut rng), d[2] + noise.sample(&mut rng)])
            .collect();
        let est = least_squares_fit(&noisy, &model).unwrap();
        rot_noisy.push(rotation_distance(&est.rotation, &truth.rotation).to_degrees());
        trans_noisy.push((est.translation - truth.translation).norm());
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (mr, mt) = (median(&mut rot_noisy), median(&mut trans_noisy));
    let el = t.elapsed();
    outcome(
        worst_r < 1e-9 && worst_t < 1e-9 && mr < 1.0 && mt < 0.005 && secs(el) < 5.0,
        format!("exact max {worst_r:.1e} rad / {worst_t:.1e} m; 1 mm noise median {mr:.3} deg / {:.2} mm; {:.2} s", mt * 1e3, secs(el)),
    )
}

// 2 ------------------------------------------------------------------------

/// Rotations about grid axes (5° latitude/longitude) by angles that are
/// multiples of 360°/n for n in {2,3,4,5,6,8,16}, kept when the mean
/// exhaustive closest-triangle distance of the rotated samples stays below
/// tau. Duplicates are merged.
fn grid_oracle(m: &Mesh) -> Vec<Matrix3<f64>> {
    let tau = 0.01 * m.diameter();
    let c = Vector3::from(m.surface_centroid());
    let tris: Vec<[Vector3<f64>; 3]> = m.faces.iter().map(|f| f.map(|i| Vector3::from(m.vertices[i]))).collect();
    let samples: Vec<Vector3<f64>> = m.surface_samples.iter().map(|p| Vector3::from(*p) - c).collect();
    let dist = |q: &Vector3<f64>| {
        tris.iter()
            .map(|t| (closest_point_on_triangle(q, &t[0], &t[1], &t[2]) - q).norm())
            .fold(f64::INFINITY, f64::min)
    };
    // Mean distance, abandoned once it can no longer stay below `bound`.
    let residual = |r: &Matrix3<f64>, n: usize, bound: f64| -> Option<f64> {
        let mut sum = 0.0;
        for s in &samples[..n] {
            sum += dist(&(r * s + c));
            if sum > bound * n as f64 {
                return None;
            }
        }
        Some(sum / n as f64)
    };
    let mut angles: Vec<f64> = Vec::new();
    for n in [2u32, 3, 4, 5, 6, 8, 16] {
        for k in 1..=n / 2 {
            let a = 360.0 * k as f64 / n as f64;
            if !angles.iter().any(|x| (x - a).abs() < 1e-9) {
                angles.push(a);
            }
        }
    }
    let mut axes = vec![Vector3::z(), -Vector3::z()];
    for lat in 1..36 {
        let th = (lat as f64 * 5.0).to_radians();
        for lon in 0..72 {
            let ph = (lon as f64 * 5.0).to_radians();
            axes.push(Vector3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()));
        }
    }
    let mut found = vec![Matrix3::identity()];
    for a in &axes {
        for deg in &angles {
            let r = axis_angle(a, deg.to_radians());
            if found.iter().any(|f| rotation_distance(f, &r) < 1e-6) {
                continue;
            }
            let pass = |n: usize, bound: f64| residual(&r, n, bound).is_some();
            if pass(16, 4.0 * tau) && pass(128, 2.0 * tau) && pass(samples.len(), tau) {
                found.push(r);
            }
        }
    }
    found
}

fn matches(a: &[Matrix3<f64>], b: &[Matrix3<f64>], tol: f64) -> bool {
    a.iter().all(|x| b.iter().any(|y| rotation_distance(x, y) < tol))
}

fn c2_symmetry_fixtures() -> Outcome {
    let t = Instant::now();
    let cfg = DiscoveryConfig::default();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, ok: bool, note: String| {
        pass &= ok;
        notes.push(format!("{name} {note}{}", if ok { "" } else { " (wrong)" }));
    };

    let cuboid = mesh::cuboid(0.16, 0.10, 0.06).unwrap();
    let found = discover_symmetries(&cuboid, &cfg).unwrap();
    let oracle = grid_oracle(&cuboid);
    check(
        "cuboid",
        found.len() == 4 && oracle.len() == 4 && matches(&found.transforms, &oracle, 0.02) && matches(&oracle, &found.transforms, 0.02),
        format!("{}/oracle {}", found.len(), oracle.len()),
    );

    let prism = mesh::square_prism(0.07, 0.13).unwrap();
    let found = discover_symmetries(&prism, &cfg).unwrap();
    let oracle = grid_oracle(&prism);
    let four_fold = found.transforms.iter().any(|r| (rotation_angle(r) - PI / 2.0).abs() < 0.02);
    check(
        "prism",
        found.len() == 8 && oracle.len() == 8 && four_fold && matches(&found.transforms, &oracle, 0.02) && matches(&oracle, &found.transforms, 0.02),
        format!("{}/oracle {} four-fold {four_fold}", found.len(), oracle.len()),
    );

    let cylinder = mesh::cylinder(0.04, 0.12, 48).unwrap();
    let found = discover_symmetries(&cylinder, &cfg).unwrap();
    let oracle = grid_oracle(&cylinder);
    let axis = found.continuous_axis.map(Vector3::from).unwrap_or_else(Vector3::zeros);
    let about: Vec<Matrix3<f64>> = found
        .transforms
        .iter()
        .filter(|r| (*r * axis - axis).norm() < 0.02)
        .copied()
        .collect();
    // The oracle sees the cylinder's axis as continuous when every grid angle
    // about it passes.
    let oracle_about = oracle.iter().filter(|r| (*r * Vector3::z() - Vector3::z()).norm() < 1e-9).count();
    let ok = found.is_continuous()
        && found.kinds.contains(&SymmetryKind::DiscretizedContinuous)
        && axis.dot(&Vector3::z()).abs() > 0.9998
        && about.len() == 16
        && matches(&about, &oracle, 0.02)
        && oracle_about == 24;
    check("cylinder", ok, format!("continuous {} about-axis {}/oracle {oracle_about}", found.is_continuous(), about.len()));

    let tet = mesh::scalene_tetrahedron().unwrap();
    let found = discover_symmetries(&tet, &cfg).unwrap();
    let oracle = grid_oracle(&tet);
    check(
        "tetrahedron",
        found.len() == 1 && rotation_angle(&found.transforms[0]) < 1e-12 && oracle.len() == 1,
        format!("{}/oracle {}", found.len(), oracle.len()),
    );
    let el = secs(t.elapsed());
    outcome(pass && el < 60.0, format!("{}; {el:.1} s", notes.join(", ")))
}

// 3 ------------------------------------------------------------------------

fn cuboid_symmetries() -> SymmetrySet {
    let mut s = SymmetrySet::identity_only("cuboid", [0.0; 3]);
    for a in [Vector3::x(), Vector3::y(), Vector3::z()] {
        s.transforms.push(axis_angle(&a, PI));
        s.kinds.push(SymmetryKind::Discrete);
    }
    s
}

struct LossCase {
    points: Vec<[f64; 3]>,
    keypoints: Vec<[f64; 3]>,
    pose: Pose,
    inst: InstanceTargets,
    pred: Array2<f64>,
}

fn loss_case(seed: u64, sym: &SymmetrySet) -> LossCase {
    let mut rng = stream(seed, "acceptance-loss", 0);
    let mut u = |s: f64| rng.gen_range(-s..s);
    let points: Vec<[f64; 3]> = (0..12).map(|_| [u(0.2), u(0.2), 0.6 + u(0.1)]).collect();
    let keypoints: Vec<[f64; 3]> = (0..8).map(|_| [u(0.08), u(0.05), u(0.03)]).collect();
    let pose = Pose::random(&mut stream(seed, "acceptance-loss", 1), 0.5);
    let inst = InstanceTargets::new(3, &points, (2..11).collect(), &keypoints, [0.0; 3], &pose, sym).unwrap();
    let pred = Array2::from_shape_fn((12, 24), |_| u(0.2));
    LossCase {
        points,
        keypoints,
        pose,
        inst,
        pred,
    }
}

/// Identity-only loss with the keypoints turned by `s`, from scratch.
fn plain_loss(c: &LossCase, pred: &Array2<f64>, s: &Matrix3<f64>) -> f64 {
    let kps: Vec<Vector3<f64>> = c.keypoints.iter().map(|k| c.pose.rotation * (s * Vector3::from(*k)) + c.pose.translation).collect();
    let mut total = 0.0;
    for &i in &c.inst.indices {
        for (j, k) in kps.iter().enumerate() {
            let target = k - Vector3::from(c.points[i]);
            let p = Vector3::new(pred[(i, 3 * j)], pred[(i, 3 * j + 1)], pred[(i, 3 * j + 2)]);
            total += (p - target).norm();
        }
    }
    total / c.inst.indices.len() as f64
}

fn c3_loss() -> Outcome {
    let sym = cuboid_symmetries();
    let id = SymmetrySet::identity_only("x", [0.0; 3]);
    let mut a = 0.0f64;
    for seed in 0..100 {
        let c = loss_case(seed, &id);
        let (l, _) = symmetry_keypoint_loss(c.pred.view(), &c.inst, None).unwrap();
        a = a.max((l - plain_loss(&c, &c.pred, &Matrix3::identity())).abs());
    }
    let mut b_ok = true;
    for seed in 0..100 {
        let c = loss_case(1000 + seed, &sym);
        let (l, _) = symmetry_keypoint_loss(c.pred.view(), &c.inst, None).unwrap();
        b_ok &= l <= plain_loss(&c, &c.pred, &Matrix3::identity());
    }
    let mut zero = 0.0f64;
    for seed in 0..10 {
        let c = loss_case(2000 + seed, &sym);
        for variant in &c.inst.keypoint_variants {
            let mut pred = c.pred.clone();
            for (r, &i) in c.inst.indices.iter().enumerate() {
                pred.row_mut(i).assign(&variant.row(r));
            }
            zero = zero.max(symmetry_keypoint_loss(pred.view(), &c.inst, None).unwrap().0.abs());
        }
    }
    let mut worst_fd = 0.0f64;
    let mut used = 0;
    let mut seed = 3000;
    while used < 20 {
        seed += 1;
        let c = loss_case(seed, &sym);
        let mut grad = Array2::zeros(c.pred.dim());
        let (_, k) = symmetry_keypoint_loss(c.pred.view(), &c.inst, Some(&mut grad)).unwrap();
        let h = 1e-6;
        let mut near_tie = false;
        let mut errs = Vec::new();
        for i in c.inst.indices.iter().copied() {
            for col in 0..24 {
                let f = |d: f64| {
                    let mut p = c.pred.clone();
                    p[(i, col)] += d;
                    symmetry_keypoint_loss(p.view(), &c.inst, None).unwrap()
                };
                let ((lp, kp), (lm, km)) = (f(h), f(-h));
                near_tie |= kp != k || km != k;
                errs.push(rel_err(grad[(i, col)], (lp - lm) / (2.0 * h)));
            }
        }
        if near_tie {
            continue;
        }
        used += 1;
        worst_fd = errs.into_iter().fold(worst_fd, f64::max);
    }
    outcome(
        a < 1e-12 && b_ok && zero < 1e-12 && worst_fd < 1e-4,
        format!("(a) {a:.1e} (b) {b_ok} (c) {zero:.1e} (d) max rel {worst_fd:.1e} over 20 seeds"),
    )
}

// 4 ------------------------------------------------------------------------

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c4_fusion() -> Outcome {
    let mut worst = 0.0f64;
    let mut independent = true;
    let mut equivariant = true;
    for seed in 0..50 {
        let mut r = stream(seed, "acceptance-fusion", 0);
        let (views, h, w, n, c, ch, k) = (r.gen_range(1..4), r.gen_range(2..6), r.gen_range(2..6), r.gen_range(4..16), r.gen_range(2..7), r.gen_range(2..9), r.gen_range(1..4));
        let t = toy(seed, views, h, w, n, c, ch);
        let fast = point_to_pixel_fuse(&t.pix, &t.pts, &t.mlps, k).unwrap();
        for (a, b) in fast.iter().zip(&ref_point_to_pixel(&t.pix, &t.pts, &t.mlps, k)) {
            worst = worst.max(max_abs_diff(a, b));
        }
        let fast_p = pixel_to_point_fuse(&t.pix, &t.pts, &t.mlps, k).unwrap();
        worst = worst.max(max_abs_diff(&fast_p, &ref_pixel_to_point(&t.pix, &t.pts, &t.mlps, k)));
        if views > 1 {
            let mut pix = t.pix.clone();
            pix.views[views - 1].features.mapv_inplace(|v| -2.0 * v + 0.3);
            let changed = point_to_pixel_fuse(&pix, &t.pts, &t.mlps, k).unwrap();
            independent &= fast[..views - 1] == changed[..views - 1];
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % n);
        let pts = PointFeatureMap {
            features: t.pts.features.select(Axis(0), &perm),
            coords: perm.iter().map(|&i| t.pts.coords[i]).collect(),
        };
        equivariant &= fast_p.select(Axis(0), &perm) == pixel_to_point_fuse(&t.pix, &pts, &t.mlps, k).unwrap();
        equivariant &= fast == point_to_pixel_fuse(&t.pix, &pts, &t.mlps, k).unwrap();
    }
    outcome(
        worst < 1e-6 && independent && equivariant,
        format!("max |batched - loops| {worst:.1e}; cross-view independence {independent}; permutation equivariance {equivariant}"),
    )
}

// 5 ------------------------------------------------------------------------

fn trapezoid_auc(errors: &[f64], max: f64, steps: usize) -> f64 {
    let acc = |t: f64| errors.iter().filter(|e| **e < t).count() as f64 / errors.len() as f64;
    let h = max / steps as f64;
    let mut area = 0.0;
    let mut prev = acc(0.0);
    for i in 1..=steps {
        let cur = acc(i as f64 * h);
        area += 0.5 * (prev + cur) * h;
        prev = cur;
    }
    100.0 * area / max
}

fn c5_metrics() -> Outcome {
    let mut rng = stream(5, "acceptance-metrics", 0);
    let mut dominated = true;
    for _ in 0..1000 {
        let pts: Vec<[f64; 3]> = (0..64).map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]).collect();
        let (a, b) = (Pose::random(&mut rng, 0.3), Pose::random(&mut rng, 0.3));
        dominated &= adds_error(&a, &b, &pts).unwrap() <= add_error(&a, &b, &pts).unwrap();
    }
    let zeros = auc(&[0.0; 10], 0.1).unwrap();
    let half = auc(&[0.05], 0.1).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..60);
        let errs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.15)).collect();
        worst = worst.max((auc(&errs, 0.1).unwrap() - trapezoid_auc(&errs, 0.1, 100_000)).abs());
    }
    outcome(
        dominated && zeros == 100.0 && half == 50.0 && worst < 0.01,
        format!("adds <= add on 1000 pairs {dominated}; AUC zeros {zeros}, half bound {half}; max |AUC - trapezoid| {worst:.1e}"),
    )
}

// shared models ------------------------------------------------------------

fn classes() -> &'static [ClassModel] {
    static CLASSES: OnceLock<Vec<ClassModel>> = OnceLock::new();
    CLASSES.get_or_init(|| catalog_models(SalienceMode::Curvature, &DiscoveryConfig::default()).unwrap())
}

const DATA_SEED: u64 = 1;
const TRAIN_SCENES: u64 = 500;
const HELD_OUT: std::ops::Range<u64> = 100_000..100_100;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn held_out(mode: CameraMode) -> Vec<SceneBundle> {
    generate_scenes(DATA_SEED, HELD_OUT, 3, mode).unwrap()
}

// 6 ------------------------------------------------------------------------

fn c6_oracle_pipeline() -> Outcome {
    let t = Instant::now();
    let classes = classes();
    let scenes = generate_scenes(DATA_SEED, 200_000..200_200, 3, CameraMode::Fixed).unwrap();
    let mut errors = Vec::new();
    for b in &scenes {
        let r = oracle_estimate(b, classes, &Default::default(), &VoteConfig::default(), DATA_SEED).unwrap();
        errors.extend(scene_errors(b, classes, &r).unwrap());
    }
    let adds: Vec<f64> = errors.iter().map(|e| e.adds).collect();
    let p = precision_at(&adds, 0.02).unwrap();
    let worst_rot = errors.iter().map(|e| e.quotient_rotation_deg).fold(0.0, f64::max);
    let el = secs(t.elapsed());
    outcome(
        p == 100.0 && worst_rot < 0.1 && el < 120.0,
        format!("{} objects: ADD-S < 2 cm {p:.1}%, worst quotient rotation {worst_rot:.4} deg; {el:.1} s", errors.len()),
    )
}

// 7 ------------------------------------------------------------------------

struct Arm {
    seed: u64,
    on: bool,
    model: Model,
    errors: Vec<ObjectErrors>,
}

struct Trained {
    arms: Vec<Arm>,
    elapsed: Duration,
}

fn trained() -> &'static Trained {
    static TRAINED: OnceLock<Trained> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let t = Instant::now();
        let classes = classes();
        let train = generate_scenes(DATA_SEED, 0..TRAIN_SCENES, 3, CameraMode::Fixed).unwrap();
        let test = held_out(CameraMode::Fixed);
        let mut arms = Vec::new();
        for seed in SEEDS {
            let mut settings = TrainSettings::default();
            settings.train.seed = seed;
            let samples = samples_for(&train, classes, &settings).unwrap();
            for on in [true, false] {
                settings.train.symmetry_aware = on;
                let (model, _) = train_on_samples(&samples, classes, &settings, |_| {}).unwrap();
                let errors = evaluate_model(&model, &test).unwrap();
                arms.push(Arm { seed, on, model, errors });
            }
        }
        Trained { arms, elapsed: t.elapsed() }
    })
}

fn is_symmetric(class_id: u32) -> bool {
    classes().iter().any(|c| c.class_id == class_id && c.symmetry.is_symmetric())
}

fn c7_trained() -> Outcome {
    let tr = trained();
    let mut asym_ok = true;
    let mut worst_asym = 100.0f64;
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in SEEDS {
        let arm = |on: bool| tr.arms.iter().find(|a| a.seed == seed && a.on == on).unwrap();
        let (on, off) = (arm(true), arm(false));
        for c in classes().iter().filter(|c| !c.symmetry.is_symmetric()) {
            let adds: Vec<f64> = on.errors.iter().filter(|e| e.class_id == c.class_id).map(|e| e.adds).collect();
            let p = precision_at(&adds, 0.02).unwrap();
            worst_asym = worst_asym.min(p);
            asym_ok &= p >= 90.0;
        }
        let quotient = |a: &Arm| {
            let q: Vec<f64> = a.errors.iter().filter(|e| is_symmetric(e.class_id)).map(|e| e.quotient_add).collect();
            precision_at(&q, 0.02).unwrap()
        };
        let (qon, qoff) = (quotient(on), quotient(off));
        wins += usize::from(qon > qoff);
        pairs.push(format!("{qon:.1}/{qoff:.1}"));
    }
    let el = secs(tr.elapsed);
    outcome(
        asym_ok && wins >= 4 && el < 1800.0,
        format!(
            "asymmetric ADD-S < 2 cm min {worst_asym:.1}%; symmetric quotient < 2 cm on/off per seed [{}], {wins}/5 wins; {el:.0} s",
            pairs.join(", ")
        ),
    )
}

fn primary_model() -> &'static Model {
    &trained().arms.iter().find(|a| a.on).unwrap().model
}

// 8 ------------------------------------------------------------------------

fn detected(model: &Model, b: &SceneBundle, object: usize) -> bool {
    let r = estimate_scene(model, &b.views, b.id()).unwrap();
    let errs = scene_errors(b, &model.classes, &r).unwrap();
    let e = &errs[object];
    e.detected && e.adds < 0.02
}

fn c8_multiview() -> Outcome {
    let model = primary_model();
    let (mut three, mut one) = (0, 0);
    let mut min_occ = 1.0f64;
    for id in 0..100 {
        let (b, hidden) = occluded_scene(DATA_SEED, 300_000 + id, 3, 0.7).unwrap();
        min_occ = min_occ.min(sympose::scenegen::occlusion_fraction(&b, hidden, &[0]).unwrap());
        three += usize::from(detected(model, &b, hidden));
        one += usize::from(detected(model, &b.subset(&[0]), hidden));
    }
    outcome(
        three > one && min_occ >= 0.7,
        format!("hidden object detected in {three}/100 scenes with 3 views, {one}/100 with view 1 alone; least view-1 occlusion {min_occ:.2}"),
    )
}

// 9 ------------------------------------------------------------------------

fn c9_wiggle() -> Outcome {
    let arm = trained().arms.iter().find(|a| a.on).unwrap();
    let fixed: Vec<f64> = arm.errors.iter().map(|e| e.adds).collect();
    let wiggled: Vec<f64> = evaluate_model(&arm.model, &held_out(CameraMode::Wiggled)).unwrap().iter().map(|e| e.adds).collect();
    let (pf, pw) = (precision_at(&fixed, 0.02).unwrap(), precision_at(&wiggled, 0.02).unwrap());
    outcome(
        pf - pw < 10.0,
        format!("3-view ADD-S < 2 cm {pf:.1}% fixed vs {pw:.1}% wiggled (1 deg, 5 mm); drop {:.1} points", pf - pw),
    )
}

// 10 -----------------------------------------------------------------------

fn sympose(dir: &Path, threads: usize, args: &[&str]) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sympose"));
    cmd.current_dir(dir).args(args).env_remove("SYMPOSE_THREADS");
    // Half the runs use the flag, half the environment variable.
    if threads % 2 == 1 {
        cmd.args(["--threads", &threads.to_string()]);
    } else {
        cmd.env("SYMPOSE_THREADS", threads.to_string());
    }
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "sympose {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c10_determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let sym = root.path().join("sym");
    for c in classes() {
        sympose::io::write_json(&sym.join(format!("{}.json", c.name)), &c.symmetry).unwrap();
    }
    let commands: [&[&str]; 10] = [
        &["--seed", "4", "gen-scenes", "--count", "4", "--out", "train"],
        &["--seed", "4", "gen-scenes", "--count", "2", "--start", "50", "--mode", "wiggled", "--out", "test"],
        &["discover-sym", "--mesh", "lib:l_clamp", "--out", "l_clamp.json"],
        &["select-keypoints", "--mesh", "lib:wedge", "--out", "wedge_kp.json"],
        &["--epochs", "2", "train-demo", "--scenes", "train", "--sym", "../sym", "--out", "model.bin"],
        &["estimate", "--scene", "test", "--model", "model.bin", "--out", "poses"],
        &["estimate", "--scene", "test/scene_00050", "--model", "model.bin", "--views", "1", "--out", "one_view.json"],
        &["evaluate", "--gt", "test", "--pred", "poses", "--sym", "../sym", "--out", "report.csv", "--plot", "curves.svg"],
        &["report", "--in", "report.csv", "--plot", "replot.svg"],
        &["--epochs", "1", "ablate", "--train", "train", "--test", "test", "--symmetries", "../sym", "--out", "ablation"],
    ];
    let mut trees = Vec::new();
    for threads in [1usize, 2, 3] {
        let dir = root.path().join(format!("run{threads}"));
        std::fs::create_dir_all(&dir).unwrap();
        for args in commands {
            sympose(&dir, threads, args);
        }
        trees.push(tree(&dir));
    }
    let files = trees[0].len();
    let same = trees.iter().all(|t| *t == trees[0]);
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    outcome(
        same && files > 40,
        format!("8 subcommands at 1, 2 and 3 threads: {files} files, {bytes} bytes, identical {same}"),
    )
}
