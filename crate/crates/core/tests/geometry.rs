use nalgebra::{Matrix4, Vector3, Vector4};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sympose::geometry::{axis_angle, merge_views, rotation_angle, rotation_distance, Pose};
use sympose::scenegen::{generate_scenes, CameraMode};

fn pose_from(seed: u64) -> Pose {
    Pose::random(&mut ChaCha8Rng::seed_from_u64(seed), 2.0)
}

/// Homogeneous 4×4 form, built entry by entry.
fn homogeneous(p: &Pose) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    for r in 0..3 {
        for c in 0..3 {
            m[(r, c)] = p.rotation[(r, c)];
        }
        m[(r, 3)] = p.translation[r];
    }
    m
}

fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
    (homogeneous(a) - homogeneous(b)).abs().max() < tol
}

proptest! {
    #[test]
    fn compose_is_matrix_product(a in any::<u64>(), b in any::<u64>()) {
        let (pa, pb) = (pose_from(a), pose_from(b));
        let h = homogeneous(&pa) * homogeneous(&pb);
        prop_assert!((homogeneous(&pa.compose(&pb)) - h).abs().max() < 1e-12);
    }

    #[test]
    fn compose_is_associative(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (pa, pb, pc) = (pose_from(a), pose_from(b), pose_from(c));
        prop_assert!(close(&pa.compose(&pb).compose(&pc), &pa.compose(&pb.compose(&pc)), 1e-12));
    }

    #[test]
    fn inverse_undoes_apply(a in any::<u64>(), x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
        let p = pose_from(a);
        let v = Vector3::new(x, y, z);
        let h = homogeneous(&p) * Vector4::new(x, y, z, 1.0);
        let moved = p.apply(&v);
        prop_assert!((moved - h.xyz()).norm() < 1e-12);
        prop_assert!((p.invert().apply(&moved) - v).norm() < 1e-12);
        prop_assert!(close(&p.compose(&p.invert()), &Pose::identity(), 1e-12));
    }

    #[test]
    fn quaternion_roundtrip(a in any::<u64>()) {
        let p = pose_from(a);
        let q = p.quaternion();
        prop_assert!((q.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(close(&Pose::from_quaternion(q, p.translation).unwrap(), &p, 1e-12));
    }

    #[test]
    fn rotation_distance_is_a_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (ra, rb, rc) = (pose_from(a).rotation, pose_from(b).rotation, pose_from(c).rotation);
        let (ab, ba) = (rotation_distance(&ra, &rb), rotation_distance(&rb, &ra));
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(rotation_distance(&ra, &ra) < 1e-6);
        prop_assert!(ab <= rotation_distance(&ra, &rc) + rotation_distance(&rc, &rb) + 1e-9);
        prop_assert!(ab <= std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn axis_angle_recovers_angle(ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in 0.1..1.0f64, angle in 0.0..3.14f64) {
        let r = axis_angle(&Vector3::new(ax, ay, az), angle);
        prop_assert!((rotation_angle(&r) - angle).abs() < 1e-7);
        // the axis is fixed
        let u = Vector3::new(ax, ay, az).normalize();
        prop_assert!((r * u - u).norm() < 1e-12);
    }
}

#[test]
fn merged_views_agree_with_world_points() {
    let b = generate_scenes(8, 0..1, 3, CameraMode::Fixed).unwrap().remove(0);
    let merged = merge_views(&b.views).unwrap();
    let views = merged.source_view.as_ref().unwrap();
    let pixels = merged.source_pixel.as_ref().unwrap();
    let first = b.views[0].camera_pose.invert();
    for i in (0..merged.len()).step_by(97) {
        let view = &b.views[views[i] as usize];
        let w = view.intrinsics.width;
        let px = pixels[i] as usize;
        let world = view.camera_pose.apply_arr(view.intrinsics.backproject((px % w) as f64, (px / w) as f64, view.depth[px]));
        let expected = first.apply_arr(world);
        let got = merged.points[i];
        assert!((0..3).all(|a| (got[a] - expected[a]).abs() < 1e-12));
    }
    let per_view: Vec<usize> = (0..3).map(|k| views.iter().filter(|&&v| v == k).count()).collect();
    assert!(per_view.iter().all(|&n| n > 0));
}
