use nalgebra::Vector3;
use sympose::geometry::{depth_to_cloud, merge_views, v3, CameraIntrinsics, Pose};
use sympose::knn::GridIndex;
use sympose::mesh::{self, Mesh, SurfaceIndex};
use sympose::scenegen::*;

fn square(side: f64) -> Mesh {
    let h = side / 2.0;
    Mesh::new("square", vec![[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]], vec![[0, 1, 2], [0, 2, 3]]).unwrap()
}

fn item(mesh: &Mesh, pose: Pose, label: u8) -> RenderItem<'_> {
    RenderItem {
        mesh,
        pose,
        label,
        color: [0.5; 3],
    }
}

fn at(x: f64, y: f64, z: f64) -> Pose {
    Pose::from_translation(Vector3::new(x, y, z))
}

#[test]
fn square_facing_camera_has_constant_depth() {
    let k = default_intrinsics();
    let m = square(0.2);
    let r = render_depth(&[item(&m, at(0.0, 0.0, 1.0), 3)], &Pose::identity(), &k).unwrap();
    let hits: Vec<f64> = r.depth.iter().copied().filter(|d| *d > 0.0).collect();
    // 0.2 m at 1 m with f = 160 spans 32 pixels per side
    assert!((hits.len() as i64 - 32 * 32).abs() <= 2 * 33, "{} hits", hits.len());
    assert!(hits.iter().all(|d| (d - 1.0).abs() < 1e-12));
    assert_eq!(r.labels.iter().filter(|l| **l == 3).count(), hits.len());
}

#[test]
fn rear_object_is_hidden() {
    let k = default_intrinsics();
    let front = square(0.4);
    let back = mesh::cuboid(0.05, 0.05, 0.05).unwrap();
    let items = [item(&back, at(0.0, 0.0, 1.5), 2), item(&front, at(0.0, 0.0, 1.0), 1)];
    let r = render_depth(&items, &Pose::identity(), &k).unwrap();
    assert!(!r.labels.contains(&2));
    assert!(r.labels.contains(&1));
}

#[test]
fn sphere_depth_matches_ray_intersection() {
    let k = default_intrinsics();
    let (radius, dist) = (0.1, 0.8);
    let s = mesh::sphere(radius, 4).unwrap();
    let rot = sympose::geometry::random_rotation(&mut sympose::rng::stream(5, "sphere", 0));
    let pose = Pose::new(rot, Vector3::new(0.0, 0.0, dist)).unwrap();
    let r = render_depth(&[item(&s, pose, 1)], &Pose::identity(), &k).unwrap();
    let resolution = dist / k.fx;
    let mut checked = 0;
    for v in 40..80 {
        for u in 60..100 {
            let ray = Vector3::from(k.ray(u as f64, v as f64));
            let d = ray.normalize();
            let c = Vector3::new(0.0, 0.0, dist);
            // |t d - c| = radius
            let b = d.dot(&c);
            let disc = b * b - (c.norm_squared() - radius * radius);
            if disc < (0.5 * radius).powi(2) {
                continue;
            }
            let t = b - disc.sqrt();
            let z = t * d.z;
            assert!((r.depth[v * k.width + u] - z).abs() < resolution, "pixel ({u},{v})");
            checked += 1;
        }
    }
    assert!(checked > 100);
    let centre = r.depth[59 * k.width + 79];
    assert!((centre - (dist - radius)).abs() < resolution);
}

#[test]
fn single_object_backprojects_onto_its_surface() {
    let mut spec = SceneSpec::random(1, 0, 1, CameraMode::Fixed);
    spec.objects.truncate(1);
    let b = generate_scene(&spec).unwrap();
    let c = class(b.objects[0].class_id).unwrap();
    let index = SurfaceIndex::new(&c.mesh);
    let cloud = depth_to_cloud(&b.views[0]).unwrap();
    let to_obj = b.gt_pose(0).invert();
    let px = cloud.source_pixel.unwrap();
    let mut n = 0;
    for (p, &pix) in cloud.points.iter().zip(&px) {
        if b.labels[0][pix as usize] == c.class_id as u8 {
            assert!(index.distance(&to_obj.apply(&v3(*p))) < 1e-3);
            n += 1;
        }
    }
    assert!(n > 100);
}

#[test]
fn labeled_points_lie_on_their_objects() {
    for id in 0..4 {
        let b = generate_scene(&SceneSpec::random(2, id, 3, CameraMode::Quadrant)).unwrap();
        let views: Vec<usize> = (0..3).collect();
        let cloud = merge_views(&b.views).unwrap();
        let labels = b.point_labels(&views, cloud.source_view.as_ref().unwrap(), cloud.source_pixel.as_ref().unwrap());
        let resolution = 0.8 / b.spec.intrinsics.fx;
        for (i, o) in b.objects.iter().enumerate() {
            let index = SurfaceIndex::new(&class(o.class_id).unwrap().mesh);
            let to_obj = b.gt_pose(i).invert();
            for (p, l) in cloud.points.iter().zip(&labels) {
                if *l as u32 == o.class_id {
                    assert!(index.distance(&to_obj.apply(&v3(*p))) < 2.0 * resolution);
                }
            }
        }
        // table points sit on the world plane z = 0
        let to_world = b.true_camera_poses[0];
        for (p, l) in cloud.points.iter().zip(&labels) {
            if *l == 0 {
                assert!(to_world.apply_arr(*p)[2].abs() < 1e-4);
            }
        }
    }
}

#[test]
fn noiseless_views_agree_on_shared_surface() {
    for id in 0..3 {
        let mut spec = SceneSpec::random(3, id, 2, CameraMode::Fixed);
        spec.objects.truncate(1);
        let b = generate_scene(&spec).unwrap();
        let cloud = merge_views(&b.views).unwrap();
        let labels = b.point_labels(&[0, 1], cloud.source_view.as_ref().unwrap(), cloud.source_pixel.as_ref().unwrap());
        let src = cloud.source_view.as_ref().unwrap();
        let class_id = b.objects[0].class_id as u8;
        let pick = |v: u32| -> Vec<[f64; 3]> {
            cloud.points.iter().zip(src).zip(&labels).filter(|((_, s), l)| **s == v && **l == class_id).map(|((p, _), _)| *p).collect()
        };
        let (a, c) = (pick(0), pick(1));
        let index = GridIndex::new(&c);
        // view-1 points that camera 2 also sees: reprojection agrees with its depth
        let k = b.spec.intrinsics;
        let to_cam2 = b.true_camera_poses[1].invert().compose(&b.true_camera_poses[0]);
        let mut shared = 0;
        for p in &a {
            let q = to_cam2.apply_arr(*p);
            let (u, v) = k.project(q).unwrap();
            let (u, v) = (u.round() as usize, v.round() as usize);
            if u >= k.width || v >= k.height || (b.views[1].depth[v * k.width + u] - q[2]).abs() > 1e-3 {
                continue;
            }
            let resolution = q[2].max(p[2]) / k.fx;
            assert!(index.nearest(p).unwrap().1 < 2.0 * resolution);
            shared += 1;
        }
        assert!(shared > 20);
    }
}

#[test]
fn quadrant_cameras_cover_all_quadrants() {
    for id in 0..10 {
        let b = generate_scene(&SceneSpec::random(4, id, 4, CameraMode::Quadrant)).unwrap();
        let aim: Vector3<f64> = b.objects.iter().map(|o| o.pose.translation).sum::<Vector3<f64>>() / b.objects.len() as f64;
        let mut quadrants: Vec<i32> = b
            .true_camera_poses
            .iter()
            .map(|c| {
                let d = c.translation - aim;
                (d.y.atan2(d.x).rem_euclid(std::f64::consts::TAU) / std::f64::consts::FRAC_PI_2) as i32
            })
            .collect();
        quadrants.sort_unstable();
        assert_eq!(quadrants, vec![0, 1, 2, 3]);
    }
    assert!(generate_scene(&SceneSpec::random(4, 0, 5, CameraMode::Quadrant)).is_err());
}

#[test]
fn generation_is_deterministic() {
    let spec = SceneSpec::random(9, 17, 3, CameraMode::Quadrant);
    assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
    let other = SceneSpec::random(9, 18, 3, CameraMode::Quadrant);
    assert_ne!(generate_scene(&spec).unwrap().objects, generate_scene(&other).unwrap().objects);
}

#[test]
fn zero_wiggle_equals_fixed_rig() {
    let fixed = SceneSpec::random(5, 3, 3, CameraMode::Fixed);
    let wiggled = SceneSpec {
        mode: CameraMode::Wiggled,
        sigma_rot: 0.0,
        sigma_trans: 0.0,
        ..fixed.clone()
    };
    let (a, b) = (generate_scene(&fixed).unwrap(), generate_scene(&wiggled).unwrap());
    assert_eq!(a.views, b.views);
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.objects, b.objects);
    assert_eq!(a.true_camera_poses, b.true_camera_poses);
}

#[test]
fn wiggle_perturbs_only_the_annotation() {
    let fixed = generate_scene(&SceneSpec::random(5, 3, 3, CameraMode::Fixed)).unwrap();
    let w = generate_scene(&SceneSpec::random(5, 3, 3, CameraMode::Wiggled)).unwrap();
    assert_eq!(fixed.labels, w.labels);
    assert_eq!(fixed.true_camera_poses, w.true_camera_poses);
    for (v, t) in w.views.iter().zip(&w.true_camera_poses) {
        let angle = v.camera_pose.rotation_distance(t);
        assert!(angle > 0.0 && angle < 5f64.to_radians());
        assert!(v.camera_pose.translation_distance(t) < 0.05);
    }
}

#[test]
fn placement_failure_is_reported() {
    let mut spec = SceneSpec::random(1, 0, 1, CameraMode::Fixed);
    spec.placement_radius = 0.0;
    assert!(matches!(generate_scene(&spec), Err(sympose::Error::CannotPlaceObjects(10_000))));
}

#[test]
fn objects_never_interpenetrate() {
    for b in generate_scenes(6, 0..20, 1, CameraMode::Fixed).unwrap() {
        for (i, a) in b.objects.iter().enumerate() {
            let pa: Vec<[f64; 3]> = class(a.class_id).unwrap().mesh.surface_samples.iter().map(|p| a.pose.apply_arr(*p)).collect();
            for c in &b.objects[i + 1..] {
                let pc: Vec<[f64; 3]> = class(c.class_id).unwrap().mesh.surface_samples.iter().map(|p| c.pose.apply_arr(*p)).collect();
                let min = pa.iter().flat_map(|p| pc.iter().map(move |q| sympose::geometry::dist2(p, q))).fold(f64::INFINITY, f64::min);
                assert!(min > 0.0);
            }
            // resting on the table
            let low = class(a.class_id).unwrap().mesh.vertices.iter().map(|p| a.pose.apply_arr(*p)[2]).fold(f64::INFINITY, f64::min);
            assert!(low.abs() < 1e-12);
        }
    }
}

fn cams(k: &CameraIntrinsics, eyes: &[[f64; 3]]) -> Vec<(Pose, CameraIntrinsics)> {
    eyes.iter().map(|e| (look_at(Vector3::from(*e), Vector3::zeros()), *k)).collect()
}

#[test]
fn occlusion_fraction_bounds_and_half_cover() {
    let k = default_intrinsics();
    let target = square(0.2);
    let views = cams(&k, &[[0.0, 0.0, 1.0], [0.0, 0.05, 1.0]]);
    let alone = [item(&target, Pose::identity(), 1)];
    assert_eq!(occlusion_fraction_of(&alone, 0, &views).unwrap(), 0.0);

    // a large plane just above hides everything
    let big = square(2.0);
    let hidden = [item(&target, Pose::identity(), 1), item(&big, at(0.0, 0.0, 0.3), 2)];
    assert_eq!(occlusion_fraction_of(&hidden, 0, &views).unwrap(), 1.0);

    // a plane covering x > 0 hides half the square from cameras right above
    let cover = Mesh::new("cover", vec![[0.0, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.0]], vec![[0, 1, 2], [0, 2, 3]]).unwrap();
    let half = [item(&target, Pose::identity(), 1), item(&cover, at(0.0, 0.0, 0.01), 2)];
    let top = cams(&k, &[[0.0, 0.0, 1.0], [0.0, 0.2, 1.0]]);
    let f = occlusion_fraction_of(&half, 0, &top).unwrap();
    assert!((f - 0.5).abs() < 0.05, "{f}");
}

#[test]
fn occluded_scene_hides_the_target_in_view_one() {
    let (b, t) = occluded_scene(11, 0, 3, 0.7).unwrap();
    assert!(occlusion_fraction(&b, t, &[0]).unwrap() >= 0.7);
    assert!(occlusion_fraction(&b, t, &[0, 1, 2]).unwrap() < 0.5);
}

#[test]
fn bundle_roundtrips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let b = generate_scene(&SceneSpec::random(8, 2, 3, CameraMode::Wiggled)).unwrap();
    let path = b.save(dir.path(), &serde_json::json!({"seed": 8})).unwrap();
    assert!(path.join("view_2.ply").is_file());
    let loaded = SceneBundle::load(&path.join("scene.json")).unwrap();
    assert_eq!(loaded, b);
    assert_eq!(load_scenes(dir.path()).unwrap(), vec![b]);
}
