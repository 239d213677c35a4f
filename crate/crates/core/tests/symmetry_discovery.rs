use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use sympose::geometry::pose::{axis_angle, rotation_distance};
use sympose::geometry::random_rotation;
use sympose::mesh::{self, closest_point_on_triangle, Mesh};
use sympose::symmetry::{discover_symmetries, DiscoveryConfig, SymmetrySet};

/// Residual by exhaustive closest-point search over every triangle.
fn brute_residual(m: &Mesh, r: &Matrix3<f64>) -> f64 {
    let c = Vector3::from(m.surface_centroid());
    let tris: Vec<[Vector3<f64>; 3]> = m
        .faces
        .iter()
        .map(|f| f.map(|i| Vector3::from(m.vertices[i])))
        .collect();
    let total: f64 = m
        .surface_samples
        .iter()
        .map(|p| {
            let q = r * (Vector3::from(*p) - c) + c;
            tris.iter()
                .map(|t| (closest_point_on_triangle(&q, &t[0], &t[1], &t[2]) - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / m.surface_samples.len() as f64
}

fn group(gens: &[Matrix3<f64>]) -> Vec<Matrix3<f64>> {
    let mut g = vec![Matrix3::identity()];
    loop {
        let mut added = false;
        for a in g.clone() {
            for b in gens {
                let m = a * b;
                if !g.iter().any(|x| rotation_distance(x, &m) < 1e-6) {
                    g.push(m);
                    added = true;
                }
            }
        }
        if !added {
            return g;
        }
    }
}

fn same_set(found: &SymmetrySet, expected: &[Matrix3<f64>], tol: f64) {
    assert_eq!(found.len(), expected.len(), "{}: found {}", found.object, found.len());
    for e in expected {
        let best = found
            .transforms
            .iter()
            .map(|s| rotation_distance(s, e))
            .fold(f64::INFINITY, f64::min);
        assert!(best < tol, "{}: missing expected rotation (off by {best})", found.object);
    }
}

fn check(m: &Mesh, expected: Vec<Matrix3<f64>>) {
    let t = std::time::Instant::now();
    let set = discover_symmetries(m, &DiscoveryConfig::default()).unwrap();
    eprintln!("{}: {} transforms in {:?}", m.name, set.len(), t.elapsed());
    set.validate().unwrap();
    same_set(&set, &expected, 0.02);
    let tau = 0.01 * m.diameter();
    for s in &set.transforms {
        assert!(brute_residual(m, s) < tau);
    }
}

#[test]
fn cuboid_has_three_half_turns() {
    let m = mesh::cuboid(0.16, 0.10, 0.06).unwrap();
    let half = |a: Vector3<f64>| axis_angle(&a, PI);
    check(&m, group(&[half(Vector3::x()), half(Vector3::y())]));
}

#[test]
fn rotated_square_prism_has_dihedral_order_eight() {
    let r = random_rotation(&mut sympose::rng::stream(11, "test", 0));
    let m = mesh::square_prism(0.07, 0.13).unwrap().transformed(&r, &Vector3::zeros()).unwrap();
    let gens = [axis_angle(&(r * Vector3::z()), PI / 2.0), axis_angle(&(r * Vector3::x()), PI)];
    check(&m, group(&gens));
}

#[test]
fn asymmetric_objects_have_identity_only() {
    for m in [mesh::scalene_tetrahedron().unwrap(), mesh::wedge(0.07).unwrap()] {
        check(&m, vec![Matrix3::identity()]);
    }
}

#[test]
fn l_clamp_has_one_diagonal_half_turn() {
    let m = mesh::l_clamp(0.11, 0.035, 0.05).unwrap();
    check(&m, group(&[axis_angle(&Vector3::new(1.0, 1.0, 0.0), PI)]));
}

#[test]
fn cylinder_discretizes_its_continuous_axis() {
    let r = random_rotation(&mut sympose::rng::stream(12, "test", 0));
    let m = mesh::cylinder(0.04, 0.12, 48).unwrap().transformed(&r, &Vector3::zeros()).unwrap();
    let axis = r * Vector3::z();
    let t = std::time::Instant::now();
    let set = discover_symmetries(&m, &DiscoveryConfig::default()).unwrap();
    eprintln!("cylinder: {} transforms in {:?}", set.len(), t.elapsed());
    set.validate().unwrap();
    let found = Vector3::from(set.continuous_axis.expect("continuous axis"));
    assert!(found.dot(&axis).abs() > (0.02f64).cos());
    let about_axis: Vec<_> = set
        .transforms
        .iter()
        .filter(|s| {
            let w = Vector3::new(s[(2, 1)] - s[(1, 2)], s[(0, 2)] - s[(2, 0)], s[(1, 0)] - s[(0, 1)]);
            (*s * axis - axis).norm() < 0.02 || (w.norm() < 1e-9 && (**s - Matrix3::identity()).norm() < 1e-9)
        })
        .collect();
    assert_eq!(about_axis.len(), 16);
    // the flip family (congruent caps) completes the dihedral group of order 32
    assert_eq!(set.len(), 32);
    let tau = 0.01 * m.diameter();
    for s in &set.transforms {
        assert!(brute_residual(&m, s) < tau);
    }
}
