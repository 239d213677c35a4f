//! The symmetry-aware keypoint loss against the plain one.
//!
//! Offsets predicted for a cuboid flipped by a half turn are penalized by
//! the plain loss but cost nothing once the flip is in the symmetry set.
//!
//!     cargo run --example symmetry_loss

use std::f64::consts::PI;

use nalgebra::Vector3;
use sympose::geometry::{axis_angle, Pose};
use sympose::keypoints::{select_keypoints, SalienceMode};
use sympose::losses::{symmetry_keypoint_loss, InstanceTargets};
use sympose::mesh;
use sympose::symmetry::{discover_symmetries, DiscoveryConfig};

fn main() -> sympose::Result<()> {
    let cuboid = mesh::cuboid(0.16, 0.10, 0.06)?;
    let sym = discover_symmetries(&cuboid, &DiscoveryConfig::default())?;
    let kp = select_keypoints(&cuboid, 1, SalienceMode::Curvature)?;
    let pose = Pose::new(axis_angle(&Vector3::new(0.2, 1.0, 0.3), 0.7), Vector3::new(0.05, -0.02, 0.6))?;
    let points: Vec<[f64; 3]> = cuboid.surface_samples.iter().step_by(64).map(|p| pose.apply_arr(*p)).collect();
    let indices: Vec<usize> = (0..points.len()).collect();
    let inst = InstanceTargets::new(1, &points, indices, &kp.keypoints, kp.center, &pose, &sym)?;
    let plain = inst.without_symmetry();

    // perfect offsets towards the keypoints of the flipped object
    let flipped = pose.compose(&Pose::from_rotation(axis_angle(&Vector3::x(), PI)));
    let flipped_inst = InstanceTargets::new(1, &points, inst.indices.clone(), &kp.keypoints, kp.center, &flipped, &sym)?;
    let mut pred = ndarray::Array2::zeros((points.len(), 3 * kp.keypoints.len()));
    for (r, &i) in flipped_inst.indices.iter().enumerate() {
        pred.row_mut(i).assign(&flipped_inst.keypoint_variants[0].row(r));
    }
    let (with_sym, best) = symmetry_keypoint_loss(pred.view(), &inst, None)?;
    let (without, _) = symmetry_keypoint_loss(pred.view(), &plain, None)?;
    println!("cuboid symmetry set: {} rotations", sym.len());
    println!("loss of flipped predictions: plain {without:.4}, symmetry-aware {with_sym:.2e} (variant {best})");
    Ok(())
}
