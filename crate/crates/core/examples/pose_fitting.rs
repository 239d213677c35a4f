//! Rigid poses and the least-squares keypoint fit.
//!
//! Builds a random object pose, moves eight model keypoints with it, adds
//! sensor-like noise and recovers the pose again.
//!
//!     cargo run --example pose_fitting -- [noise_mm]

use rand::Rng;
use rand_distr::{Distribution, Normal};
use sympose::geometry::{rotation_distance, Pose};
use sympose::rng::stream;
use sympose::voting::{fit_residual, least_squares_fit};

fn main() -> sympose::Result<()> {
    let noise_mm: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let mut rng = stream(7, "example-pose", 0);
    let model: Vec<[f64; 3]> = (0..8).map(|_| [rng.gen_range(-0.08..0.08), rng.gen_range(-0.05..0.05), rng.gen_range(-0.03..0.03)]).collect();
    let truth = Pose::random(&mut rng, 0.8);
    println!("true pose {}", serde_json::to_string(&truth)?);

    let noise = Normal::new(0.0, noise_mm * 1e-3).unwrap();
    let observed: Vec<[f64; 3]> = model
        .iter()
        .map(|m| truth.apply_arr(*m).map(|c| c + noise.sample(&mut rng)))
        .collect();
    let est = least_squares_fit(&observed, &model)?;
    println!(
        "noise {noise_mm} mm: rotation error {:.4} deg, translation error {:.3} mm, rms residual {:.3} mm",
        rotation_distance(&est.rotation, &truth.rotation).to_degrees(),
        (est.translation - truth.translation).norm() * 1e3,
        fit_residual(&est, &observed, &model) * 1e3
    );

    // compose(a, b) applies b first; a pose composed with its inverse is the identity
    let round_trip = truth.compose(&truth.invert());
    println!("|T T^-1 - I| = {:.1e}", round_trip.rotation_distance(&Pose::identity()) + round_trip.translation.norm());
    Ok(())
}
