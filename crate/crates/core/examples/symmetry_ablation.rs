//! Paired training runs with the symmetry-aware loss switched on and off,
//! compared on the symmetric classes of held-out scenes.
//!
//!     cargo run --example symmetry_ablation -- [train_scenes] [epochs] [seed]

use sympose::experiment::{ablate, samples_for, TrainSettings};
use sympose::keypoints::SalienceMode;
use sympose::pipeline::catalog_models;
use sympose::scenegen::{generate_scenes, CameraMode};
use sympose::symmetry::DiscoveryConfig;

fn main() -> sympose::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (n_train, epochs, seed) = (args.first().copied().unwrap_or(150), args.get(1).copied().unwrap_or(10), args.get(2).copied().unwrap_or(1));
    let classes = catalog_models(SalienceMode::Curvature, &DiscoveryConfig::default())?;
    for c in &classes {
        println!("{:<13} |S| = {}", c.name, c.symmetry.len());
    }
    let train = generate_scenes(1, 0..n_train, 3, CameraMode::Fixed)?;
    let test = generate_scenes(1, 100_000..100_050, 3, CameraMode::Fixed)?;
    let mut settings = TrainSettings::default();
    settings.train.epochs = epochs as usize;
    settings.train.seed = seed;
    let samples = samples_for(&train, &classes, &settings)?;
    for arm in ablate(&samples, &test, &classes, &settings, &[true, false])? {
        let s = arm.split;
        println!(
            "symmetry-aware {:<5}: symmetric quotient ADD < 2 cm {:>5.1}% (mean rotation error {:>5.1} deg, {} objects), asymmetric ADD-S < 2 cm {:>5.1}%",
            arm.symmetry_aware, s.symmetric_quotient_precision, s.symmetric_mean_rotation_deg, s.symmetric_objects, s.asymmetric_adds_precision
        );
    }
    Ok(())
}
