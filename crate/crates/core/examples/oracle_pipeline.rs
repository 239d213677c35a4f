//! Voting, mean-shift clustering and least-squares fitting driven by exact
//! ground-truth head outputs.
//!
//!     cargo run --example oracle_pipeline -- [scenes]

use sympose::keypoints::SalienceMode;
use sympose::metrics::MetricReport;
use sympose::pipeline::{catalog_models, oracle_estimate, scene_errors};
use sympose::scenegen::{self, generate_scenes, CameraMode};
use sympose::symmetry::DiscoveryConfig;
use sympose::voting::VoteConfig;

fn main() -> sympose::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let classes = catalog_models(SalienceMode::Curvature, &DiscoveryConfig::default())?;
    let scenes = generate_scenes(9, 0..n, 3, CameraMode::Quadrant)?;
    let mut errors = Vec::new();
    for b in &scenes {
        let results = oracle_estimate(b, &classes, &Default::default(), &VoteConfig::default(), 9)?;
        errors.extend(scene_errors(b, &classes, &results)?);
    }
    let report = MetricReport::new(errors, |c| scenegen::class(c).map(|k| k.mesh.name.clone()).unwrap_or_default(), serde_json::Value::Null)?;
    println!("{:<14} {:>5} {:>9} {:>9} {:>13}", "class", "count", "ADD-S AUC", "<2cm (%)", "rot err (deg)");
    for (name, m) in report.per_class.iter().chain([(&"all".to_string(), &report.aggregate)]) {
        println!(
            "{name:<14} {:>5} {:>9.2} {:>9.1} {:>13.5}",
            m.count,
            m.adds_auc,
            m.precision_2cm,
            m.mean_quotient_rotation_deg.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
