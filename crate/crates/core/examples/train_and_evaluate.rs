//! Trains the network on synthetic scenes, evaluates it on held-out scenes
//! and writes the model, the loss log, a metric report and accuracy curves.
//!
//!     cargo run --example train_and_evaluate -- [train_scenes] [epochs] [out_dir]

use std::path::PathBuf;

use sympose::experiment::{evaluate_model, train_model, TrainSettings};
use sympose::io;
use sympose::keypoints::SalienceMode;
use sympose::metrics::{curves_svg, MetricReport, AUC_MAX_THRESHOLD};
use sympose::pipeline::catalog_models;
use sympose::scenegen::{self, generate_scenes, CameraMode};
use sympose::symmetry::DiscoveryConfig;
use sympose::train::log_csv;

fn main() -> sympose::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n_train: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(100);
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let out = PathBuf::from(args.get(2).map_or("train_out", String::as_str));

    let classes = catalog_models(SalienceMode::Curvature, &DiscoveryConfig::default())?;
    let train = generate_scenes(1, 0..n_train, 3, CameraMode::Fixed)?;
    let test = generate_scenes(1, 100_000..100_040, 3, CameraMode::Fixed)?;
    let mut settings = TrainSettings::default();
    settings.train.epochs = epochs;
    settings.train.seed = 1;
    let (model, log) = train_model(&train, &classes, &settings, |e| {
        println!("epoch {:>2}: L_kp {:.4} L_sem {:.4} L_cp {:.4} total {:.4}", e.epoch, e.keypoint, e.semantic, e.center, e.total)
    })?;
    let meta = serde_json::to_value(&settings)?;
    model.save(&out.join("model.bin"))?;
    io::write_bytes(&out.join("loss.csv"), log_csv(&log, &meta).as_bytes())?;

    let errors = evaluate_model(&model, &test)?;
    let name = |c: u32| scenegen::class(c).map(|k| k.mesh.name.clone()).unwrap_or_default();
    let report = MetricReport::new(errors, name, meta)?;
    io::write_bytes(&out.join("report.csv"), report.to_csv().as_bytes())?;
    io::write_json(&out.join("report.json"), &report)?;
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    for (id, n) in &report.class_names {
        curves.push((n.clone(), report.errors.iter().filter(|e| e.class_id == *id).map(|e| e.add_dash_s).collect()));
    }
    io::write_bytes(&out.join("curves.svg"), curves_svg(&curves, AUC_MAX_THRESHOLD)?.as_bytes())?;

    for (n, m) in &report.per_class {
        println!(
            "{n:<14} ADD(-S) AUC {:>6.2}  ADD-S < 2 cm {:>5.1}%  quotient ADD < 2 cm {:>5.1}%",
            m.add_dash_s_auc, m.precision_2cm, m.quotient_precision_2cm
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
