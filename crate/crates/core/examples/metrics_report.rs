//! Pose-error metrics, AUC and the report formats on hand-made estimates.
//!
//!     cargo run --example metrics_report -- [out_dir]

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::Vector3;
use sympose::geometry::{axis_angle, Pose};
use sympose::io;
use sympose::metrics::{add_error, adds_error, auc, curves_svg, precision_at, quotient_add, AUC_MAX_THRESHOLD};
use sympose::scenegen;
use sympose::symmetry::{discover_symmetries, DiscoveryConfig};

fn main() -> sympose::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "metrics_out".into()));
    let cuboid = &scenegen::class(1)?.mesh;
    let sym = discover_symmetries(cuboid, &DiscoveryConfig::default())?;
    let pts = &cuboid.surface_samples;
    let gt = Pose::new(axis_angle(&Vector3::new(1.0, 2.0, 0.5), 0.4), Vector3::new(0.0, 0.05, 0.7))?;
    let cases = [
        ("exact", gt),
        ("shifted 1 cm", Pose::from_translation(Vector3::new(0.01, 0.0, 0.0)).compose(&gt)),
        ("flipped about x", gt.compose(&Pose::from_rotation(axis_angle(&Vector3::x(), PI)))),
        ("turned 10 deg", gt.compose(&Pose::from_rotation(axis_angle(&Vector3::z(), 10f64.to_radians())))),
    ];
    println!("{:<16} {:>9} {:>9} {:>12}", "estimate", "ADD (mm)", "ADD-S (mm)", "quotient (mm)");
    let mut adds = Vec::new();
    let mut add = Vec::new();
    for (name, est) in &cases {
        let (a, s, q) = (add_error(est, &gt, pts)?, adds_error(est, &gt, pts)?, quotient_add(est, &gt, pts, &sym)?);
        println!("{name:<16} {:>9.2} {:>9.2} {:>12.2}", a * 1e3, s * 1e3, q * 1e3);
        add.push(a);
        adds.push(s);
    }
    println!(
        "AUC (max {AUC_MAX_THRESHOLD} m): ADD {:.2}, ADD-S {:.2}; below 2 cm: ADD {:.0}%, ADD-S {:.0}%",
        auc(&add, AUC_MAX_THRESHOLD)?,
        auc(&adds, AUC_MAX_THRESHOLD)?,
        precision_at(&add, 0.02)?,
        precision_at(&adds, 0.02)?
    );
    let svg = curves_svg(&[("ADD".into(), add), ("ADD-S".into(), adds)], AUC_MAX_THRESHOLD)?;
    io::write_bytes(&out.join("curves.svg"), svg.as_bytes())?;
    println!("curves in {}", out.join("curves.svg").display());
    Ok(())
}
