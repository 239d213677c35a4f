//! Rotational symmetry discovery on a mesh.
//!
//!     cargo run --example symmetry_discovery -- [lib:<name> | mesh.ply | mesh.obj] [out.json]
//!
//! Without arguments every library object is analyzed.

use std::path::Path;
use std::time::Instant;

use sympose::geometry::rotation_angle;
use sympose::io;
use sympose::mesh;
use sympose::symmetry::{discover_symmetries, DiscoveryConfig};

fn main() -> sympose::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let meshes = match args.first() {
        Some(spec) => vec![io::load_mesh(spec)?],
        None => mesh::object_library(),
    };
    let cfg = DiscoveryConfig::default();
    for m in &meshes {
        let t = Instant::now();
        let set = discover_symmetries(m, &cfg)?;
        let angles: Vec<String> = set.transforms.iter().map(|r| format!("{:.1}", rotation_angle(r).to_degrees())).collect();
        println!(
            "{:<14} |S| = {:>2}{} in {:.1} s, angles [{}]",
            m.name,
            set.len(),
            if set.is_continuous() { " (continuous axis, discretized)" } else { "" },
            t.elapsed().as_secs_f64(),
            angles.join(", ")
        );
        if let Some(out) = args.get(1) {
            io::write_json(Path::new(out), &set)?;
        }
    }
    Ok(())
}
