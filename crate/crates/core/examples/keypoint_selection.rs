//! Keypoint selection by salience-weighted farthest point sampling.
//!
//!     cargo run --example keypoint_selection -- [lib:<name> | mesh.ply]

use sympose::io;
use sympose::keypoints::{select_keypoints, SalienceMode};

fn main() -> sympose::Result<()> {
    let spec = std::env::args().nth(1).unwrap_or_else(|| "lib:l_clamp".into());
    let mesh = io::load_mesh(&spec)?;
    for mode in [SalienceMode::Curvature, SalienceMode::Uniform] {
        let kp = select_keypoints(&mesh, 1, mode)?;
        println!("{} ({mode:?}), center {:?}", mesh.name, kp.center.map(|c| (c * 1e4).round() / 1e4));
        for (i, k) in kp.keypoints.iter().enumerate() {
            println!("  k{i}: [{:+.4}, {:+.4}, {:+.4}]", k[0], k[1], k[2]);
        }
    }
    Ok(())
}
