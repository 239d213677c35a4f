//! Synthetic multi-view scenes: rendering, camera rigs and occlusion.
//!
//!     cargo run --example scene_generation -- [out_dir]
//!
//! Prints per-object occlusion for one scene of each camera mode and, given
//! a directory, writes the scenes in the on-disk bundle layout.

use std::path::Path;

use sympose::scenegen::{self, generate_scenes, occlusion_fraction, CameraMode};

fn main() -> sympose::Result<()> {
    let out = std::env::args().nth(1);
    for mode in [CameraMode::Fixed, CameraMode::Quadrant, CameraMode::Wiggled] {
        let bundle = generate_scenes(3, 0..1, 3, mode)?.remove(0);
        println!("{mode:?}: {} objects, {} views", bundle.objects.len(), bundle.views.len());
        for (k, (annotated, truth)) in bundle.views.iter().map(|v| v.camera_pose).zip(&bundle.true_camera_poses).enumerate() {
            println!(
                "  camera {k}: annotation off by {:.2} deg / {:.1} mm",
                annotated.rotation_distance(truth).to_degrees(),
                annotated.translation_distance(truth) * 1e3
            );
        }
        for (i, o) in bundle.objects.iter().enumerate() {
            let name = &scenegen::class(o.class_id)?.mesh.name;
            println!(
                "  {name:<13} occluded {:>5.1}% in view 1, {:>5.1}% over all views",
                100.0 * occlusion_fraction(&bundle, i, &[0])?,
                100.0 * occlusion_fraction(&bundle, i, &[0, 1, 2])?
            );
        }
        if let Some(dir) = &out {
            let path = bundle.save(&Path::new(dir).join(format!("{mode:?}").to_lowercase()), &serde_json::json!({"example": "scene_generation"}))?;
            println!("  written to {}", path.display());
        }
    }
    let (bundle, hidden) = scenegen::occluded_scene(3, 0, 3, 0.7)?;
    println!(
        "occluded scene: object {hidden} hidden {:.0}% in view 1",
        100.0 * occlusion_fraction(&bundle, hidden, &[0])?
    );
    Ok(())
}
