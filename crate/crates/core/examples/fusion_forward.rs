//! Network input preparation and a forward pass through the fusion block and
//! heads of an untrained network.
//!
//!     cargo run --example fusion_forward

use sympose::features::{prepare_input, FeatureConfig};
use sympose::network::{Network, NetworkConfig};
use sympose::rng::stream;
use sympose::scenegen::{generate_scenes, CameraMode};

fn main() -> sympose::Result<()> {
    let bundle = generate_scenes(5, 0..1, 3, CameraMode::Fixed)?.remove(0);
    let cfg = FeatureConfig::default();
    let input = prepare_input(&bundle.views, &cfg, 5, bundle.id())?;
    println!(
        "{} points x {} features, {} views of {}x{} pixels x {} channels",
        input.len(),
        input.point_features.features.ncols(),
        input.pixels.views.len(),
        input.pixels.views[0].width,
        input.pixels.views[0].height,
        input.pixels.channels()
    );
    let mut per_view = vec![0usize; bundle.views.len()];
    for (v, _) in &input.source {
        per_view[*v as usize] += 1;
    }
    println!("sampled points per source view: {per_view:?}");

    let net = Network::new(NetworkConfig::default(), &mut stream(5, "example-net", 0))?;
    println!("network: {} parameters", net.param_count());
    for l in net.layer_shapes() {
        println!("  {:<15} {:>3} -> {:<3} {:?}", l.mlp, l.inputs, l.outputs, l.activation);
    }
    let out = net.forward(&input)?;
    println!(
        "outputs: keypoint offsets {:?}, center offsets {:?}, semantic logits {:?}",
        out.keypoint_offsets.dim(),
        out.center_offsets.dim(),
        out.semantic_logits.dim()
    );
    Ok(())
}
