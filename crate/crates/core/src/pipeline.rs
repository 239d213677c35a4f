//! The end-to-end estimator: per-class models, the model file, scene
//! estimation with trained or oracle heads, and per-scene evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{prepare_input, FeatureConfig, SceneInput};
use crate::geometry::{Pose, ViewFrame};
use crate::heads::HeadOutputs;
use crate::io;
use crate::keypoints::{select_keypoints, KeypointModel, SalienceMode};
use crate::metrics::ObjectErrors;
use crate::network::{LayerShape, Network, NetworkConfig};
use crate::scenegen::{self, SceneBundle};
use crate::symmetry::{discover_symmetries, DiscoveryConfig, SymmetrySet};
use crate::voting::{estimate_from_outputs, oracle_outputs, OracleObject, PoseEstimate, VoteConfig};

/// Keypoints and symmetries of one object class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub class_id: u32,
    pub name: String,
    pub keypoints: KeypointModel,
    pub symmetry: SymmetrySet,
}

/// Class models of the whole scene catalog, computed in parallel.
pub fn catalog_models(salience: SalienceMode, discovery: &DiscoveryConfig) -> Result<Vec<ClassModel>> {
    catalog_models_with(salience, discovery, &[])
}

/// Like [`catalog_models`], taking the symmetry set of a class from `known`
/// when one names the class's mesh and discovering it otherwise.
pub fn catalog_models_with(salience: SalienceMode, discovery: &DiscoveryConfig, known: &[SymmetrySet]) -> Result<Vec<ClassModel>> {
    scenegen::catalog()
        .par_iter()
        .map(|c| {
            let symmetry = match known.iter().find(|s| s.object == c.mesh.name) {
                Some(s) => s.clone(),
                None => discover_symmetries(&c.mesh, discovery)?,
            };
            Ok(ClassModel {
                class_id: c.class_id,
                name: c.mesh.name.clone(),
                keypoints: select_keypoints(&c.mesh, c.class_id, salience)?,
                symmetry,
            })
        })
        .collect()
}

/// Symmetry set of each class id.
pub fn class_symmetries(classes: &[ClassModel]) -> BTreeMap<u32, SymmetrySet> {
    classes.iter().map(|c| (c.class_id, c.symmetry.clone())).collect()
}

/// A trained estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub network: Network,
    pub classes: Vec<ClassModel>,
    pub features: FeatureConfig,
    pub voting: VoteConfig,
    pub seed: u64,
    /// Free-form provenance (training configuration and so on).
    pub meta: serde_json::Value,
}

const MAGIC: &[u8; 8] = b"SYMPOSE1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    network: NetworkConfig,
    layers: Vec<LayerShape>,
    parameters: usize,
    classes: Vec<ClassModel>,
    features: FeatureConfig,
    voting: VoteConfig,
    seed: u64,
    meta: serde_json::Value,
}

impl Model {
    /// `SYMPOSE1`, the manifest length as u32 LE, the JSON manifest, then
    /// every parameter as f64 LE.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            network: self.network.config,
            layers: self.network.layer_shapes(),
            parameters: self.network.param_count(),
            classes: self.classes.clone(),
            features: self.features.clone(),
            voting: self.voting,
            seed: self.seed,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::InvalidParameter("manifest too large".into()))?;
        let mut out = Vec::with_capacity(12 + json.len() + 8 * manifest.parameters);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.network.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(path, m);
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("not a model file"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated manifest"))?;
        let m: Manifest = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        let weights = &bytes[12 + len..];
        if weights.len() != 8 * m.parameters {
            return Err(bad("weight block size does not match the manifest"));
        }
        // Shapes come from the config; the placeholder rng is never observed
        // because every parameter is overwritten below.
        let mut network = Network::new(m.network, &mut crate::rng::stream(0, "model-load", 0))?;
        if network.layer_shapes() != m.layers || network.param_count() != m.parameters {
            return Err(bad("layer shapes do not match the network config"));
        }
        let params: Vec<f64> = weights.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        network.set_params(&params)?;
        Ok(Self {
            network,
            classes: m.classes,
            features: m.features,
            voting: m.voting,
            seed: m.seed,
            meta: m.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_bytes(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn class(&self, class_id: u32) -> Option<&ClassModel> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }
}

/// Estimates in the working frame mapped back to the first camera's frame.
fn to_view1(input: &SceneInput, results: Vec<(u32, Result<PoseEstimate>)>) -> Vec<(u32, Result<PoseEstimate>)> {
    let back = input.frame.invert();
    results
        .into_iter()
        .map(|(c, r)| {
            (
                c,
                r.map(|mut e| {
                    e.pose = back.compose(&e.pose);
                    e.fitted_keypoints = e.fitted_keypoints.iter().map(|k| back.apply_arr(*k)).collect();
                    e
                }),
            )
        })
        .collect()
}

fn keypoint_models(classes: &[ClassModel]) -> Vec<KeypointModel> {
    classes.iter().map(|c| c.keypoints.clone()).collect()
}

/// Head outputs and input of a scene under the trained network.
pub fn run_network(model: &Model, views: &[ViewFrame], scene_id: u64) -> Result<(SceneInput, HeadOutputs)> {
    let input = prepare_input(views, &model.features, model.seed, scene_id)?;
    let out = model.network.forward(&input)?;
    Ok((input, out))
}

/// Poses, in the first camera's frame, of every class the model knows.
/// Classes fail independently (for example as not detected).
pub fn estimate_scene(model: &Model, views: &[ViewFrame], scene_id: u64) -> Result<Vec<(u32, Result<PoseEstimate>)>> {
    let (input, out) = run_network(model, views, scene_id)?;
    let results = estimate_from_outputs(&input.points, &out, &keypoint_models(&model.classes), &model.voting);
    Ok(to_view1(&input, results))
}

/// The estimator with the heads replaced by exact ground-truth outputs,
/// estimating the classes present in the scene.
pub fn oracle_estimate(
    bundle: &SceneBundle,
    classes: &[ClassModel],
    features: &FeatureConfig,
    voting: &VoteConfig,
    seed: u64,
) -> Result<Vec<(u32, Result<PoseEstimate>)>> {
    let input = prepare_input(&bundle.views, features, seed, bundle.id())?;
    let labels: Vec<u32> = input.source.iter().map(|&(v, p)| u32::from(bundle.labels[v as usize][p as usize])).collect();
    let poses: Vec<(u32, Pose)> = bundle
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.class_id, input.frame.compose(&bundle.gt_pose(i))))
        .collect();
    let mut present = Vec::new();
    let mut objects = Vec::new();
    for (c, pose) in &poses {
        let cm = classes
            .iter()
            .find(|m| m.class_id == *c)
            .ok_or_else(|| Error::InvalidParameter(format!("no model for class {c}")))?;
        present.push(cm.keypoints.clone());
        objects.push(OracleObject { model: &cm.keypoints, pose });
    }
    let out = oracle_outputs(&input.points, &labels, &objects, scenegen::num_classes())?;
    let results = estimate_from_outputs(&input.points, &out, &present, voting);
    Ok(to_view1(&input, results))
}

/// Errors of every ground-truth object of a scene given the estimates.
/// Objects without an estimate count as missed.
pub fn scene_errors(bundle: &SceneBundle, classes: &[ClassModel], results: &[(u32, Result<PoseEstimate>)]) -> Result<Vec<ObjectErrors>> {
    let estimates: Vec<(u32, Pose)> = results.iter().filter_map(|(c, r)| r.as_ref().ok().map(|e| (*c, e.pose))).collect();
    scene_errors_with(bundle, &class_symmetries(classes), &estimates)
}

/// [`scene_errors`] from bare estimated poses (first camera frame) and the
/// symmetry set of each class.
pub fn scene_errors_with(bundle: &SceneBundle, symmetries: &BTreeMap<u32, SymmetrySet>, estimates: &[(u32, Pose)]) -> Result<Vec<ObjectErrors>> {
    bundle
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let sym = symmetries
                .get(&o.class_id)
                .ok_or_else(|| Error::InvalidParameter(format!("no symmetry set for class {}", o.class_id)))?;
            match estimates.iter().find(|(c, _)| *c == o.class_id) {
                Some((_, pose)) => {
                    let points = &scenegen::class(o.class_id)?.mesh.surface_samples;
                    ObjectErrors::measure(bundle.id(), o.class_id, pose, &bundle.gt_pose(i), points, sym)
                }
                None => Ok(ObjectErrors::missed(bundle.id(), o.class_id)),
            }
        })
        .collect()
}
