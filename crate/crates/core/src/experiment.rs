//! Whole experiments assembled from the pipeline: training a model on
//! scenes, evaluating it on held-out scenes, and the symmetry ablation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::metrics::{precision_at, ObjectErrors, PRECISION_THRESHOLD};
use crate::network::{Network, NetworkConfig};
use crate::pipeline::{estimate_scene, scene_errors, ClassModel, Model};
use crate::rng;
use crate::scenegen::SceneBundle;
use crate::train::{build_samples, train, EpochLog, TrainConfig, TrainSample};
use crate::voting::VoteConfig;

/// Everything that determines a trained model besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub features: FeatureConfig,
    pub voting: VoteConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            voting: VoteConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

/// Training samples of `bundles` under `settings`.
pub fn samples_for(bundles: &[SceneBundle], classes: &[ClassModel], settings: &TrainSettings) -> Result<Vec<TrainSample>> {
    settings.features.validate()?;
    build_samples(bundles, classes, &settings.features, settings.seed())
}

/// Trains a fresh network on prepared samples. The samples must have been
/// built with `settings.features` and seed.
pub fn train_on_samples(
    samples: &[TrainSample],
    classes: &[ClassModel],
    settings: &TrainSettings,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model, Vec<EpochLog>)> {
    settings.voting.validate()?;
    let mut network = Network::new(settings.network, &mut rng::stream(settings.seed(), "network-init", 0))?;
    let log = train(&mut network, samples, &settings.train, on_epoch)?;
    let model = Model {
        network,
        classes: classes.to_vec(),
        features: settings.features.clone(),
        voting: settings.voting,
        seed: settings.seed(),
        meta: serde_json::to_value(settings)?,
    };
    Ok((model, log))
}

pub fn train_model(
    bundles: &[SceneBundle],
    classes: &[ClassModel],
    settings: &TrainSettings,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model, Vec<EpochLog>)> {
    let samples = samples_for(bundles, classes, settings)?;
    train_on_samples(&samples, classes, settings, on_epoch)
}

/// Per-object errors of `model` on every scene, in scene order.
pub fn evaluate_model(model: &Model, bundles: &[SceneBundle]) -> Result<Vec<ObjectErrors>> {
    let per_scene: Vec<Result<Vec<ObjectErrors>>> = bundles
        .par_iter()
        .map(|b| {
            let results = estimate_scene(model, &b.views, b.id())?;
            scene_errors(b, &model.classes, &results)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_scene {
        out.extend(r?);
    }
    Ok(out)
}

/// Summary of one ablation arm split by symmetry class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySplit {
    /// Quotient ADD below 2 cm over objects of symmetric classes (percent).
    pub symmetric_quotient_precision: f64,
    /// Mean quotient rotation error of detected symmetric objects (degrees).
    pub symmetric_mean_rotation_deg: f64,
    /// ADD-S below 2 cm over objects of asymmetric classes (percent).
    pub asymmetric_adds_precision: f64,
    pub symmetric_objects: usize,
    pub asymmetric_objects: usize,
}

impl SymmetrySplit {
    pub fn from_errors(errors: &[ObjectErrors], classes: &[ClassModel]) -> Result<Self> {
        let symmetric = |c: u32| classes.iter().any(|m| m.class_id == c && m.symmetry.is_symmetric());
        let (sym, asym): (Vec<&ObjectErrors>, Vec<&ObjectErrors>) = errors.iter().partition(|e| symmetric(e.class_id));
        if sym.is_empty() || asym.is_empty() {
            return Err(Error::EmptyInput("objects of both symmetric and asymmetric classes"));
        }
        let quotient: Vec<f64> = sym.iter().map(|e| e.quotient_add).collect();
        let adds: Vec<f64> = asym.iter().map(|e| e.adds).collect();
        let rot: Vec<f64> = sym.iter().filter(|e| e.detected).map(|e| e.quotient_rotation_deg).collect();
        Ok(Self {
            symmetric_quotient_precision: precision_at(&quotient, PRECISION_THRESHOLD)?,
            symmetric_mean_rotation_deg: if rot.is_empty() { f64::INFINITY } else { rot.iter().sum::<f64>() / rot.len() as f64 },
            asymmetric_adds_precision: precision_at(&adds, PRECISION_THRESHOLD)?,
            symmetric_objects: sym.len(),
            asymmetric_objects: asym.len(),
        })
    }
}

/// Result of one ablation arm.
#[derive(Debug, Clone)]
pub struct AblationArm {
    pub symmetry_aware: bool,
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub errors: Vec<ObjectErrors>,
    pub split: SymmetrySplit,
}

/// Trains with the symmetry-aware loss switched to each value of `arms` on
/// the same samples and evaluates every model on `test`.
pub fn ablate(
    samples: &[TrainSample],
    test: &[SceneBundle],
    classes: &[ClassModel],
    settings: &TrainSettings,
    arms: &[bool],
) -> Result<Vec<AblationArm>> {
    arms.iter()
        .map(|&on| {
            let mut s = settings.clone();
            s.train.symmetry_aware = on;
            let (model, log) = train_on_samples(samples, classes, &s, |_| {})?;
            let errors = evaluate_model(&model, test)?;
            let split = SymmetrySplit::from_errors(&errors, classes)?;
            Ok(AblationArm {
                symmetry_aware: on,
                model,
                log,
                errors,
                split,
            })
        })
        .collect()
}
