//! Training: per-scene samples with ground-truth targets, the multi-task
//! objective, and a deterministic mini-batch loop.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{prepare_input, FeatureConfig, SceneInput};
use crate::heads::HeadOutputs;
use crate::losses::{center_loss, focal_loss, multitask_loss, symmetry_keypoint_loss, FocalParams, InstanceTargets, LossComponents, LossWeights};
use crate::network::{zero_outputs, Network};
use crate::nn::{Optimizer, OptimizerConfig};
use crate::pipeline::ClassModel;
use crate::rng;
use crate::scenegen::SceneBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub weights: LossWeights,
    pub focal: FocalParams,
    /// Minimize the keypoint loss over each object's symmetry set.
    pub symmetry_aware: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 8,
            optimizer: OptimizerConfig::default(),
            weights: LossWeights::default(),
            focal: FocalParams::default(),
            symmetry_aware: true,
            seed: 0,
        }
    }
}

/// Network input of one scene with its ground truth.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub scene: u64,
    pub input: SceneInput,
    /// Class per sampled point, 0 for background.
    pub labels: Vec<usize>,
    /// Targets with the full symmetry set of each object.
    pub instances: Vec<InstanceTargets>,
}

/// Builds the training sample of a scene. Objects without sampled points
/// get no instance.
pub fn build_sample(bundle: &SceneBundle, classes: &[ClassModel], features: &FeatureConfig, seed: u64) -> Result<TrainSample> {
    let input = prepare_input(&bundle.views, features, seed, bundle.id())?;
    let labels: Vec<usize> = input.source.iter().map(|&(v, p)| bundle.labels[v as usize][p as usize] as usize).collect();
    let mut instances = Vec::new();
    for (i, obj) in bundle.objects.iter().enumerate() {
        let indices: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == obj.class_id as usize).collect();
        if indices.is_empty() {
            continue;
        }
        let cm = classes
            .iter()
            .find(|c| c.class_id == obj.class_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no model for class {}", obj.class_id)))?;
        let pose = input.frame.compose(&bundle.gt_pose(i));
        instances.push(InstanceTargets::new(
            obj.class_id,
            &input.points,
            indices,
            &cm.keypoints.keypoints,
            cm.keypoints.center,
            &pose,
            &cm.symmetry,
        )?);
    }
    Ok(TrainSample {
        scene: bundle.id(),
        input,
        labels,
        instances,
    })
}

/// Builds samples for many scenes in parallel, in input order.
pub fn build_samples(bundles: &[SceneBundle], classes: &[ClassModel], features: &FeatureConfig, seed: u64) -> Result<Vec<TrainSample>> {
    bundles.par_iter().map(|b| build_sample(b, classes, features, seed)).collect()
}

/// Multi-task loss of one sample. When `grad` is given, the gradient of the
/// weighted total with respect to the outputs is added to it.
pub fn sample_loss(
    out: &HeadOutputs,
    sample: &TrainSample,
    cfg: &TrainConfig,
    grad: Option<&mut HeadOutputs>,
) -> Result<LossComponents> {
    let n_inst = sample.instances.len();
    let mut comps = LossComponents::default();
    let mut g = grad;
    let mut kp_grad = g.as_ref().map(|_| Array2::zeros(out.keypoint_offsets.raw_dim()));
    let mut cp_grad = g.as_ref().map(|_| Array2::zeros(out.center_offsets.raw_dim()));
    for inst in &sample.instances {
        let plain;
        let inst = if cfg.symmetry_aware {
            inst
        } else {
            plain = inst.without_symmetry();
            &plain
        };
        comps.keypoint += symmetry_keypoint_loss(out.keypoint_offsets.view(), inst, kp_grad.as_mut())?.0 / n_inst as f64;
        comps.center += center_loss(out.center_offsets.view(), inst, cp_grad.as_mut())? / n_inst as f64;
    }
    let mut sem_grad = g.as_ref().map(|_| Array2::zeros(out.semantic_logits.raw_dim()));
    comps.semantic = focal_loss(out.semantic_logits.view(), &sample.labels, cfg.focal, sem_grad.as_mut())?;
    if let Some(g) = g.as_deref_mut() {
        let w = cfg.weights;
        if n_inst > 0 {
            g.keypoint_offsets.scaled_add(w.lambda1 / n_inst as f64, kp_grad.as_ref().unwrap());
            g.center_offsets.scaled_add(w.lambda3 / n_inst as f64, cp_grad.as_ref().unwrap());
        }
        g.semantic_logits.scaled_add(w.lambda2, sem_grad.as_ref().unwrap());
    }
    Ok(comps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub keypoint: f64,
    pub semantic: f64,
    pub center: f64,
    pub total: f64,
}

/// CSV with one row per epoch: `epoch,L_kp,L_semantic,L_cp,L_total`.
pub fn log_csv(log: &[EpochLog], meta: &serde_json::Value) -> String {
    let mut out = format!("# {meta}\nepoch,L_kp,L_semantic,L_cp,L_total\n");
    for e in log {
        writeln!(out, "{},{:.9},{:.9},{:.9},{:.9}", e.epoch, e.keypoint, e.semantic, e.center, e.total).unwrap();
    }
    out
}

/// Loss and flat parameter gradient of one sample.
fn sample_step(net: &Network, sample: &TrainSample, cfg: &TrainConfig) -> Result<(LossComponents, Vec<f64>)> {
    let (out, cache) = net.forward_cached(&sample.input)?;
    let mut g = zero_outputs(&out);
    let comps = sample_loss(&out, sample, cfg, Some(&mut g))?;
    Ok((comps, net.backward(&cache, &g)?))
}

/// Trains `net` in place. Per-sample gradients of a batch are computed in
/// parallel and summed in sample order, so results do not depend on the
/// number of threads. `on_epoch` sees each epoch's mean losses.
pub fn train(net: &mut Network, samples: &[TrainSample], cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<Vec<EpochLog>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("training samples"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let mut params = net.params();
    let mut opt = Optimizer::new(cfg.optimizer, params.len());
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, "train-shuffle", epoch as u64));
        let mut sum = LossComponents::default();
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(LossComponents, Vec<f64>)>> = batch.par_iter().map(|&i| sample_step(net, &samples[i], cfg)).collect();
            let mut grad = vec![0.0; params.len()];
            for r in results {
                let (c, g) = r?;
                sum.keypoint += c.keypoint;
                sum.semantic += c.semantic;
                sum.center += c.center;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(&mut params, &grad)?;
            net.set_params(&params)?;
        }
        let n = samples.len() as f64;
        let mean = LossComponents {
            keypoint: sum.keypoint / n,
            semantic: sum.semantic / n,
            center: sum.center / n,
        };
        let entry = EpochLog {
            epoch,
            keypoint: mean.keypoint,
            semantic: mean.semantic,
            center: mean.center,
            total: multitask_loss(mean, cfg.weights),
        };
        if !entry.total.is_finite() {
            return Err(Error::InvalidParameter(format!("training diverged at epoch {epoch}")));
        }
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}
