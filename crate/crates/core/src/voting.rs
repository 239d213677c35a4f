//! From per-point predictions to object poses: offset votes, mean-shift
//! modes per keypoint slot, and a least-squares rigid fit.

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{centroid, dist2, v3, Pose};
use crate::heads::HeadOutputs;
use crate::keypoints::KeypointModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteConfig {
    /// Gaussian kernel bandwidth (meters).
    pub bandwidth: f64,
    /// Fewer points of a class than this and the class counts as not detected.
    pub min_points: usize,
    /// Center votes farther than this many bandwidths from the center mode
    /// are dropped together with their keypoint votes.
    pub center_filter: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for VoteConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.02,
            min_points: 10,
            center_filter: 3.0,
            max_iters: 100,
            tolerance: 1e-6,
        }
    }
}

impl VoteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidParameter("bandwidth must be positive".into()));
        }
        if !(self.center_filter > 0.0) {
            return Err(Error::InvalidParameter("center filter must be positive".into()));
        }
        Ok(())
    }
}

/// Votes of one class, one list per keypoint slot plus the center votes.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteSet {
    pub class_id: u32,
    /// Rows of the scene points that cast the votes.
    pub casters: Vec<usize>,
    /// `keypoints[j][i]` is the vote of caster `i` for keypoint `j`.
    pub keypoints: Vec<Vec<[f64; 3]>>,
    pub centers: Vec<[f64; 3]>,
}

impl VoteSet {
    /// Collects the votes of the points labelled `class_id`.
    pub fn collect(points: &[[f64; 3]], outputs: &HeadOutputs, labels: &[usize], class_id: u32, num_keypoints: usize) -> Result<Self> {
        if points.len() != outputs.len() || labels.len() != points.len() {
            return Err(Error::DimensionMismatch("points, outputs and labels must align".into()));
        }
        if outputs.keypoint_offsets.ncols() != 3 * num_keypoints {
            return Err(Error::DimensionMismatch("keypoint offset columns".into()));
        }
        let casters: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == class_id as usize).collect();
        let add = |p: [f64; 3], o: [f64; 3]| [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
        let keypoints = (0..num_keypoints)
            .map(|j| casters.iter().map(|&i| add(points[i], outputs.keypoint_offset(i, j))).collect())
            .collect();
        let centers = casters.iter().map(|&i| add(points[i], outputs.center_offset(i))).collect();
        Ok(Self {
            class_id,
            casters,
            keypoints,
            centers,
        })
    }

    pub fn len(&self) -> usize {
        self.casters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.casters.is_empty()
    }

    /// Keeps only the casters at positions `keep`.
    pub fn retain(&self, keep: &[usize]) -> Self {
        Self {
            class_id: self.class_id,
            casters: keep.iter().map(|&k| self.casters[k]).collect(),
            keypoints: self.keypoints.iter().map(|v| keep.iter().map(|&k| v[k]).collect()).collect(),
            centers: keep.iter().map(|&k| self.centers[k]).collect(),
        }
    }
}

/// Index of the vote with the highest Gaussian kernel density over the
/// votes themselves (lowest index on ties).
pub fn densest_vote(votes: &[[f64; 3]], bandwidth: f64) -> Result<usize> {
    if votes.is_empty() {
        return Err(Error::EmptyInput("votes"));
    }
    let inv = -0.5 / (bandwidth * bandwidth);
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, a) in votes.iter().enumerate() {
        let d: f64 = votes.iter().map(|b| (dist2(a, b) * inv).exp()).sum();
        if d > best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

/// Gaussian mean shift started from the densest vote. Stops when the shift
/// drops below `tolerance` or after `max_iters` updates.
pub fn mean_shift_with(votes: &[[f64; 3]], bandwidth: f64, max_iters: usize, tolerance: f64) -> Result<[f64; 3]> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter("bandwidth must be positive".into()));
    }
    let mut x = votes[densest_vote(votes, bandwidth)?];
    let inv = -0.5 / (bandwidth * bandwidth);
    for _ in 0..max_iters {
        let mut num = [0.0; 3];
        let mut den = 0.0;
        for v in votes {
            let w = (dist2(&x, v) * inv).exp();
            den += w;
            for a in 0..3 {
                num[a] += w * (v[a] - x[a]);
            }
        }
        let step = [num[0] / den, num[1] / den, num[2] / den];
        let shift = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
        for a in 0..3 {
            x[a] += step[a];
        }
        if shift < tolerance {
            break;
        }
    }
    Ok(x)
}

/// Mode of the largest vote cluster with the default iteration limits.
pub fn mean_shift(votes: &[[f64; 3]], bandwidth: f64) -> Result<[f64; 3]> {
    let d = VoteConfig::default();
    mean_shift_with(votes, bandwidth, d.max_iters, d.tolerance)
}

/// Rigid transform `(R, t)` minimizing `Σ ‖detected_i − (R model_i + t)‖²`.
pub fn least_squares_fit(detected: &[[f64; 3]], model: &[[f64; 3]]) -> Result<Pose> {
    if detected.len() != model.len() {
        return Err(Error::DimensionMismatch(format!("{} detected vs {} model points", detected.len(), model.len())));
    }
    if model.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            available: model.len(),
        });
    }
    let mc = v3(centroid(model));
    let dc = v3(centroid(detected));
    let mut spread = Matrix3::zeros();
    let mut h = Matrix3::zeros();
    for (m, d) in model.iter().zip(detected) {
        let a = v3(*m) - mc;
        spread += a * a.transpose();
        h += a * (v3(*d) - dc).transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let mut ev: Vec<f64> = sv.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::RankDeficient("model keypoints are collinear"));
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        let smallest = (0..3).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap();
        let mut flip = Matrix3::identity();
        flip[(smallest, smallest)] = -1.0;
        r = v * flip * u.transpose();
    }
    Ok(Pose {
        rotation: r,
        translation: dc - r * mc,
    })
}

/// Root-mean-square distance between `detected` and the posed model.
pub fn fit_residual(pose: &Pose, detected: &[[f64; 3]], model: &[[f64; 3]]) -> f64 {
    let s: f64 = detected.iter().zip(model).map(|(d, m)| dist2(d, &pose.apply_arr(*m))).sum();
    (s / detected.len().max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub class_id: u32,
    #[serde(flatten)]
    pub pose: Pose,
    /// Voted keypoints followed by the voted center.
    #[serde(default)]
    pub fitted_keypoints: Vec<[f64; 3]>,
    /// Casters surviving the center filter.
    #[serde(default)]
    pub inlier_count: usize,
    /// RMS fit residual (meters).
    pub residual: f64,
}

/// Votes, clusters and fits one class.
pub fn estimate_class(votes: &VoteSet, model: &KeypointModel, cfg: &VoteConfig) -> Result<PoseEstimate> {
    cfg.validate()?;
    if votes.len() < cfg.min_points.max(1) {
        return Err(Error::NotDetected {
            class_id: votes.class_id,
            points: votes.len(),
        });
    }
    if votes.keypoints.len() != model.keypoints.len() {
        return Err(Error::DimensionMismatch("keypoint slots".into()));
    }
    let ms = |v: &[[f64; 3]]| mean_shift_with(v, cfg.bandwidth, cfg.max_iters, cfg.tolerance);
    let center = ms(&votes.centers)?;
    let radius2 = (cfg.center_filter * cfg.bandwidth).powi(2);
    let keep: Vec<usize> = (0..votes.len()).filter(|&i| dist2(&votes.centers[i], &center) <= radius2).collect();
    // Votes spread far wider than the bandwidth can leave nothing inside.
    let kept = if keep.is_empty() { votes.clone() } else { votes.retain(&keep) };
    let mut detected = kept.keypoints.iter().map(|v| ms(v)).collect::<Result<Vec<_>>>()?;
    detected.push(center);
    let mut reference = model.keypoints.clone();
    reference.push(model.center);
    let pose = least_squares_fit(&detected, &reference)?;
    Ok(PoseEstimate {
        class_id: votes.class_id,
        residual: fit_residual(&pose, &detected, &reference),
        pose,
        fitted_keypoints: detected,
        inlier_count: kept.len(),
    })
}

/// Estimates every class in `models` from the head outputs of one scene.
/// Each class succeeds or fails on its own; results are ordered by class.
pub fn estimate_from_outputs(points: &[[f64; 3]], outputs: &HeadOutputs, models: &[KeypointModel], cfg: &VoteConfig) -> Vec<(u32, Result<PoseEstimate>)> {
    let labels = outputs.labels();
    let mut models: Vec<&KeypointModel> = models.iter().collect();
    models.sort_by_key(|m| m.class_id);
    models
        .par_iter()
        .map(|m| {
            let r = VoteSet::collect(points, outputs, &labels, m.class_id, m.keypoints.len()).and_then(|v| estimate_class(&v, m, cfg));
            (m.class_id, r)
        })
        .collect()
}

/// Ground-truth object of a scene in the frame of the points.
#[derive(Debug, Clone, Copy)]
pub struct OracleObject<'a> {
    pub model: &'a KeypointModel,
    pub pose: &'a Pose,
}

/// Head outputs that predict the exact labels, keypoint offsets and center
/// offsets. `labels[i]` is the class of point `i` (0 for background);
/// background points get zero offsets.
pub fn oracle_outputs(points: &[[f64; 3]], labels: &[u32], objects: &[OracleObject], num_classes: usize) -> Result<HeadOutputs> {
    if points.len() != labels.len() {
        return Err(Error::DimensionMismatch("one label per point".into()));
    }
    let m = objects.first().map_or(0, |o| o.model.keypoints.len());
    if objects.iter().any(|o| o.model.keypoints.len() != m) {
        return Err(Error::DimensionMismatch("keypoint counts differ between classes".into()));
    }
    let n = points.len();
    let mut kp = Array2::zeros((n, 3 * m));
    let mut ct = Array2::zeros((n, 3));
    let mut logits = Array2::zeros((n, num_classes + 1));
    for (i, (p, &c)) in points.iter().zip(labels).enumerate() {
        if c as usize > num_classes {
            return Err(Error::InvalidParameter(format!("label {c} out of range")));
        }
        logits[(i, c as usize)] = 10.0;
        let Some(obj) = objects.iter().find(|o| o.model.class_id == c) else {
            continue;
        };
        let p = v3(*p);
        for (j, k) in obj.model.keypoints.iter().enumerate() {
            let off = obj.pose.apply(&v3(*k)) - p;
            for a in 0..3 {
                kp[(i, 3 * j + a)] = off[a];
            }
        }
        let off: Vector3<f64> = obj.pose.apply(&v3(obj.model.center)) - p;
        for a in 0..3 {
            ct[(i, a)] = off[a];
        }
    }
    Ok(HeadOutputs {
        keypoint_offsets: kp,
        center_offsets: ct,
        semantic_logits: logits,
    })
}

/// Estimates of one scene as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub scene: u64,
    pub estimates: Vec<PoseEstimate>,
    /// Classes that were searched for but not found.
    #[serde(default)]
    pub not_detected: Vec<u32>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl EstimatesFile {
    pub fn from_results(scene: u64, results: Vec<(u32, Result<PoseEstimate>)>, meta: serde_json::Value) -> Self {
        let mut estimates = Vec::new();
        let mut not_detected = Vec::new();
        for (c, r) in results {
            match r {
                Ok(e) => estimates.push(e),
                Err(_) => not_detected.push(c),
            }
        }
        Self {
            scene,
            estimates,
            not_detected,
            meta,
        }
    }

    pub fn get(&self, class_id: u32) -> Option<&PoseEstimate> {
        self.estimates.iter().find(|e| e.class_id == class_id)
    }
}

