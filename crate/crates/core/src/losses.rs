//! Training losses with analytic gradients.
//!
//! The keypoint loss takes, per object instance, the minimum over the
//! object's symmetry set of the summed L2 offset error, so a prediction that
//! matches any symmetric variant of the targets costs nothing.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{v3, Pose};
use crate::symmetry::SymmetrySet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 1.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        if [lambda1, lambda2, lambda3].iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidParameter("loss weights must be finite and >= 0".into()));
        }
        Ok(Self { lambda1, lambda2, lambda3 })
    }
}

/// Ground truth for one object instance in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTargets {
    pub class_id: u32,
    /// Rows of the scene's point set belonging to the instance.
    pub indices: Vec<usize>,
    /// Per symmetry `S`: `N_I × (M·3)` offsets from each point to the
    /// keypoints rotated by `S`. Variant 0 is the unrotated target set.
    pub keypoint_variants: Vec<Array2<f64>>,
    /// `N_I × 3` offsets to the object center.
    pub center_offsets: Array2<f64>,
}

impl InstanceTargets {
    /// Builds the targets of an instance whose model (`keypoints`, `center`
    /// in the object frame) sits at `pose` in the frame of `points`.
    pub fn new(
        class_id: u32,
        points: &[[f64; 3]],
        indices: Vec<usize>,
        keypoints: &[[f64; 3]],
        center: [f64; 3],
        pose: &Pose,
        sym: &SymmetrySet,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInstance);
        }
        let m = keypoints.len();
        let c = v3(center);
        let sym_center = v3(sym.center);
        let variants = sym
            .transforms
            .iter()
            .map(|s| {
                let kps: Vec<_> = keypoints
                    .iter()
                    .map(|k| pose.apply(&(s * (v3(*k) - sym_center) + sym_center)))
                    .collect();
                Array2::from_shape_fn((indices.len(), 3 * m), |(i, col)| {
                    kps[col / 3][col % 3] - points[indices[i]][col % 3]
                })
            })
            .collect();
        let c_cam = pose.apply(&c);
        let center_offsets = Array2::from_shape_fn((indices.len(), 3), |(i, a)| c_cam[a] - points[indices[i]][a]);
        Ok(Self {
            class_id,
            indices,
            keypoint_variants: variants,
            center_offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The same instance with only the identity variant.
    pub fn without_symmetry(&self) -> Self {
        Self {
            keypoint_variants: self.keypoint_variants[..1].to_vec(),
            ..self.clone()
        }
    }
}

fn check_rows(pred: &ArrayView2<f64>, inst: &InstanceTargets) -> Result<()> {
    if inst.indices.is_empty() {
        return Err(Error::EmptyInstance);
    }
    if let Some(&bad) = inst.indices.iter().find(|&&i| i >= pred.nrows()) {
        return Err(Error::DimensionMismatch(format!("instance index {bad} out of range")));
    }
    Ok(())
}

/// Summed L2 offset error of the instance rows against one target variant.
fn variant_error(pred: &ArrayView2<f64>, inst: &InstanceTargets, target: &Array2<f64>) -> f64 {
    let m = target.ncols() / 3;
    let mut total = 0.0;
    for (r, &i) in inst.indices.iter().enumerate() {
        for j in 0..m {
            let mut d2 = 0.0;
            for a in 0..3 {
                let d = pred[(i, 3 * j + a)] - target[(r, 3 * j + a)];
                d2 += d * d;
            }
            total += d2.sqrt();
        }
    }
    total
}

/// Symmetry-aware keypoint loss of one instance.
///
/// `pred` holds the keypoint offsets of every scene point (`N × M·3`).
/// Returns the loss and the index of the minimizing symmetry (lowest on
/// ties). When `grad` is given, the gradient of the loss with respect to
/// `pred` (through the minimizing branch) is added to it.
pub fn symmetry_keypoint_loss(
    pred: ArrayView2<f64>,
    inst: &InstanceTargets,
    grad: Option<&mut Array2<f64>>,
) -> Result<(f64, usize)> {
    check_rows(&pred, inst)?;
    if inst.keypoint_variants.is_empty() {
        return Err(Error::InvalidParameter("instance has no target variants".into()));
    }
    for t in &inst.keypoint_variants {
        if t.ncols() != pred.ncols() || t.nrows() != inst.len() {
            return Err(Error::DimensionMismatch("keypoint target shape".into()));
        }
    }
    let mut best = (f64::INFINITY, 0);
    for (k, t) in inst.keypoint_variants.iter().enumerate() {
        let e = variant_error(&pred, inst, t);
        if e < best.0 {
            best = (e, k);
        }
    }
    let n = inst.len() as f64;
    if let Some(g) = grad {
        let target = &inst.keypoint_variants[best.1];
        let m = target.ncols() / 3;
        for (r, &i) in inst.indices.iter().enumerate() {
            for j in 0..m {
                let d: Vec<f64> = (0..3).map(|a| pred[(i, 3 * j + a)] - target[(r, 3 * j + a)]).collect();
                let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if norm > 0.0 {
                    for a in 0..3 {
                        g[(i, 3 * j + a)] += d[a] / (norm * n);
                    }
                }
            }
        }
    }
    Ok((best.0 / n, best.1))
}

/// Mean absolute center-offset error over the instance rows and the three
/// coordinates. Adds `d loss / d pred` to `grad` when given.
pub fn center_loss(pred: ArrayView2<f64>, inst: &InstanceTargets, grad: Option<&mut Array2<f64>>) -> Result<f64> {
    check_rows(&pred, inst)?;
    if pred.ncols() != 3 {
        return Err(Error::DimensionMismatch("center offsets must have 3 columns".into()));
    }
    let n = 3.0 * inst.len() as f64;
    let mut total = 0.0;
    let mut g = grad;
    for (r, &i) in inst.indices.iter().enumerate() {
        for a in 0..3 {
            let d = pred[(i, a)] - inst.center_offsets[(r, a)];
            total += d.abs();
            if let Some(g) = g.as_deref_mut() {
                g[(i, a)] += d.signum() * f64::from(d != 0.0) / n;
            }
        }
    }
    Ok(total / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 0.25 }
    }
}

/// Mean over points of `-α (1 - p_t)^γ log p_t` with `p` the softmax of the
/// logits. Adds the gradient with respect to the logits to `grad` when given.
pub fn focal_loss(logits: ArrayView2<f64>, labels: &[usize], params: FocalParams, grad: Option<&mut Array2<f64>>) -> Result<f64> {
    if labels.len() != logits.nrows() {
        return Err(Error::DimensionMismatch("one label per point".into()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("labels"));
    }
    let k = logits.ncols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidParameter(format!("label {bad} out of range")));
    }
    let FocalParams { gamma, alpha } = params;
    let n = labels.len() as f64;
    let mut total = 0.0;
    let mut g = grad;
    for (i, (row, &y)) in logits.outer_iter().zip(labels).enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_pt = row[y] - max - sum.ln();
        let pt = log_pt.exp();
        let q = 1.0 - pt;
        total += -alpha * q.powf(gamma) * log_pt;
        if let Some(g) = g.as_deref_mut() {
            // dL/dz_c = -α [(1-p_t)^γ - γ p_t (1-p_t)^(γ-1) log p_t] (δ_cy - p_c)
            let tail = if gamma != 0.0 && q > 0.0 {
                gamma * pt * q.powf(gamma - 1.0) * log_pt
            } else {
                0.0
            };
            let coef = -alpha * (q.powf(gamma) - tail) / n;
            for (c, z) in row.iter().enumerate() {
                let p = (z - max).exp() / sum;
                let delta = if c == y { 1.0 } else { 0.0 };
                g[(i, c)] += coef * (delta - p);
            }
        }
    }
    Ok(total / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub keypoint: f64,
    pub semantic: f64,
    pub center: f64,
}

/// `λ1·L_kp + λ2·L_semantic + λ3·L_cp`.
pub fn multitask_loss(c: LossComponents, w: LossWeights) -> f64 {
    w.lambda1 * c.keypoint + w.lambda2 * c.semantic + w.lambda3 * c.center
}
