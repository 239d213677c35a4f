//! Hand-crafted network inputs: the gravity-aligned working frame, sampled
//! point features, downsampled pixel features with their XYZ maps, and the
//! nearest-neighbor wiring consumed by the fusion block.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{pixel_neighbors, point_neighbors, PixelFeatureMap, PixelRef, PointFeatureMap, ViewFeatures};
use crate::geometry::{arr, relative_to_first, v3, Pose, ViewFrame};
use crate::knn::GridIndex;
use crate::rng;

/// Number of columns of the per-point features.
pub const POINT_DIM: usize = 38;
/// Number of columns of the per-pixel features.
pub const PIXEL_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Points sampled per scene (`N_p`).
    pub num_points: usize,
    /// Downsampling stride of the pixel feature maps.
    pub stride: usize,
    /// Points farther than this from the vertical axis through the working
    /// frame origin are discarded (meters).
    pub workspace_radius: f64,
    /// Points at or below this height above the table are discarded.
    pub min_height: f64,
    /// Voxel edge used to thin overlapping views before sampling.
    pub voxel: f64,
    /// Radii of the geometric context statistics.
    pub context_radii: [f64; 2],
    /// Radius of the color-gated context statistics.
    pub color_radius: f64,
    /// Chromaticity distance below which two points count as same-colored.
    pub color_gate: f64,
    pub normal_neighbors: usize,
    pub k_p: usize,
    pub k_i: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            num_points: 384,
            stride: 4,
            workspace_radius: 0.32,
            min_height: 0.004,
            voxel: 0.004,
            context_radii: [0.03, 0.07],
            color_radius: 0.08,
            color_gate: 0.06,
            normal_neighbors: 10,
            k_p: 3,
            k_i: 3,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.num_points < 16 {
            return bad("num_points must be at least 16");
        }
        if self.stride == 0 {
            return bad("stride must be positive");
        }
        if !(self.voxel > 0.0 && self.workspace_radius > 0.0) {
            return bad("voxel and workspace radius must be positive");
        }
        if self.k_p == 0 || self.k_i == 0 || self.normal_neighbors < 3 {
            return bad("neighbor counts too small");
        }
        Ok(())
    }
}

/// Pose taking the first camera's frame into the working frame: the world
/// frame of the annotated first camera, turned about the vertical so that
/// the camera looks along +x.
pub fn working_frame(first_camera: &Pose) -> Pose {
    let fwd = first_camera.rotation * Vector3::z();
    let yaw = fwd.y.atan2(fwd.x);
    Pose::from_rotation(crate::geometry::axis_angle(&Vector3::z(), -yaw)).compose(first_camera)
}

/// Everything the network consumes for one scene.
#[derive(Debug, Clone)]
pub struct SceneInput {
    /// First camera frame → working frame.
    pub frame: Pose,
    /// Sampled points in the working frame.
    pub points: Vec<[f64; 3]>,
    /// Full-resolution source `(view, pixel)` of each sampled point.
    pub source: Vec<(u32, u32)>,
    pub point_features: PointFeatureMap,
    pub pixels: PixelFeatureMap,
    /// `K_i` nearest pixels of each point.
    pub pixel_neighbors: Vec<Vec<PixelRef>>,
    /// The nearest pixel of each point; point-to-pixel fusion runs there.
    pub targets: Vec<PixelRef>,
    /// `K_p` nearest points of each target pixel.
    pub point_neighbors: Vec<Vec<usize>>,
}

impl SceneInput {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

struct Candidate {
    p: [f64; 3],
    rgb: [f64; 3],
    view: u32,
    pixel: u32,
}

fn chroma(c: [f64; 3]) -> [f64; 3] {
    let s = (c[0] + c[1] + c[2]).max(1e-6);
    [c[0] / s, c[1] / s, c[2] / s]
}

fn in_workspace(p: &[f64; 3], cfg: &FeatureConfig) -> bool {
    p[2] > cfg.min_height && p[0] * p[0] + p[1] * p[1] <= cfg.workspace_radius * cfg.workspace_radius
}

/// Mean offset over `r` and the upper triangle of the covariance over `r²`.
fn context_stats(p: &[f64; 3], nb: &[[f64; 3]], r: f64, out: &mut Vec<f64>) {
    if nb.is_empty() {
        out.extend([0.0; 9]);
        return;
    }
    let n = nb.len() as f64;
    let mut mean = [0.0; 3];
    for q in nb {
        for a in 0..3 {
            mean[a] += q[a] / n;
        }
    }
    let mut cov = [0.0; 6];
    for q in nb {
        let d = [q[0] - mean[0], q[1] - mean[1], q[2] - mean[2]];
        for (k, (a, b)) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)].into_iter().enumerate() {
            cov[k] += d[a] * d[b] / n;
        }
    }
    out.extend((0..3).map(|a| (mean[a] - p[a]) / r));
    out.extend(cov.iter().map(|c| c / (r * r)));
}

/// Unit normal of the local plane through `nb`, facing `eye`.
fn normal(nb: &[[f64; 3]], eye: &Vector3<f64>, p: &[f64; 3]) -> [f64; 3] {
    let n = nb.len() as f64;
    let c = nb.iter().fold(Vector3::zeros(), |acc, q| acc + v3(*q)) / n;
    let mut cov = Matrix3::zeros();
    for q in nb {
        let d = v3(*q) - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let i = (0..3).min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap();
    let mut nrm: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
    if nrm.dot(&(eye - v3(*p))) < 0.0 {
        nrm = -nrm;
    }
    arr(&nrm)
}

/// Builds the network input of a scene from its views. Sampling is seeded
/// by `(seed, scene_id)`.
pub fn prepare_input(views: &[ViewFrame], cfg: &FeatureConfig, seed: u64, scene_id: u64) -> Result<SceneInput> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(Error::NoViews);
    }
    let frame = working_frame(&views[0].camera_pose);
    let to_work: Vec<Pose> = (0..views.len()).map(|k| frame.compose(&relative_to_first(views, k))).collect();
    let eyes: Vec<Vector3<f64>> = to_work.iter().map(|p| p.translation).collect();

    // Full-resolution candidates, thinned to one per voxel (lowest index).
    let mut cands = Vec::new();
    for (k, view) in views.iter().enumerate() {
        view.validate()?;
        let intr = &view.intrinsics;
        for (idx, &d) in view.depth.iter().enumerate() {
            if !(d > 0.0) {
                continue;
            }
            let (u, v) = ((idx % intr.width) as f64, (idx / intr.width) as f64);
            let p = to_work[k].apply_arr(intr.backproject(u, v, d));
            if in_workspace(&p, cfg) {
                cands.push(Candidate {
                    p,
                    rgb: view.rgb[idx],
                    view: k as u32,
                    pixel: idx as u32,
                });
            }
        }
    }
    let mut first: HashMap<[i64; 3], usize> = HashMap::new();
    for (i, c) in cands.iter().enumerate() {
        let key = [0, 1, 2].map(|a| (c.p[a] / cfg.voxel).floor() as i64);
        first.entry(key).or_insert(i);
    }
    let mut kept: Vec<usize> = first.into_values().collect();
    kept.sort_unstable();
    if kept.len() < cfg.k_p.max(cfg.normal_neighbors) {
        return Err(Error::TooFewSamples {
            needed: cfg.k_p.max(cfg.normal_neighbors),
            available: kept.len(),
        });
    }
    let cloud: Vec<[f64; 3]> = kept.iter().map(|&i| cands[i].p).collect();
    let chromas: Vec<[f64; 3]> = kept.iter().map(|&i| chroma(cands[i].rgb)).collect();

    let mut rng = rng::stream(seed, "features", scene_id);
    let mut chosen: Vec<usize> = if cloud.len() <= cfg.num_points {
        (0..cloud.len()).collect()
    } else {
        sample(&mut rng, cloud.len(), cfg.num_points).into_vec()
    };
    chosen.sort_unstable();

    let index = GridIndex::new(&cloud);
    let max_r = cfg.context_radii[0].max(cfg.context_radii[1]).max(cfg.color_radius);
    let mut feats = Vec::with_capacity(chosen.len() * POINT_DIM);
    for &i in &chosen {
        let p = cloud[i];
        let c = &cands[kept[i]];
        let near: Vec<[f64; 3]> = index.knn(&p, cfg.normal_neighbors).into_iter().map(|j| cloud[j]).collect();
        let ball = index.within_radius(&p, max_r);
        feats.extend(p.iter().map(|x| x / 0.2));
        feats.extend(normal(&near, &eyes[c.view as usize], &p));
        feats.push(p[2] / 0.1);
        for r in cfg.context_radii {
            let nb: Vec<[f64; 3]> = ball.iter().filter(|&&j| crate::geometry::dist2(&cloud[j], &p) <= r * r).map(|&j| cloud[j]).collect();
            context_stats(&p, &nb, r, &mut feats);
        }
        let r = cfg.color_radius;
        let all: Vec<usize> = ball.iter().copied().filter(|&j| crate::geometry::dist2(&cloud[j], &p) <= r * r).collect();
        let same: Vec<[f64; 3]> = all
            .iter()
            .filter(|&&j| crate::geometry::dist(&chromas[j], &chromas[i]) < cfg.color_gate)
            .map(|&j| cloud[j])
            .collect();
        context_stats(&p, &same, r, &mut feats);
        feats.push(same.len() as f64 / all.len().max(1) as f64);
        feats.extend(c.rgb.iter().map(|x| x - 0.5));
    }
    let points: Vec<[f64; 3]> = chosen.iter().map(|&i| cloud[i]).collect();
    let source = chosen.iter().map(|&i| (cands[kept[i]].view, cands[kept[i]].pixel)).collect();
    let point_features = PointFeatureMap {
        features: ndarray::Array2::from_shape_vec((points.len(), POINT_DIM), feats).map_err(|e| Error::DimensionMismatch(e.to_string()))?,
        coords: points.clone(),
    };

    let pixels = PixelFeatureMap {
        views: views.iter().zip(&to_work).map(|(v, t)| pixel_features(v, t, cfg)).collect(),
    };
    let pixel_nb = point_neighbors(&pixels, &point_features, cfg.k_i)?;
    // The first of the K_i neighbors is the nearest pixel.
    let targets: Vec<PixelRef> = pixel_nb.iter().map(|nb| nb[0]).collect();
    let point_nb = pixel_neighbors(&pixels, &point_features, &targets, cfg.k_p)?;
    Ok(SceneInput {
        frame,
        points,
        source,
        point_features,
        pixels,
        pixel_neighbors: pixel_nb,
        targets,
        point_neighbors: point_nb,
    })
}

/// Downsampled `(rgb - 0.5, u, v)` features and the XYZ map in the working
/// frame; pixels outside the workspace are invalid.
fn pixel_features(view: &ViewFrame, to_work: &Pose, cfg: &FeatureConfig) -> ViewFeatures {
    let k = &view.intrinsics;
    let s = cfg.stride;
    let (w, h) = (k.width / s, k.height / s);
    let mut features = ndarray::Array2::zeros((w * h, PIXEL_DIM));
    let mut xyz = vec![[f64::NAN; 3]; w * h];
    for j in 0..h {
        for i in 0..w {
            let (u, v) = (i * s + s / 2, j * s + s / 2);
            let idx = v * k.width + u;
            let q = j * w + i;
            let rgb = view.rgb[idx];
            let mut row = features.row_mut(q);
            for a in 0..3 {
                row[a] = rgb[a] - 0.5;
            }
            row[3] = (i as f64 + 0.5) / w as f64 - 0.5;
            row[4] = (j as f64 + 0.5) / h as f64 - 0.5;
            let d = view.depth[idx];
            if d > 0.0 {
                let p = to_work.apply_arr(k.backproject(u as f64, v as f64, d));
                if in_workspace(&p, cfg) {
                    xyz[q] = p;
                }
            }
        }
    }
    ViewFeatures {
        width: w,
        height: h,
        features,
        xyz,
    }
}
