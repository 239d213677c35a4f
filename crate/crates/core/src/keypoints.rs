//! Per-class keypoints: salience-weighted farthest point sampling on the
//! mesh surface, plus the object center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::dist2;
use crate::knn::GridIndex;
use crate::mesh::{Mesh, DEFAULT_SAMPLES, DEFAULT_SAMPLE_SEED};

pub const NUM_KEYPOINTS: usize = 8;

/// Neighborhood size for the curvature salience.
pub const SALIENCE_NEIGHBORS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointModel {
    pub class_id: u32,
    pub keypoints: Vec<[f64; 3]>,
    pub center: [f64; 3],
}

impl KeypointModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SalienceMode {
    /// Local normal variation over the nearest surface samples.
    Curvature,
    /// Plain farthest point sampling.
    Uniform,
}

impl std::str::FromStr for SalienceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curvature" => Ok(Self::Curvature),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::InvalidParameter(format!("unknown salience mode {other:?}"))),
        }
    }
}

/// Greedy farthest point sampling weighted by `salience`.
///
/// The first pick is the most salient point; each following pick maximizes
/// `salience * (distance to the nearest chosen point)`. Ties go to the lowest
/// index. Returns the chosen indices in pick order.
pub fn farthest_point_sample(samples: &[[f64; 3]], salience: &[f64], m: usize) -> Result<Vec<usize>> {
    if samples.len() < m {
        return Err(Error::TooFewSamples {
            needed: m,
            available: samples.len(),
        });
    }
    if salience.len() != samples.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} salience values for {} samples",
            salience.len(),
            samples.len()
        )));
    }
    if salience.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidParameter("salience must be finite and non-negative".into()));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let argmax = |score: &dyn Fn(usize) -> f64| {
        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..samples.len() {
            let s = score(i);
            if s > best.0 {
                best = (s, i);
            }
        }
        best.1
    };
    let first = argmax(&|i| salience[i]);
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = samples.iter().map(|p| dist2(p, &samples[first]).sqrt()).collect();
    while chosen.len() < m {
        let next = argmax(&|i| salience[i] * nearest[i]);
        chosen.push(next);
        for (d, p) in nearest.iter_mut().zip(samples) {
            *d = d.min(dist2(p, &samples[next]).sqrt());
        }
    }
    Ok(chosen)
}

/// Curvature salience of each surface sample: the mean of `1 - |n_i · n_j|`
/// over its `k` nearest samples `j`, with `n` the normal of the source face.
pub fn curvature_salience(mesh: &Mesh, samples: &[[f64; 3]], sample_faces: &[usize], k: usize) -> Result<Vec<f64>> {
    if samples.len() < k {
        return Err(Error::TooFewSamples {
            needed: k,
            available: samples.len(),
        });
    }
    let normals = mesh.face_normals();
    let index = GridIndex::new(samples);
    Ok(samples
        .iter()
        .zip(sample_faces)
        .map(|(p, &f)| {
            let n = normals[f];
            let neigh = index.knn(p, k);
            neigh
                .iter()
                .map(|&j| (1.0 - n.dot(&normals[sample_faces[j]]).abs()).max(0.0))
                .sum::<f64>()
                / k as f64
        })
        .collect())
}

/// Centroid of the surface under uniform area density.
pub fn object_center(mesh: &Mesh) -> [f64; 3] {
    mesh.surface_centroid()
}

/// Selects [`NUM_KEYPOINTS`] keypoints on the mesh's surface samples.
pub fn select_keypoints(mesh: &Mesh, class_id: u32, mode: SalienceMode) -> Result<KeypointModel> {
    let (samples, faces) = mesh.sample_surface_with_faces(DEFAULT_SAMPLES, DEFAULT_SAMPLE_SEED);
    let salience = match mode {
        SalienceMode::Uniform => vec![1.0; samples.len()],
        SalienceMode::Curvature => {
            let s = curvature_salience(mesh, &samples, &faces, SALIENCE_NEIGHBORS)?;
            // a surface without any normal variation has no salient region
            if s.iter().all(|v| *v == 0.0) {
                vec![1.0; samples.len()]
            } else {
                s
            }
        }
    };
    let picks = farthest_point_sample(&samples, &salience, NUM_KEYPOINTS)?;
    Ok(KeypointModel {
        class_id,
        keypoints: picks.iter().map(|&i| samples[i]).collect(),
        center: object_center(mesh),
    })
}
