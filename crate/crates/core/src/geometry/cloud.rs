use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, Pose};
use crate::error::{Error, Result};

/// One synchronized RGB-D frame.
///
/// Images are stored row-major; `rgb` channels lie in `[0, 1]` and `depth` is
/// in meters with `0` marking an invalid pixel. `camera_pose` maps camera
/// coordinates into the world frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewFrame {
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub intrinsics: CameraIntrinsics,
    pub camera_pose: Pose,
}

impl ViewFrame {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let n = self.intrinsics.pixel_count();
        if self.depth.len() != n || self.rgb.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "view images must have {n} pixels (depth {}, rgb {})",
                self.depth.len(),
                self.rgb.len()
            )));
        }
        if self.depth.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidParameter(
                "depth values must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }
}

/// Point cloud with optional per-point color and provenance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub colors: Option<Vec<[f64; 3]>>,
    /// Index of the view each point was back-projected from.
    pub source_view: Option<Vec<u32>>,
    /// Row-major pixel index within the source view.
    pub source_pixel: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<[f64; 3]>) -> Self {
        Self {
            points,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply_arr(*p)).collect(),
            ..self.clone()
        }
    }

    /// Keeps the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        fn pick<T: Copy>(v: &[T], indices: &[usize]) -> Vec<T> {
            indices.iter().map(|&i| v[i]).collect()
        }
        PointCloud {
            points: pick(&self.points, indices),
            colors: self.colors.as_deref().map(|v| pick(v, indices)),
            source_view: self.source_view.as_deref().map(|v| pick(v, indices)),
            source_pixel: self.source_pixel.as_deref().map(|v| pick(v, indices)),
        }
    }
}

/// Back-projects every valid pixel into the camera frame, in row-major order.
pub fn depth_to_cloud(view: &ViewFrame) -> Result<PointCloud> {
    view.validate()?;
    let k = &view.intrinsics;
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut pixels = Vec::new();
    for v in 0..k.height {
        for u in 0..k.width {
            let idx = v * k.width + u;
            let d = view.depth[idx];
            if d > 0.0 {
                points.push(k.backproject(u as f64, v as f64, d));
                colors.push(view.rgb[idx]);
                pixels.push(idx as u32);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = points.len();
    Ok(PointCloud {
        points,
        colors: Some(colors),
        source_view: Some(vec![0; n]),
        source_pixel: Some(pixels),
    })
}

/// Pose taking view `k`'s camera frame into the first view's camera frame.
pub fn relative_to_first(views: &[ViewFrame], k: usize) -> Pose {
    views[0].camera_pose.invert().compose(&views[k].camera_pose)
}

/// Merges all views into one cloud expressed in the first camera's frame.
///
/// Views whose depth is entirely invalid contribute nothing; the merge only
/// fails when every view is empty.
pub fn merge_views(views: &[ViewFrame]) -> Result<PointCloud> {
    if views.is_empty() {
        return Err(Error::NoViews);
    }
    let mut merged = PointCloud {
        colors: Some(Vec::new()),
        source_view: Some(Vec::new()),
        source_pixel: Some(Vec::new()),
        ..Default::default()
    };
    for (k, view) in views.iter().enumerate() {
        let cloud = match depth_to_cloud(view) {
            Ok(c) => c,
            Err(Error::EmptyCloud) => continue,
            Err(e) => return Err(e),
        };
        if k == 0 {
            merged.points.extend_from_slice(&cloud.points);
        } else {
            let rel = relative_to_first(views, k);
            merged
                .points
                .extend(cloud.points.iter().map(|p| rel.apply_arr(*p)));
        }
        merged
            .colors
            .as_mut()
            .unwrap()
            .extend(cloud.colors.unwrap());
        merged
            .source_view
            .as_mut()
            .unwrap()
            .extend(std::iter::repeat(k as u32).take(cloud.points.len()));
        merged
            .source_pixel
            .as_mut()
            .unwrap()
            .extend(cloud.source_pixel.unwrap());
    }
    if merged.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(merged)
}
