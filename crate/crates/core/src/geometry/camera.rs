use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates;
/// the camera looks along +z with x right and y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Continuous pixel coordinates of a camera-frame point, `None` behind
    /// the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 0.0 {
            return None;
        }
        Some((
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ))
    }

    /// Camera-frame point at depth `d` along the ray through `(u, v)`.
    pub fn backproject(&self, u: f64, v: f64, d: f64) -> [f64; 3] {
        [(u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d]
    }

    /// Unnormalized ray direction with unit z through `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }

    /// Same camera with the image downsampled by an integer `stride`,
    /// sampling the original pixel `(stride * i + stride / 2)`.
    pub fn downsampled(&self, stride: usize) -> CameraIntrinsics {
        let off = (stride / 2) as f64;
        let s = stride as f64;
        CameraIntrinsics {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: (self.cx - off) / s,
            cy: (self.cy - off) / s,
            width: self.width.div_ceil(stride),
            height: self.height.div_ceil(stride),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(160.0, 150.0, 79.5, 59.5, 160, 120).unwrap()
    }

    #[test]
    fn principal_point_backprojects_on_axis() {
        let k = k();
        assert_eq!(k.backproject(k.cx, k.cy, 0.8), [0.0, 0.0, 0.8]);
    }

    #[test]
    fn pinhole_offset_by_focal_length() {
        let k = k();
        let d = 0.7;
        let p = k.backproject(k.cx + k.fx, k.cy, d);
        assert!((p[0] - d).abs() < 1e-15 && p[1] == 0.0 && p[2] == d);
    }

    #[test]
    fn project_inverts_backproject() {
        let k = k();
        for (u, v) in [(0.0, 0.0), (12.0, 100.0), (159.0, 119.0)] {
            let (pu, pv) = k.project(k.backproject(u, v, 1.3)).unwrap();
            assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }
        assert!(k.project([0.0, 0.0, -1.0]).is_none());
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn downsampled_camera_matches_strided_pixels() {
        let k = k();
        let d = k.downsampled(4);
        assert_eq!((d.width, d.height), (40, 30));
        // pixel (i, j) of the small image is pixel (4i+2, 4j+2) of the full one
        let full = k.backproject(4.0 * 3.0 + 2.0, 4.0 * 7.0 + 2.0, 1.0);
        let small = d.backproject(3.0, 7.0, 1.0);
        for a in 0..3 {
            assert!((full[a] - small[a]).abs() < 1e-12);
        }
    }
}
