//! Point↔pixel feature fusion across views.
//!
//! Point-to-pixel: each pixel gathers its `K_p` nearest points, runs every
//! gathered point feature through `MLP_p`, max-pools channel-wise,
//! concatenates its own pixel feature, and applies `MLP_fp`.
//!
//! Pixel-to-point: each point gathers its `K_i` nearest pixels over all
//! views, max-pools their features first, applies `MLP_i`, concatenates its
//! own point feature, and applies `MLP_fi`.
//!
//! Neighbor search uses the per-pixel XYZ map; pixels with NaN coordinates
//! (invalid depth) take part in neither direction.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::GridIndex;
use crate::nn::{concat_cols, split_cols, Activation, Mlp, MlpCache, MlpGrads};

/// Features and XYZ coordinates of one downsampled view, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFeatures {
    pub width: usize,
    pub height: usize,
    /// `(height * width) × C_i`.
    pub features: Array2<f64>,
    /// One entry per pixel; NaN marks an invalid pixel.
    pub xyz: Vec<[f64; 3]>,
}

impl ViewFeatures {
    pub fn is_valid(&self, pixel: usize) -> bool {
        self.xyz[pixel].iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatureMap {
    pub views: Vec<ViewFeatures>,
}

/// A pixel of one view in a [`PixelFeatureMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelRef {
    pub view: u32,
    pub pixel: u32,
}

impl PixelFeatureMap {
    pub fn channels(&self) -> usize {
        self.views.first().map_or(0, |v| v.features.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::NoViews);
        }
        let c = self.channels();
        for (k, v) in self.views.iter().enumerate() {
            let n = v.width * v.height;
            if v.features.nrows() != n || v.xyz.len() != n || v.features.ncols() != c {
                return Err(Error::DimensionMismatch(format!("view {k}: feature and xyz maps disagree")));
            }
        }
        Ok(())
    }

    /// Every valid pixel, view-major then row-major.
    pub fn valid_pixels(&self) -> Vec<PixelRef> {
        let mut out = Vec::new();
        for (k, v) in self.views.iter().enumerate() {
            for p in 0..v.xyz.len() {
                if v.is_valid(p) {
                    out.push(PixelRef {
                        view: k as u32,
                        pixel: p as u32,
                    });
                }
            }
        }
        out
    }

    pub fn xyz(&self, r: PixelRef) -> [f64; 3] {
        self.views[r.view as usize].xyz[r.pixel as usize]
    }

    /// Feature rows of `refs`, stacked.
    pub fn gather(&self, refs: &[PixelRef]) -> Array2<f64> {
        let mut out = Array2::zeros((refs.len(), self.channels()));
        for (row, r) in out.outer_iter_mut().zip(refs) {
            let src = self.views[r.view as usize].features.row(r.pixel as usize);
            let mut row = row;
            row.assign(&src);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatureMap {
    /// `N_p × C_p`.
    pub features: Array2<f64>,
    pub coords: Vec<[f64; 3]>,
}

impl PointFeatureMap {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.nrows() != self.coords.len() {
            return Err(Error::DimensionMismatch("point features and coordinates disagree".into()));
        }
        if self.coords.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("point coordinates must be finite".into()));
        }
        Ok(())
    }
}

/// The four shared MLPs of the fusion block.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMlps {
    pub mlp_p: Mlp,
    pub mlp_fp: Mlp,
    pub mlp_i: Mlp,
    pub mlp_fi: Mlp,
}

impl FusionMlps {
    /// Single-layer ReLU MLPs of width `channels`.
    pub fn new<R: rand::Rng + ?Sized>(point_dim: usize, pixel_dim: usize, channels: usize, rng: &mut R) -> Result<Self> {
        let relu = Activation::Relu;
        Ok(Self {
            mlp_p: Mlp::new(&[point_dim, channels], relu, relu, rng)?,
            mlp_fp: Mlp::new(&[channels + pixel_dim, channels], relu, relu, rng)?,
            mlp_i: Mlp::new(&[pixel_dim, channels], relu, relu, rng)?,
            mlp_fi: Mlp::new(&[channels + point_dim, channels], relu, relu, rng)?,
        })
    }

    pub fn mlps(&self) -> [&Mlp; 4] {
        [&self.mlp_p, &self.mlp_fp, &self.mlp_i, &self.mlp_fi]
    }

    pub fn mlps_mut(&mut self) -> [&mut Mlp; 4] {
        [&mut self.mlp_p, &mut self.mlp_fp, &mut self.mlp_i, &mut self.mlp_fi]
    }
}

/// `K_p` nearest points of each target pixel.
pub fn pixel_neighbors(pix: &PixelFeatureMap, pts: &PointFeatureMap, targets: &[PixelRef], k_p: usize) -> Result<Vec<Vec<usize>>> {
    if pts.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    if pts.len() < k_p || k_p == 0 {
        return Err(Error::TooFewSamples {
            needed: k_p.max(1),
            available: pts.len(),
        });
    }
    let index = GridIndex::new(&pts.coords);
    targets
        .iter()
        .map(|&r| {
            let q = pix.xyz(r);
            if q.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter(format!("pixel {r:?} has no valid coordinates")));
            }
            Ok(index.knn(&q, k_p))
        })
        .collect()
}

/// `K_i` nearest valid pixels (over all views) of each point.
pub fn point_neighbors(pix: &PixelFeatureMap, pts: &PointFeatureMap, k_i: usize) -> Result<Vec<Vec<PixelRef>>> {
    let candidates = pix.valid_pixels();
    if candidates.is_empty() {
        return Err(Error::EmptyInput("valid pixels"));
    }
    if candidates.len() < k_i || k_i == 0 {
        return Err(Error::TooFewSamples {
            needed: k_i.max(1),
            available: candidates.len(),
        });
    }
    let coords: Vec<[f64; 3]> = candidates.iter().map(|&r| pix.xyz(r)).collect();
    let index = GridIndex::new(&coords);
    Ok(pts
        .coords
        .iter()
        .map(|q| index.knn(q, k_i).into_iter().map(|i| candidates[i]).collect())
        .collect())
}

/// Channel-wise max over the rows `idx` of `x`, with the winning row per
/// channel (the first one on ties).
fn max_pool(x: ArrayView2<f64>, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let c = x.ncols();
    let mut best = vec![f64::NEG_INFINITY; c];
    let mut arg = vec![0; c];
    for &i in idx {
        for (ch, v) in x.row(i).iter().enumerate() {
            if *v > best[ch] {
                best[ch] = *v;
                arg[ch] = i;
            }
        }
    }
    (best, arg)
}

/// Recorded intermediates of [`p2pix_forward`].
#[derive(Debug, Clone)]
pub struct P2PixCache {
    mlp_p: MlpCache,
    mlp_fp: MlpCache,
    /// Winning point per (target, channel).
    argmax: Vec<Vec<usize>>,
    num_points: usize,
    channels: usize,
}

/// Batched point-to-pixel fusion for `targets` with precomputed neighbors.
pub fn p2pix_forward(
    pix: &PixelFeatureMap,
    pts: &PointFeatureMap,
    mlps: &FusionMlps,
    targets: &[PixelRef],
    neighbors: &[Vec<usize>],
) -> Result<(Array2<f64>, P2PixCache)> {
    if neighbors.len() != targets.len() {
        return Err(Error::DimensionMismatch("one neighbor list per target pixel".into()));
    }
    // MLP_p is shared per point, so running it once per point equals running
    // it on every gathered copy.
    let (g, cache_p) = mlps.mlp_p.forward_cached(pts.features.view())?;
    let c = g.ncols();
    let mut pooled = Array2::zeros((targets.len(), c));
    let mut argmax = Vec::with_capacity(targets.len());
    for (q, nb) in neighbors.iter().enumerate() {
        let (vals, arg) = max_pool(g.view(), nb);
        pooled.row_mut(q).iter_mut().zip(&vals).for_each(|(a, b)| *a = *b);
        argmax.push(arg);
    }
    let x = concat_cols(pooled.view(), pix.gather(targets).view())?;
    let (out, cache_fp) = mlps.mlp_fp.forward_cached(x.view())?;
    Ok((
        out,
        P2PixCache {
            mlp_p: cache_p,
            mlp_fp: cache_fp,
            argmax,
            num_points: pts.len(),
            channels: c,
        },
    ))
}

/// Gradients of the point-to-pixel block: `(MLP_p, MLP_fp)`.
pub fn p2pix_backward(mlps: &FusionMlps, cache: &P2PixCache, upstream: ArrayView2<f64>) -> Result<(MlpGrads, MlpGrads)> {
    let (g_fp, dx) = mlps.mlp_fp.backward(&cache.mlp_fp, upstream)?;
    let (dpooled, _) = split_cols(dx.view(), cache.channels);
    let mut dg = Array2::zeros((cache.num_points, cache.channels));
    for (q, arg) in cache.argmax.iter().enumerate() {
        for (ch, &i) in arg.iter().enumerate() {
            dg[(i, ch)] += dpooled[(q, ch)];
        }
    }
    let (g_p, _) = mlps.mlp_p.backward(&cache.mlp_p, dg.view())?;
    Ok((g_p, g_fp))
}

/// Recorded intermediates of [`pix2p_forward`].
#[derive(Debug, Clone)]
pub struct Pix2PCache {
    mlp_i: MlpCache,
    mlp_fi: MlpCache,
    channels: usize,
}

/// Batched pixel-to-point fusion with precomputed neighbors.
pub fn pix2p_forward(
    pix: &PixelFeatureMap,
    pts: &PointFeatureMap,
    mlps: &FusionMlps,
    neighbors: &[Vec<PixelRef>],
) -> Result<(Array2<f64>, Pix2PCache)> {
    if neighbors.len() != pts.len() {
        return Err(Error::DimensionMismatch("one neighbor list per point".into()));
    }
    let ci = pix.channels();
    let mut pooled = Array2::from_elem((pts.len(), ci), f64::NEG_INFINITY);
    for (mut row, nb) in pooled.outer_iter_mut().zip(neighbors) {
        for r in nb {
            let f = pix.views[r.view as usize].features.row(r.pixel as usize);
            row.iter_mut().zip(f).for_each(|(a, b)| *a = a.max(*b));
        }
    }
    let (y, cache_i) = mlps.mlp_i.forward_cached(pooled.view())?;
    let x = concat_cols(y.view(), pts.features.view())?;
    let (out, cache_fi) = mlps.mlp_fi.forward_cached(x.view())?;
    Ok((
        out,
        Pix2PCache {
            mlp_i: cache_i,
            mlp_fi: cache_fi,
            channels: y.ncols(),
        },
    ))
}

/// Gradients of the pixel-to-point block: `(MLP_i, MLP_fi)`.
pub fn pix2p_backward(mlps: &FusionMlps, cache: &Pix2PCache, upstream: ArrayView2<f64>) -> Result<(MlpGrads, MlpGrads)> {
    let (g_fi, dx) = mlps.mlp_fi.backward(&cache.mlp_fi, upstream)?;
    let (dy, _) = split_cols(dx.view(), cache.channels);
    let (g_i, _) = mlps.mlp_i.backward(&cache.mlp_i, dy.view())?;
    Ok((g_i, g_fi))
}

/// Point-to-pixel fusion over every pixel of every view. Rows of invalid
/// pixels are zero.
pub fn point_to_pixel_fuse(pix: &PixelFeatureMap, pts: &PointFeatureMap, mlps: &FusionMlps, k_p: usize) -> Result<Vec<Array2<f64>>> {
    pix.validate()?;
    pts.validate()?;
    let targets = pix.valid_pixels();
    let neighbors = pixel_neighbors(pix, pts, &targets, k_p)?;
    let (fused, _) = p2pix_forward(pix, pts, mlps, &targets, &neighbors)?;
    let c = mlps.mlp_fp.output_dim();
    let mut out: Vec<Array2<f64>> = pix.views.iter().map(|v| Array2::zeros((v.xyz.len(), c))).collect();
    for (r, row) in targets.iter().zip(fused.outer_iter()) {
        out[r.view as usize].row_mut(r.pixel as usize).assign(&row);
    }
    Ok(out)
}

/// Pixel-to-point fusion for every point.
pub fn pixel_to_point_fuse(pix: &PixelFeatureMap, pts: &PointFeatureMap, mlps: &FusionMlps, k_i: usize) -> Result<Array2<f64>> {
    pix.validate()?;
    pts.validate()?;
    let neighbors = point_neighbors(pix, pts, k_i)?;
    pix2p_forward(pix, pts, mlps, &neighbors).map(|(out, _)| out)
}
