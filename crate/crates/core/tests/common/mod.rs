//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::Rng;
use sympose::fusion::{FusionMlps, PixelFeatureMap, PointFeatureMap, ViewFeatures};
use sympose::nn::Mlp;

pub fn d3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// k nearest by full sort of (distance, index).
pub fn brute_knn(q: &[f64; 3], targets: &[[f64; 3]], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = targets
        .iter()
        .enumerate()
        .filter(|(_, t)| t.iter().all(|c| c.is_finite()))
        .map(|(i, t)| ((0..3).map(|a| (q[a] - t[a]).powi(2)).sum::<f64>(), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Row-at-a-time MLP evaluation with explicit loops.
pub fn mlp_row(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for l in &mlp.layers {
        let mut out = vec![0.0; l.weight.ncols()];
        for (o, v) in out.iter_mut().enumerate() {
            let mut acc = l.bias[o];
            for (i, xi) in h.iter().enumerate() {
                acc += xi * l.weight[(i, o)];
            }
            *v = match l.activation {
                sympose::nn::Activation::Relu => acc.max(0.0),
                sympose::nn::Activation::None => acc,
            };
        }
        h = out;
    }
    h
}

/// Point-to-pixel fusion by explicit per-pixel loops; invalid pixels are zero.
pub fn ref_point_to_pixel(pix: &PixelFeatureMap, pts: &PointFeatureMap, mlps: &FusionMlps, k: usize) -> Vec<Array2<f64>> {
    let c = mlps.mlp_fp.output_dim();
    pix.views
        .iter()
        .map(|v| {
            let mut out = Array2::zeros((v.xyz.len(), c));
            for p in 0..v.xyz.len() {
                if !v.xyz[p].iter().all(|x| x.is_finite()) {
                    continue;
                }
                let nb = brute_knn(&v.xyz[p], &pts.coords, k);
                let mut pooled = vec![f64::NEG_INFINITY; mlps.mlp_p.output_dim()];
                for &i in &nb {
                    let f = mlp_row(&mlps.mlp_p, pts.features.row(i).as_slice().unwrap());
                    for (a, b) in pooled.iter_mut().zip(f) {
                        *a = a.max(b);
                    }
                }
                pooled.extend(v.features.row(p).iter());
                let y = mlp_row(&mlps.mlp_fp, &pooled);
                for (o, val) in y.into_iter().enumerate() {
                    out[(p, o)] = val;
                }
            }
            out
        })
        .collect()
}

/// Pixel-to-point fusion by explicit per-point loops.
pub fn ref_pixel_to_point(pix: &PixelFeatureMap, pts: &PointFeatureMap, mlps: &FusionMlps, k: usize) -> Array2<f64> {
    let mut cands = Vec::new();
    let mut coords = Vec::new();
    for (vi, v) in pix.views.iter().enumerate() {
        for p in 0..v.xyz.len() {
            if v.xyz[p].iter().all(|x| x.is_finite()) {
                cands.push((vi, p));
                coords.push(v.xyz[p]);
            }
        }
    }
    let c = mlps.mlp_fi.output_dim();
    let mut out = Array2::zeros((pts.len(), c));
    for (i, q) in pts.coords.iter().enumerate() {
        let nb = brute_knn(q, &coords, k);
        let mut pooled = vec![f64::NEG_INFINITY; pix.channels()];
        for &n in &nb {
            let (vi, p) = cands[n];
            for (a, b) in pooled.iter_mut().zip(pix.views[vi].features.row(p)) {
                *a = a.max(*b);
            }
        }
        let mut x = mlp_row(&mlps.mlp_i, &pooled);
        x.extend(pts.features.row(i).iter());
        for (o, val) in mlp_row(&mlps.mlp_fi, &x).into_iter().enumerate() {
            out[(i, o)] = val;
        }
    }
    out
}

pub struct Toy {
    pub pix: PixelFeatureMap,
    pub pts: PointFeatureMap,
    pub mlps: FusionMlps,
}

/// Random configuration: `views` views of `h × w` pixels with `c` channels,
/// `n` points with `c` channels, a few invalid pixels.
pub fn toy(seed: u64, views: usize, h: usize, w: usize, n: usize, c: usize, channels: usize) -> Toy {
    let mut rng = sympose::rng::stream(seed, "toy", 0);
    let coord = |rng: &mut sympose::rng::Rng| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let views = (0..views)
        .map(|_| {
            let xyz: Vec<[f64; 3]> = (0..h * w)
                .map(|_| if rng.gen::<f64>() < 0.1 { [f64::NAN; 3] } else { coord(&mut rng) })
                .collect();
            ViewFeatures {
                width: w,
                height: h,
                features: Array2::from_shape_fn((h * w, c), |_| rng.gen_range(-1.0..1.0)),
                xyz,
            }
        })
        .collect();
    let coords = (0..n).map(|_| coord(&mut rng)).collect();
    let pts = PointFeatureMap {
        features: Array2::from_shape_fn((n, c), |_| rng.gen_range(-1.0..1.0)),
        coords,
    };
    let mut mlps = FusionMlps::new(c, c, channels, &mut rng).unwrap();
    for m in mlps.mlps_mut() {
        for l in &mut m.layers {
            l.bias = Array1::from_shape_fn(l.bias.len(), |_| rng.gen_range(-0.2..0.2));
        }
    }
    Toy {
        pix: PixelFeatureMap { views },
        pts,
        mlps,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central finite difference of `f` with respect to parameter `i` of `mlp`.
pub fn fd_param<F: Fn(&Mlp) -> f64>(mlp: &Mlp, i: usize, h: f64, f: F) -> f64 {
    let mut flat = Vec::new();
    mlp.write_params(&mut flat);
    let mut m = mlp.clone();
    flat[i] += h;
    m.read_params(&flat).unwrap();
    let plus = f(&m);
    flat[i] -= 2.0 * h;
    m.read_params(&flat).unwrap();
    let minus = f(&m);
    (plus - minus) / (2.0 * h)
}

/// Class models without discovery: identity-only sets, except the cuboid,
/// whose three half turns about its box axes are known in closed form.
pub fn cheap_classes() -> Vec<sympose::pipeline::ClassModel> {
    sympose::scenegen::catalog()
        .iter()
        .map(|c| {
            let keypoints = sympose::keypoints::select_keypoints(&c.mesh, c.class_id, sympose::keypoints::SalienceMode::Curvature).unwrap();
            let mut symmetry = sympose::symmetry::SymmetrySet::identity_only(c.mesh.name.clone(), keypoints.center);
            if c.class_id == 1 {
                for d in [[1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
                    symmetry.transforms.push(nalgebra::Matrix3::from_diagonal(&d.into()));
                    symmetry.kinds.push(sympose::symmetry::SymmetryKind::Discrete);
                }
            }
            sympose::pipeline::ClassModel {
                class_id: c.class_id,
                name: c.mesh.name.clone(),
                keypoints,
                symmetry,
            }
        })
        .collect()
}
