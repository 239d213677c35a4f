//! Per-point prediction heads: keypoint offsets, center offsets, and
//! semantic logits, each a four-layer MLP over the fused point features.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::Result;
use crate::nn::{Activation, Mlp, MlpCache, MlpGrads};

pub const HEAD_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    /// `N_p × (M·3)`, keypoint `j` in columns `3j..3j+3`.
    pub keypoint_offsets: Array2<f64>,
    /// `N_p × 3`.
    pub center_offsets: Array2<f64>,
    /// `N_p × (num_classes + 1)`; column 0 is the background.
    pub semantic_logits: Array2<f64>,
}

impl HeadOutputs {
    pub fn len(&self) -> usize {
        self.center_offsets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keypoint_offset(&self, point: usize, j: usize) -> [f64; 3] {
        let r = self.keypoint_offsets.row(point);
        [r[3 * j], r[3 * j + 1], r[3 * j + 2]]
    }

    pub fn center_offset(&self, point: usize) -> [f64; 3] {
        let r = self.center_offsets.row(point);
        [r[0], r[1], r[2]]
    }

    /// Arg-max class per point (lowest class on ties).
    pub fn labels(&self) -> Vec<usize> {
        self.semantic_logits
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                for (k, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heads {
    pub keypoints: Mlp,
    pub center: Mlp,
    pub semantic: Mlp,
}

#[derive(Debug, Clone)]
pub struct HeadsCache {
    keypoints: MlpCache,
    center: MlpCache,
    semantic: MlpCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadsGrads {
    pub keypoints: MlpGrads,
    pub center: MlpGrads,
    pub semantic: MlpGrads,
}

impl Heads {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, num_keypoints: usize, num_classes: usize, rng: &mut R) -> Result<Self> {
        let dims = |out: usize| [input, hidden, hidden, hidden, out];
        let (relu, none) = (Activation::Relu, Activation::None);
        Ok(Self {
            keypoints: Mlp::new(&dims(3 * num_keypoints), relu, none, rng)?,
            center: Mlp::new(&dims(3), relu, none, rng)?,
            semantic: Mlp::new(&dims(num_classes + 1), relu, none, rng)?,
        })
    }

    pub fn zeros(input: usize, hidden: usize, num_keypoints: usize, num_classes: usize) -> Result<Self> {
        let dims = |out: usize| [input, hidden, hidden, hidden, out];
        let (relu, none) = (Activation::Relu, Activation::None);
        Ok(Self {
            keypoints: Mlp::zeros(&dims(3 * num_keypoints), relu, none)?,
            center: Mlp::zeros(&dims(3), relu, none)?,
            semantic: Mlp::zeros(&dims(num_classes + 1), relu, none)?,
        })
    }

    pub fn mlps(&self) -> [&Mlp; 3] {
        [&self.keypoints, &self.center, &self.semantic]
    }

    pub fn mlps_mut(&mut self) -> [&mut Mlp; 3] {
        [&mut self.keypoints, &mut self.center, &mut self.semantic]
    }

    pub fn forward(&self, features: ArrayView2<f64>) -> Result<HeadOutputs> {
        Ok(HeadOutputs {
            keypoint_offsets: self.keypoints.forward(features)?,
            center_offsets: self.center.forward(features)?,
            semantic_logits: self.semantic.forward(features)?,
        })
    }

    pub fn forward_cached(&self, features: ArrayView2<f64>) -> Result<(HeadOutputs, HeadsCache)> {
        let (k, ck) = self.keypoints.forward_cached(features)?;
        let (c, cc) = self.center.forward_cached(features)?;
        let (s, cs) = self.semantic.forward_cached(features)?;
        Ok((
            HeadOutputs {
                keypoint_offsets: k,
                center_offsets: c,
                semantic_logits: s,
            },
            HeadsCache {
                keypoints: ck,
                center: cc,
                semantic: cs,
            },
        ))
    }

    /// Parameter gradients and the gradient with respect to the features.
    pub fn backward(&self, cache: &HeadsCache, upstream: &HeadOutputs) -> Result<(HeadsGrads, Array2<f64>)> {
        let (gk, dk) = self.keypoints.backward(&cache.keypoints, upstream.keypoint_offsets.view())?;
        let (gc, dc) = self.center.backward(&cache.center, upstream.center_offsets.view())?;
        let (gs, ds) = self.semantic.backward(&cache.semantic, upstream.semantic_logits.view())?;
        Ok((
            HeadsGrads {
                keypoints: gk,
                center: gc,
                semantic: gs,
            },
            dk + dc + ds,
        ))
    }
}
