//! The trainable network: fusion block followed by the three heads, with a
//! flat parameter view for the optimizer and model files.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{SceneInput, PIXEL_DIM, POINT_DIM};
use crate::fusion::{p2pix_backward, p2pix_forward, pix2p_backward, pix2p_forward, FusionMlps, P2PixCache, Pix2PCache};
use crate::heads::{HeadOutputs, Heads, HeadsCache};
use crate::nn::{concat_cols, split_cols, Activation, Mlp, MlpGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub point_dim: usize,
    pub pixel_dim: usize,
    /// Width of the fusion MLPs.
    pub channels: usize,
    /// Width of the hidden head layers.
    pub hidden: usize,
    pub num_keypoints: usize,
    pub num_classes: usize,
    /// Raw offset outputs are multiplied by this (meters).
    pub offset_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            point_dim: POINT_DIM,
            pixel_dim: PIXEL_DIM,
            channels: 64,
            hidden: 64,
            num_keypoints: 8,
            num_classes: 6,
            offset_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub fusion: FusionMlps,
    pub heads: Heads,
}

#[derive(Debug, Clone)]
pub struct NetworkCache {
    p2pix: P2PixCache,
    pix2p: Pix2PCache,
    heads: HeadsCache,
}

/// Shape and activation of one layer, as recorded in model files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub mlp: String,
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

const MLP_NAMES: [&str; 7] = ["mlp_p", "mlp_fp", "mlp_i", "mlp_fi", "head_keypoints", "head_center", "head_semantic"];

impl Network {
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        if config.num_keypoints == 0 || config.num_classes == 0 || !(config.offset_scale > 0.0) {
            return Err(Error::InvalidParameter("network needs keypoints, classes and a positive offset scale".into()));
        }
        let fusion = FusionMlps::new(config.point_dim, config.pixel_dim, config.channels, rng)?;
        let heads = Heads::new(2 * config.channels, config.hidden, config.num_keypoints, config.num_classes, rng)?;
        Ok(Self { config, fusion, heads })
    }

    fn mlps(&self) -> Vec<&Mlp> {
        let mut v: Vec<&Mlp> = self.fusion.mlps().to_vec();
        v.extend(self.heads.mlps());
        v
    }

    fn mlps_mut(&mut self) -> Vec<&mut Mlp> {
        let Network { fusion, heads, .. } = self;
        let mut v: Vec<&mut Mlp> = fusion.mlps_mut().into_iter().collect();
        v.extend(heads.mlps_mut());
        v
    }

    pub fn param_count(&self) -> usize {
        self.mlps().iter().map(|m| m.param_count()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in self.mlps() {
            m.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!("expected {} parameters, got {}", self.param_count(), params.len())));
        }
        let mut rest = params;
        for m in self.mlps_mut() {
            rest = m.read_params(rest)?;
        }
        Ok(())
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        self.mlps()
            .iter()
            .zip(MLP_NAMES)
            .flat_map(|(m, name)| {
                m.layers.iter().map(move |l| LayerShape {
                    mlp: name.to_string(),
                    inputs: l.weight.nrows(),
                    outputs: l.weight.ncols(),
                    activation: l.activation,
                })
            })
            .collect()
    }

    fn check(&self, input: &SceneInput) -> Result<()> {
        if input.point_features.features.ncols() != self.config.point_dim || input.pixels.channels() != self.config.pixel_dim {
            return Err(Error::DimensionMismatch("input feature widths do not match the network".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &SceneInput) -> Result<HeadOutputs> {
        self.forward_cached(input).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, input: &SceneInput) -> Result<(HeadOutputs, NetworkCache)> {
        self.check(input)?;
        let (fp, c_p2pix) = p2pix_forward(&input.pixels, &input.point_features, &self.fusion, &input.targets, &input.point_neighbors)?;
        let (fi, c_pix2p) = pix2p_forward(&input.pixels, &input.point_features, &self.fusion, &input.pixel_neighbors)?;
        let x = concat_cols(fi.view(), fp.view())?;
        let (mut out, c_heads) = self.heads.forward_cached(x.view())?;
        out.keypoint_offsets *= self.config.offset_scale;
        out.center_offsets *= self.config.offset_scale;
        Ok((
            out,
            NetworkCache {
                p2pix: c_p2pix,
                pix2p: c_pix2p,
                heads: c_heads,
            },
        ))
    }

    /// Flat parameter gradient (same order as [`Network::params`]) for the
    /// gradient `upstream` of a loss with respect to the outputs.
    pub fn backward(&self, cache: &NetworkCache, upstream: &HeadOutputs) -> Result<Vec<f64>> {
        let scaled = HeadOutputs {
            keypoint_offsets: &upstream.keypoint_offsets * self.config.offset_scale,
            center_offsets: &upstream.center_offsets * self.config.offset_scale,
            semantic_logits: upstream.semantic_logits.clone(),
        };
        let (gh, dx) = self.heads.backward(&cache.heads, &scaled)?;
        let (dfi, dfp) = split_cols(dx.view(), self.config.channels);
        let (g_p, g_fp) = p2pix_backward(&self.fusion, &cache.p2pix, dfp.view())?;
        let (g_i, g_fi) = pix2p_backward(&self.fusion, &cache.pix2p, dfi.view())?;
        let mut out = Vec::with_capacity(self.param_count());
        for g in [&g_p, &g_fp, &g_i, &g_fi, &gh.keypoints, &gh.center, &gh.semantic] {
            MlpGrads::write_flat(g, &mut out);
        }
        Ok(out)
    }
}

/// Zero-filled outputs shaped like `like`, for accumulating loss gradients.
pub fn zero_outputs(like: &HeadOutputs) -> HeadOutputs {
    HeadOutputs {
        keypoint_offsets: Array2::zeros(like.keypoint_offsets.raw_dim()),
        center_offsets: Array2::zeros(like.center_offsets.raw_dim()),
        semantic_logits: Array2::zeros(like.semantic_logits.raw_dim()),
    }
}
