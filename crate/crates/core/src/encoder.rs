//! Residual convolutional view encoder, patch tokenization and the
//! preoperative-VA embedding.
//!
//! Each stage halves both spatial extents:
//!
//! ```text
//! h   = relu(conv3x3_s2(x))
//! out = relu(conv3x3_s1(h) + conv1x1_s2(x))
//! ```
//!
//! `log2(downsample_factor)` stages followed by a 1×1 projection to the token
//! width turn an `H×W` image into a `(H/f)×(W/f)×D` feature map.

use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub height: usize,
    pub width: usize,
    pub downsample_factor: usize,
    /// Output channels of each stage; one entry per stage.
    pub channels: Vec<usize>,
    pub token_dim: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let f = self.downsample_factor;
        if f < 2 || !f.is_power_of_two() {
            return Err(Error::config(format!("downsample_factor must be a power of two ≥ 2, got {f}")));
        }
        if self.channels.len() != self.stages() {
            return Err(Error::config(format!(
                "downsample_factor {f} needs {} channel entries, got {}",
                self.stages(),
                self.channels.len()
            )));
        }
        if self.channels.contains(&0) || self.token_dim == 0 {
            return Err(Error::config("channel counts and token_dim must be positive"));
        }
        if self.height == 0 || self.width == 0 || self.height % f != 0 || self.width % f != 0 {
            return Err(Error::config(format!(
                "image size {}×{} is not divisible by downsample_factor {f}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.downsample_factor.trailing_zeros() as usize
    }

    /// (P1, P2).
    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.downsample_factor, self.width / self.downsample_factor)
    }

    /// Number of patch tokens P = P1·P2.
    pub fn patches(&self) -> usize {
        let (p1, p2) = self.grid();
        p1 * p2
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    weight: ParamId,
    bias: ParamId,
}

impl Conv {
    fn build(store: &mut ParamStore, init: &mut Init, path: &str, out: usize, inp: usize, k: usize) -> Self {
        let weight = store.add(format!("{path}/w"), init.he(&[out, inp, k, k], inp * k * k));
        let bias = store.add(format!("{path}/b"), init.zeros(&[out]));
        Self { weight, bias }
    }

    fn apply<'t>(&self, p: &Bound<'t>, x: Var<'t>, stride: usize, padding: usize) -> Result<Var<'t>> {
        Ok(x.conv2d(p[self.weight], p[self.bias], stride, padding)?)
    }
}

#[derive(Debug, Clone, Copy)]
struct Stage {
    down: Conv,
    refine: Conv,
    skip: Conv,
}

/// Parameters of one view's encoder.
#[derive(Debug, Clone)]
pub struct ViewEncoder {
    config: EncoderConfig,
    stages: Vec<Stage>,
    projection: Conv,
}

impl ViewEncoder {
    /// Registers parameters under `{prefix}/encoder/...`.
    pub fn build(store: &mut ParamStore, init: &mut Init, prefix: &str, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut stages = Vec::with_capacity(config.stages());
        let mut inp = 1;
        for (i, &out) in config.channels.iter().enumerate() {
            let path = format!("{prefix}/encoder/stage{i}");
            stages.push(Stage {
                down: Conv::build(store, init, &format!("{path}/down"), out, inp, 3),
                refine: Conv::build(store, init, &format!("{path}/refine"), out, out, 3),
                skip: Conv::build(store, init, &format!("{path}/skip"), out, inp, 1),
            });
            inp = out;
        }
        let projection = Conv::build(store, init, &format!("{prefix}/encoder/proj"), config.token_dim, inp, 1);
        Ok(Self { config: config.clone(), stages, projection })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Maps an `H×W` image to a `P1×P2×D` feature map.
    pub fn encode_view<'t>(&self, p: &Bound<'t>, image: Var<'t>) -> Result<ViewFeatureMap<'t>> {
        let cfg = &self.config;
        if image.shape() != [cfg.height, cfg.width] {
            return Err(Error::Input(format!(
                "image is {:?}, encoder expects [{}, {}]",
                image.shape(),
                cfg.height,
                cfg.width
            )));
        }
        let mut x = image.reshape([1, cfg.height, cfg.width])?;
        for stage in &self.stages {
            let h = stage.down.apply(p, x, 2, 1)?.relu();
            let main = stage.refine.apply(p, h, 1, 1)?;
            let skip = stage.skip.apply(p, x, 2, 0)?;
            x = main.add(skip)?.relu();
        }
        let (p1, p2) = cfg.grid();
        let d = cfg.token_dim;
        let projected = self.projection.apply(p, x, 1, 0)?;
        let channels_last = projected.reshape([d, p1 * p2])?.transpose()?.reshape([p1, p2, d])?;
        Ok(ViewFeatureMap { values: channels_last, p1, p2, d })
    }
}

/// `P1×P2×D` map produced by [`ViewEncoder::encode_view`].
#[derive(Debug, Clone, Copy)]
pub struct ViewFeatureMap<'t> {
    values: Var<'t>,
    p1: usize,
    p2: usize,
    d: usize,
}

impl<'t> ViewFeatureMap<'t> {
    pub fn new(values: Var<'t>) -> Result<Self> {
        let &[p1, p2, d] = values.shape().as_slice() else {
            return Err(Error::Input(format!("feature map must be 3-D, got {:?}", values.shape())));
        };
        Ok(Self { values, p1, p2, d })
    }

    pub fn values(&self) -> Var<'t> {
        self.values
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    pub fn token_dim(&self) -> usize {
        self.d
    }
}

/// Flattens a feature map row-major into a `P×D` token matrix; grid cell
/// (i, j) becomes token `i·P2 + j`.
pub fn tokenize<'t>(fm: &ViewFeatureMap<'t>) -> Result<Var<'t>> {
    Ok(fm.values.reshape([fm.p1 * fm.p2, fm.d])?)
}

/// Inverse of [`tokenize`].
pub fn untokenize<'t>(tokens: Var<'t>, p1: usize, p2: usize) -> Result<ViewFeatureMap<'t>> {
    let &[p, d] = tokens.shape().as_slice() else {
        return Err(Error::Input(format!("tokens must be P×D, got {:?}", tokens.shape())));
    };
    if p != p1 * p2 {
        return Err(Error::Input(format!("{p} tokens do not fill a {p1}×{p2} grid")));
    }
    ViewFeatureMap::new(tokens.reshape([p1, p2, d])?)
}

/// Affine map from the preoperative VA scalar to a `1×D` token.
#[derive(Debug, Clone, Copy)]
pub struct VaEmbedder {
    weight: ParamId,
    bias: ParamId,
    va_max: f64,
}

impl VaEmbedder {
    pub fn build(store: &mut ParamStore, init: &mut Init, token_dim: usize, va_max: f64) -> Self {
        let weight = store.add("va/w", init.fan_in(&[1, token_dim], 1));
        let bias = store.add("va/b", init.zeros(&[token_dim]));
        Self { weight, bias, va_max }
    }

    pub fn embed_preop_va<'t>(&self, p: &Bound<'t>, tape: &'t Tape, va: f64) -> Result<Var<'t>> {
        if !va.is_finite() || !(0.0..=self.va_max).contains(&va) {
            return Err(Error::Input(format!("preoperative VA {va} outside [0, {}]", self.va_max)));
        }
        let x = tape.constant(Tensor::new([1, 1], vec![va])?);
        Ok(x.matmul(p[self.weight])?.add_row(p[self.bias])?)
    }
}
