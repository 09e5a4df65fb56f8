//! The full multi-view regressor and its fusion baselines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{tokenize, EncoderConfig, VaEmbedder, ViewEncoder};
use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamId, ParamStore};
use crate::tensor::{concat, Tape, Tensor, Var};
use crate::transformer::{
    assemble_sequence, cross_token_layer, encoder_layer, plain_layer, AttentionConfig, LayerParams, StreamLayer,
    StreamLayout, StreamParams, TokenSequence, TOKEN_INIT_STD,
};

/// How the two views are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Horizontal view only.
    SingleHor,
    /// Vertical view only.
    SingleVer,
    /// Independent streams; per-view predictions are averaged.
    LateNoAttention,
    /// One transformer over the concatenation of both views' tokens.
    FullAttention,
    /// Independent streams that exchange cross-tokens from
    /// `cross_layer_start` on.
    CrossToken,
}

impl Fusion {
    pub const ALL: [Fusion; 5] =
        [Fusion::SingleHor, Fusion::SingleVer, Fusion::LateNoAttention, Fusion::FullAttention, Fusion::CrossToken];

    pub fn name(self) -> &'static str {
        match self {
            Fusion::SingleHor => "single_hor",
            Fusion::SingleVer => "single_ver",
            Fusion::LateNoAttention => "late_no_attention",
            Fusion::FullAttention => "full_attention",
            Fusion::CrossToken => "cross_token",
        }
    }
}

/// Fusion kind plus the flags that modify it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionMode {
    pub fusion: Fusion,
    pub use_preop_va: bool,
    pub cross_layer_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `[H, W]` in pixels.
    pub image_size: [usize; 2],
    pub downsample_factor: usize,
    /// Output channels per encoder stage; `log2(downsample_factor)` entries.
    pub channels: Vec<usize>,
    pub token_dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// FFN hidden width as a multiple of `token_dim`.
    pub ffn_mult: usize,
    pub cross_layer_start: usize,
    pub fusion: Fusion,
    pub use_preop_va: bool,
    pub positional_embeddings: bool,
    pub share_cross_step_params: bool,
    /// Upper bound accepted for the preoperative VA input.
    pub va_max: f64,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// 64×64 inputs, D=32, four layers with cross-token attention in the last
    /// two.
    pub fn desk() -> Self {
        Self {
            image_size: [64, 64],
            downsample_factor: 32,
            channels: vec![4, 8, 8, 16, 32],
            token_dim: 32,
            layers: 4,
            heads: 2,
            ffn_mult: 2,
            cross_layer_start: 2,
            fusion: Fusion::CrossToken,
            use_preop_va: true,
            positional_embeddings: true,
            share_cross_step_params: false,
            va_max: 1.5,
            ln_eps: 1e-5,
        }
    }

    /// 256×256 inputs, D=128, twelve layers with cross-token attention in the
    /// last six. Four heads, since three do not divide 128.
    pub fn paper() -> Self {
        Self {
            image_size: [256, 256],
            channels: vec![64, 64, 128, 256, 512],
            token_dim: 128,
            layers: 12,
            heads: 4,
            ffn_mult: 4,
            cross_layer_start: 6,
            ..Self::desk()
        }
    }

    /// Smallest configuration used for exhaustive gradient checks.
    pub fn micro() -> Self {
        Self {
            channels: vec![2, 2, 4, 4, 8],
            token_dim: 16,
            layers: 2,
            heads: 2,
            cross_layer_start: 1,
            ..Self::desk()
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            height: self.image_size[0],
            width: self.image_size[1],
            downsample_factor: self.downsample_factor,
            channels: self.channels.clone(),
            token_dim: self.token_dim,
        }
    }

    pub fn patches(&self) -> usize {
        self.encoder().patches()
    }

    pub fn fusion_mode(&self) -> FusionMode {
        FusionMode {
            fusion: self.fusion,
            use_preop_va: self.use_preop_va,
            cross_layer_start: self.cross_layer_start,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        if self.layers == 0 {
            return Err(Error::config("layers must be ≥ 1"));
        }
        if self.heads == 0 || self.token_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "heads ({}) must divide token_dim ({})",
                self.heads, self.token_dim
            )));
        }
        if self.cross_layer_start > self.layers {
            return Err(Error::config(format!(
                "cross_layer_start {} exceeds layer count {}",
                self.cross_layer_start, self.layers
            )));
        }
        if self.ffn_mult == 0 {
            return Err(Error::config("ffn_mult must be ≥ 1"));
        }
        if !(self.va_max.is_finite() && self.va_max > 0.0) {
            return Err(Error::config("va_max must be positive"));
        }
        if !(self.ln_eps.is_finite() && self.ln_eps >= 0.0) {
            return Err(Error::config("ln_eps must be non-negative"));
        }
        Ok(())
    }

    fn attention(&self) -> AttentionConfig {
        AttentionConfig { heads: self.heads, ln_eps: self.ln_eps }
    }

    fn stream_layout(&self, cross_layer_start: usize) -> StreamLayout {
        StreamLayout {
            token_dim: self.token_dim,
            ffn_hidden: self.token_dim * self.ffn_mult,
            patches: self.patches(),
            layers: self.layers,
            cross_layer_start,
            positional_embeddings: self.positional_embeddings,
            share_cross_steps: self.share_cross_step_params,
        }
    }
}

/// One sample's model inputs.
#[derive(Debug, Clone, Copy)]
pub struct SampleInput<'a> {
    pub hor: &'a Tensor,
    pub ver: &'a Tensor,
    pub pre_va: f64,
}

#[derive(Debug, Clone, Copy)]
struct Head {
    weight: ParamId,
    bias: ParamId,
}

impl Head {
    fn build(store: &mut ParamStore, init: &mut Init, path: &str, inp: usize) -> Self {
        let weight = store.add(format!("{path}/w"), init.fan_in(&[inp, 1], inp));
        let bias = store.add(format!("{path}/b"), init.zeros(&[1]));
        Self { weight, bias }
    }

    fn apply<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        Ok(x.matmul(p[self.weight])?.add_row(p[self.bias])?)
    }
}

/// Final LayerNorm applied to a reg token before readout.
#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    fn build(store: &mut ParamStore, path: &str, d: usize) -> Self {
        let gamma = store.add(format!("{path}/gamma"), Tensor::full([d], 1.0));
        let beta = store.add(format!("{path}/beta"), Tensor::zeros([d]));
        Self { gamma, beta }
    }

    fn apply<'t>(&self, p: &Bound<'t>, x: Var<'t>, eps: f64) -> Result<Var<'t>> {
        Ok(x.layer_norm(p[self.gamma], p[self.beta], eps)?)
    }
}

#[derive(Debug, Clone, Copy)]
enum VaSlot {
    Embedded(VaEmbedder),
    /// Learned placeholder used when the preoperative VA is withheld.
    Null(ParamId),
}

#[derive(Debug, Clone)]
struct JointStream {
    reg_hor: ParamId,
    reg_ver: ParamId,
    positional: Option<ParamId>,
    layers: Vec<LayerParams>,
    norm: Norm,
}

#[derive(Debug, Clone)]
enum Body {
    Single { stream: StreamParams, norm: Norm, head: Head },
    Dual { hor: StreamParams, ver: StreamParams, norms: [Norm; 2], readout: Readout },
    Joint { stream: JointStream, head: Head },
}

#[derive(Debug, Clone, Copy)]
enum Readout {
    /// `[reg_hor ‖ reg_ver] → affine`.
    Concat(Head),
    /// Mean of per-view affine heads.
    Averaged { hor: Head, ver: Head },
}

/// Layer-boundary states collected during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput<'t> {
    /// `1×1` prediction.
    pub prediction: Var<'t>,
    /// Horizontal stream input and output of every layer (`layers + 1`
    /// entries); empty for modes without a horizontal stream.
    pub hor_states: Vec<TokenSequence<'t>>,
    pub ver_states: Vec<TokenSequence<'t>>,
}

/// All learnable parameters plus the wiring for one fusion mode.
#[derive(Debug, Clone)]
pub struct CttModel {
    config: ModelConfig,
    params: ParamStore,
    hor_encoder: Option<ViewEncoder>,
    ver_encoder: Option<ViewEncoder>,
    va: VaSlot,
    body: Body,
}

impl CttModel {
    /// Initializes parameters deterministically from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        let enc = config.encoder();
        let d = config.token_dim;
        let uses_hor = config.fusion != Fusion::SingleVer;
        let uses_ver = config.fusion != Fusion::SingleHor;
        let hor_encoder = uses_hor.then(|| ViewEncoder::build(&mut store, &mut init, "hor", &enc)).transpose()?;
        let ver_encoder = uses_ver.then(|| ViewEncoder::build(&mut store, &mut init, "ver", &enc)).transpose()?;
        let va = if config.use_preop_va {
            VaSlot::Embedded(VaEmbedder::build(&mut store, &mut init, d, config.va_max))
        } else {
            VaSlot::Null(store.add("va/null", init.normal(&[1, d], TOKEN_INIT_STD)))
        };
        let body = match config.fusion {
            Fusion::SingleHor | Fusion::SingleVer => {
                let prefix = if config.fusion == Fusion::SingleHor { "hor" } else { "ver" };
                let stream = StreamParams::build(&mut store, &mut init, prefix, &config.stream_layout(config.layers));
                let norm = Norm::build(&mut store, &format!("{prefix}/norm"), d);
                let head = Head::build(&mut store, &mut init, "head", d);
                Body::Single { stream, norm, head }
            }
            Fusion::LateNoAttention | Fusion::CrossToken => {
                let start = if config.fusion == Fusion::CrossToken { config.cross_layer_start } else { config.layers };
                let layout = config.stream_layout(start);
                let hor = StreamParams::build(&mut store, &mut init, "hor", &layout);
                let ver = StreamParams::build(&mut store, &mut init, "ver", &layout);
                let norms = [Norm::build(&mut store, "hor/norm", d), Norm::build(&mut store, "ver/norm", d)];
                let readout = if config.fusion == Fusion::CrossToken {
                    Readout::Concat(Head::build(&mut store, &mut init, "head", 2 * d))
                } else {
                    Readout::Averaged {
                        hor: Head::build(&mut store, &mut init, "head/hor", d),
                        ver: Head::build(&mut store, &mut init, "head/ver", d),
                    }
                };
                Body::Dual { hor, ver, norms, readout }
            }
            Fusion::FullAttention => {
                let joint_len = 2 * (config.patches() + 2);
                let reg_hor = store.add("joint/reg_hor", init.normal(&[1, d], TOKEN_INIT_STD));
                let reg_ver = store.add("joint/reg_ver", init.normal(&[1, d], TOKEN_INIT_STD));
                let positional = config
                    .positional_embeddings
                    .then(|| store.add("joint/pos", init.normal(&[joint_len, d], TOKEN_INIT_STD)));
                let layers = (0..config.layers)
                    .map(|i| LayerParams::build(&mut store, &mut init, &format!("joint/layer{i}"), d, d * config.ffn_mult))
                    .collect();
                let norm = Norm::build(&mut store, "joint/norm", d);
                let head = Head::build(&mut store, &mut init, "head", 2 * d);
                Body::Joint { stream: JointStream { reg_hor, reg_ver, positional, layers, norm }, head }
            }
        };
        Ok(Self { config, params: store, hor_encoder, ver_encoder, va, body })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_image(&self, image: &Tensor, view: &str) -> Result<()> {
        let [h, w] = self.config.image_size;
        if image.shape() != [h, w] {
            return Err(Error::Input(format!("{view} image is {:?}, expected [{h}, {w}]", image.shape())));
        }
        if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Input(format!("{view} image has pixels outside [0, 1]")));
        }
        Ok(())
    }

    /// Records the forward pass for one sample on `tape`.
    pub fn forward<'t>(&self, tape: &'t Tape, p: &Bound<'t>, sample: &SampleInput<'_>) -> Result<Var<'t>> {
        self.check_image(sample.hor, "horizontal")?;
        self.check_image(sample.ver, "vertical")?;
        let hor = tape.constant(sample.hor.clone());
        let ver = tape.constant(sample.ver.clone());
        Ok(self.forward_vars(tape, p, hor, ver, sample.pre_va)?.prediction)
    }

    /// Forward pass from image variables, exposing every layer boundary.
    pub fn forward_vars<'t>(
        &self,
        tape: &'t Tape,
        p: &Bound<'t>,
        hor: Var<'t>,
        ver: Var<'t>,
        pre_va: f64,
    ) -> Result<ForwardOutput<'t>> {
        let cfg = self.config.attention();
        let eps = self.config.ln_eps;
        let va_token = match self.va {
            VaSlot::Embedded(emb) => emb.embed_preop_va(p, tape, pre_va)?,
            VaSlot::Null(id) => {
                if !pre_va.is_finite() || !(0.0..=self.config.va_max).contains(&pre_va) {
                    return Err(Error::Input(format!("preoperative VA {pre_va} outside [0, {}]", self.config.va_max)));
                }
                p[id]
            }
        };
        let patches = |enc: &Option<ViewEncoder>, image: Var<'t>| -> Result<Var<'t>> {
            let enc = enc.as_ref().expect("encoder exists for every view the mode reads");
            tokenize(&enc.encode_view(p, image)?)
        };

        match &self.body {
            Body::Single { stream, norm, head } => {
                let (enc, image) = match self.config.fusion {
                    Fusion::SingleHor => (&self.hor_encoder, hor),
                    _ => (&self.ver_encoder, ver),
                };
                let mut z = assemble_sequence(p, stream, patches(enc, image)?, va_token)?;
                let mut states = vec![z];
                for layer in &stream.layers {
                    z = plain_layer(p, layer, &z, &cfg)?;
                    states.push(z);
                }
                let prediction = head.apply(p, norm.apply(p, z.reg()?, eps)?)?;
                let (hor_states, ver_states) =
                    if self.config.fusion == Fusion::SingleHor { (states, vec![]) } else { (vec![], states) };
                Ok(ForwardOutput { prediction, hor_states, ver_states })
            }
            Body::Dual { hor: hs, ver: vs, norms, readout } => {
                let mut zh = assemble_sequence(p, hs, patches(&self.hor_encoder, hor)?, va_token)?;
                let mut zv = assemble_sequence(p, vs, patches(&self.ver_encoder, ver)?, va_token)?;
                let mut hor_states = vec![zh];
                let mut ver_states = vec![zv];
                for (lh, lv) in hs.layers.iter().zip(&vs.layers) {
                    (zh, zv) = match (lh, lv) {
                        (StreamLayer::Plain(_), StreamLayer::Plain(_)) => {
                            (plain_layer(p, lh, &zh, &cfg)?, plain_layer(p, lv, &zv, &cfg)?)
                        }
                        _ => cross_token_layer(p, lh, lv, &zh, &zv, &cfg)?,
                    };
                    hor_states.push(zh);
                    ver_states.push(zv);
                }
                let rh = norms[0].apply(p, zh.reg()?, eps)?;
                let rv = norms[1].apply(p, zv.reg()?, eps)?;
                let prediction = match readout {
                    Readout::Concat(head) => head.apply(p, concat(&[rh, rv], 1)?)?,
                    Readout::Averaged { hor, ver } => hor.apply(p, rh)?.add(ver.apply(p, rv)?)?.scale(0.5),
                };
                Ok(ForwardOutput { prediction, hor_states, ver_states })
            }
            Body::Joint { stream, head } => {
                let n = self.config.patches() + 2;
                let mut z = concat(
                    &[
                        p[stream.reg_hor],
                        va_token,
                        patches(&self.hor_encoder, hor)?,
                        p[stream.reg_ver],
                        va_token,
                        patches(&self.ver_encoder, ver)?,
                    ],
                    0,
                )?;
                if let Some(pos) = stream.positional {
                    z = z.add(p[pos])?;
                }
                for layer in &stream.layers {
                    z = encoder_layer(p, layer, z, &cfg)?;
                }
                let rh = stream.norm.apply(p, z.row(0)?, eps)?;
                let rv = stream.norm.apply(p, z.row(n)?, eps)?;
                let prediction = head.apply(p, concat(&[rh, rv], 1)?)?;
                Ok(ForwardOutput { prediction, hor_states: vec![], ver_states: vec![] })
            }
        }
    }

    /// Predicted postoperative VA for one sample.
    pub fn predict(&self, sample: &SampleInput<'_>) -> Result<f64> {
        let tape = Tape::new();
        let p = self.params.bind_frozen(&tape);
        Ok(self.forward(&tape, &p, sample)?.item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn image(seed: u64, size: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new([size, size], (0..size * size).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn micro(fusion: Fusion) -> ModelConfig {
        ModelConfig { fusion, ..ModelConfig::micro() }
    }

    #[test]
    fn presets_validate() {
        ModelConfig::desk().validate().unwrap();
        ModelConfig::paper().validate().unwrap();
        ModelConfig::micro().validate().unwrap();
        assert_eq!(ModelConfig::paper().patches(), 64);
        assert_eq!(ModelConfig::desk().patches(), 4);
        let three_heads = ModelConfig { heads: 3, ..ModelConfig::paper() };
        assert!(three_heads.validate().is_err());
        let late_cross = ModelConfig { cross_layer_start: 5, ..ModelConfig::desk() };
        assert!(late_cross.validate().is_err());
    }

    #[test]
    fn every_mode_predicts_finite_scalar() {
        let (h, v) = (image(1, 64), image(2, 64));
        for fusion in Fusion::ALL {
            for pva in [true, false] {
                let cfg = ModelConfig { use_preop_va: pva, ..micro(fusion) };
                let model = CttModel::new(cfg, 7).unwrap();
                let y = model.predict(&SampleInput { hor: &h, ver: &v, pre_va: 0.4 }).unwrap();
                assert!(y.is_finite(), "{fusion:?}");
            }
        }
    }

    #[test]
    fn views_have_separate_parameters() {
        let model = CttModel::new(micro(Fusion::CrossToken), 3).unwrap();
        let count = |prefix: &str| {
            model.params().iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, t)| t.numel()).sum::<usize>()
        };
        assert!(count("hor/encoder") > 0);
        assert_eq!(count("hor/encoder"), count("ver/encoder"));
        let (h, v) = (image(1, 64), image(2, 64));
        let a = model.predict(&SampleInput { hor: &h, ver: &v, pre_va: 0.4 }).unwrap();
        let b = model.predict(&SampleInput { hor: &v, ver: &h, pre_va: 0.4 }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = CttModel::new(micro(Fusion::CrossToken), 3).unwrap();
        let (h, v) = (image(1, 64), image(2, 64));
        assert!(model.predict(&SampleInput { hor: &h, ver: &v, pre_va: 1.6 }).is_err());
        let small = image(3, 32);
        assert!(model.predict(&SampleInput { hor: &small, ver: &v, pre_va: 0.5 }).is_err());
        let mut bright = h.clone();
        bright.data_mut()[0] = 1.5;
        assert!(model.predict(&SampleInput { hor: &bright, ver: &v, pre_va: 0.5 }).is_err());
    }

    #[test]
    fn states_keep_length_p_plus_3() {
        let model = CttModel::new(micro(Fusion::CrossToken), 5).unwrap();
        let tape = Tape::new();
        let p = model.params().bind_frozen(&tape);
        let out = model
            .forward_vars(&tape, &p, tape.constant(image(1, 64)), tape.constant(image(2, 64)), 0.3)
            .unwrap();
        assert_eq!(out.hor_states.len(), 3);
        for s in out.hor_states.iter().chain(&out.ver_states) {
            assert_eq!(s.len(), 7);
        }
    }
}
