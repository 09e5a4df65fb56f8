//! Pre-norm transformer layers, per-view token sequences and the two-step
//! cross-token exchange.
//!
//! A view's sequence is always `[reg, va, patch_1 … patch_P, ctn]`. A plain
//! layer computes
//!
//! ```text
//! y = MSA(LN(z)) + z
//! z' = FFN(LN(y)) + y
//! ```
//!
//! A cross-token layer runs two such sub-layers per stream. Step one swaps
//! the last token (the cross-token) between the streams before the sub-layer;
//! step two swaps the updated cross-tokens back and runs the second sub-layer.
//! Every other token stays in its own stream, so the only path between views
//! goes through the cross-tokens.

use crate::error::{Error, Result};
use crate::params::{Bound, Init, ParamId, ParamStore};
use crate::tensor::{concat, Tensor, Var};

/// Std of the normal used for learned tokens and positional embeddings.
pub const TOKEN_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig {
    pub heads: usize,
    pub ln_eps: f64,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

impl Affine {
    fn apply<'t>(&self, p: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        Ok(x.matmul(p[self.weight])?.add_row(p[self.bias])?)
    }
}

/// Weights of one pre-norm encoder layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerParams {
    ln1_gamma: ParamId,
    ln1_beta: ParamId,
    query: Affine,
    key: Affine,
    value: Affine,
    output: Affine,
    ln2_gamma: ParamId,
    ln2_beta: ParamId,
    ffn_in: Affine,
    ffn_out: Affine,
}

impl LayerParams {
    /// Registers `{path}/ln1/{gamma,beta}`, `{path}/msa/{wq,wk,wv,wo}` (with
    /// `b*` biases), `{path}/ln2/...` and `{path}/ffn/{w1,b1,w2,b2}`.
    pub fn build(store: &mut ParamStore, init: &mut Init, path: &str, d: usize, hidden: usize) -> Self {
        let mut affine = |store: &mut ParamStore, name: &str, bias: &str, inp: usize, out: usize| {
            let weight = store.add(format!("{path}/{name}"), init.fan_in(&[inp, out], inp));
            let bias = store.add(format!("{path}/{bias}"), init.zeros(&[out]));
            Affine { weight, bias }
        };
        let ln1_gamma = store.add(format!("{path}/ln1/gamma"), Tensor::full([d], 1.0));
        let ln1_beta = store.add(format!("{path}/ln1/beta"), Tensor::zeros([d]));
        let query = affine(store, "msa/wq", "msa/bq", d, d);
        let key = affine(store, "msa/wk", "msa/bk", d, d);
        let value = affine(store, "msa/wv", "msa/bv", d, d);
        let output = affine(store, "msa/wo", "msa/bo", d, d);
        let ln2_gamma = store.add(format!("{path}/ln2/gamma"), Tensor::full([d], 1.0));
        let ln2_beta = store.add(format!("{path}/ln2/beta"), Tensor::zeros([d]));
        let ffn_in = affine(store, "ffn/w1", "ffn/b1", d, hidden);
        let ffn_out = affine(store, "ffn/w2", "ffn/b2", hidden, d);
        Self { ln1_gamma, ln1_beta, query, key, value, output, ln2_gamma, ln2_beta, ffn_in, ffn_out }
    }

    /// Ids of the weights that feed the two residual branches; zeroing them
    /// turns the layer into the identity.
    pub fn residual_output_ids(&self) -> [ParamId; 4] {
        [self.output.weight, self.output.bias, self.ffn_out.weight, self.ffn_out.bias]
    }
}

fn multi_head_attention<'t>(p: &Bound<'t>, layer: &LayerParams, x: Var<'t>, heads: usize) -> Result<Var<'t>> {
    let d = x.shape()[1];
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!("{heads} heads do not divide token width {d}")));
    }
    let head_dim = d / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let q = layer.query.apply(p, x)?;
    let k = layer.key.apply(p, x)?;
    let v = layer.value.apply(p, x)?;
    let mut outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.slice(1, h * head_dim, head_dim)?;
        let kh = k.slice(1, h * head_dim, head_dim)?;
        let vh = v.slice(1, h * head_dim, head_dim)?;
        let weights = qh.matmul(kh.transpose()?)?.scale(scale).softmax(1)?;
        outputs.push(weights.matmul(vh)?);
    }
    let merged = if heads == 1 { outputs[0] } else { concat(&outputs, 1)? };
    layer.output.apply(p, merged)
}

/// One pre-norm residual layer over an `n×D` token matrix.
pub fn encoder_layer<'t>(p: &Bound<'t>, layer: &LayerParams, z: Var<'t>, cfg: &AttentionConfig) -> Result<Var<'t>> {
    let normed = z.layer_norm(p[layer.ln1_gamma], p[layer.ln1_beta], cfg.ln_eps)?;
    let y = multi_head_attention(p, layer, normed, cfg.heads)?.add(z)?;
    let normed = y.layer_norm(p[layer.ln2_gamma], p[layer.ln2_beta], cfg.ln_eps)?;
    let hidden = layer.ffn_in.apply(p, normed)?.gelu();
    Ok(layer.ffn_out.apply(p, hidden)?.add(y)?)
}

/// `[reg, va, patches…, ctn]` as a `(P+3)×D` matrix.
#[derive(Debug, Clone, Copy)]
pub struct TokenSequence<'t> {
    tokens: Var<'t>,
}

impl<'t> TokenSequence<'t> {
    pub fn new(tokens: Var<'t>) -> Result<Self> {
        let shape = tokens.shape();
        if shape.len() != 2 || shape[0] < 4 {
            return Err(Error::Input(format!("token sequence needs at least 4 rows, got {shape:?}")));
        }
        Ok(Self { tokens })
    }

    /// Reassembles `[body ‖ ctn]`.
    pub fn from_parts(body: Var<'t>, ctn: Var<'t>) -> Result<Self> {
        Self::new(concat(&[body, ctn], 0)?)
    }

    pub fn tokens(&self) -> Var<'t> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn patch_count(&self) -> usize {
        self.len() - 3
    }

    pub fn reg(&self) -> Result<Var<'t>> {
        Ok(self.tokens.row(0)?)
    }

    pub fn va(&self) -> Result<Var<'t>> {
        Ok(self.tokens.row(1)?)
    }

    pub fn patches(&self) -> Result<Var<'t>> {
        Ok(self.tokens.slice(0, 2, self.patch_count())?)
    }

    /// Every token except the cross-token.
    pub fn body(&self) -> Result<Var<'t>> {
        Ok(self.tokens.slice(0, 0, self.len() - 1)?)
    }

    pub fn ctn(&self) -> Result<Var<'t>> {
        Ok(self.tokens.row(self.len() - 1)?)
    }
}

/// A layer of a view stream: plain, or a cross-token layer with a sub-layer
/// per exchange step.
#[derive(Debug, Clone, Copy)]
pub enum StreamLayer {
    Plain(LayerParams),
    Cross { first: LayerParams, second: LayerParams },
}

/// Learned tokens and layers of one view (`hor` or `ver`).
#[derive(Debug, Clone)]
pub struct StreamParams {
    pub reg: ParamId,
    pub ctn: ParamId,
    pub positional: Option<ParamId>,
    pub layers: Vec<StreamLayer>,
}

#[derive(Debug, Clone, Copy)]
pub struct StreamLayout {
    pub token_dim: usize,
    pub ffn_hidden: usize,
    pub patches: usize,
    pub layers: usize,
    /// Layers with index `>= cross_layer_start` are cross-token layers.
    pub cross_layer_start: usize,
    pub positional_embeddings: bool,
    /// Use one parameter set for both exchange steps of a cross layer.
    pub share_cross_steps: bool,
}

impl StreamParams {
    /// Registers `{prefix}/reg`, `{prefix}/ctn`, `{prefix}/pos` and
    /// `{prefix}/layer{i}/...`; the second step of a cross layer lives under
    /// `{prefix}/layer{i}/step2/...` unless steps share weights.
    pub fn build(store: &mut ParamStore, init: &mut Init, prefix: &str, layout: &StreamLayout) -> Self {
        let d = layout.token_dim;
        let reg = store.add(format!("{prefix}/reg"), init.normal(&[1, d], TOKEN_INIT_STD));
        let ctn = store.add(format!("{prefix}/ctn"), init.normal(&[1, d], TOKEN_INIT_STD));
        let positional = layout
            .positional_embeddings
            .then(|| store.add(format!("{prefix}/pos"), init.normal(&[layout.patches + 3, d], TOKEN_INIT_STD)));
        let layers = (0..layout.layers)
            .map(|i| {
                let path = format!("{prefix}/layer{i}");
                let first = LayerParams::build(store, init, &path, d, layout.ffn_hidden);
                if i < layout.cross_layer_start {
                    StreamLayer::Plain(first)
                } else if layout.share_cross_steps {
                    StreamLayer::Cross { first, second: first }
                } else {
                    let second = LayerParams::build(store, init, &format!("{path}/step2"), d, layout.ffn_hidden);
                    StreamLayer::Cross { first, second }
                }
            })
            .collect();
        Self { reg, ctn, positional, layers }
    }
}

/// Builds `[reg, va, patches…, ctn]` (plus positional embeddings when the
/// stream has them).
pub fn assemble_sequence<'t>(
    p: &Bound<'t>,
    stream: &StreamParams,
    patches: Var<'t>,
    va_token: Var<'t>,
) -> Result<TokenSequence<'t>> {
    let d = p[stream.reg].shape()[1];
    let (ps, vs) = (patches.shape(), va_token.shape());
    if ps.len() != 2 || ps[1] != d || vs != [1, d] {
        return Err(Error::Input(format!("patches {ps:?} and va token {vs:?} must have width {d}")));
    }
    let mut tokens = concat(&[p[stream.reg], va_token, patches, p[stream.ctn]], 0)?;
    if let Some(pos) = stream.positional {
        if p[pos].shape()[0] != tokens.shape()[0] {
            return Err(Error::Input(format!(
                "{} tokens but positional table has {} rows",
                tokens.shape()[0],
                p[pos].shape()[0]
            )));
        }
        tokens = tokens.add(p[pos])?;
    }
    TokenSequence::new(tokens)
}

fn check_pair(a: &TokenSequence<'_>, b: &TokenSequence<'_>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Input(format!("sequence lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Step one: each stream's first sub-layer sees its own body plus the other
/// stream's cross-token. Returns the temporary sequences
/// `[ẑ_hor ‖ ẑ_ctn_ver]` and `[ẑ_ver ‖ ẑ_ctn_hor]`.
pub fn cross_token_step1<'t>(
    p: &Bound<'t>,
    hor: &LayerParams,
    ver: &LayerParams,
    z_hor: &TokenSequence<'t>,
    z_ver: &TokenSequence<'t>,
    cfg: &AttentionConfig,
) -> Result<(TokenSequence<'t>, TokenSequence<'t>)> {
    check_pair(z_hor, z_ver)?;
    let hor_in = TokenSequence::from_parts(z_hor.body()?, z_ver.ctn()?)?;
    let ver_in = TokenSequence::from_parts(z_ver.body()?, z_hor.ctn()?)?;
    let hor_out = TokenSequence::new(encoder_layer(p, hor, hor_in.tokens(), cfg)?)?;
    let ver_out = TokenSequence::new(encoder_layer(p, ver, ver_in.tokens(), cfg)?)?;
    Ok((hor_out, ver_out))
}

/// Both exchange steps of a cross-token layer. On return each stream holds
/// its own body and its own (updated) cross-token in the last slot.
pub fn cross_token_layer<'t>(
    p: &Bound<'t>,
    hor: &StreamLayer,
    ver: &StreamLayer,
    z_hor: &TokenSequence<'t>,
    z_ver: &TokenSequence<'t>,
    cfg: &AttentionConfig,
) -> Result<(TokenSequence<'t>, TokenSequence<'t>)> {
    let (
        StreamLayer::Cross { first: hor_first, second: hor_second },
        StreamLayer::Cross { first: ver_first, second: ver_second },
    ) = (hor, ver)
    else {
        return Err(Error::config("cross_token_layer needs cross layers in both streams"));
    };
    let (tmp_hor, tmp_ver) = cross_token_step1(p, hor_first, ver_first, z_hor, z_ver, cfg)?;
    // tmp_hor's last slot is the vertical cross-token and vice versa.
    let hor_in = TokenSequence::from_parts(tmp_hor.body()?, tmp_ver.ctn()?)?;
    let ver_in = TokenSequence::from_parts(tmp_ver.body()?, tmp_hor.ctn()?)?;
    let hor_out = TokenSequence::new(encoder_layer(p, hor_second, hor_in.tokens(), cfg)?)?;
    let ver_out = TokenSequence::new(encoder_layer(p, ver_second, ver_in.tokens(), cfg)?)?;
    Ok((hor_out, ver_out))
}

/// Runs a stream's plain layer; errors on cross layers.
pub fn plain_layer<'t>(
    p: &Bound<'t>,
    layer: &StreamLayer,
    z: &TokenSequence<'t>,
    cfg: &AttentionConfig,
) -> Result<TokenSequence<'t>> {
    match layer {
        StreamLayer::Plain(params) => TokenSequence::new(encoder_layer(p, params, z.tokens(), cfg)?),
        StreamLayer::Cross { .. } => Err(Error::config("cross layer used without a partner stream")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{gradcheck, Tape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const CFG: AttentionConfig = AttentionConfig { heads: 2, ln_eps: 1e-5 };

    fn random(shape: [usize; 2], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(shape, (0..shape[0] * shape[1]).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn layout(patches: usize, layers: usize, cross: usize) -> StreamLayout {
        StreamLayout {
            token_dim: 8,
            ffn_hidden: 16,
            patches,
            layers,
            cross_layer_start: cross,
            positional_embeddings: true,
            share_cross_steps: false,
        }
    }

    fn zero_residual_outputs(store: &mut ParamStore, layer: &LayerParams) {
        for id in layer.residual_output_ids() {
            store.get_mut(id).data_mut().fill(0.0);
        }
    }

    #[test]
    fn zeroed_outputs_make_identity() {
        let mut store = ParamStore::new();
        let layer = LayerParams::build(&mut store, &mut Init::new(ChaCha8Rng::seed_from_u64(0)), "l", 8, 16);
        zero_residual_outputs(&mut store, &layer);
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let z = tape.constant(random([7, 8], 1));
        let out = encoder_layer(&p, &layer, z, &CFG).unwrap();
        assert_eq!(out.value().data(), z.value().data());
    }

    #[test]
    fn layer_preserves_length() {
        let mut store = ParamStore::new();
        let layer = LayerParams::build(&mut store, &mut Init::new(ChaCha8Rng::seed_from_u64(0)), "l", 8, 16);
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        for n in [4, 7, 19, 67] {
            let z = tape.constant(random([n, 8], n as u64));
            assert_eq!(encoder_layer(&p, &layer, z, &CFG).unwrap().shape(), vec![n, 8]);
        }
    }

    #[test]
    fn layer_gradcheck() {
        let mut store = ParamStore::new();
        let layer = LayerParams::build(&mut store, &mut Init::new(ChaCha8Rng::seed_from_u64(5)), "l", 8, 16);
        let mut inputs = store.tensors().to_vec();
        inputs.push(random([5, 8], 2).with_grad());
        let report = gradcheck(&inputs, |_, vars| {
            let (params, z) = vars.split_at(vars.len() - 1);
            let p = Bound::from_vars(params.to_vec());
            let out = encoder_layer(&p, &layer, z[0], &CFG)?;
            let w = out.tape().constant(random([5, 8], 3));
            Ok::<_, Error>(out.mul(w)?.sum())
        })
        .unwrap();
        assert!(report.passed(1e-4), "{report:?}");
    }

    #[test]
    fn heads_must_divide_width() {
        let mut store = ParamStore::new();
        let layer = LayerParams::build(&mut store, &mut Init::new(ChaCha8Rng::seed_from_u64(0)), "l", 8, 16);
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let bad = AttentionConfig { heads: 3, ln_eps: 1e-5 };
        assert!(encoder_layer(&p, &layer, tape.constant(random([7, 8], 1)), &bad).is_err());
    }

    #[test]
    fn assembled_order() {
        let mut store = ParamStore::new();
        let mut lay = layout(4, 1, 1);
        lay.positional_embeddings = false;
        let stream = StreamParams::build(&mut store, &mut Init::new(ChaCha8Rng::seed_from_u64(0)), "hor", &lay);
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let patches = tape.constant(random([4, 8], 1));
        let va = tape.constant(random([1, 8], 2));
        let seq = assemble_sequence(&p, &stream, patches, va).unwrap();
        assert_eq!(seq.len(), 7);
        assert_eq!(seq.reg().unwrap().value().data(), store.get(stream.reg).data());
        assert_eq!(seq.ctn().unwrap().value().data(), store.get(stream.ctn).data());
        assert_eq!(seq.va().unwrap().value().data(), va.value().data());
        assert_eq!(seq.patches().unwrap().value().data(), patches.value().data());
    }

    fn dual(lay: &StreamLayout, seed: u64) -> (ParamStore, StreamParams, StreamParams) {
        let mut store = ParamStore::new();
        let mut init = Init::new(ChaCha8Rng::seed_from_u64(seed));
        let hor = StreamParams::build(&mut store, &mut init, "hor", lay);
        let ver = StreamParams::build(&mut store, &mut init, "ver", lay);
        (store, hor, ver)
    }

    #[test]
    fn cross_layer_zeroed_is_identity_and_keeps_ctn_last() {
        let lay = layout(4, 1, 0);
        let (mut store, hor, ver) = dual(&lay, 3);
        for s in [&hor, &ver] {
            if let StreamLayer::Cross { first, second } = s.layers[0] {
                zero_residual_outputs(&mut store, &first);
                zero_residual_outputs(&mut store, &second);
            }
        }
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let zh = TokenSequence::new(tape.constant(random([7, 8], 10))).unwrap();
        let zv = TokenSequence::new(tape.constant(random([7, 8], 11))).unwrap();
        let (oh, ov) = cross_token_layer(&p, &hor.layers[0], &ver.layers[0], &zh, &zv, &CFG).unwrap();
        assert_eq!(oh.tokens().value().data(), zh.tokens().value().data());
        assert_eq!(ov.tokens().value().data(), zv.tokens().value().data());
    }

    #[test]
    fn step_one_depends_on_other_view_only_through_its_ctn() {
        let lay = layout(4, 1, 0);
        let (store, hor, ver) = dual(&lay, 4);
        let (StreamLayer::Cross { first: hf, .. }, StreamLayer::Cross { first: vf, .. }) = (hor.layers[0], ver.layers[0])
        else {
            unreachable!()
        };
        let tape = Tape::new();
        let p = store.bind_frozen(&tape);
        let zh = TokenSequence::new(tape.constant(random([7, 8], 20))).unwrap();
        let zv = random([7, 8], 21);
        let mut zv_perturbed = random([7, 8], 22);
        zv_perturbed.data_mut()[48..].copy_from_slice(&zv.data()[48..]);
        let a = TokenSequence::new(tape.constant(zv)).unwrap();
        let b = TokenSequence::new(tape.constant(zv_perturbed)).unwrap();
        let (ha, _) = cross_token_step1(&p, &hf, &vf, &zh, &a, &CFG).unwrap();
        let (hb, _) = cross_token_step1(&p, &hf, &vf, &zh, &b, &CFG).unwrap();
        assert_eq!(ha.tokens().value().data(), hb.tokens().value().data());
    }

    #[test]
    fn shared_steps_register_fewer_params() {
        let mut shared = layout(4, 2, 1);
        shared.share_cross_steps = true;
        let (a, ..) = dual(&layout(4, 2, 1), 0);
        let (b, ..) = dual(&shared, 0);
        assert!(b.len() < a.len());
        assert!(a.id("hor/layer1/step2/msa/wq").is_some());
        assert!(b.id("hor/layer1/step2/msa/wq").is_none());
    }
}
