//! Forward kernels and their backward rules.

use super::conv::{self, ConvGeometry};
use super::tape::{Node, Var};
use super::{shape_err, Tensor, TensorError};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddRow(usize, usize),
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    Relu(usize),
    Gelu(usize),
    Softmax { input: usize, outer: usize, len: usize, inner: usize },
    LayerNorm { input: usize, gamma: usize, beta: usize, eps: f64 },
    Concat { inputs: Vec<usize>, outer: usize, widths: Vec<usize> },
    Slice { input: usize, outer: usize, in_width: usize, offset: usize, width: usize },
    Transpose { input: usize, rows: usize, cols: usize },
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    Conv2d { input: usize, weight: usize, bias: usize, geom: ConvGeometry },
}

impl Op {
    pub fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => vec![*a, *b],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::Gelu(a)
            | Op::Reshape(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::Softmax { input, .. } | Op::Slice { input, .. } | Op::Transpose { input, .. } => {
                vec![*input]
            }
            Op::LayerNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Conv2d { input, weight, bias, .. } => vec![*input, *weight, *bias],
        }
    }

    /// Vector-Jacobian products for each input, given d(loss)/d(output).
    pub fn backward(&self, g: &[f64], nodes: &[Node], out: &Tensor) -> Vec<(usize, Vec<f64>)> {
        let val = |i: usize| nodes[i].value.data();
        match *self {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(a, g.to_vec()), (b, g.to_vec())],
            Op::Sub(a, b) => vec![(a, g.to_vec()), (b, g.iter().map(|x| -x).collect())],
            Op::Mul(a, b) => {
                let (va, vb) = (val(a), val(b));
                vec![
                    (a, g.iter().zip(vb).map(|(g, y)| g * y).collect()),
                    (b, g.iter().zip(va).map(|(g, x)| g * x).collect()),
                ]
            }
            Op::Scale(a, s) => vec![(a, g.iter().map(|x| x * s).collect())],
            Op::AddScalar(a) | Op::Reshape(a) => vec![(a, g.to_vec())],
            Op::AddRow(a, b) => {
                let n = nodes[b].value.numel();
                let mut gb = vec![0.0; n];
                for row in g.chunks_exact(n) {
                    gb.iter_mut().zip(row).for_each(|(acc, x)| *acc += x);
                }
                vec![(a, g.to_vec()), (b, gb)]
            }
            Op::MatMul { a, b, m, k, n } => {
                let mut ga = Vec::new();
                let mut gb = Vec::new();
                if nodes[a].requires_grad {
                    ga = matmul_nt(g, val(b), m, n, k);
                }
                if nodes[b].requires_grad {
                    gb = matmul_tn(val(a), g, m, k, n);
                }
                vec![(a, ga), (b, gb)]
            }
            Op::Relu(a) => {
                vec![(a, g.iter().zip(val(a)).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect())]
            }
            Op::Gelu(a) => vec![(a, g.iter().zip(val(a)).map(|(g, &x)| g * gelu_grad(x)).collect())],
            Op::Softmax { input, outer, len, inner } => {
                let y = out.data();
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let dot: f64 = (0..len).map(|j| g[base + j * inner] * y[base + j * inner]).sum();
                        for j in 0..len {
                            let idx = base + j * inner;
                            gx[idx] = y[idx] * (g[idx] - dot);
                        }
                    }
                }
                vec![(input, gx)]
            }
            Op::LayerNorm { input, gamma, beta, eps } => {
                let x = val(input);
                let gm = val(gamma);
                let d = gm.len();
                let mut gx = vec![0.0; x.len()];
                let mut ggamma = vec![0.0; d];
                let mut gbeta = vec![0.0; d];
                for (r, row) in x.chunks_exact(d).enumerate() {
                    let (mean, inv_std) = row_stats(row, eps);
                    let grow = &g[r * d..(r + 1) * d];
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for j in 0..d {
                        let xhat = (row[j] - mean) * inv_std;
                        let dxhat = grow[j] * gm[j];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                        ggamma[j] += grow[j] * xhat;
                        gbeta[j] += grow[j];
                    }
                    mean_dxhat /= d as f64;
                    mean_dxhat_xhat /= d as f64;
                    for j in 0..d {
                        let xhat = (row[j] - mean) * inv_std;
                        let dxhat = grow[j] * gm[j];
                        gx[r * d + j] = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
                vec![(input, gx), (gamma, ggamma), (beta, gbeta)]
            }
            Op::Concat { ref inputs, outer, ref widths } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                let mut res = Vec::with_capacity(inputs.len());
                for (&inp, &w) in inputs.iter().zip(widths) {
                    let mut gi = Vec::with_capacity(outer * w);
                    for o in 0..outer {
                        gi.extend_from_slice(&g[o * total + offset..o * total + offset + w]);
                    }
                    res.push((inp, gi));
                    offset += w;
                }
                res
            }
            Op::Slice { input, outer, in_width, offset, width } => {
                let mut gi = vec![0.0; outer * in_width];
                for o in 0..outer {
                    gi[o * in_width + offset..o * in_width + offset + width]
                        .copy_from_slice(&g[o * width..(o + 1) * width]);
                }
                vec![(input, gi)]
            }
            Op::Transpose { input, rows, cols } => vec![(input, transpose(g, cols, rows))],
            Op::Sum(a) => vec![(a, vec![g[0]; nodes[a].value.numel()])],
            Op::Mean(a) => {
                let n = nodes[a].value.numel();
                vec![(a, vec![g[0] / n as f64; n])]
            }
            Op::Conv2d { input, weight, bias, geom } => {
                let (gx, gw, gb) = conv::conv2d_backward(
                    g,
                    val(input),
                    val(weight),
                    &geom,
                    nodes[input].requires_grad,
                );
                vec![(input, gx), (weight, gw), (bias, gb)]
            }
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    (mean, 1.0 / (var + eps).sqrt())
}

/// `a[m×k] · b[k×n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (c, b) in crow.iter_mut().zip(brow) {
                *c += aip * b;
            }
        }
    }
    c
}

/// `a[m×k] · b[n×k]ᵀ`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// `a[m×k]ᵀ · b[m×n]`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for (c, b) in crow.iter_mut().zip(brow) {
                *c += aip * b;
            }
        }
    }
    c
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'t> Var<'t> {
    fn same_tape(&self, other: &Var<'_>) -> Result<(), TensorError> {
        if self.tape.owns(other) {
            Ok(())
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    fn zip_same(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.tape.push(Tensor::new(a.shape(), data)?, op))
    }

    fn map(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let a = self.value();
        let data = a.data().iter().map(|&x| f(x)).collect();
        self.tape.push(Tensor::new(a.shape(), data).expect("same shape"), op)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.zip_same(other, "add", |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.zip_same(other, "sub", |x, y| x - y, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.zip_same(other, "mul", |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.map(|x| x * s, Op::Scale(self.id, s))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.map(|x| x + c, Op::AddScalar(self.id))
    }

    /// Adds a length-`n` vector to every length-`n` row of `self`.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&row)?;
        let (a, b) = (self.value(), row.value());
        let n = b.numel();
        if a.shape().last() != Some(&n) {
            return Err(shape_err("add_row", format!("{:?} + row of {n}", a.shape())));
        }
        let mut data = a.data().to_vec();
        for r in data.chunks_exact_mut(n) {
            r.iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
        Ok(self.tape.push(Tensor::new(a.shape(), data)?, Op::AddRow(self.id, row.id)))
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("{sa:?} · {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul(a.data(), b.data(), m, k, n);
        Ok(self.tape.push(Tensor::new([m, n], data)?, Op::MatMul { a: self.id, b: other.id, m, k, n }))
    }

    pub fn relu(self) -> Var<'t> {
        self.map(|x| x.max(0.0), Op::Relu(self.id))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(self) -> Var<'t> {
        self.map(gelu, Op::Gelu(self.id))
    }

    /// Softmax along `axis`, with the per-slice maximum subtracted first.
    pub fn softmax(self, axis: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        if axis >= a.shape().len() {
            return Err(shape_err("softmax", format!("axis {axis} for shape {:?}", a.shape())));
        }
        let (outer, len, inner) = split_axis(a.shape(), axis);
        let x = a.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let max = (0..len).map(|j| x[base + j * inner]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x[base + j * inner] - max).exp();
                    y[base + j * inner] = e;
                    total += e;
                }
                for j in 0..len {
                    y[base + j * inner] /= total;
                }
            }
        }
        Ok(self.tape.push(Tensor::new(a.shape(), y)?, Op::Softmax { input: self.id, outer, len, inner }))
    }

    /// Normalizes each last-axis slice to zero mean and unit (biased)
    /// variance, then applies `gamma * x + beta`.
    pub fn layer_norm(self, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Result<Var<'t>, TensorError> {
        self.same_tape(&gamma)?;
        self.same_tape(&beta)?;
        let (x, gm, bt) = (self.value(), gamma.value(), beta.value());
        let d = *x.shape().last().expect("non-empty shape");
        if gm.numel() != d || bt.numel() != d {
            return Err(shape_err(
                "layer_norm",
                format!("width {d} vs gamma {:?} beta {:?}", gm.shape(), bt.shape()),
            ));
        }
        let mut y = Vec::with_capacity(x.numel());
        for row in x.data().chunks_exact(d) {
            let (mean, inv_std) = row_stats(row, eps);
            for j in 0..d {
                y.push((row[j] - mean) * inv_std * gm.data()[j] + bt.data()[j]);
            }
        }
        Ok(self.tape.push(
            Tensor::new(x.shape(), y)?,
            Op::LayerNorm { input: self.id, gamma: gamma.id, beta: beta.id, eps },
        ))
    }

    /// Contiguous range `[start, start+len)` along `axis`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let shape = a.shape();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(shape_err("slice", format!("[{start}, {}) on axis {axis} of {shape:?}", start + len)));
        }
        let (outer, extent, inner) = split_axis(shape, axis);
        let in_width = extent * inner;
        let (offset, width) = (start * inner, len * inner);
        let mut data = Vec::with_capacity(outer * width);
        for o in 0..outer {
            data.extend_from_slice(&a.data()[o * in_width + offset..o * in_width + offset + width]);
        }
        let mut new_shape = shape.to_vec();
        new_shape[axis] = len;
        Ok(self.tape.push(
            Tensor::new(new_shape, data)?,
            Op::Slice { input: self.id, outer, in_width, offset, width },
        ))
    }

    /// Row `i` of a 2-D tensor as a `1×n` tensor.
    pub fn row(self, i: usize) -> Result<Var<'t>, TensorError> {
        self.slice(0, i, 1)
    }

    pub fn transpose(self) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let &[rows, cols] = a.shape() else {
            return Err(shape_err("transpose", format!("expected 2-D, got {:?}", a.shape())));
        };
        let data = transpose(a.data(), rows, cols);
        Ok(self.tape.push(Tensor::new([cols, rows], data)?, Op::Transpose { input: self.id, rows, cols }))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>, TensorError> {
        let a = self.value();
        let t = Tensor::new(shape, a.data().to_vec()).map_err(|e| shape_err("reshape", e.to_string()))?;
        Ok(self.tape.push(t, Op::Reshape(self.id)))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let a = self.value();
        let s = a.data().iter().sum::<f64>() / a.numel() as f64;
        self.tape.push(Tensor::scalar(s), Op::Mean(self.id))
    }

    /// 2-D convolution of a `[C, H, W]` input with `[O, C, k, k]` weights and
    /// a length-`O` bias.
    pub fn conv2d(
        self,
        weight: Var<'t>,
        bias: Var<'t>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t>, TensorError> {
        self.same_tape(&weight)?;
        self.same_tape(&bias)?;
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let geom = ConvGeometry::new(x.shape(), w.shape(), b.shape(), stride, padding)?;
        let out = conv::conv2d_forward(x.data(), w.data(), b.data(), &geom);
        Ok(self.tape.push(
            Tensor::new([geom.out_channels, geom.out_h, geom.out_w], out)?,
            Op::Conv2d { input: self.id, weight: weight.id, bias: bias.id, geom },
        ))
    }
}

/// Joins tensors along `axis`; every other extent must agree.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, TensorError> {
    let first = parts.first().ok_or_else(|| shape_err("concat", "no inputs"))?;
    let tape = first.tape;
    let base = first.value().shape().to_vec();
    if axis >= base.len() {
        return Err(shape_err("concat", format!("axis {axis} for shape {base:?}")));
    }
    let (outer, _, inner) = split_axis(&base, axis);
    let mut values = Vec::with_capacity(parts.len());
    let mut axis_total = 0;
    for p in parts {
        first.same_tape(p)?;
        let v = p.value();
        let s = v.shape();
        let compatible = s.len() == base.len()
            && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(shape_err("concat", format!("{s:?} does not fit {base:?} on axis {axis}")));
        }
        axis_total += s[axis];
        values.push(v);
    }
    let widths: Vec<usize> = values.iter().map(|v| v.shape()[axis] * inner).collect();
    let mut data = Vec::with_capacity(outer * axis_total * inner);
    for o in 0..outer {
        for (v, &w) in values.iter().zip(&widths) {
            data.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = base;
    shape[axis] = axis_total;
    Ok(tape.push(
        Tensor::new(shape, data)?,
        Op::Concat { inputs: parts.iter().map(|p| p.id).collect(), outer, widths },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_value() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let i = tape.constant(Tensor::eye(2));
        assert_eq!(i.matmul(x).unwrap().value().data(), x.value().data());

        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.constant(t(&[2, 1], &[1., 1.]));
        let c = a.matmul(b).unwrap();
        assert_eq!(c.shape(), vec![2, 1]);
        assert_eq!(c.value().data(), &[3., 7.]);
        assert!(b.matmul(a).is_err());
    }

    #[test]
    fn softmax_values() {
        let tape = Tape::new();
        let u = tape.constant(t(&[3], &[0., 0., 0.])).softmax(0).unwrap();
        for &p in u.value().data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = tape.constant(t(&[3], &[1., 2., 3.])).softmax(0).unwrap();
        let expected = [0.090_030_573_170_380_46, 0.244_728_471_054_797_64, 0.665_240_955_774_821_8];
        for (p, e) in s.value().data().iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{p} vs {e}");
        }
        let big = tape.constant(t(&[3], &[1000., 0., 0.])).softmax(0).unwrap();
        let v = big.value();
        assert!((v.data()[0] - 1.0).abs() < 1e-12);
        assert!(v.data()[1] < 1e-12 && v.is_finite());
    }

    #[test]
    fn softmax_inner_axis() {
        let tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[1., 5., 2., 3., 0., 4.]));
        let y = x.softmax(0).unwrap().value();
        for c in 0..3 {
            assert!((y.get(&[0, c]) + y.get(&[1, c]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_cases() {
        let tape = Tape::new();
        let ones = tape.constant(Tensor::full([2], 1.0));
        let zeros = tape.constant(Tensor::zeros([2]));
        let y = tape.constant(t(&[1, 2], &[1., 3.])).layer_norm(ones, zeros, 0.0).unwrap();
        assert_eq!(y.value().data(), &[-1.0, 1.0]);

        let g4 = tape.constant(Tensor::full([4], 1.0));
        let b4 = tape.constant(Tensor::zeros([4]));
        let c = tape.constant(Tensor::full([1, 4], 2.5)).layer_norm(g4, b4, 1e-5).unwrap();
        assert!(c.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_concat_slice_transpose() {
        let tape = Tape::new();
        assert_eq!(tape.scalar(-0.3).relu().item(), 0.0);
        let a = tape.constant(Tensor::zeros([1, 2]));
        let b = tape.constant(Tensor::full([1, 3], 1.0));
        let c = concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), vec![1, 5]);
        assert_eq!(c.slice(1, 2, 3).unwrap().value().data(), &[1.0; 3]);
        let m = tape.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        assert_eq!(m.transpose().unwrap().value().data(), &[1., 4., 2., 5., 3., 6.]);
        let rows = concat(&[m, m], 0).unwrap();
        assert_eq!(rows.shape(), vec![4, 3]);
        assert!(concat(&[a, m], 0).is_err());
    }

    #[test]
    fn add_row_broadcast() {
        let tape = Tape::new();
        let m = tape.constant(Tensor::zeros([2, 3]));
        let r = tape.constant(t(&[3], &[1., 2., 3.]));
        assert_eq!(m.add_row(r).unwrap().value().data(), &[1., 2., 3., 1., 2., 3.]);
        let bad = tape.constant(Tensor::zeros([2]));
        assert!(m.add_row(bad).is_err());
    }
}
