//! Single-image 2-D convolution through im2col.

use super::ops::{matmul, matmul_nt, matmul_tn};
use super::{shape_err, TensorError};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input: &[usize],
        weight: &[usize],
        bias: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        let &[c, h, w] = input else {
            return Err(shape_err("conv2d", format!("input must be [C,H,W], got {input:?}")));
        };
        let &[o, wc, kh, kw] = weight else {
            return Err(shape_err("conv2d", format!("weight must be [O,C,k,k], got {weight:?}")));
        };
        if wc != c || kh != kw || bias.iter().product::<usize>() != o || stride == 0 {
            return Err(shape_err(
                "conv2d",
                format!("input {input:?}, weight {weight:?}, bias {bias:?}, stride {stride}"),
            ));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(shape_err("conv2d", "kernel larger than padded input"));
        }
        Ok(Self {
            in_channels: c,
            in_h: h,
            in_w: w,
            out_channels: o,
            kernel: kh,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel for output (oy, ox) and kernel tap (ky, kx), if inside.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.padding)?;
        let x = (ox * self.stride + kx).checked_sub(self.padding)?;
        (y < self.in_h && x < self.in_w).then_some((y, x))
    }
}

fn im2col(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let n = g.positions();
    let k = g.kernel;
    let mut cols = vec![0.0; g.patch_len() * n];
    for c in 0..g.in_channels {
        let plane = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                            dst[oy * g.out_w + ox] = plane[y * g.in_w + x];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let n = g.positions();
    let k = g.kernel;
    let mut x = vec![0.0; g.in_channels * g.in_h * g.in_w];
    for c in 0..g.in_channels {
        let plane = &mut x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x)) = g.source(oy, ox, ky, kx) {
                            plane[y * g.in_w + x] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let cols = im2col(x, g);
    let n = g.positions();
    let mut out = matmul(w, &cols, g.out_channels, g.patch_len(), n);
    for (o, row) in out.chunks_exact_mut(n).enumerate() {
        row.iter_mut().for_each(|v| *v += b[o]);
    }
    out
}

/// Returns (d input, d weight, d bias).
pub(crate) fn conv2d_backward(
    grad: &[f64],
    x: &[f64],
    w: &[f64],
    g: &ConvGeometry,
    need_input: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = g.positions();
    let cols = im2col(x, g);
    let gw = matmul_nt(grad, &cols, g.out_channels, n, g.patch_len());
    let gb = grad.chunks_exact(n).map(|r| r.iter().sum()).collect();
    let gx = if need_input {
        let gcols = matmul_tn(w, grad, g.out_channels, g.patch_len(), n);
        col2im(&gcols, g)
    } else {
        Vec::new()
    };
    (gx, gw, gb)
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    /// Direct nested-loop convolution used as an oracle.
    fn naive(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
        let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (o, k) = (w.shape()[0], w.shape()[2]);
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let y = (oy * stride + ky) as isize - pad as isize;
                                let xx = (ox * stride + kx) as isize - pad as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                    acc += x.get(&[ic, y as usize, xx as usize]) * w.get(&[oc, ic, ky, kx]);
                                }
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_convolution() {
        let x = Tensor::new([2, 5, 6], (0..60).map(|i| ((i * 7 % 11) as f64) / 10.0 - 0.4).collect()).unwrap();
        let w = Tensor::new([3, 2, 3, 3], (0..54).map(|i| ((i * 5 % 13) as f64) / 13.0 - 0.5).collect()).unwrap();
        let b = [0.1, -0.2, 0.3];
        for (stride, pad) in [(1, 1), (2, 1), (2, 0), (1, 0)] {
            let tape = Tape::new();
            let y = tape
                .constant(x.clone())
                .conv2d(tape.constant(w.clone()), tape.constant(Tensor::from_vec(b.to_vec())), stride, pad)
                .unwrap();
            let expected = naive(&x, &w, &b, stride, pad);
            for (a, e) in y.value().data().iter().zip(&expected) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_padding_stride_two_halves_extents() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros([1, 64, 64]));
        let w = tape.constant(Tensor::zeros([4, 1, 3, 3]));
        let b = tape.constant(Tensor::zeros([4]));
        assert_eq!(x.conv2d(w, b, 2, 1).unwrap().shape(), vec![4, 32, 32]);
        let w1 = tape.constant(Tensor::zeros([4, 1, 1, 1]));
        assert_eq!(x.conv2d(w1, b, 2, 0).unwrap().shape(), vec![4, 32, 32]);
    }
}
