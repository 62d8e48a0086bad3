//! 3x3, stride-1, zero-padded convolution (cross-correlation) and ReLU.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

const K: usize = 3;

/// Channel and spatial sizes of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * K * K
    }

    pub fn input_len(&self) -> usize {
        self.c_in * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.c_out * self.height * self.width
    }

    fn check(&self, input: usize, weight: usize, bias: usize) -> Result<()> {
        if input != self.input_len() || weight != self.weight_len() || bias != self.c_out {
            return Err(Error::ShapeMismatch(format!(
                "conv {self:?}: input {input}, weight {weight}, bias {bias}"
            )));
        }
        Ok(())
    }
}

/// Valid output range along one axis for kernel tap `k` (padding 1).
#[inline]
fn span(k: usize, n: usize) -> (usize, usize) {
    // out[y] reads in[y + k - 1]
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { n - 1 } else { n };
    (lo, hi)
}

/// Forward pass on raw slices; `out` is overwritten.
pub fn conv2d_forward_raw<T: Scalar>(
    shape: ConvShape,
    input: &[T],
    weight: &[T],
    bias: &[T],
    out: &mut [T],
) -> Result<()> {
    shape.check(input.len(), weight.len(), bias.len())?;
    if out.len() != shape.output_len() {
        return Err(Error::ShapeMismatch("conv output buffer".into()));
    }
    let ConvShape {
        c_in,
        c_out,
        height: h,
        width: w,
    } = shape;
    let plane = h * w;
    for co in 0..c_out {
        let o = &mut out[co * plane..(co + 1) * plane];
        o.fill(bias[co]);
        for ci in 0..c_in {
            let inp = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..K {
                let (y0, y1) = span(ky, h);
                for kx in 0..K {
                    let wv = weight[((co * c_in + ci) * K + ky) * K + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    let (x0, x1) = span(kx, w);
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        for (ov, &iv) in orow.iter_mut().zip(irow) {
                            *ov = *ov + wv * iv;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Backward pass on raw slices. `grad_weight` and `grad_bias` are
/// accumulated into; `grad_input` (when given) is overwritten.
pub fn conv2d_backward_raw<T: Scalar>(
    shape: ConvShape,
    grad_out: &[T],
    input: &[T],
    weight: &[T],
    grad_input: Option<&mut [T]>,
    grad_weight: &mut [T],
    grad_bias: &mut [T],
) -> Result<()> {
    shape.check(input.len(), weight.len(), grad_bias.len())?;
    if grad_out.len() != shape.output_len() || grad_weight.len() != shape.weight_len() {
        return Err(Error::ShapeMismatch("conv backward buffers".into()));
    }
    let ConvShape {
        c_in,
        c_out,
        height: h,
        width: w,
    } = shape;
    let plane = h * w;
    for co in 0..c_out {
        let g = &grad_out[co * plane..(co + 1) * plane];
        grad_bias[co] = grad_bias[co] + g.iter().copied().sum::<T>();
        for ci in 0..c_in {
            let inp = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..K {
                let (y0, y1) = span(ky, h);
                for kx in 0..K {
                    let (x0, x1) = span(kx, w);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let iy = y + ky - 1;
                        let grow = &g[y * w + x0..y * w + x1];
                        let irow = &inp[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                        acc = acc + grow.iter().zip(irow).map(|(&a, &b)| a * b).sum::<T>();
                    }
                    let wi = ((co * c_in + ci) * K + ky) * K + kx;
                    grad_weight[wi] = grad_weight[wi] + acc;
                }
            }
        }
    }
    if let Some(gi) = grad_input {
        if gi.len() != shape.input_len() {
            return Err(Error::ShapeMismatch("conv grad_input buffer".into()));
        }
        gi.fill(T::zero());
        for co in 0..c_out {
            let g = &grad_out[co * plane..(co + 1) * plane];
            for ci in 0..c_in {
                let gin = &mut gi[ci * plane..(ci + 1) * plane];
                for ky in 0..K {
                    let (y0, y1) = span(ky, h);
                    for kx in 0..K {
                        let wv = weight[((co * c_in + ci) * K + ky) * K + kx];
                        if wv == T::zero() {
                            continue;
                        }
                        let (x0, x1) = span(kx, w);
                        for y in y0..y1 {
                            let iy = y + ky - 1;
                            let grow = &g[y * w + x0..y * w + x1];
                            let irow = &mut gin[iy * w + x0 + kx - 1..iy * w + x1 + kx - 1];
                            for (iv, &gv) in irow.iter_mut().zip(grow) {
                                *iv = *iv + wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn conv_shape<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<ConvShape> {
    let (c_in, height, width) = input.chw()?;
    let (c_out, wc_in, kh, kw) = match weight.shape()[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::ShapeMismatch(format!(
                "conv weight must be 4-D, got {:?}",
                weight.shape()
            )))
        }
    };
    if wc_in != c_in || kh != K || kw != K || bias.shape() != [c_out] {
        return Err(Error::ShapeMismatch(format!(
            "input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    Ok(ConvShape {
        c_in,
        c_out,
        height,
        width,
    })
}

/// `C_in x H x W` input, `C_out x C_in x 3 x 3` weight, `C_out` bias.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = conv_shape(input, weight, bias)?;
    let mut out = Tensor::zeros(vec![shape.c_out, shape.height, shape.width]);
    conv2d_forward_raw(shape, input.data(), weight.data(), bias.data(), out.data_mut())?;
    Ok(out)
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let c_out = weight.shape().first().copied().unwrap_or(0);
    let bias = Tensor::zeros(vec![c_out]);
    let shape = conv_shape(input, weight, &bias)?;
    if grad_out.shape() != [shape.c_out, shape.height, shape.width] {
        return Err(Error::ShapeMismatch(format!(
            "grad_out {:?} does not match conv output",
            grad_out.shape()
        )));
    }
    let mut gi = Tensor::zeros(input.shape().to_vec());
    let mut gw = Tensor::zeros(weight.shape().to_vec());
    let mut gb = Tensor::zeros(vec![c_out]);
    conv2d_backward_raw(
        shape,
        grad_out.data(),
        input.data(),
        weight.data(),
        Some(gi.data_mut()),
        gw.data_mut(),
        gb.data_mut(),
    )?;
    Ok((gi, gw, gb))
}

pub fn relu_in_place<T: Scalar>(xs: &mut [T]) {
    for x in xs {
        if !(*x > T::zero()) {
            *x = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the forward input was not strictly positive.
pub fn relu_backward_in_place<T: Scalar>(grad: &mut [T], forward_input: &[T]) {
    for (g, &x) in grad.iter_mut().zip(forward_input) {
        if !(x > T::zero()) {
            *g = T::zero();
        }
    }
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    relu_in_place(out.data_mut());
    out
}

pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != x.shape() {
        return Err(Error::ShapeMismatch("relu backward".into()));
    }
    let mut g = grad_out.clone();
    relu_backward_in_place(g.data_mut(), x.data());
    Ok(g)
}
