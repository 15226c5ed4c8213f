//! Forward and backward kernels for the layer types the raters use.
//!
//! All kernels are plain loops over row-major buffers. Convolution is a valid
//! (unpadded) cross-correlation: the kernel is not flipped.

use super::Tensor;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Output extent of a valid window sweep, or `None` when the window does not fit.
pub fn conv_out_extent(input: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || window > input {
        None
    } else {
        Some((input - window) / stride + 1)
    }
}

/// `out[b, o] = Σ_i input[b, i] · weights[i, o] + bias[o]`
pub fn dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, inner, out) = dense_dims(input, weights, bias)?;
    let x = input.data();
    let w = weights.data();
    let mut y = Vec::with_capacity(batch * out);
    for b in 0..batch {
        y.extend_from_slice(bias.data());
        let row = &mut y[b * out..(b + 1) * out];
        for (i, &xi) in x[b * inner..(b + 1) * inner].iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (acc, &wio) in row.iter_mut().zip(&w[i * out..(i + 1) * out]) {
                *acc = *acc + xi * wio;
            }
        }
    }
    Tensor::new(vec![batch, out], y)
}

fn dense_dims<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    let (is, ws, bs) = (input.shape(), weights.shape(), bias.shape());
    if is.len() != 2 || ws.len() != 2 || bs.len() != 1 {
        return Err(shape_err(
            "dense",
            format!("expected [batch,in]·[in,out]+[out], got {is:?}·{ws:?}+{bs:?}"),
        ));
    }
    if is[1] != ws[0] || ws[1] != bs[0] {
        return Err(shape_err(
            "dense",
            format!("inner extents disagree: {is:?}·{ws:?}+{bs:?}"),
        ));
    }
    Ok((is[0], is[1], ws[1]))
}

pub(crate) fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, inner) = (input.shape()[0], input.shape()[1]);
    let out = weights.shape()[1];
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); batch * inner];
    let mut gw = vec![T::zero(); inner * out];
    let mut gb = vec![T::zero(); out];
    for b in 0..batch {
        let grow = &g[b * out..(b + 1) * out];
        for (acc, &go) in gb.iter_mut().zip(grow) {
            *acc = *acc + go;
        }
        for i in 0..inner {
            let xi = x[b * inner + i];
            let wrow = &w[i * out..(i + 1) * out];
            let gwrow = &mut gw[i * out..(i + 1) * out];
            let mut s = T::zero();
            for o in 0..out {
                s = s + grow[o] * wrow[o];
                gwrow[o] = gwrow[o] + xi * grow[o];
            }
            gx[b * inner + i] = s;
        }
    }
    (
        Tensor::new(input.shape().to_vec(), gx).expect("shape"),
        Tensor::new(weights.shape().to_vec(), gw).expect("shape"),
        Tensor::new(vec![out], gb).expect("shape"),
    )
}

struct ConvDims {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    sh: usize,
    sw: usize,
}

fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
) -> Result<ConvDims> {
    let (is, ks, bs) = (input.shape(), kernels.shape(), bias.shape());
    if is.len() != 4 || ks.len() != 4 || bs.len() != 1 {
        return Err(shape_err(
            "conv2d",
            format!("expected [b,c,h,w] * [o,c,kh,kw] + [o], got {is:?} * {ks:?} + {bs:?}"),
        ));
    }
    if is[1] != ks[1] || ks[0] != bs[0] {
        return Err(shape_err(
            "conv2d",
            format!("channel extents disagree: {is:?} * {ks:?} + {bs:?}"),
        ));
    }
    let oh = conv_out_extent(is[2], ks[2], stride.0);
    let ow = conv_out_extent(is[3], ks[3], stride.1);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(shape_err(
            "conv2d",
            format!(
                "kernel {}x{} (stride {stride:?}) does not fit input {}x{}",
                ks[2], ks[3], is[2], is[3]
            ),
        ));
    };
    Ok(ConvDims {
        batch: is[0],
        cin: is[1],
        h: is[2],
        w: is[3],
        cout: ks[0],
        kh: ks[2],
        kw: ks[3],
        oh,
        ow,
        sh: stride.0,
        sw: stride.1,
    })
}

/// Valid 2-D cross-correlation with per-axis stride.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
) -> Result<Tensor<T>> {
    let d = conv_dims(input, kernels, bias, stride)?;
    let x = input.data();
    let k = kernels.data();
    let mut y = vec![T::zero(); d.batch * d.cout * d.oh * d.ow];
    for b in 0..d.batch {
        for o in 0..d.cout {
            let plane = &mut y[(b * d.cout + o) * d.oh * d.ow..(b * d.cout + o + 1) * d.oh * d.ow];
            plane.iter_mut().for_each(|v| *v = bias.data()[o]);
            for c in 0..d.cin {
                let xc = &x[(b * d.cin + c) * d.h * d.w..(b * d.cin + c + 1) * d.h * d.w];
                let kc = &k[(o * d.cin + c) * d.kh * d.kw..(o * d.cin + c + 1) * d.kh * d.kw];
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let kv = kc[ky * d.kw + kx];
                        for oy in 0..d.oh {
                            let xrow = &xc[(oy * d.sh + ky) * d.w..];
                            let yrow = &mut plane[oy * d.ow..(oy + 1) * d.ow];
                            for (ox, acc) in yrow.iter_mut().enumerate() {
                                *acc = *acc + kv * xrow[ox * d.sw + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![d.batch, d.cout, d.oh, d.ow], y)
}

pub(crate) fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let d = conv_dims(input, kernels, bias, stride).expect("validated in forward");
    let x = input.data();
    let k = kernels.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gk = vec![T::zero(); k.len()];
    let mut gb = vec![T::zero(); d.cout];
    for b in 0..d.batch {
        for o in 0..d.cout {
            let gplane = &g[(b * d.cout + o) * d.oh * d.ow..(b * d.cout + o + 1) * d.oh * d.ow];
            gb[o] = gb[o] + gplane.iter().copied().sum::<T>();
            for c in 0..d.cin {
                let xoff = (b * d.cin + c) * d.h * d.w;
                let koff = (o * d.cin + c) * d.kh * d.kw;
                for ky in 0..d.kh {
                    for kx in 0..d.kw {
                        let kv = k[koff + ky * d.kw + kx];
                        let mut acc = T::zero();
                        for oy in 0..d.oh {
                            let row = xoff + (oy * d.sh + ky) * d.w + kx;
                            for ox in 0..d.ow {
                                let go = gplane[oy * d.ow + ox];
                                let xi = row + ox * d.sw;
                                acc = acc + go * x[xi];
                                gx[xi] = gx[xi] + go * kv;
                            }
                        }
                        gk[koff + ky * d.kw + kx] = gk[koff + ky * d.kw + kx] + acc;
                    }
                }
            }
        }
    }
    (
        Tensor::new(input.shape().to_vec(), gx).expect("shape"),
        Tensor::new(kernels.shape().to_vec(), gk).expect("shape"),
        Tensor::new(vec![d.cout], gb).expect("shape"),
    )
}

/// Max-pool result plus the flat input index that produced each output cell.
#[derive(Debug, Clone)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Windowed maximum over the two trailing axes of a `[b, c, h, w]` tensor.
///
/// Ties resolve to the first cell in row-major window order, which is also
/// where the backward pass routes the gradient.
pub fn max_pool2d<T: Scalar>(
    input: &Tensor<T>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<PoolOutput<T>> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(shape_err("max_pool2d", format!("expected [b,c,h,w], got {s:?}")));
    }
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let oh = conv_out_extent(h, window.0, stride.0);
    let ow = conv_out_extent(w, window.1, stride.1);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(shape_err(
            "max_pool2d",
            format!("window {window:?} (stride {stride:?}) does not fit {h}x{w}"),
        ));
    };
    let x = input.data();
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut argmax = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * stride.0 * w + ox * stride.1;
                let mut best = x[best_idx];
                for wy in 0..window.0 {
                    for wx in 0..window.1 {
                        let idx = base + (oy * stride.0 + wy) * w + ox * stride.1 + wx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(vec![s[0], s[1], oh, ow], out)?,
        argmax,
    })
}

pub(crate) fn max_pool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut gx = Tensor::zeros(input_shape.to_vec());
    let data = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        data[idx] = data[idx] + g;
    }
    gx
}
