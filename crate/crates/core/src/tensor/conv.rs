// Convolution kernels via im2col + GEMM. The whole batch is unfolded into one
// column matrix `[C*KH*KW, N*OH*OW]` so each layer is a single product.

use super::{Real, Tensor};
use crate::error::{arg, dim, Result};

/// Output extent of a cross-correlation, `None` when it would be empty.
pub fn conv2d_output_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || size + 2 * pad < kernel {
        return None;
    }
    Some((size + 2 * pad - kernel) / stride + 1)
}

/// Output extent of a transposed convolution.
pub fn conv_transpose2d_output_extent(
    size: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Option<usize> {
    if stride == 0 || size == 0 {
        return None;
    }
    let full = (size - 1) * stride + kernel + output_pad;
    full.checked_sub(2 * pad).filter(|&e| e > 0)
}

/// Geometry of a forward cross-correlation from a `c x h x w` image to an
/// `oh x ow` map.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

}

/// Unfolds one image into columns starting at `cols[0]`, rows `ld` apart.
fn im2col<T: Real>(x: &[T], g: &Geom, cols: &mut [T], ld: usize) {
    let p = g.cols();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut cols[row * ld..row * ld + p];
                for oy in 0..g.oh {
                    let out = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into the image.
fn col2im<T: Real>(cols: &[T], g: &Geom, x: &mut [T], ld: usize) {
    let p = g.cols();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &cols[row * ld..row * ld + p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, &v) in src[oy * g.ow..(oy + 1) * g.ow].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Row-major `[m, k] x [k, n]` products with optional transposes.
fn matmul<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    T::gemm(m, k, n, T::one(), a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
}

fn check_stride(op: &'static str, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(arg(op, "stride must be positive"));
    }
    Ok(())
}

fn check_bias<T: Real>(op: &'static str, bias: &Tensor<T>, channels: usize) -> Result<()> {
    if bias.numel() != channels {
        return Err(dim(
            op,
            format!("bias has {} entries for {} channels", bias.numel(), channels),
        ));
    }
    Ok(())
}

fn conv_geom<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Geom> {
    check_stride("conv2d", stride)?;
    let [_, c, h, w] = input.shape();
    let [_, kc, kh, kw] = kernel.shape();
    if c != kc {
        return Err(dim("conv2d", format!("input has {c} channels, kernel expects {kc}")));
    }
    let oh = conv2d_output_extent(h, kh, stride, pad);
    let ow = conv2d_output_extent(w, kw, stride, pad);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok(Geom { c, h, w, kh, kw, stride, pad, oh, ow }),
        _ => Err(dim(
            "conv2d",
            format!("{h}x{w} input too small for {kh}x{kw} kernel with padding {pad}"),
        )),
    }
}

/// `[N, C, P]` to `[C, N*P]`.
fn to_channel_major<T: Real>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            out[ch * n * p + i * p..ch * n * p + (i + 1) * p].copy_from_slice(&x[(i * c + ch) * p..(i * c + ch + 1) * p]);
        }
    }
    out
}

/// `[C, N*P]` to `[N, C, P]`.
fn from_channel_major<T: Real>(x: &[T], n: usize, c: usize, p: usize, out: &mut [T]) {
    for i in 0..n {
        for ch in 0..c {
            out[(i * c + ch) * p..(i * c + ch + 1) * p].copy_from_slice(&x[ch * n * p + i * p..ch * n * p + (i + 1) * p]);
        }
    }
}

fn unfold_batch<T: Real>(x: &[T], n: usize, g: &Geom) -> Vec<T> {
    let (k, p) = (g.rows(), g.cols());
    let img = g.c * g.h * g.w;
    let mut cols = vec![T::zero(); k * n * p];
    for i in 0..n {
        im2col(&x[i * img..(i + 1) * img], g, &mut cols[i * p..], n * p);
    }
    cols
}

fn fold_batch<T: Real>(cols: &[T], n: usize, g: &Geom, x: &mut [T]) {
    let p = g.cols();
    let img = g.c * g.h * g.w;
    for i in 0..n {
        col2im(&cols[i * p..], g, &mut x[i * img..(i + 1) * img], n * p);
    }
}

fn add_bias<T: Real>(y: &mut [T], bias: &[T], plane: usize) {
    for (j, chunk) in y.chunks_mut(plane).enumerate() {
        let b = bias[j % bias.len()];
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Real>(gy: &[T], channels: usize, plane: usize) -> Tensor<T> {
    let mut db = Tensor::zeros([1, channels, 1, 1]);
    for (j, chunk) in gy.chunks(plane).enumerate() {
        let s: T = chunk.iter().copied().sum();
        let o = j % channels;
        db.data_mut()[o] = db.data()[o] + s;
    }
    db
}

pub(crate) fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = conv_geom(input, kernel, stride, pad)?;
    let oc = kernel.shape()[0];
    check_bias("conv2d", bias, oc)?;
    let n = input.shape()[0];
    let (k, p) = (g.rows(), g.cols());
    let cols = unfold_batch(input.data(), n, &g);
    let mut y = vec![T::zero(); oc * n * p];
    matmul(oc, k, n * p, kernel.data(), false, &cols, false, &mut y, false);
    let mut out = Tensor::zeros([n, oc, g.oh, g.ow]);
    from_channel_major(&y, n, oc, p, out.data_mut());
    add_bias(out.data_mut(), bias.data(), p);
    Ok(out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let g = conv_geom(input, kernel, stride, pad)?;
    let oc = kernel.shape()[0];
    let n = input.shape()[0];
    let (k, p) = (g.rows(), g.cols());
    let gy = to_channel_major(grad_out.data(), n, oc, p);
    let dw = need[1].then(|| {
        let cols = unfold_batch(input.data(), n, &g);
        let mut dw = Tensor::zeros(kernel.shape());
        matmul(oc, n * p, k, &gy, false, &cols, true, dw.data_mut(), false);
        dw
    });
    let dx = need[0].then(|| {
        let mut cols = vec![T::zero(); k * n * p];
        matmul(k, oc, n * p, kernel.data(), true, &gy, false, &mut cols, false);
        let mut dx = Tensor::zeros(input.shape());
        fold_batch(&cols, n, &g, dx.data_mut());
        dx
    });
    let db = need[2].then(|| bias_grad(grad_out.data(), oc, p));
    Ok(ConvGrads { input: dx, kernel: dw, bias: db })
}

/// Geometry of the transposed convolution seen as the adjoint of a forward
/// convolution from the output image back to the input map.
fn transpose_geom<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Result<Geom> {
    check_stride("conv_transpose2d", stride)?;
    if output_pad >= stride {
        return Err(arg("conv_transpose2d", "output padding must be smaller than stride"));
    }
    let [_, c, h, w] = input.shape();
    let [kc, oc, kh, kw] = kernel.shape();
    if c != kc {
        return Err(dim(
            "conv_transpose2d",
            format!("input has {c} channels, kernel expects {kc}"),
        ));
    }
    let oh = conv_transpose2d_output_extent(h, kh, stride, pad, output_pad);
    let ow = conv_transpose2d_output_extent(w, kw, stride, pad, output_pad);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok(Geom {
            c: oc,
            h: oh,
            w: ow,
            kh,
            kw,
            stride,
            pad,
            oh: h,
            ow: w,
        }),
        _ => Err(dim("conv_transpose2d", "empty output")),
    }
}

pub(crate) fn conv_transpose2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Result<Tensor<T>> {
    let g = transpose_geom(input, kernel, stride, pad, output_pad)?;
    let [n, ic, _, _] = input.shape();
    check_bias("conv_transpose2d", bias, g.c)?;
    let (k, p) = (g.rows(), g.cols());
    let x = to_channel_major(input.data(), n, ic, p);
    let mut cols = vec![T::zero(); k * n * p];
    matmul(k, ic, n * p, kernel.data(), true, &x, false, &mut cols, false);
    let mut out = Tensor::zeros([n, g.c, g.h, g.w]);
    fold_batch(&cols, n, &g, out.data_mut());
    add_bias(out.data_mut(), bias.data(), g.h * g.w);
    Ok(out)
}

pub(crate) fn conv_transpose2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
    output_pad: usize,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let g = transpose_geom(input, kernel, stride, pad, output_pad)?;
    let [n, ic, _, _] = input.shape();
    let (k, p) = (g.rows(), g.cols());
    let cols = if need[0] || need[1] { unfold_batch(grad_out.data(), n, &g) } else { Vec::new() };
    let dx = need[0].then(|| {
        let mut dxc = vec![T::zero(); ic * n * p];
        matmul(ic, k, n * p, kernel.data(), false, &cols, false, &mut dxc, false);
        let mut dx = Tensor::zeros(input.shape());
        from_channel_major(&dxc, n, ic, p, dx.data_mut());
        dx
    });
    let dw = need[1].then(|| {
        let x = to_channel_major(input.data(), n, ic, p);
        let mut dw = Tensor::zeros(kernel.shape());
        matmul(ic, n * p, k, &x, false, &cols, true, dw.data_mut(), false);
        dw
    });
    let db = need[2].then(|| bias_grad(grad_out.data(), g.c, g.h * g.w));
    Ok(ConvGrads { input: dx, kernel: dw, bias: db })
}
