//! 2-D convolution and its transpose, via im2col + GEMM.
//!
//! A convolution with filters `W [F, C, kh, kw]` is evaluated per image by
//! unrolling input patches into a `[C·kh·kw, OH·OW]` column matrix and
//! multiplying by the flattened filter matrix. The transpose convolution
//! reuses the same column geometry in the opposite direction (`col2im`),
//! which makes it the exact adjoint of a convolution — its forward pass is
//! a convolution's input-gradient and vice versa.
//!
//! Batch images are processed as independent per-image GEMMs dispatched
//! through [`crate::par`]; weight gradients are accumulated over fixed
//! four-image chunks folded in index order, so results do not depend on
//! the execution mode.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{gemm, Element, Tensor};

/// Images per weight-gradient accumulation chunk. Fixed so the reduction
/// tree (and therefore float rounding) is identical in parallel and
/// sequential mode.
const GRAD_CHUNK: usize = 4;

/// Output side length of a convolution: `floor((h + 2p - k)/s) + 1`.
pub fn conv_output_side(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidConfig(format!(
            "convolution kernel ({kernel}) and stride ({stride}) must be >= 1"
        )));
    }
    if input + 2 * padding < kernel {
        return Err(Error::InvalidConfig(format!(
            "convolution kernel {kernel} exceeds padded input {input}+2*{padding}"
        )));
    }
    Ok((input + 2 * padding - kernel) / stride + 1)
}

/// Output side length of a transpose convolution: `(h - 1)s - 2p + k`.
pub fn conv_transpose_output_side(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidConfig(format!(
            "transpose convolution kernel ({kernel}) and stride ({stride}) must be >= 1"
        )));
    }
    if input == 0 {
        return Err(Error::InvalidConfig(
            "transpose convolution input side must be >= 1".into(),
        ));
    }
    let grown = (input - 1) * stride + kernel;
    if grown <= 2 * padding {
        return Err(Error::InvalidConfig(format!(
            "transpose convolution padding {padding} consumes the whole {grown}-pixel output"
        )));
    }
    Ok(grown - 2 * padding)
}

/// Patch geometry shared by im2col and col2im.
#[derive(Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }
    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unroll one image `[C, H, W]` into columns `[C·kh·kw, OH·OW]`.
/// Out-of-bounds (padding) taps read as zero.
fn im2col<T: Element>(src: &[T], g: Geometry, cols: &mut [T]) {
    debug_assert_eq!(src.len(), g.channels * g.height * g.width);
    debug_assert_eq!(cols.len(), g.col_rows() * g.col_cols());
    let ohw = g.col_cols();
    for ci in 0..g.channels {
        let plane = &src[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let out = &mut cols[row * ohw..(row + 1) * ohw];
                for oi in 0..g.oh {
                    let iy = (oi * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        out[oi * g.ow..(oi + 1) * g.ow].fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for oj in 0..g.ow {
                        let ix = (oj * g.stride + kj) as isize - g.padding as isize;
                        out[oi * g.ow + oj] = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add columns back into an image — the exact adjoint of [`im2col`].
fn col2im_add<T: Element>(cols: &[T], g: Geometry, dst: &mut [T]) {
    debug_assert_eq!(dst.len(), g.channels * g.height * g.width);
    debug_assert_eq!(cols.len(), g.col_rows() * g.col_cols());
    let ohw = g.col_cols();
    for ci in 0..g.channels {
        let plane = &mut dst[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let col_row = &cols[row * ohw..(row + 1) * ohw];
                for oi in 0..g.oh {
                    let iy = (oi * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    for oj in 0..g.ow {
                        let ix = (oj * g.stride + kj) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.width as isize {
                            continue;
                        }
                        let idx = iy as usize * g.width + ix as usize;
                        plane[idx] = plane[idx] + col_row[oi * g.ow + oj];
                    }
                }
            }
        }
    }
}

fn check_conv_inputs<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    transpose: bool,
) -> Result<()> {
    let op = if transpose { "conv_transpose2d" } else { "conv2d" };
    if x.rank() != 4 {
        return Err(Error::ShapeMismatch {
            context: "convolution input (expected [N, C, H, W])",
            expected: vec![4],
            actual: x.shape().to_vec(),
        });
    }
    if w.rank() != 4 {
        return Err(Error::ShapeMismatch {
            context: "convolution weight (expected rank 4)",
            expected: vec![4],
            actual: w.shape().to_vec(),
        });
    }
    // Conv weights are [F, C, kh, kw]; transpose weights are [C, F, kh, kw].
    let chan_axis = if transpose { 0 } else { 1 };
    if w.dim(chan_axis) != x.dim(1) {
        return Err(Error::InvalidConfig(format!(
            "{op}: weight expects {} input channels, input has {}",
            w.dim(chan_axis),
            x.dim(1)
        )));
    }
    let out_channels = w.dim(1 - chan_axis);
    if b.shape() != [out_channels] {
        return Err(Error::ShapeMismatch {
            context: "convolution bias",
            expected: vec![out_channels],
            actual: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Forward convolution: `[N, C, H, W] -> [N, F, OH, OW]`.
pub fn conv2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    check_conv_inputs(x, w, b, false)?;
    let (n, c, h, wid) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (f, kh, kw) = (w.dim(0), w.dim(2), w.dim(3));
    let oh = conv_output_side(h, kh, stride, padding)?;
    let ow = conv_output_side(wid, kw, stride, padding)?;
    let g = Geometry {
        channels: c,
        height: h,
        width: wid,
        kh,
        kw,
        stride,
        padding,
        oh,
        ow,
    };
    let (rows, ohw) = (g.col_rows(), g.col_cols());
    let mut y = Tensor::zeros(vec![n, f, oh, ow]);
    let x_data = x.data();
    let (w_data, b_data) = (w.data(), b.data());
    par::for_each_chunk_mut(y.data_mut(), f * ohw, |img, y_img| {
        let mut cols = vec![T::zero(); rows * ohw];
        im2col(&x_data[img * c * h * wid..(img + 1) * c * h * wid], g, &mut cols);
        gemm(false, false, f, rows, ohw, T::one(), w_data, &cols, T::zero(), y_img);
        for (fi, row) in y_img.chunks_mut(ohw).enumerate() {
            let bias = b_data[fi];
            for v in row.iter_mut() {
                *v = *v + bias;
            }
        }
    });
    Ok(y)
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, wid) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (f, kh, kw) = (w.dim(0), w.dim(2), w.dim(3));
    let oh = conv_output_side(h, kh, stride, padding)?;
    let ow = conv_output_side(wid, kw, stride, padding)?;
    if dy.shape() != [n, f, oh, ow] {
        return Err(Error::ShapeMismatch {
            context: "conv2d upstream gradient",
            expected: vec![n, f, oh, ow],
            actual: dy.shape().to_vec(),
        });
    }
    let g = Geometry {
        channels: c,
        height: h,
        width: wid,
        kh,
        kw,
        stride,
        padding,
        oh,
        ow,
    };
    let (rows, ohw) = (g.col_rows(), g.col_cols());
    let img_len = c * h * wid;
    let (x_data, w_data, dy_data) = (x.data(), w.data(), dy.data());

    // Input gradient: per image, dcols = Wᵀ·dy scattered back through col2im.
    let mut dx = Tensor::zeros(vec![n, c, h, wid]);
    par::for_each_chunk_mut(dx.data_mut(), img_len, |img, dx_img| {
        let mut dcols = vec![T::zero(); rows * ohw];
        let dy_img = &dy_data[img * f * ohw..(img + 1) * f * ohw];
        gemm(true, false, rows, f, ohw, T::one(), w_data, dy_img, T::zero(), &mut dcols);
        col2im_add(&dcols, g, dx_img);
    });

    // Weight/bias gradients: fixed-size image chunks, folded in order.
    let chunks = n.div_ceil(GRAD_CHUNK);
    let partials = par::map_indexed(chunks, |ci| {
        let mut dw_part = vec![T::zero(); f * rows];
        let mut db_part = vec![T::zero(); f];
        let mut cols = vec![T::zero(); rows * ohw];
        for img in ci * GRAD_CHUNK..((ci + 1) * GRAD_CHUNK).min(n) {
            im2col(&x_data[img * img_len..(img + 1) * img_len], g, &mut cols);
            let dy_img = &dy_data[img * f * ohw..(img + 1) * f * ohw];
            gemm(false, true, f, ohw, rows, T::one(), dy_img, &cols, T::one(), &mut dw_part);
            for (fi, row) in dy_img.chunks(ohw).enumerate() {
                let mut s = T::zero();
                for &v in row {
                    s = s + v;
                }
                db_part[fi] = db_part[fi] + s;
            }
        }
        (dw_part, db_part)
    });
    let mut dw = Tensor::zeros(w.shape().to_vec());
    let mut db = Tensor::zeros(vec![f]);
    for (dw_part, db_part) in partials {
        for (a, b) in dw.data_mut().iter_mut().zip(dw_part) {
            *a = *a + b;
        }
        for (a, b) in db.data_mut().iter_mut().zip(db_part) {
            *a = *a + b;
        }
    }
    Ok((dx, dw, db))
}

/// Forward transpose convolution: `[N, C, H, W] -> [N, F, OH, OW]` with
/// `OH = (H-1)·stride - 2·padding + kh`. Weights are `[C, F, kh, kw]`.
pub fn conv_transpose2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    check_conv_inputs(x, w, b, true)?;
    let (n, c, h, wid) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (f, kh, kw) = (w.dim(1), w.dim(2), w.dim(3));
    let oh = conv_transpose_output_side(h, kh, stride, padding)?;
    let ow = conv_transpose_output_side(wid, kw, stride, padding)?;
    // The adjoint runs the conv geometry backwards: the *output* plays the
    // role of the convolution's input.
    let g = Geometry {
        channels: f,
        height: oh,
        width: ow,
        kh,
        kw,
        stride,
        padding,
        oh: h,
        ow: wid,
    };
    let (rows, hw) = (g.col_rows(), h * wid);
    let out_len = f * oh * ow;
    let mut y = Tensor::zeros(vec![n, f, oh, ow]);
    let (x_data, w_data, b_data) = (x.data(), w.data(), b.data());
    par::for_each_chunk_mut(y.data_mut(), out_len, |img, y_img| {
        let mut cols = vec![T::zero(); rows * hw];
        let x_img = &x_data[img * c * hw..(img + 1) * c * hw];
        gemm(true, false, rows, c, hw, T::one(), w_data, x_img, T::zero(), &mut cols);
        col2im_add(&cols, g, y_img);
        for (fi, row) in y_img.chunks_mut(oh * ow).enumerate() {
            let bias = b_data[fi];
            for v in row.iter_mut() {
                *v = *v + bias;
            }
        }
    });
    Ok(y)
}

/// Gradients of [`conv_transpose2d_forward`].
pub fn conv_transpose2d_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, c, h, wid) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (f, kh, kw) = (w.dim(1), w.dim(2), w.dim(3));
    let oh = conv_transpose_output_side(h, kh, stride, padding)?;
    let ow = conv_transpose_output_side(wid, kw, stride, padding)?;
    if dy.shape() != [n, f, oh, ow] {
        return Err(Error::ShapeMismatch {
            context: "conv_transpose2d upstream gradient",
            expected: vec![n, f, oh, ow],
            actual: dy.shape().to_vec(),
        });
    }
    let g = Geometry {
        channels: f,
        height: oh,
        width: ow,
        kh,
        kw,
        stride,
        padding,
        oh: h,
        ow: wid,
    };
    let (rows, hw) = (g.col_rows(), h * wid);
    let dy_len = f * oh * ow;
    let (x_data, w_data, dy_data) = (x.data(), w.data(), dy.data());

    // Input gradient is a plain convolution of dy with the same weights.
    let mut dx = Tensor::zeros(vec![n, c, h, wid]);
    par::for_each_chunk_mut(dx.data_mut(), c * hw, |img, dx_img| {
        let mut cols = vec![T::zero(); rows * hw];
        im2col(&dy_data[img * dy_len..(img + 1) * dy_len], g, &mut cols);
        gemm(false, false, c, rows, hw, T::one(), w_data, &cols, T::zero(), dx_img);
    });

    let chunks = n.div_ceil(GRAD_CHUNK);
    let partials = par::map_indexed(chunks, |ci| {
        let mut dw_part = vec![T::zero(); c * rows];
        let mut db_part = vec![T::zero(); f];
        let mut cols = vec![T::zero(); rows * hw];
        for img in ci * GRAD_CHUNK..((ci + 1) * GRAD_CHUNK).min(n) {
            let dy_img = &dy_data[img * dy_len..(img + 1) * dy_len];
            im2col(dy_img, g, &mut cols);
            let x_img = &x_data[img * c * hw..(img + 1) * c * hw];
            gemm(false, true, c, hw, rows, T::one(), x_img, &cols, T::one(), &mut dw_part);
            for (fi, row) in dy_img.chunks(oh * ow).enumerate() {
                let mut s = T::zero();
                for &v in row {
                    s = s + v;
                }
                db_part[fi] = db_part[fi] + s;
            }
        }
        (dw_part, db_part)
    });
    let mut dw = Tensor::zeros(w.shape().to_vec());
    let mut db = Tensor::zeros(vec![f]);
    for (dw_part, db_part) in partials {
        for (a, b) in dw.data_mut().iter_mut().zip(dw_part) {
            *a = *a + b;
        }
        for (a, b) in db.data_mut().iter_mut().zip(db_part) {
            *a = *a + b;
        }
    }
    Ok((dx, dw, db))
}
