//! Fully connected layer: `y = x·W + b`.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{gemm, Element, Tensor};

/// Batch rows per forward/input-gradient GEMM chunk. Fixed so both
/// execution modes issue identical GEMM calls.
const ROW_CHUNK: usize = 8;

fn check_dense<T: Element>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<(usize, usize, usize)> {
    if x.rank() != 2 || w.rank() != 2 {
        return Err(Error::ShapeMismatch {
            context: "dense expects x [N, D] and w [D, U]",
            expected: vec![2],
            actual: if x.rank() != 2 { x.shape().to_vec() } else { w.shape().to_vec() },
        });
    }
    let (n, d, u) = (x.dim(0), x.dim(1), w.dim(1));
    if w.dim(0) != d {
        return Err(Error::ShapeMismatch {
            context: "dense weight rows vs input features",
            expected: vec![d, u],
            actual: w.shape().to_vec(),
        });
    }
    if let Some(b) = b {
        if b.shape() != [u] {
            return Err(Error::ShapeMismatch {
                context: "dense bias",
                expected: vec![u],
                actual: b.shape().to_vec(),
            });
        }
    }
    Ok((n, d, u))
}

/// Forward pass: `[N, D] -> [N, U]`.
pub fn dense_forward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d, u) = check_dense(x, w, Some(b))?;
    let mut y = Tensor::zeros(vec![n, u]);
    let (x_data, w_data, b_data) = (x.data(), w.data(), b.data());
    par::for_each_chunk_mut(y.data_mut(), ROW_CHUNK * u, |ci, y_chunk| {
        let rows = y_chunk.len() / u;
        let x_chunk = &x_data[ci * ROW_CHUNK * d..ci * ROW_CHUNK * d + rows * d];
        gemm(false, false, rows, d, u, T::one(), x_chunk, w_data, T::zero(), y_chunk);
        for row in y_chunk.chunks_mut(u) {
            for (v, &bias) in row.iter_mut().zip(b_data) {
                *v = *v + bias;
            }
        }
    });
    Ok(y)
}

/// Gradients of [`dense_forward`]: returns `(dx, dw, db)`.
pub fn dense_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, d, u) = check_dense(x, w, None)?;
    if dy.shape() != [n, u] {
        return Err(Error::ShapeMismatch {
            context: "dense upstream gradient",
            expected: vec![n, u],
            actual: dy.shape().to_vec(),
        });
    }
    let (x_data, w_data, dy_data) = (x.data(), w.data(), dy.data());

    // dx = dy·Wᵀ, chunked over batch rows like the forward pass.
    let mut dx = Tensor::zeros(vec![n, d]);
    par::for_each_chunk_mut(dx.data_mut(), ROW_CHUNK * d, |ci, dx_chunk| {
        let rows = dx_chunk.len() / d;
        let dy_chunk = &dy_data[ci * ROW_CHUNK * u..ci * ROW_CHUNK * u + rows * u];
        gemm(false, true, rows, u, d, T::one(), dy_chunk, w_data, T::zero(), dx_chunk);
    });

    // dW = xᵀ·dy as one GEMM: a single call is identical in both modes.
    let mut dw = Tensor::zeros(vec![d, u]);
    gemm(true, false, d, n, u, T::one(), x_data, dy_data, T::zero(), dw.data_mut());

    // db = column sums of dy, accumulated in batch order.
    let mut db = Tensor::zeros(vec![u]);
    let db_data = db.data_mut();
    for row in dy_data.chunks(u) {
        for (acc, &v) in db_data.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    Ok((dx, dw, db))
}
