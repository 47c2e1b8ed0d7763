//! Dense row-major tensors generic over the floating element type.
//!
//! Training runs in `f32`; gradient checking instantiates the same code in
//! `f64`. The [`Element`] trait carries exactly what the kernels need: the
//! `num_traits` float surface, conversions, a BLAS-style `gemm`, and
//! standard-distribution sampling.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Floating-point element usable by every kernel in the crate.
pub trait Element:
    Float
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` (used for constants and config values).
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any float element")
    }

    /// Widening conversion to `f64` (used for reductions and reporting).
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float element converts to f64")
    }

    /// `c = alpha * a·b + beta * c` for row-major matrices described by
    /// explicit strides, delegating to the platform GEMM.
    ///
    /// # Safety
    /// Caller guarantees the strides address only valid elements; the safe
    /// wrapper in [`gemm`] checks this.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    /// One standard normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Element for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Element for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// `c = alpha * op(a)·op(b) + beta * c` on contiguous row-major buffers.
///
/// `op` transposes its argument when the corresponding flag is set:
/// `a` holds an `m x k` matrix (stored `k x m` if `trans_a`), `b` holds a
/// `k x n` matrix (stored `n x k` if `trans_b`), `c` is always `m x n`.
///
/// Panics when a buffer is too short for its described shape; shapes are
/// internal invariants here, not user input.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Element>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k, "gemm: a has {} < {}", a.len(), m * k);
    assert!(b.len() >= k * n, "gemm: b has {} < {}", b.len(), k * n);
    assert!(c.len() >= m * n, "gemm: c has {} < {}", c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        // Degenerate product is all zeros; only the beta scaling remains.
        for x in c[..m * n].iter_mut() {
            *x = beta * *x;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// A dense tensor: shape vector plus row-major contiguous storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    /// Build from explicit shape and data; the lengths must agree.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let product: usize = shape.iter().product();
        if product != data.len() {
            return Err(Error::LengthMismatch {
                shape,
                len: data.len(),
                product,
            });
        }
        Ok(Self { shape, data })
    }

    /// Zero-filled tensor.
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); len],
        }
    }

    /// Constant-filled tensor.
    pub fn filled(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    /// 1-D tensor over `data`.
    pub fn from_vec(data: Vec<T>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Size of axis `i`.
    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Reinterpret the storage under a new shape of equal volume.
    pub fn into_reshaped(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        let product: usize = shape.iter().product();
        if product != self.data.len() {
            return Err(Error::LengthMismatch {
                shape,
                len: self.data.len(),
                product,
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise `self += other` (shapes must match exactly).
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + *b;
        }
    }

    /// Elementwise scale in place.
    pub fn scale(&mut self, factor: T) {
        for a in self.data.iter_mut() {
            *a = *a * factor;
        }
    }

    /// Widen to `f64` (used by oracles and gradient checking).
    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x.to_f64_lossy()).collect(),
        }
    }
}

impl Tensor<f64> {
    /// Narrow to `f32`.
    pub fn to_f32(&self) -> Tensor<f32> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| x as f32).collect(),
        }
    }
}
