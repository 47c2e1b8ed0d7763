//! Elementwise activations.
//!
//! Backward passes receive whichever forward operand makes the adjoint
//! cheapest: ReLU re-reads its input, sigmoid re-reads its output.

use crate::par;
use crate::tensor::{Element, Tensor};

/// Elements per parallel chunk for elementwise maps. Purely a scheduling
/// knob — every element is computed independently.
const ELEM_CHUNK: usize = 1 << 14;

fn elementwise<T: Element>(src: &Tensor<T>, f: impl Fn(T) -> T + Sync + Send) -> Tensor<T> {
    let mut out = Tensor::zeros(src.shape().to_vec());
    let src_data = src.data();
    par::for_each_chunk_mut(out.data_mut(), ELEM_CHUNK, |ci, chunk| {
        let base = ci * ELEM_CHUNK;
        for (i, v) in chunk.iter_mut().enumerate() {
            *v = f(src_data[base + i]);
        }
    });
    out
}

fn elementwise2<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T + Sync + Send,
) -> Tensor<T> {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    let mut out = Tensor::zeros(a.shape().to_vec());
    let (a_data, b_data) = (a.data(), b.data());
    par::for_each_chunk_mut(out.data_mut(), ELEM_CHUNK, |ci, chunk| {
        let base = ci * ELEM_CHUNK;
        for (i, v) in chunk.iter_mut().enumerate() {
            *v = f(a_data[base + i], b_data[base + i]);
        }
    });
    out
}

/// `max(0, x)` elementwise.
pub fn relu_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    elementwise(x, |v| if v > T::zero() { v } else { T::zero() })
}

/// ReLU input gradient: passes `dy` where the forward input was positive.
pub fn relu_backward<T: Element>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    elementwise2(x, dy, |xv, dv| if xv > T::zero() { dv } else { T::zero() })
}

/// Logistic sigmoid elementwise.
pub fn sigmoid_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    elementwise(x, |v| T::one() / (T::one() + (-v).exp()))
}

/// Sigmoid input gradient from the cached *output*: `dy · y · (1 - y)`.
pub fn sigmoid_backward<T: Element>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    elementwise2(y, dy, |yv, dv| dv * yv * (T::one() - yv))
}
