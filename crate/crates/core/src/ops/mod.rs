//! Differentiable operations on batched tensors.
//!
//! Each op exposes a forward function and a backward function that takes
//! the cached forward operands plus the upstream gradient and returns the
//! gradients for every input. Backward passes are hand-derived adjoints of
//! the forward code — there is no tape or graph; the [`crate::stack`]
//! module sequences these calls.

mod activation;
mod conv;
mod dense;
mod loss;

pub use activation::{relu_backward, relu_forward, sigmoid_backward, sigmoid_forward};
pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_side, conv_transpose2d_backward,
    conv_transpose2d_forward, conv_transpose_output_side,
};
pub use dense::{dense_backward, dense_forward};
pub use loss::{
    kl_standard_normal, mean_absolute_error, softmax_cross_entropy, softmax_probabilities,
};
