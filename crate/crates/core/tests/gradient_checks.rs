//! Analytic gradients vs central finite differences, per operation and
//! through mixed stacks.
//!
//! Checks run in `f64` via the same generic kernels used for training.
//! Purely linear operations (dense, conv, transpose conv) must agree to
//! 1e-7; operations with curvature or kinks get 1e-4.

use dbvae_core::gradcheck::{check_stack, check_stack_in, CheckLoss, Domain};
use dbvae_core::stack::LayerSpec;

const LINEAR_TOL: f64 = 1e-7;
const NONLINEAR_TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;

#[test]
fn dense_gradients() {
    for seed in 0..INSTANCES {
        let specs = vec![LayerSpec::Dense {
            inputs: 3 + (seed % 5) as usize,
            outputs: 2 + (seed % 3) as usize,
        }];
        let inputs = 3 + (seed % 5) as usize;
        let batch = 2 + (seed % 3) as usize;
        let report = check_stack_in(
            specs.clone(),
            &[inputs],
            batch,
            CheckLoss::WeightedSum,
            Domain::Positive,
            seed,
        )
        .unwrap();
        assert!(report.max_rel_err < LINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
        let signed = check_stack(specs, &[inputs], batch, CheckLoss::SumOfSquares, seed).unwrap();
        assert!(signed.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", signed.max_rel_err);
    }
}

#[test]
fn conv2d_gradients() {
    for seed in 0..INSTANCES {
        let stride = 1 + (seed % 2) as usize;
        let padding = (seed % 3) as usize;
        let kernel = 1 + (seed % 3) as usize;
        let side = 5 + (seed % 3) as usize;
        let specs = vec![LayerSpec::Conv2d {
            in_channels: 1 + (seed % 2) as usize,
            out_channels: 1 + (seed % 3) as usize,
            kernel,
            stride,
            padding,
        }];
        let input = [1 + (seed % 2) as usize, side, side];
        let report = check_stack_in(
            specs.clone(),
            &input,
            2,
            CheckLoss::WeightedSum,
            Domain::Positive,
            seed,
        )
        .unwrap();
        assert!(report.max_rel_err < LINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
        let signed = check_stack(specs, &input, 2, CheckLoss::SumOfSquares, seed).unwrap();
        assert!(signed.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", signed.max_rel_err);
    }
}

#[test]
fn conv_transpose2d_gradients() {
    for seed in 0..INSTANCES {
        let kernel = 2 + (seed % 3) as usize;
        let padding = ((kernel - 1) / 2).min((seed % 2) as usize);
        let specs = vec![LayerSpec::ConvTranspose2d {
            in_channels: 1 + (seed % 2) as usize,
            out_channels: 1 + (seed % 3) as usize,
            kernel,
            stride: 1 + (seed % 2) as usize,
            padding,
        }];
        let input = [1 + (seed % 2) as usize, 4, 4];
        let report = check_stack_in(
            specs.clone(),
            &input,
            2,
            CheckLoss::WeightedSum,
            Domain::Positive,
            seed,
        )
        .unwrap();
        assert!(report.max_rel_err < LINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
        let signed = check_stack(specs, &input, 2, CheckLoss::SumOfSquares, seed).unwrap();
        assert!(signed.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", signed.max_rel_err);
    }
}

#[test]
fn relu_gradients() {
    for seed in 0..INSTANCES {
        // Stateless layer: the check differentiates with respect to the
        // input elements.
        let report =
            check_stack(vec![LayerSpec::Relu], &[6, 3], 3, CheckLoss::SumOfSquares, seed).unwrap();
        assert!(report.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
    }
}

#[test]
fn sigmoid_gradients() {
    for seed in 0..INSTANCES {
        let report =
            check_stack(vec![LayerSpec::Sigmoid], &[5, 2], 3, CheckLoss::SumOfSquares, seed)
                .unwrap();
        assert!(report.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
    }
}

#[test]
fn softmax_cross_entropy_gradients() {
    for seed in 0..INSTANCES {
        // An empty stack checks the loss itself: d(CE)/d(logits).
        let k = 3 + (seed % 6) as usize;
        let labels = (0..4).map(|i| (i + seed as usize) % k).collect();
        let report = check_stack(vec![], &[k], 4, CheckLoss::CrossEntropy(labels), seed).unwrap();
        assert!(report.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
    }
}

#[test]
fn flatten_is_gradient_transparent() {
    let specs = vec![
        LayerSpec::Flatten,
        LayerSpec::Dense { inputs: 12, outputs: 4 },
    ];
    let report =
        check_stack_in(specs, &[3, 2, 2], 2, CheckLoss::WeightedSum, Domain::Positive, 7).unwrap();
    assert!(report.max_rel_err < LINEAR_TOL, "{}", report.max_rel_err);
}

/// An encoder-shaped pipeline: conv → relu → conv → relu → flatten →
/// dense → cross-entropy, checked end to end.
#[test]
fn mixed_classifier_stack_gradients() {
    for seed in [1u64, 2, 3] {
        let specs = vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_channels: 2,
                out_channels: 4,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 4 * 2 * 2, outputs: 3 },
        ];
        let report = check_stack(
            specs,
            &[1, 8, 8],
            3,
            CheckLoss::CrossEntropy(vec![0, 1, 2]),
            seed,
        )
        .unwrap();
        assert!(report.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
    }
}

/// A decoder-shaped pipeline: dense → relu → (reshape) conv_t → relu →
/// conv_t → sigmoid, with a smooth loss on the reconstruction.
#[test]
fn mixed_decoder_stack_gradients() {
    for seed in [4u64, 5, 6] {
        let specs = vec![
            LayerSpec::Dense { inputs: 3, outputs: 4 * 2 * 2 },
            LayerSpec::Relu,
        ];
        let report = check_stack(specs, &[3], 2, CheckLoss::SumOfSquares, seed).unwrap();
        assert!(report.max_rel_err < NONLINEAR_TOL);

        let specs = vec![
            LayerSpec::ConvTranspose2d {
                in_channels: 4,
                out_channels: 2,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::ConvTranspose2d {
                in_channels: 2,
                out_channels: 1,
                kernel: 4,
                stride: 2,
                padding: 1,
            },
            LayerSpec::Sigmoid,
        ];
        let report = check_stack(specs, &[4, 2, 2], 2, CheckLoss::SumOfSquares, seed).unwrap();
        assert!(report.max_rel_err < NONLINEAR_TOL, "seed {seed}: {}", report.max_rel_err);
    }
}
