//! Kernel outputs vs independent naive re-implementations.
//!
//! The oracles here are direct quadruple-nested loops written against the
//! operation *definitions* — no im2col, no GEMM — so they share no code
//! with the implementations they judge. Shapes, strides and paddings are
//! randomised over a wide grid.

use dbvae_core::ops::{
    conv2d_forward, conv_output_side, conv_transpose2d_forward, conv_transpose_output_side,
    dense_forward,
};
use dbvae_core::rng::seeded_rng;
use dbvae_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TOLERANCE: f64 = 1e-6;

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Direct convolution by its definition: for every output position, slide
/// the kernel over the (zero-padded) input and accumulate.
fn naive_conv2d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    padding: usize,
) -> Tensor<f64> {
    let (n, c, h, wid) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (f, kh, kw) = (w.dim(0), w.dim(2), w.dim(3));
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (wid + 2 * padding - kw) / stride + 1;
    let mut y = Tensor::zeros(vec![n, f, oh, ow]);
    for ni in 0..n {
        for fi in 0..f {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = b.data()[fi];
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let iy = (oi * stride + ki) as isize - padding as isize;
                                let ix = (oj * stride + kj) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wid as isize {
                                    continue;
                                }
                                let xv = x.data()
                                    [((ni * c + ci) * h + iy as usize) * wid + ix as usize];
                                let wv = w.data()[((fi * c + ci) * kh + ki) * kw + kj];
                                acc += xv * wv;
                            }
                        }
                    }
                    y.data_mut()[((ni * f + fi) * oh + oi) * ow + oj] = acc;
                }
            }
        }
    }
    y
}

/// Direct transpose convolution by its definition: every input element
/// scatters a weighted kernel stamp into the output.
fn naive_conv_transpose2d(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &Tensor<f64>,
    stride: usize,
    padding: usize,
) -> Tensor<f64> {
    let (n, c, h, wid) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let (f, kh, kw) = (w.dim(1), w.dim(2), w.dim(3));
    let oh = (h - 1) * stride + kh - 2 * padding;
    let ow = (wid - 1) * stride + kw - 2 * padding;
    let mut y = Tensor::zeros(vec![n, f, oh, ow]);
    for ni in 0..n {
        for fi in 0..f {
            for v in
                y.data_mut()[(ni * f + fi) * oh * ow..(ni * f + fi + 1) * oh * ow].iter_mut()
            {
                *v = b.data()[fi];
            }
        }
        for ci in 0..c {
            for i in 0..h {
                for j in 0..wid {
                    let xv = x.data()[((ni * c + ci) * h + i) * wid + j];
                    for fi in 0..f {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let oy = (i * stride + ki) as isize - padding as isize;
                                let ox = (j * stride + kj) as isize - padding as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let wv = w.data()[((ci * f + fi) * kh + ki) * kw + kj];
                                y.data_mut()
                                    [((ni * f + fi) * oh + oy as usize) * ow + ox as usize] +=
                                    xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

#[test]
fn conv2d_matches_naive_oracle_on_random_geometries() {
    let mut rng = seeded_rng(0xC0DE, "conv-oracle");
    let mut checked = 0;
    while checked < 120 {
        let n = rng.random_range(1..=3);
        let c = rng.random_range(1..=4);
        let f = rng.random_range(1..=5);
        let k = rng.random_range(1..=4usize);
        let stride = rng.random_range(1..=3);
        let padding = rng.random_range(0..=2usize);
        let h = rng.random_range(3..=10usize);
        let wd = rng.random_range(3..=10usize);
        if h + 2 * padding < k || wd + 2 * padding < k {
            continue;
        }
        let x = random_tensor(vec![n, c, h, wd], &mut rng);
        let w = random_tensor(vec![f, c, k, k], &mut rng);
        let b = random_tensor(vec![f], &mut rng);
        let got = conv2d_forward(&x, &w, &b, stride, padding).unwrap();
        let want = naive_conv2d(&x, &w, &b, stride, padding);
        assert_eq!(got.shape(), want.shape());
        let diff = max_abs_diff(got.data(), want.data());
        assert!(
            diff < TOLERANCE,
            "conv mismatch {diff:e} at n={n} c={c} f={f} k={k} s={stride} p={padding} h={h} w={wd}"
        );
        checked += 1;
    }
}

#[test]
fn conv_transpose2d_matches_naive_oracle_on_random_geometries() {
    let mut rng = seeded_rng(0xC0DF, "convt-oracle");
    for _ in 0..120 {
        let n = rng.random_range(1..=3);
        let c = rng.random_range(1..=4);
        let f = rng.random_range(1..=4);
        let k = rng.random_range(1..=4usize);
        let stride = rng.random_range(1..=3);
        let padding = rng.random_range(0..=(k - 1) / 2);
        let h = rng.random_range(2..=8usize);
        let wd = rng.random_range(2..=8usize);
        let x = random_tensor(vec![n, c, h, wd], &mut rng);
        let w = random_tensor(vec![c, f, k, k], &mut rng);
        let b = random_tensor(vec![f], &mut rng);
        let got = conv_transpose2d_forward(&x, &w, &b, stride, padding).unwrap();
        let want = naive_conv_transpose2d(&x, &w, &b, stride, padding);
        assert_eq!(got.shape(), want.shape());
        let diff = max_abs_diff(got.data(), want.data());
        assert!(
            diff < TOLERANCE,
            "conv_t mismatch {diff:e} at n={n} c={c} f={f} k={k} s={stride} p={padding} h={h} w={wd}"
        );
    }
}

/// The transpose convolution must be the exact adjoint of the convolution
/// sharing its weights: ⟨conv(y), u⟩ = ⟨y, convᵀ(u)⟩ for zero bias.
#[test]
fn conv_transpose_satisfies_adjoint_identity() {
    let mut rng = seeded_rng(0xADBE, "adjoint");
    for _ in 0..40 {
        let c = rng.random_range(1..=3);
        let f = rng.random_range(1..=3);
        let k = rng.random_range(1..=4usize);
        let stride = rng.random_range(1..=2);
        let padding = rng.random_range(0..=(k - 1) / 2);
        let h = rng.random_range(2..=6usize);
        // u lives in the transpose's input space, y in its output space.
        let u = random_tensor(vec![2, c, h, h], &mut rng);
        let oh = conv_transpose_output_side(h, k, stride, padding).unwrap();
        assert_eq!(conv_output_side(oh, k, stride, padding).unwrap(), h);
        let y = random_tensor(vec![2, f, oh, oh], &mut rng);
        let w = random_tensor(vec![c, f, k, k], &mut rng);
        let zero_f = Tensor::zeros(vec![f]);
        let zero_c = Tensor::zeros(vec![c]);

        let t_u = conv_transpose2d_forward(&u, &w, &zero_f, stride, padding).unwrap();
        let c_y = conv2d_forward(&y, &w, &zero_c, stride, padding).unwrap();
        let lhs: f64 = t_u.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.data().iter().zip(c_y.data()).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()),
            "adjoint identity violated: {lhs} vs {rhs}"
        );
    }
}

#[test]
fn dense_matches_naive_triple_loop() {
    let mut rng = seeded_rng(0xDE5E, "dense-oracle");
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=9);
        let u = rng.random_range(1..=7);
        let x = random_tensor(vec![n, d], &mut rng);
        let w = random_tensor(vec![d, u], &mut rng);
        let b = random_tensor(vec![u], &mut rng);
        let got = dense_forward(&x, &w, &b).unwrap();
        let mut want = Tensor::<f64>::zeros(vec![n, u]);
        for i in 0..n {
            for j in 0..u {
                let mut acc = b.data()[j];
                for l in 0..d {
                    acc += x.data()[i * d + l] * w.data()[l * u + j];
                }
                want.data_mut()[i * u + j] = acc;
            }
        }
        let diff = max_abs_diff(got.data(), want.data());
        assert!(diff < TOLERANCE, "dense mismatch {diff:e} at n={n} d={d} u={u}");
    }
}

/// The f32 instantiation runs the same generic code; spot-check it stays
/// within single-precision rounding of the f64 oracle.
#[test]
fn f32_conv_tracks_f64_oracle() {
    let mut rng = seeded_rng(0xF32, "f32-conv");
    for _ in 0..10 {
        let x = random_tensor(vec![2, 3, 8, 8], &mut rng);
        let w = random_tensor(vec![4, 3, 3, 3], &mut rng);
        let b = random_tensor(vec![4], &mut rng);
        let got32 = conv2d_forward(&x.to_f32(), &w.to_f32(), &b.to_f32(), 2, 1).unwrap();
        let want = naive_conv2d(&x, &w, &b, 2, 1);
        let diff = got32
            .data()
            .iter()
            .zip(want.data())
            .map(|(&a, &b)| (f64::from(a) - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-4, "f32 drifted {diff:e} from f64 oracle");
    }
}
