//! Corner-aligned bilinear resampling.
//!
//! The sampling grid maps output corners onto input corners
//! (`sy = i·(H−1)/(out_h−1)`), so corner pixels are preserved exactly
//! and every output value is a convex combination of four neighbours —
//! the output range can never exceed the input range.

use crate::error::{Error, Result};

/// Resize a row-major `h`×`w` image to `out_h`×`out_w` by bilinear
/// interpolation. Inputs and outputs of identical size are returned
/// unchanged. All four dimensions must be at least 2 (a single row or
/// column has no interpolation axis).
pub fn resize_bilinear(
    src: &[f32],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Vec<f32>> {
    if src.len() != h * w {
        return Err(Error::LengthMismatch {
            shape: vec![h, w],
            len: src.len(),
            product: h * w,
        });
    }
    if h < 2 || w < 2 {
        return Err(Error::DegenerateImage { width: w, height: h });
    }
    if out_h < 2 || out_w < 2 {
        return Err(Error::DegenerateImage {
            width: out_w,
            height: out_h,
        });
    }
    if h == out_h && w == out_w {
        return Ok(src.to_vec());
    }

    // Source coordinates are computed as (i·(H−1)) / (out_h−1) with the
    // integer product taken first: when the quotient is an integer the
    // IEEE division is exact, so corner rows and columns map exactly
    // onto source corners.
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let sy = (i * (h - 1)) as f32 / (out_h - 1) as f32;
        let y0 = (sy.floor() as usize).min(h - 2);
        let fy = sy - y0 as f32;
        for j in 0..out_w {
            let sx = (j * (w - 1)) as f32 / (out_w - 1) as f32;
            let x0 = (sx.floor() as usize).min(w - 2);
            let fx = sx - x0 as f32;
            let tl = src[y0 * w + x0];
            let tr = src[y0 * w + x0 + 1];
            let bl = src[(y0 + 1) * w + x0];
            let br = src[(y0 + 1) * w + x0 + 1];
            // Two-sided lerp: exact at t = 0 and t = 1, so source
            // corners survive the resize bit-for-bit.
            let top = tl * (1.0 - fx) + tr * fx;
            let bottom = bl * (1.0 - fx) + br * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_size_is_returned_unchanged() {
        let src: Vec<f32> = (0..64 * 64).map(|i| (i % 251) as f32 / 250.0).collect();
        let out = resize_bilinear(&src, 64, 64, 64, 64).unwrap();
        assert_eq!(out, src);
    }

    #[test]
    fn constant_images_stay_constant() {
        let src = vec![0.37f32; 224 * 224];
        let out = resize_bilinear(&src, 224, 224, 64, 64).unwrap();
        assert_eq!(out.len(), 64 * 64);
        for &v in &out {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn horizontal_ramp_resizes_to_horizontal_ramp() {
        // A linear ramp is reproduced exactly by bilinear interpolation
        // (up to float rounding): output column j should read j/63.
        let (h, w) = (224, 224);
        let src: Vec<f32> = (0..h * w)
            .map(|idx| (idx % w) as f32 / (w - 1) as f32)
            .collect();
        let out = resize_bilinear(&src, h, w, 64, 64).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                let expected = j as f32 / 63.0;
                let got = out[i * 64 + j];
                assert!(
                    (got - expected).abs() < 1e-4,
                    "pixel ({i},{j}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn corners_are_preserved_exactly() {
        let (h, w) = (31, 17);
        let mut src = vec![0.5f32; h * w];
        src[0] = 0.1; // top-left
        src[w - 1] = 0.2; // top-right
        src[(h - 1) * w] = 0.3; // bottom-left
        src[h * w - 1] = 0.4; // bottom-right
        let out = resize_bilinear(&src, h, w, 64, 64).unwrap();
        assert_eq!(out[0], 0.1);
        assert_eq!(out[63], 0.2);
        assert_eq!(out[63 * 64], 0.3);
        assert_eq!(out[64 * 64 - 1], 0.4);
    }

    #[test]
    fn output_range_never_exceeds_input_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xb111);
        for _ in 0..20 {
            let h = rng.random_range(2..40);
            let w = rng.random_range(2..40);
            let src: Vec<f32> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
            let lo = src.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = src.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let out = resize_bilinear(&src, h, w, 64, 64).unwrap();
            for &v in &out {
                assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_sizes_are_rejected() {
        assert!(matches!(
            resize_bilinear(&[0.0; 5], 1, 5, 64, 64),
            Err(Error::DegenerateImage { width: 5, height: 1 })
        ));
        assert!(matches!(
            resize_bilinear(&[0.0; 4], 2, 2, 1, 64),
            Err(Error::DegenerateImage { .. })
        ));
        assert!(matches!(
            resize_bilinear(&[0.0; 3], 2, 2, 64, 64),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
