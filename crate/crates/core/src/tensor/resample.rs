use super::Tensor;
use crate::error::{Error, Result};

/// One output coordinate of a 1-D linear interpolation: the two source
/// indices and the weight of the upper one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpsampleTap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

/// Source taps for upsampling an axis of length `len` by `factor`, using
/// half-pixel centers (`src = (i + 0.5) / factor - 0.5`, clamped to the edge).
pub fn upsample_taps(len: usize, factor: usize) -> Vec<UpsampleTap> {
    let scale = factor as f64;
    (0..len * factor)
        .map(|i| {
            let src = ((i as f64 + 0.5) / scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(len - 1);
            let hi = (lo + 1).min(len - 1);
            UpsampleTap { lo, hi, frac: src - lo as f64 }
        })
        .collect()
}

pub fn bilinear_upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::argument("upsampling factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(x.clone());
    }
    let [n, c, h, w] = x.shape();
    let rows = upsample_taps(h, factor);
    let cols = upsample_taps(w, factor);
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = out.plane_mut(p);
        for (i, r) in rows.iter().enumerate() {
            for (j, t) in cols.iter().enumerate() {
                let top = src[r.lo * w + t.lo] * (1.0 - t.frac) + src[r.lo * w + t.hi] * t.frac;
                let bot = src[r.hi * w + t.lo] * (1.0 - t.frac) + src[r.hi * w + t.hi] * t.frac;
                dst[i * ow + j] = top * (1.0 - r.frac) + bot * r.frac;
            }
        }
    }
    Ok(out)
}

/// Zero-pads height and width up to the next powers of two. Returns the
/// original `(height, width)` for [`crop`].
pub fn pad_to_pow2(x: &Tensor) -> (Tensor, (usize, usize)) {
    let [n, c, h, w] = x.shape();
    let (ph, pw) = (h.next_power_of_two(), w.next_power_of_two());
    if (ph, pw) == (h, w) {
        return (x.clone(), (h, w));
    }
    let mut out = Tensor::zeros([n, c, ph, pw]);
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = out.plane_mut(p);
        for i in 0..h {
            dst[i * pw..i * pw + w].copy_from_slice(&src[i * w..(i + 1) * w]);
        }
    }
    (out, (h, w))
}

/// Top-left `height × width` window of every plane.
pub fn crop(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let [n, c, h, w] = x.shape();
    if height == 0 || width == 0 || height > h || width > w {
        return Err(Error::sizing(format!("cannot crop {h}x{w} to {height}x{width}")));
    }
    let mut out = Tensor::zeros([n, c, height, width]);
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = out.plane_mut(p);
        for i in 0..height {
            dst[i * width..(i + 1) * width].copy_from_slice(&src[i * w..i * w + width]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_plane_stays_constant() {
        let x = Tensor::full([1, 2, 3, 5], 7.0);
        let y = bilinear_upsample(&x, 2).unwrap();
        assert_eq!(y.shape(), [1, 2, 6, 10]);
        assert!(y.data().iter().all(|&v| (v - 7.0).abs() < 1e-15));
    }

    #[test]
    fn factor_one_is_identity_and_zero_rejected() {
        let x = Tensor::from_plane(2, 2, vec![0., 1., 2., 3.]).unwrap();
        assert_eq!(bilinear_upsample(&x, 1).unwrap(), x);
        assert!(matches!(bilinear_upsample(&x, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn two_by_two_matches_hand_evaluation() {
        // Hand evaluation: source coordinate s = (i + 0.5)/2 - 0.5 clamped to
        // [0, 1] gives s in {0, 0.25, 0.75, 1} along each axis, so the output
        // is f(r, c) = 2r + c sampled on that grid.
        let x = Tensor::from_plane(2, 2, vec![0., 1., 2., 3.]).unwrap();
        let y = bilinear_upsample(&x, 2).unwrap();
        let s = [0.0, 0.25, 0.75, 1.0];
        for i in 0..4 {
            for j in 0..4 {
                let expected = 2.0 * s[i] + s[j];
                assert!((y.get(0, 0, i, j) - expected).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn pad_then_crop_round_trips() {
        let x = Tensor::from_plane(6, 10, (0..60).map(|v| v as f64 * 0.5).collect()).unwrap();
        let (p, (h, w)) = pad_to_pow2(&x);
        assert_eq!(p.shape(), [1, 1, 8, 16]);
        assert_eq!(crop(&p, h, w).unwrap(), x);
    }

    #[test]
    fn pad_fills_zeros_and_is_idempotent_on_pow2() {
        let x = Tensor::full([1, 1, 5, 7], 1.0);
        let (p, orig) = pad_to_pow2(&x);
        assert_eq!(orig, (5, 7));
        assert_eq!(p.shape(), [1, 1, 8, 8]);
        assert_eq!(p.sum(), 35.0);
        assert_eq!(p.get(0, 0, 5, 0), 0.0);
        assert_eq!(p.get(0, 0, 0, 7), 0.0);
        let (q, _) = pad_to_pow2(&p);
        assert_eq!(q, p);
    }
}
