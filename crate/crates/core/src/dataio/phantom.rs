//! Procedural test objects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

fn paint_rect(img: &mut Tensor, rng: &mut ChaCha8Rng, value: f64) {
    let [_, _, h, w] = img.shape();
    let rh = rng.random_range(h / 6..=h / 2).max(1);
    let rw = rng.random_range(w / 6..=w / 2).max(1);
    let top = rng.random_range(0..=h - rh);
    let left = rng.random_range(0..=w - rw);
    for i in top..top + rh {
        for j in left..left + rw {
            img.set(0, 0, i, j, value);
        }
    }
}

fn paint_disk(img: &mut Tensor, rng: &mut ChaCha8Rng, value: f64) {
    let [_, _, h, w] = img.shape();
    let side = h.min(w) as f64;
    let r = rng.random_range(0.08 * side..0.25 * side);
    let ci = rng.random_range(0.0..h as f64);
    let cj = rng.random_range(0.0..w as f64);
    for i in 0..h {
        for j in 0..w {
            let (di, dj) = (i as f64 + 0.5 - ci, j as f64 + 0.5 - cj);
            if di * di + dj * dj <= r * r {
                img.set(0, 0, i, j, value);
            }
        }
    }
}

/// A 3×5 binary bitmap, upscaled so it spans roughly a sixth of the image.
fn paint_glyph(img: &mut Tensor, rng: &mut ChaCha8Rng, value: f64) {
    let [_, _, h, w] = img.shape();
    let scale = (h.min(w) / 16).max(1);
    let (gh, gw) = (5 * scale, 3 * scale);
    if gh > h || gw > w {
        return;
    }
    let bits: Vec<bool> = (0..15).map(|_| rng.random_bool(0.55)).collect();
    let top = rng.random_range(0..=h - gh);
    let left = rng.random_range(0..=w - gw);
    for i in 0..gh {
        for j in 0..gw {
            if bits[(i / scale) * 3 + j / scale] {
                img.set(0, 0, top + i, left + j, value);
            }
        }
    }
}

/// Random scene in `[0, 1]`: a low-amplitude linear gradient background with
/// 2 to 5 rectangles or disks and, half of the time, a text-like glyph.
pub fn random_phantom(height: usize, width: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let mut img = Tensor::zeros([1, 1, height, width]);
    let base = rng.random_range(0.0..0.2);
    let amp = rng.random_range(0.0..0.3);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let (ct, st) = (theta.cos(), theta.sin());
    for i in 0..height {
        for j in 0..width {
            let u = (i as f64 / height as f64) * st + (j as f64 / width as f64) * ct;
            img.set(0, 0, i, j, base + amp * 0.5 * (1.0 + u));
        }
    }
    for _ in 0..rng.random_range(2..=5) {
        let value = rng.random_range(0.2..1.0);
        if rng.random_bool(0.5) {
            paint_rect(&mut img, rng, value);
        } else {
            paint_disk(&mut img, rng, value);
        }
    }
    if rng.random_bool(0.5) {
        let value = rng.random_range(0.6..1.0);
        paint_glyph(&mut img, rng, value);
    }
    img.map(|v| v.clamp(0.0, 1.0))
}

/// Piecewise-constant scene (rectangles and disks on a flat background).
pub fn piecewise_constant_phantom(height: usize, width: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Tensor::full([1, 1, height, width], 0.1);
    for k in 0..4 {
        let value = [0.9, 0.5, 0.7, 0.3][k];
        if k % 2 == 0 {
            paint_rect(&mut img, &mut rng, value);
        } else {
            paint_disk(&mut img, &mut rng, value);
        }
    }
    img
}
