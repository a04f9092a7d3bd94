//! Clip-level silhouette augmentation. One set of random parameters is drawn
//! per clip and applied to every frame, so motion stays coherent.

use rand::Rng;

pub const MAX_ROTATION_DEG: f64 = 10.0;
pub const FLIP_PROB: f64 = 0.5;
pub const ERASE_PROB: f64 = 0.5;
/// Range of the erased rectangle's area as a fraction of the frame.
pub const ERASE_AREA: (f64, f64) = (0.02, 0.2);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AugmentConfig {
    pub flip: bool,
    pub rotate: bool,
    pub erase: bool,
}

impl AugmentConfig {
    pub fn any(&self) -> bool {
        self.flip || self.rotate || self.erase
    }
}

/// Mirrors every frame left to right. `clip` is `t` frames of `h x w`.
pub fn flip_horizontal(clip: &mut [f64], h: usize, w: usize) {
    for row in clip.chunks_mut(w) {
        row.reverse();
    }
    debug_assert_eq!(clip.len() % (h * w), 0);
}

/// Rotates every frame by `deg` degrees about its centre (bilinear, zero fill).
pub fn rotate(clip: &mut [f64], h: usize, w: usize, deg: f64) {
    let (s, c) = deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut out = vec![0.0; h * w];
    for frame in clip.chunks_mut(h * w) {
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                // inverse map: source position of output pixel (y, x)
                let sy = c * dy - s * dx + cy;
                let sx = s * dy + c * dx + cx;
                let (y0, x0) = (sy.floor(), sx.floor());
                let (fy, fx) = (sy - y0, sx - x0);
                let at = |yy: f64, xx: f64| -> f64 {
                    if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                        0.0
                    } else {
                        frame[yy as usize * w + xx as usize]
                    }
                };
                out[y * w + x] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1.0))
                    + fy * ((1.0 - fx) * at(y0 + 1.0, x0) + fx * at(y0 + 1.0, x0 + 1.0));
            }
        }
        frame.copy_from_slice(&out);
    }
}

/// Zeroes the rectangle `[top, top + rh) x [left, left + rw)` in every frame.
pub fn erase(clip: &mut [f64], h: usize, w: usize, rect: (usize, usize, usize, usize)) {
    let (top, left, rh, rw) = rect;
    for frame in clip.chunks_mut(h * w) {
        for y in top..(top + rh).min(h) {
            frame[y * w + left..y * w + (left + rw).min(w)].fill(0.0);
        }
    }
}

/// Applies the enabled transforms with parameters drawn from `rng`.
/// Every draw happens regardless of the toggles, so enabling one transform
/// does not shift the random stream of the others.
pub fn augment_clip<R: Rng + ?Sized>(clip: &mut [f64], h: usize, w: usize, cfg: &AugmentConfig, rng: &mut R) {
    let do_flip = rng.random::<f64>() < FLIP_PROB;
    let angle = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
    let do_erase = rng.random::<f64>() < ERASE_PROB;
    let area = rng.random_range(ERASE_AREA.0..=ERASE_AREA.1) * (h * w) as f64;
    let aspect: f64 = rng.random_range(0.5..=2.0);
    let rh = ((area * aspect).sqrt().round() as usize).clamp(1, h);
    let rw = ((area / aspect).sqrt().round() as usize).clamp(1, w);
    let top = rng.random_range(0..=h - rh);
    let left = rng.random_range(0..=w - rw);
    if cfg.flip && do_flip {
        flip_horizontal(clip, h, w);
    }
    if cfg.rotate {
        rotate(clip, h, w, angle);
    }
    if cfg.erase && do_erase {
        erase(clip, h, w, (top, left, rh, rw));
    }
}
