//! Crop, center, scale and pad a raw silhouette to the network's input size.
//!
//! One alignment pass:
//! 1. crop the rows spanned by the foreground;
//! 2. resample the crop bilinearly so its height becomes `target_h`, scaling
//!    the width by the same factor (corner-aligned sampling, so the first and
//!    last output rows sample the first and last foreground rows exactly);
//! 3. binarize at 0.5;
//! 4. shift horizontally by the integer number of pixels that brings the
//!    foreground centroid closest to the output centre column (ties to even),
//!    zero-padding or cropping to `target_w`.
//!
//! A frame that is already tight, full height and centred passes through a
//! pass unchanged. Passes are repeated until the output stops changing so the
//! whole operation is idempotent even when thresholding thins out the top or
//! bottom row of a downscaled figure, or the width crop removes part of a
//! wide figure. Frames that never settle are reported as degenerate.

use crate::error::GaitError;
use crate::frame::SilhouetteFrame;

pub const TARGET_H: usize = 64;
pub const TARGET_W: usize = 44;

const MAX_PASSES: usize = 32;

pub fn preprocess_silhouette(
    raw: &SilhouetteFrame,
    target_h: usize,
    target_w: usize,
) -> Result<SilhouetteFrame, GaitError> {
    assert!(target_h >= 1 && target_w >= 1, "target size must be positive");
    let mut cur = align_pass(raw, target_h, target_w)?;
    for _ in 1..MAX_PASSES {
        let next = align_pass(&cur, target_h, target_w)?;
        if next.mask() == cur.mask() {
            cur.source_size = raw.source_size;
            return Ok(cur);
        }
        cur = next;
    }
    Err(GaitError::DegenerateFrame(format!("alignment did not settle within {MAX_PASSES} passes")))
}

fn align_pass(raw: &SilhouetteFrame, th: usize, tw: usize) -> Result<SilhouetteFrame, GaitError> {
    let (r0, r1, _, _) = raw.bbox().ok_or(GaitError::EmptyFrame)?;
    let h = r1 - r0 + 1;
    let w = raw.width();
    let scale = th as f64 / h as f64;
    let ws = (w as f64 * scale).round() as usize;
    if ws == 0 {
        return Err(GaitError::DegenerateFrame(format!(
            "width {w} collapses to zero when scaling height {h} to {th}"
        )));
    }

    let ys: Vec<f64> = corner_aligned(th, r0 as f64, r1 as f64);
    let xs: Vec<f64> = corner_aligned(ws, 0.0, (w - 1) as f64);
    let mut scaled = vec![0u8; th * ws];
    for (i, &y) in ys.iter().enumerate() {
        for (j, &x) in xs.iter().enumerate() {
            scaled[i * ws + j] = u8::from(bilinear(raw, y, x) >= 0.5);
        }
    }

    let mut count = 0i64;
    let mut col_sum = 0i64;
    for i in 0..th {
        for j in 0..ws {
            if scaled[i * ws + j] == 1 {
                count += 1;
                col_sum += j as i64;
            }
        }
    }
    if count == 0 {
        return Err(GaitError::DegenerateFrame("foreground vanished when resampled".into()));
    }
    // shift = round((tw-1)/2 - col_sum/count), computed exactly in integers
    let shift = round_half_even_ratio((tw as i64 - 1) * count - 2 * col_sum, 2 * count);

    let mut out = SilhouetteFrame::zeros(th, tw);
    for i in 0..th {
        for j in 0..ws {
            let dst = j as i64 + shift;
            if scaled[i * ws + j] == 1 && (0..tw as i64).contains(&dst) {
                out.set(i, dst as usize, true);
            }
        }
    }
    if out.area() == 0 {
        return Err(GaitError::DegenerateFrame("foreground shifted out of the target width".into()));
    }
    out.source_size = raw.source_size;
    Ok(out)
}

/// `n` sample positions from `a` to `b` inclusive (all at `a` when `n == 1`).
fn corner_aligned(n: usize, a: f64, b: f64) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn bilinear(f: &SilhouetteFrame, y: f64, x: f64) -> f64 {
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(f.height() - 1);
    let x1 = (x0 + 1).min(f.width() - 1);
    let (dy, dx) = (y - y0 as f64, x - x0 as f64);
    let v = |r, c| f.get(r, c) as f64;
    (1.0 - dy) * ((1.0 - dx) * v(y0, x0) + dx * v(y0, x1)) + dy * ((1.0 - dx) * v(y1, x0) + dx * v(y1, x1))
}

/// `num / den` rounded to the nearest integer, ties to even. `den > 0`.
fn round_half_even_ratio(num: i64, den: i64) -> i64 {
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_even_rounding() {
        assert_eq!(round_half_even_ratio(1, 2), 0);
        assert_eq!(round_half_even_ratio(3, 2), 2);
        assert_eq!(round_half_even_ratio(-1, 2), 0);
        assert_eq!(round_half_even_ratio(-3, 2), -2);
        assert_eq!(round_half_even_ratio(7, 3), 2);
        assert_eq!(round_half_even_ratio(-7, 3), -2);
    }
}
