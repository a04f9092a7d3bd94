//! Activation heatmaps: where a captured layer responds, drawn over the
//! silhouette it was computed from.

use std::path::Path;

use cvvnet_autograd::{Graph, Tensor};
use cvvnet_core::SilhouetteFrame;
use cvvnet_model::CvvNet;
use cvvnet_train::SequenceData;

use crate::error::{CliError, Result};

pub const OVERLAY_H: usize = 64;
pub const OVERLAY_W: usize = 44;
/// Weight of the heat colour in the blend.
pub const OVERLAY_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapOverlay {
    /// `OVERLAY_H x OVERLAY_W` values in `[0, 1]`.
    pub activation: Vec<f64>,
    pub base: SilhouetteFrame,
    pub blend: image::RgbImage,
}

/// Channel-mean absolute activation of one sample, averaged over time.
/// Accepts `(1, C, T, H, W)` or `(1, C, H, W)`.
pub fn activation_map(feat: &Tensor) -> (Vec<f64>, usize, usize) {
    let s = feat.shape();
    let (c, t, h, w) = match *s {
        [1, c, t, h, w] => (c, t, h, w),
        [1, c, h, w] => (c, 1, h, w),
        _ => panic!("activation_map expects one sample of rank 4 or 5, got {s:?}"),
    };
    let plane = h * w;
    let mut out = vec![0.0; plane];
    for block in feat.data().chunks_exact(plane) {
        for (o, v) in out.iter_mut().zip(block) {
            *o += v.abs();
        }
    }
    let n = (c * t) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    (out, h, w)
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w);
    let coord = |o: usize, n_in: usize, n_out: usize| {
        let x = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        let (y0, y1, fy) = coord(r, h, oh);
        for c in 0..ow {
            let (x0, x1, fx) = coord(c, w, ow);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Min-max scaling to `[0, 1]`; a constant map becomes all zeros.
pub fn normalize_min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        v.iter().map(|x| (x - lo) / span).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Blue-cyan-yellow-red ramp.
fn heat_colour(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let ramp = |x: f64| (1.5 - (4.0 * t - x).abs()).clamp(0.0, 1.0);
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

pub fn overlay_from_features(feat: &Tensor, base: &SilhouetteFrame) -> HeatmapOverlay {
    let (map, h, w) = activation_map(feat);
    let activation = normalize_min_max(&resize_bilinear(&map, h, w, OVERLAY_H, OVERLAY_W));
    let (bh, bw) = base.size();
    let blend = image::RgbImage::from_fn(OVERLAY_W as u32, OVERLAY_H as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let on = y < bh && x < bw && base.get(y, x) > 0;
        let gray = if on { 1.0 } else { 0.0 };
        let heat = heat_colour(activation[y * OVERLAY_W + x]);
        let px = heat.map(|c| (((1.0 - OVERLAY_ALPHA) * gray + OVERLAY_ALPHA * c) * 255.0).round() as u8);
        image::Rgb(px)
    });
    HeatmapOverlay { activation, base: base.clone(), blend }
}

/// Runs `model` on one whole sequence and returns the named capture.
pub fn capture_layer(model: &CvvNet, seq: &SequenceData, layer: &str) -> Result<Tensor> {
    let available = model.net.capture_names();
    if !available.iter().any(|n| n == layer) {
        return Err(CliError::UnknownLayer { name: layer.to_string(), available });
    }
    let mut g = Graph::eval(&model.store);
    let x = g.input(Tensor::new(&[1, 1, seq.n_frames, seq.height, seq.width], seq.frames.clone()));
    let mut caps = Vec::new();
    model.net.forward(&mut g, x, Some(&mut caps))?;
    let var = caps.iter().find(|(n, _)| n == layer).map(|(_, v)| *v).expect("layer was captured");
    Ok(g.value(var).clone())
}

/// Heatmap of `layer` for one sequence, drawn over its middle frame.
pub fn activation_heatmap(model: &CvvNet, seq: &SequenceData, layer: &str) -> Result<HeatmapOverlay> {
    let feat = capture_layer(model, seq, layer)?;
    let mid = seq.frame(seq.n_frames / 2);
    let base = SilhouetteFrame::new(seq.height, seq.width, mid.iter().map(|&v| u8::from(v > 0.5)).collect());
    Ok(overlay_from_features(&feat, &base))
}

impl HeatmapOverlay {
    /// Writes the blended overlay as `<stem>.png` and the raw activation as
    /// a grayscale `<stem>_activation.png`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let png = dir.join(format!("{stem}.png"));
        self.blend.save(&png).map_err(|source| CliError::Image { path: png, source })?;
        let act = image::GrayImage::from_fn(OVERLAY_W as u32, OVERLAY_H as u32, |x, y| {
            image::Luma([(self.activation[y as usize * OVERLAY_W + x as usize] * 255.0).round() as u8])
        });
        let path = dir.join(format!("{stem}_activation.png"));
        act.save(&path).map_err(|source| CliError::Image { path, source })
    }
}
