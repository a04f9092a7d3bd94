//! Spatial-frequency spectra of feature maps.
//!
//! A `(C, H, W)` map is reduced over channels, transformed with a 2-D DFT,
//! shifted so the zero frequency sits at `(H / 2, W / 2)`, and reported as
//! `log(1 + |F|)` (or plain `|F|`) together with its mean over integer radius
//! bands.

use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelReduce {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for ChannelReduce {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(ChannelReduce::Mean),
            "max" => Ok(ChannelReduce::Max),
            _ => Err(format!("unknown channel reduction {s:?} (expected mean or max)")),
        }
    }
}

/// Magnitude scaling applied before the radial average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MagnitudeScale {
    #[default]
    Log,
    Linear,
}

impl std::str::FromStr for MagnitudeScale {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "log" => Ok(MagnitudeScale::Log),
            "linear" => Ok(MagnitudeScale::Linear),
            _ => Err(format!("unknown magnitude scale {s:?} (expected log or linear)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumProfile {
    pub height: usize,
    pub width: usize,
    /// Centered `log(1 + |F|)` or `|F|`, row-major `height x width`.
    pub magnitude: Vec<f64>,
    /// Mean of `magnitude` over each band `round(r) = i` around the centre.
    pub radial_profile: Vec<f64>,
}

/// Collapses `(c, h, w)` values to one `h x w` plane.
pub fn reduce_channels(data: &[f64], c: usize, h: usize, w: usize, reduce: ChannelReduce) -> Vec<f64> {
    assert_eq!(data.len(), c * h * w, "feature map size does not match (c, h, w)");
    assert!(c > 0, "feature map has no channels");
    let plane = h * w;
    let mut out = data[..plane].to_vec();
    for ch in data.chunks_exact(plane).skip(1) {
        for (o, &v) in out.iter_mut().zip(ch) {
            *o = match reduce {
                ChannelReduce::Mean => *o + v,
                ChannelReduce::Max => o.max(v),
            };
        }
    }
    if reduce == ChannelReduce::Mean {
        out.iter_mut().for_each(|v| *v /= c as f64);
    }
    out
}

/// Unnormalized 2-D DFT of a real `h x w` plane, in natural (unshifted) order.
pub fn dft2(plane: &[f64], h: usize, w: usize) -> Vec<Complex<f64>> {
    assert_eq!(plane.len(), h * w);
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex<f64>> = plane.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = buf[i * w + j];
        }
        col_fft.process(&mut col);
        for i in 0..h {
            buf[i * w + j] = col[i];
        }
    }
    buf
}

/// `|F|` with the zero frequency moved to `(h / 2, w / 2)`.
pub fn centered_magnitude(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let f = dft2(plane, h, w);
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[((i + h / 2) % h) * w + (j + w / 2) % w] = f[i * w + j].norm();
        }
    }
    out
}

/// Mean value per integer radius band around `(h / 2, w / 2)`.
pub fn radial_profile(values: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let band = |i: usize, j: usize| ((i as f64 - cy).hypot(j as f64 - cx)).round() as usize;
    let bands = (0..h).flat_map(|i| (0..w).map(move |j| (i, j))).map(|(i, j)| band(i, j)).max().unwrap_or(0) + 1;
    let mut sum = vec![0.0; bands];
    let mut count = vec![0usize; bands];
    for i in 0..h {
        for j in 0..w {
            let b = band(i, j);
            sum[b] += values[i * w + j];
            count[b] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 }).collect()
}

pub fn feature_spectrum(
    data: &[f64],
    c: usize,
    h: usize,
    w: usize,
    reduce: ChannelReduce,
    scale: MagnitudeScale,
) -> SpectrumProfile {
    let plane = reduce_channels(data, c, h, w, reduce);
    let mut magnitude = centered_magnitude(&plane, h, w);
    if scale == MagnitudeScale::Log {
        magnitude.iter_mut().for_each(|m| *m = m.ln_1p());
    }
    let radial_profile = radial_profile(&magnitude, h, w);
    SpectrumProfile { height: h, width: w, magnitude, radial_profile }
}

impl SpectrumProfile {
    /// `radius,magnitude` rows under a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,magnitude\n");
        for (r, m) in self.radial_profile.iter().enumerate() {
            let _ = writeln!(s, "{r},{m}");
        }
        s
    }

    /// Grayscale rendering, min-max scaled to 0..=255.
    pub fn to_image(&self) -> image::GrayImage {
        let lo = self.magnitude.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.magnitude.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.magnitude[y as usize * self.width + x as usize];
            let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
            image::Luma([(t * 255.0).round() as u8])
        })
    }

    /// Writes `<stem>.png` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let png = dir.join(format!("{stem}.png"));
        self.to_image().save(&png).map_err(|source| CliError::Image { path: png, source })?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| CliError::io(csv, e))
    }
}
