use std::fmt;
use std::str::FromStr;

use crate::error::GaitError;

pub const MAX_VERTICAL_ANGLE: f64 = 80.0;

/// Binary silhouette mask, row-major, values in {0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SilhouetteFrame {
    height: usize,
    width: usize,
    mask: Vec<u8>,
    /// Pixel size of the raw image this frame was derived from.
    pub source_size: (usize, usize),
}

impl SilhouetteFrame {
    /// Builds a frame from 0/1 values. Panics on other values or a length mismatch.
    pub fn new(height: usize, width: usize, mask: Vec<u8>) -> Self {
        assert_eq!(mask.len(), height * width, "mask length does not match {height}x{width}");
        assert!(mask.iter().all(|&v| v <= 1), "silhouette masks are binary");
        SilhouetteFrame { height, width, mask, source_size: (height, width) }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![0; height * width])
    }

    /// Thresholds an 8-bit image at 128.
    pub fn from_gray(height: usize, width: usize, pixels: &[u8]) -> Self {
        Self::new(height, width, pixels.iter().map(|&p| u8::from(p >= 128)).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.mask[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.mask[row * self.width + col] = u8::from(on);
    }

    pub fn area(&self) -> usize {
        self.mask.iter().map(|&v| v as usize).sum()
    }

    /// Inclusive `(row0, row1, col0, col1)` of the foreground, if any.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) == 1 {
                    b = Some(match b {
                        None => (r, r, c, c),
                        Some((r0, _, c0, c1)) => (r0, r, c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        b
    }

    /// Number of rows spanned by the foreground (0 when empty).
    pub fn foreground_height(&self) -> usize {
        self.bbox().map_or(0, |(r0, r1, _, _)| r1 - r0 + 1)
    }

    /// Mask scaled to {0, 255} for 8-bit image output.
    pub fn to_gray(&self) -> Vec<u8> {
        self.mask.iter().map(|&v| v * 255).collect()
    }

    /// Mask as reals in {0.0, 1.0}.
    pub fn to_f64(&self) -> Vec<f64> {
        self.mask.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewGroup {
    Low,
    Mid,
    High,
}

impl ViewGroup {
    pub const ALL: [ViewGroup; 3] = [ViewGroup::Low, ViewGroup::Mid, ViewGroup::High];

    /// Bins a vertical camera angle: below 30 is Low, [30, 60) is Mid, [60, 80] is High.
    pub fn from_angle(deg: f64) -> Result<Self, GaitError> {
        if !(0.0..=MAX_VERTICAL_ANGLE).contains(&deg) {
            return Err(GaitError::InvalidAngle(deg));
        }
        Ok(if deg < 30.0 {
            ViewGroup::Low
        } else if deg < 60.0 {
            ViewGroup::Mid
        } else {
            ViewGroup::High
        })
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ViewGroup::Low => "Low",
            ViewGroup::Mid => "Mid",
            ViewGroup::High => "High",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    NM,
    BG,
    CL,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::NM, Condition::BG, Condition::CL];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NM => "NM",
            Condition::BG => "BG",
            Condition::CL => "CL",
        }
    }
}

macro_rules! text_enum {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| format!("unknown {} {s:?}", $what))
            }
        }
    };
}

text_enum!(ViewGroup, "view group");
text_enum!(Condition, "condition");

/// A labelled, ordered sequence of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteClip {
    pub frames: Vec<SilhouetteFrame>,
    pub identity: u64,
    pub view_group: ViewGroup,
    pub condition: Condition,
    pub vertical_angle_deg: f64,
}

impl SilhouetteClip {
    /// Checks label consistency and equal frame sizes.
    pub fn new(
        frames: Vec<SilhouetteFrame>,
        identity: u64,
        condition: Condition,
        vertical_angle_deg: f64,
    ) -> Result<Self, GaitError> {
        let view_group = ViewGroup::from_angle(vertical_angle_deg)?;
        if let Some(first) = frames.first() {
            if let Some(f) = frames.iter().find(|f| f.size() != first.size()) {
                return Err(GaitError::SizeMismatch(first.size(), f.size()));
            }
        }
        Ok(SilhouetteClip { frames, identity, view_group, condition, vertical_angle_deg })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_size(&self) -> Option<(usize, usize)> {
        self.frames.first().map(SilhouetteFrame::size)
    }

    /// Frames `(T, H, W)` flattened into reals.
    pub fn to_f64(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.mask().iter().map(|&v| v as f64)).collect()
    }

    /// Same labels, frames replaced.
    pub fn with_frames(&self, frames: Vec<SilhouetteFrame>) -> Self {
        SilhouetteClip { frames, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_bins() {
        assert_eq!(ViewGroup::from_angle(0.0).unwrap(), ViewGroup::Low);
        assert_eq!(ViewGroup::from_angle(29.9).unwrap(), ViewGroup::Low);
        assert_eq!(ViewGroup::from_angle(30.0).unwrap(), ViewGroup::Mid);
        assert_eq!(ViewGroup::from_angle(59.9).unwrap(), ViewGroup::Mid);
        assert_eq!(ViewGroup::from_angle(60.0).unwrap(), ViewGroup::High);
        assert_eq!(ViewGroup::from_angle(80.0).unwrap(), ViewGroup::High);
        assert!(ViewGroup::from_angle(80.5).is_err());
        assert!(ViewGroup::from_angle(-1.0).is_err());
    }

    #[test]
    fn enums_round_trip_through_text() {
        for v in ViewGroup::ALL {
            assert_eq!(v.to_string().parse::<ViewGroup>().unwrap(), v);
        }
        for c in Condition::ALL {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
        }
        assert!("XX".parse::<Condition>().is_err());
    }
}
