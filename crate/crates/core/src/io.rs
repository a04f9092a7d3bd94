//! On-disk clip layout: one directory of 8-bit PGM/PNG frames per sequence
//! (read in lexicographic filename order) plus a line-oriented sidecar
//! `metadata.txt` holding one `key=value` record per sequence.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::GaitError;
use crate::frame::{Condition, SilhouetteClip, SilhouetteFrame, ViewGroup};
use crate::preprocess::{preprocess_silhouette, TARGET_H, TARGET_W};

pub const METADATA_FILE: &str = "metadata.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Pgm,
    Png,
}

impl FrameFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FrameFormat::Pgm => "pgm",
            FrameFormat::Png => "png",
        }
    }
}

/// Writes an 8-bit frame; the format follows the file extension (`.pgm` is binary P5).
pub fn write_frame(path: &Path, frame: &SilhouetteFrame) -> Result<(), GaitError> {
    let is_pgm = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let mut bytes = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
        bytes.extend(frame.to_gray());
        return fs::write(path, bytes).map_err(|e| GaitError::io(path, e));
    }
    let img = image::GrayImage::from_raw(frame.width() as u32, frame.height() as u32, frame.to_gray())
        .expect("buffer matches frame size");
    img.save(path).map_err(|e| GaitError::format(path, e.to_string()))
}

pub fn read_frame(path: &Path) -> Result<SilhouetteFrame, GaitError> {
    let img = image::open(path).map_err(|e| GaitError::format(path, e.to_string()))?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(SilhouetteFrame::from_gray(h as usize, w as usize, img.as_raw()))
}

/// Writes `frame_0000.<ext>`, `frame_0001.<ext>`, ... into `dir`, creating it.
pub fn write_sequence(dir: &Path, frames: &[SilhouetteFrame], format: FrameFormat) -> Result<(), GaitError> {
    fs::create_dir_all(dir).map_err(|e| GaitError::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        write_frame(&dir.join(format!("frame_{i:04}.{}", format.extension())), f)?;
    }
    Ok(())
}

/// Reads every `.pgm`/`.png` file of `dir` in lexicographic order.
pub fn read_sequence(dir: &Path) -> Result<Vec<SilhouetteFrame>, GaitError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| GaitError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(GaitError::EmptySequence);
    }
    paths.iter().map(|p| read_frame(p)).collect()
}

/// Sidecar record for one sequence directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    /// Directory relative to the dataset root.
    pub sequence: String,
    pub identity: u64,
    pub view_group: ViewGroup,
    pub condition: Condition,
    pub vertical_angle_deg: f64,
}

impl SequenceMeta {
    pub fn to_line(&self) -> String {
        format!(
            "sequence={} identity={} view_group={} condition={} vertical_angle_deg={}",
            self.sequence, self.identity, self.view_group, self.condition, self.vertical_angle_deg
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let mut sequence = None;
        let mut identity = None;
        let mut view = None;
        let mut condition = None;
        let mut angle = None;
        for field in line.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| format!("field {field:?} is not key=value"))?;
            match k {
                "sequence" => sequence = Some(v.to_string()),
                "identity" => identity = Some(v.parse::<u64>().map_err(|e| format!("identity: {e}"))?),
                "view_group" => view = Some(v.parse::<ViewGroup>()?),
                "condition" => condition = Some(v.parse::<Condition>()?),
                "vertical_angle_deg" => angle = Some(v.parse::<f64>().map_err(|e| format!("angle: {e}"))?),
                _ => return Err(format!("unknown key {k:?}")),
            }
        }
        let meta = SequenceMeta {
            sequence: sequence.ok_or("missing sequence")?,
            identity: identity.ok_or("missing identity")?,
            view_group: view.ok_or("missing view_group")?,
            condition: condition.ok_or("missing condition")?,
            vertical_angle_deg: angle.ok_or("missing vertical_angle_deg")?,
        };
        let binned = ViewGroup::from_angle(meta.vertical_angle_deg).map_err(|e| e.to_string())?;
        if binned != meta.view_group {
            return Err(format!(
                "view_group {} inconsistent with angle {} (bins to {binned})",
                meta.view_group, meta.vertical_angle_deg
            ));
        }
        Ok(meta)
    }
}

pub fn write_metadata(path: &Path, records: &[SequenceMeta]) -> Result<(), GaitError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| GaitError::io(path, e))
}

pub fn read_metadata(path: &Path) -> Result<Vec<SequenceMeta>, GaitError> {
    let text = fs::read_to_string(path).map_err(|e| GaitError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| SequenceMeta::parse_line(l).map_err(|m| GaitError::format(path, format!("line {}: {m}", i + 1))))
        .collect()
}

/// A dataset root with its sidecar metadata loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub sequences: Vec<SequenceMeta>,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, GaitError> {
        let root = root.into();
        let sequences = read_metadata(&root.join(METADATA_FILE))?;
        Ok(Dataset { root, sequences })
    }

    /// Loads the frames of one sequence, aligned to the network input size.
    pub fn load(&self, meta: &SequenceMeta) -> Result<SilhouetteClip, GaitError> {
        let raw = read_sequence(&self.root.join(&meta.sequence))?;
        let frames = raw
            .iter()
            .map(|f| preprocess_silhouette(f, TARGET_H, TARGET_W))
            .collect::<Result<Vec<_>, _>>()?;
        SilhouetteClip::new(frames, meta.identity, meta.condition, meta.vertical_angle_deg)
    }

    pub fn load_all(&self) -> Result<Vec<SilhouetteClip>, GaitError> {
        self.sequences.iter().map(|m| self.load(m)).collect()
    }
}
