//! Regenerable synthetic datasets.
//!
//! A manifest lists one rendering recipe per sequence; `generate` turns it
//! into the on-disk layout of [`crate::io`]. The manifest alone determines
//! every byte written.

use std::fs;
use std::path::Path;

use crate::error::GaitError;
use crate::frame::{Condition, SilhouetteClip, ViewGroup};
use crate::io::{write_metadata, write_sequence, FrameFormat, SequenceMeta, METADATA_FILE};
use crate::preprocess::{preprocess_silhouette, TARGET_H, TARGET_W};
use crate::synth::{synthesize_walker_clip, WalkerSpec};

const MAGIC: &str = "CVVNET-SYNTH-MANIFEST 1";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub identity_seed: u64,
    pub angle: f64,
    pub condition: Condition,
    pub n_frames: usize,
    pub noise_seed: u64,
}

impl ManifestEntry {
    pub fn view_group(&self) -> Result<ViewGroup, GaitError> {
        ViewGroup::from_angle(self.angle)
    }

    /// Raw render followed by alignment to the network input size.
    pub fn render(&self) -> Result<SilhouetteClip, GaitError> {
        let raw = synthesize_walker_clip(
            &WalkerSpec::from_seed(self.identity_seed),
            self.angle,
            self.condition,
            self.n_frames,
            self.noise_seed,
        )?;
        let frames = raw
            .frames
            .iter()
            .map(|f| preprocess_silhouette(f, TARGET_H, TARGET_W))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(raw.with_frames(frames))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

/// Parameters of a full identity x view x condition x repeat grid.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub identities: usize,
    pub first_identity_seed: u64,
    /// Angles per view group, one per repeat (cycled if shorter).
    pub view_angles: Vec<(ViewGroup, Vec<f64>)>,
    pub conditions: Vec<Condition>,
    pub repeats: usize,
    pub n_frames: usize,
    pub seed: u64,
}

impl GridSpec {
    /// 16 identities, three views (0, 45 and 70 degrees), three conditions,
    /// two repeats.
    pub fn desk_default() -> Self {
        GridSpec {
            identities: 16,
            first_identity_seed: 1,
            view_angles: vec![
                (ViewGroup::Low, vec![0.0]),
                (ViewGroup::Mid, vec![45.0]),
                (ViewGroup::High, vec![70.0]),
            ],
            conditions: Condition::ALL.to_vec(),
            repeats: 2,
            n_frames: 40,
            seed: 0,
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Manifest {
    pub fn grid(g: &GridSpec) -> Result<Self, GaitError> {
        let mut entries = Vec::new();
        for i in 0..g.identities {
            let identity_seed = g.first_identity_seed + i as u64;
            for (view, angles) in &g.view_angles {
                for &condition in &g.conditions {
                    for rep in 0..g.repeats {
                        let angle = angles[rep % angles.len()];
                        if ViewGroup::from_angle(angle)? != *view {
                            return Err(GaitError::InvalidAngle(angle));
                        }
                        let noise_seed = mix(g.seed ^ mix(entries.len() as u64));
                        entries.push(ManifestEntry { identity_seed, angle, condition, n_frames: g.n_frames, noise_seed });
                    }
                }
            }
        }
        Ok(Manifest { entries })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC}\n");
        for e in &self.entries {
            s.push_str(&format!(
                "identity_seed={} angle={} condition={} n_frames={} noise_seed={}\n",
                e.identity_seed, e.angle, e.condition, e.n_frames, e.noise_seed
            ));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err("missing manifest header".into());
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut e = (None, None, None, None, None);
            for field in line.split_whitespace() {
                let (k, v) = field.split_once('=').ok_or_else(|| format!("line {}: bad field {field:?}", i + 2))?;
                let err = |m: String| format!("line {}: {k}: {m}", i + 2);
                match k {
                    "identity_seed" => e.0 = Some(v.parse::<u64>().map_err(|x| err(x.to_string()))?),
                    "angle" => e.1 = Some(v.parse::<f64>().map_err(|x| err(x.to_string()))?),
                    "condition" => e.2 = Some(v.parse::<Condition>().map_err(err)?),
                    "n_frames" => e.3 = Some(v.parse::<usize>().map_err(|x| err(x.to_string()))?),
                    "noise_seed" => e.4 = Some(v.parse::<u64>().map_err(|x| err(x.to_string()))?),
                    _ => return Err(format!("line {}: unknown key {k:?}", i + 2)),
                }
            }
            match e {
                (Some(identity_seed), Some(angle), Some(condition), Some(n_frames), Some(noise_seed)) => {
                    entries.push(ManifestEntry { identity_seed, angle, condition, n_frames, noise_seed })
                }
                _ => return Err(format!("line {}: incomplete entry", i + 2)),
            }
        }
        Ok(Manifest { entries })
    }

    pub fn read(path: &Path) -> Result<Self, GaitError> {
        let text = fs::read_to_string(path).map_err(|e| GaitError::io(path, e))?;
        Manifest::parse(&text).map_err(|m| GaitError::format(path, m))
    }

    pub fn write(&self, path: &Path) -> Result<(), GaitError> {
        fs::write(path, self.to_text()).map_err(|e| GaitError::io(path, e))
    }

    /// Directory name of entry `index`, relative to the dataset root.
    pub fn sequence_dir(&self, index: usize) -> String {
        format!("id{:04}/seq{index:04}", self.entries[index].identity_seed)
    }

    /// Renders every entry into `root` and writes the metadata sidecar and a
    /// copy of the manifest.
    pub fn generate(&self, root: &Path, format: FrameFormat) -> Result<(), GaitError> {
        fs::create_dir_all(root).map_err(|e| GaitError::io(root, e))?;
        let mut meta = Vec::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            let clip = e.render()?;
            let rel = self.sequence_dir(i);
            write_sequence(&root.join(&rel), &clip.frames, format)?;
            meta.push(SequenceMeta {
                sequence: rel,
                identity: e.identity_seed,
                view_group: clip.view_group,
                condition: e.condition,
                vertical_angle_deg: e.angle,
            });
        }
        write_metadata(&root.join(METADATA_FILE), &meta)?;
        self.write(&root.join(MANIFEST_FILE))
    }
}
