//! Procedural articulated walker rendered from an elevated pinhole camera.
//!
//! The body is a stick figure of capsules (torso, shoulder and hip bars,
//! two-segment legs and arms) plus a spherical head, animated in place by
//! sinusoidal joint angles. The camera sits on the walker's left at a fixed
//! distance, looking at mid-body and pitched down by the vertical angle, so
//! larger angles foreshorten the body and bring the legs under the torso.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::GaitError;
use crate::frame::{Condition, SilhouetteClip, SilhouetteFrame, ViewGroup, MAX_VERTICAL_ANGLE};

pub const RAW_H: usize = 128;
pub const RAW_W: usize = 88;
pub const FPS: f64 = 25.0;
const CAMERA_DISTANCE: f64 = 6.0;
const FOCAL_PX: f64 = 600.0;
/// Coat condition: every body capsule radius is multiplied by this.
pub const CL_WIDTH_FACTOR: f64 = 1.6;
/// Maximum boundary jitter, in pixels, added to each shape radius per frame.
const JITTER_PX: f64 = 0.5;

/// Per-identity body proportions and gait style, in body-height units.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerSpec {
    pub identity_seed: u64,
    /// torso, head, upper leg, lower leg, upper arm, lower arm.
    pub limb_lengths: [f64; 6],
    pub cadence_hz: f64,
    pub stride_amplitude_rad: f64,
    pub body_width: f64,
}

impl WalkerSpec {
    pub fn from_seed(identity_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(identity_seed ^ 0x5741_4c4b_4552_0001);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let limb_lengths = [u(0.27, 0.35), u(0.10, 0.14), u(0.21, 0.28), u(0.21, 0.28), u(0.14, 0.20), u(0.12, 0.18)];
        WalkerSpec {
            identity_seed,
            limb_lengths,
            cadence_hz: u(0.6, 1.6),
            stride_amplitude_rad: u(0.25, 0.65),
            body_width: u(0.035, 0.075),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.limb_lengths.iter().all(|&l| l > 0.0 && l.is_finite())
            && (0.5..=2.0).contains(&self.cadence_hz)
            && self.stride_amplitude_rad > 0.0
            && self.body_width > 0.0
    }

    /// Start phase of the gait cycle, fixed per identity.
    fn phase0(&self) -> f64 {
        (self.identity_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64 * TAU
    }
}

type P3 = [f64; 3];

struct Camera {
    pos: P3,
    fwd: P3,
    right: P3,
    up: P3,
}

impl Camera {
    fn new(angle_deg: f64, target_z: f64) -> Self {
        let a = angle_deg.to_radians();
        let (s, c) = a.sin_cos();
        Camera {
            pos: [0.0, -CAMERA_DISTANCE * c, target_z + CAMERA_DISTANCE * s],
            fwd: [0.0, c, -s],
            right: [1.0, 0.0, 0.0],
            up: [0.0, s, c],
        }
    }

    /// `(row, col, px_per_unit)` on the raw canvas.
    fn project(&self, p: P3) -> (f64, f64, f64) {
        let d = [p[0] - self.pos[0], p[1] - self.pos[1], p[2] - self.pos[2]];
        let dot = |a: P3| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
        let depth = dot(self.fwd);
        let k = FOCAL_PX / depth;
        (RAW_H as f64 / 2.0 - k * dot(self.up), RAW_W as f64 / 2.0 + k * dot(self.right), k)
    }
}

enum Shape {
    Capsule { a: (f64, f64), b: (f64, f64), r: f64 },
    Disc { c: (f64, f64), r: f64 },
    Rect { r0: f64, r1: f64, c0: f64, c1: f64 },
}

impl Shape {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Capsule { a, b, r } => (a.0.min(b.0) - r, a.0.max(b.0) + r, a.1.min(b.1) - r, a.1.max(b.1) + r),
            Shape::Disc { c, r } => (c.0 - r, c.0 + r, c.1 - r, c.1 + r),
            Shape::Rect { r0, r1, c0, c1 } => (r0, r1, c0, c1),
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Capsule { a, b, r } => {
                let (dy, dx) = (b.0 - a.0, b.1 - a.1);
                let len2 = dy * dy + dx * dx;
                let t = if len2 > 0.0 { (((y - a.0) * dy + (x - a.1) * dx) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let (py, px) = (a.0 + t * dy - y, a.1 + t * dx - x);
                py * py + px * px <= r * r
            }
            Shape::Disc { c, r } => (y - c.0).powi(2) + (x - c.1).powi(2) <= r * r,
            Shape::Rect { r0, r1, c0, c1 } => (r0..=r1).contains(&y) && (c0..=c1).contains(&x),
        }
    }
}

struct Segment {
    a: P3,
    b: P3,
    radius: f64,
}

/// Joint positions at time `t` seconds.
fn pose(spec: &WalkerSpec, t: f64, width_factor: f64) -> (Vec<Segment>, P3, f64) {
    let [torso, head, upper_leg, lower_leg, upper_arm, lower_arm] = spec.limb_lengths;
    let bw = spec.body_width;
    let amp = spec.stride_amplitude_rad;
    let phi = TAU * spec.cadence_hz * t + spec.phase0();
    let limb_r = 0.5 * bw * width_factor;
    let torso_r = 1.4 * bw * width_factor;

    let pelvis_z = (upper_leg + lower_leg) * (1.0 - 0.015 * (1.0 - (2.0 * phi).cos()));
    let shoulder_z = pelvis_z + torso;
    let mut segs = vec![
        Segment { a: [0.0, 0.0, pelvis_z], b: [0.0, 0.0, shoulder_z], radius: torso_r },
        Segment { a: [0.0, -0.9 * bw, pelvis_z], b: [0.0, 0.9 * bw, pelvis_z], radius: limb_r },
        Segment { a: [0.0, -1.8 * bw, shoulder_z], b: [0.0, 1.8 * bw, shoulder_z], radius: limb_r },
    ];
    for (side, offset) in [(-1.0, 0.0), (1.0, PI)] {
        let p = phi + offset;
        let hip_ang = amp * p.sin();
        let knee_flex = amp * 0.55 * (1.0 + (p + PI / 2.0).sin());
        let hip = [0.0, side * 0.9 * bw, pelvis_z];
        let knee = [hip[0] + upper_leg * hip_ang.sin(), hip[1], hip[2] - upper_leg * hip_ang.cos()];
        let shin = hip_ang - knee_flex;
        let ankle = [knee[0] + lower_leg * shin.sin(), knee[1], knee[2] - lower_leg * shin.cos()];
        segs.push(Segment { a: hip, b: knee, radius: limb_r });
        segs.push(Segment { a: knee, b: ankle, radius: limb_r });

        let sh_ang = -0.8 * amp * p.sin();
        let elbow_flex = 0.25 + 0.3 * amp * (1.0 + (p + PI / 2.0).sin());
        let shoulder = [0.0, side * (1.8 * bw + limb_r), shoulder_z];
        let elbow = [shoulder[0] + upper_arm * sh_ang.sin(), shoulder[1], shoulder[2] - upper_arm * sh_ang.cos()];
        let fore = sh_ang + elbow_flex;
        let wrist = [elbow[0] + lower_arm * fore.sin(), elbow[1], elbow[2] - lower_arm * fore.cos()];
        segs.push(Segment { a: shoulder, b: elbow, radius: limb_r });
        segs.push(Segment { a: elbow, b: wrist, radius: limb_r });
    }
    let head_c = [0.0, 0.0, shoulder_z + 0.02 + head / 2.0];
    (segs, head_c, head / 2.0)
}

/// Corners of the carried bag, attached to the back of the torso.
fn bag_corners(spec: &WalkerSpec) -> Vec<P3> {
    let [torso, _, upper_leg, lower_leg, ..] = spec.limb_lengths;
    let back = 1.4 * spec.body_width;
    let pelvis_z = upper_leg + lower_leg;
    let mut v = Vec::with_capacity(8);
    for x in [-back - 0.10, -back + 0.02] {
        for y in [-0.08, 0.08] {
            for z in [pelvis_z + 0.2 * torso, pelvis_z + 0.75 * torso] {
                v.push([x, y, z]);
            }
        }
    }
    v
}

fn rasterize(shapes: &[Shape]) -> SilhouetteFrame {
    let mut f = SilhouetteFrame::zeros(RAW_H, RAW_W);
    for s in shapes {
        let (y0, y1, x0, x1) = s.bounds();
        let r0 = (y0.floor().max(0.0)) as usize;
        let r1 = (y1.ceil().max(0.0) as usize).min(RAW_H);
        let c0 = (x0.floor().max(0.0)) as usize;
        let c1 = (x1.ceil().max(0.0) as usize).min(RAW_W);
        for r in r0..r1 {
            for c in c0..c1 {
                if s.contains(r as f64 + 0.5, c as f64 + 0.5) {
                    f.set(r, c, true);
                }
            }
        }
    }
    f
}

/// Renders `n_frames` raw `RAW_H x RAW_W` silhouettes of `spec` walking.
///
/// `noise_seed` only perturbs shape radii by up to half a pixel per frame; the
/// same seed draws the same perturbations under every condition.
pub fn synthesize_walker_clip(
    spec: &WalkerSpec,
    vertical_angle_deg: f64,
    condition: Condition,
    n_frames: usize,
    noise_seed: u64,
) -> Result<SilhouetteClip, GaitError> {
    if !(0.0..=MAX_VERTICAL_ANGLE).contains(&vertical_angle_deg) {
        return Err(GaitError::InvalidAngle(vertical_angle_deg));
    }
    if n_frames == 0 {
        return Err(GaitError::InvalidClipLength);
    }
    let body_h = spec.limb_lengths[0] + spec.limb_lengths[1] + spec.limb_lengths[2] + spec.limb_lengths[3];
    let cam = Camera::new(vertical_angle_deg, body_h / 2.0);
    let width_factor = if condition == Condition::CL { CL_WIDTH_FACTOR } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut frames = Vec::with_capacity(n_frames);
    for n in 0..n_frames {
        let (segs, head_c, head_r) = pose(spec, n as f64 / FPS, width_factor);
        let mut jitter = || rng.random_range(-JITTER_PX..=JITTER_PX);
        let mut shapes = Vec::with_capacity(segs.len() + 2);
        for s in &segs {
            let (ya, xa, ka) = cam.project(s.a);
            let (yb, xb, kb) = cam.project(s.b);
            let r = (s.radius * 0.5 * (ka + kb) + jitter()).max(0.0);
            shapes.push(Shape::Capsule { a: (ya, xa), b: (yb, xb), r });
        }
        let (yh, xh, kh) = cam.project(head_c);
        shapes.push(Shape::Disc { c: (yh, xh), r: (head_r * kh + jitter()).max(0.0) });
        if condition == Condition::BG {
            let pts: Vec<(f64, f64, f64)> = bag_corners(spec).into_iter().map(|p| cam.project(p)).collect();
            let fold = |g: fn(&(f64, f64, f64)) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
                pts.iter().map(g).fold(init, pick)
            };
            shapes.push(Shape::Rect {
                r0: fold(|p| p.0, f64::INFINITY, f64::min),
                r1: fold(|p| p.0, f64::NEG_INFINITY, f64::max),
                c0: fold(|p| p.1, f64::INFINITY, f64::min),
                c1: fold(|p| p.1, f64::NEG_INFINITY, f64::max),
            });
        }
        frames.push(rasterize(&shapes));
    }
    let clip = SilhouetteClip::new(frames, spec.identity_seed, condition, vertical_angle_deg)?;
    debug_assert_eq!(clip.view_group, ViewGroup::from_angle(vertical_angle_deg)?);
    Ok(clip)
}
