use cvvnet_core::synth::{RAW_H, RAW_W};
use cvvnet_core::{synthesize_walker_clip, Condition, GaitError, ViewGroup, WalkerSpec};

fn mean_height(clip: &cvvnet_core::SilhouetteClip) -> f64 {
    clip.frames.iter().map(|f| f.foreground_height() as f64).sum::<f64>() / clip.len() as f64
}

#[test]
fn rendering_is_deterministic() {
    let spec = WalkerSpec::from_seed(3);
    let a = synthesize_walker_clip(&spec, 0.0, Condition::NM, 20, 9).unwrap();
    let b = synthesize_walker_clip(&spec, 0.0, Condition::NM, 20, 9).unwrap();
    assert_eq!(a, b);
    let c = synthesize_walker_clip(&spec, 0.0, Condition::NM, 20, 10).unwrap();
    assert_ne!(a.frames, c.frames, "noise seed should perturb boundaries");
    assert_eq!(a.frames[0].size(), (RAW_H, RAW_W));
}

#[test]
fn high_angle_foreshortens_the_figure() {
    for seed in 0..8 {
        let spec = WalkerSpec::from_seed(seed);
        let low = synthesize_walker_clip(&spec, 0.0, Condition::NM, 25, 1).unwrap();
        let high = synthesize_walker_clip(&spec, 80.0, Condition::NM, 25, 1).unwrap();
        assert!(mean_height(&high) < mean_height(&low), "seed {seed}: {} vs {}", mean_height(&high), mean_height(&low));
    }
}

#[test]
fn coat_never_shrinks_the_silhouette() {
    for seed in 0..6 {
        let spec = WalkerSpec::from_seed(seed);
        for angle in [0.0, 45.0, 75.0] {
            let nm = synthesize_walker_clip(&spec, angle, Condition::NM, 25, seed + 100).unwrap();
            let cl = synthesize_walker_clip(&spec, angle, Condition::CL, 25, seed + 100).unwrap();
            for (a, b) in nm.frames.iter().zip(&cl.frames) {
                assert!(b.area() >= a.area());
                // dilation is pixelwise monotone, not just in total area
                assert!(a.mask().iter().zip(b.mask()).all(|(&x, &y)| x <= y));
            }
        }
    }
}

#[test]
fn bag_adds_foreground_next_to_the_torso() {
    let spec = WalkerSpec::from_seed(4);
    let nm = synthesize_walker_clip(&spec, 0.0, Condition::NM, 10, 2).unwrap();
    let bg = synthesize_walker_clip(&spec, 0.0, Condition::BG, 10, 2).unwrap();
    for (a, b) in nm.frames.iter().zip(&bg.frames) {
        assert!(b.area() > a.area());
    }
}

#[test]
fn labels_follow_the_angle_bins() {
    let spec = WalkerSpec::from_seed(0);
    for (angle, view) in [(0.0, ViewGroup::Low), (45.0, ViewGroup::Mid), (60.0, ViewGroup::High), (80.0, ViewGroup::High)] {
        let clip = synthesize_walker_clip(&spec, angle, Condition::NM, 1, 0).unwrap();
        assert_eq!(clip.view_group, view);
        assert_eq!(clip.identity, 0);
        assert_eq!(clip.vertical_angle_deg, angle);
    }
    assert!(matches!(synthesize_walker_clip(&spec, 81.0, Condition::NM, 1, 0), Err(GaitError::InvalidAngle(_))));
}
