use cvvnet_autograd::Tensor;
use cvvnet_cli::desk::desk_config;
use cvvnet_cli::heatmap::{
    activation_heatmap, activation_map, normalize_min_max, overlay_from_features, resize_bilinear, OVERLAY_H, OVERLAY_W,
};
use cvvnet_cli::CliError;
use cvvnet_core::manifest::{GridSpec, Manifest};
use cvvnet_core::SilhouetteFrame;
use cvvnet_model::CvvNet;
use cvvnet_train::SequenceData;
use proptest::prelude::*;

fn base() -> SilhouetteFrame {
    SilhouetteFrame::zeros(OVERLAY_H, OVERLAY_W)
}

fn one_sequence() -> SequenceData {
    let mut grid = GridSpec::desk_default();
    grid.identities = 1;
    grid.n_frames = 6;
    let m = Manifest::grid(&grid).unwrap();
    let clip = m.entries[0].render().unwrap();
    SequenceData::from_clip(&clip, "s0", 0)
}

#[test]
fn zero_features_give_an_all_zero_overlay() {
    let o = overlay_from_features(&Tensor::zeros(&[1, 4, 3, 16, 11]), &base());
    assert_eq!(o.activation.len(), OVERLAY_H * OVERLAY_W);
    assert!(o.activation.iter().all(|&v| v == 0.0));
    assert_eq!(o.blend.dimensions(), (OVERLAY_W as u32, OVERLAY_H as u32));
}

#[test]
fn bottom_quarter_features_put_the_mass_on_the_legs() {
    let (c, t, h, w) = (3, 2, 16, 11);
    let mut feat = Tensor::zeros(&[1, c, t, h, w]);
    for ci in 0..c {
        for ti in 0..t {
            for i in 3 * h / 4..h {
                for j in 0..w {
                    feat.set(&[0, ci, ti, i, j], 1.0 + (ci + j) as f64);
                }
            }
        }
    }
    let o = overlay_from_features(&feat, &base());
    let total: f64 = o.activation.iter().sum();
    let bottom: f64 = o.activation[3 * OVERLAY_H / 4 * OVERLAY_W..].iter().sum();
    let lower_third: f64 = o.activation[2 * OVERLAY_H / 3 * OVERLAY_W..].iter().sum();
    assert!(bottom / total > 0.9, "bottom quarter holds {}", bottom / total);
    assert_eq!(lower_third, total);
}

#[test]
fn activation_is_channel_mean_absolute_then_time_mean() {
    let feat = Tensor::new(&[1, 2, 2, 1, 2], vec![1.0, -2.0, 3.0, 0.0, -5.0, 4.0, 1.0, 2.0]);
    let (map, h, w) = activation_map(&feat);
    assert_eq!((h, w), (1, 2));
    assert_eq!(map, vec![(1.0 + 3.0 + 5.0 + 1.0) / 4.0, (2.0 + 0.0 + 4.0 + 2.0) / 4.0]);
}

#[test]
fn same_size_resize_is_identity_and_constants_stay_constant() {
    let src: Vec<f64> = (0..12).map(|v| v as f64 * 0.5).collect();
    assert_eq!(resize_bilinear(&src, 3, 4, 3, 4), src);
    assert!(resize_bilinear(&[2.0; 6], 2, 3, 64, 44).iter().all(|&v| (v - 2.0).abs() < 1e-12));
}

#[test]
fn constant_maps_normalize_to_zero() {
    assert_eq!(normalize_min_max(&[3.0, 3.0, 3.0]), vec![0.0; 3]);
    assert_eq!(normalize_min_max(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
}

#[test]
fn model_heatmap_is_deterministic_and_normalized() {
    let model = CvvNet::init(desk_config().backbone, 3).unwrap();
    let seq = one_sequence();
    for layer in model.net.capture_names() {
        let a = activation_heatmap(&model, &seq, &layer).unwrap();
        let b = activation_heatmap(&model, &seq, &layer).unwrap();
        assert_eq!(a.blend.as_raw(), b.blend.as_raw());
        assert_eq!(a.blend.dimensions(), (OVERLAY_W as u32, OVERLAY_H as u32));
        let lo = a.activation.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = a.activation.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo == 0.0 && (hi == 1.0 || hi == 0.0), "{layer}: {lo}..{hi}");
    }
}

#[test]
fn unknown_layers_are_rejected() {
    let model = CvvNet::init(desk_config().backbone, 0).unwrap();
    match activation_heatmap(&model, &one_sequence(), "s9.b9") {
        Err(CliError::UnknownLayer { name, available }) => {
            assert_eq!(name, "s9.b9");
            assert!(available.contains(&"msaga.1".to_string()));
        }
        other => panic!("expected UnknownLayer, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn overlay_is_always_64_by_44_and_in_unit_range(h in 1usize..20, w in 1usize..20, seed in 0u64..1000) {
        let data: Vec<f64> = (0..2 * h * w).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 - 48.0).collect();
        let o = overlay_from_features(&Tensor::new(&[1, 2, h, w], data), &base());
        prop_assert_eq!(o.activation.len(), OVERLAY_H * OVERLAY_W);
        prop_assert_eq!(o.blend.dimensions(), (OVERLAY_W as u32, OVERLAY_H as u32));
        prop_assert!(o.activation.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
