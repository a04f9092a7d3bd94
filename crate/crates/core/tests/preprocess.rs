use cvvnet_core::{preprocess_silhouette, GaitError, SilhouetteFrame, TARGET_H, TARGET_W};
use proptest::prelude::*;

fn rect(h: usize, w: usize, rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>) -> SilhouetteFrame {
    let mut f = SilhouetteFrame::zeros(h, w);
    for r in rows {
        for c in cols.clone() {
            f.set(r, c, true);
        }
    }
    f
}

fn cols(f: &SilhouetteFrame) -> Vec<usize> {
    (0..f.width()).filter(|&c| (0..f.height()).any(|r| f.get(r, c) == 1)).collect()
}

#[test]
fn aligned_frame_is_a_fixed_point() {
    // full height, centroid column (10 + 33) / 2 = 21.5 = the centre of 44 columns
    let mut f = rect(64, 44, 0..=63, 10..=33);
    f.set(0, 5, true);
    f.set(0, 38, true);
    let out = preprocess_silhouette(&f, TARGET_H, TARGET_W).unwrap();
    assert_eq!(out, f);
}

#[test]
fn tall_centered_figure_in_large_frame_is_cropped_to_target() {
    // 64-row rectangle, 20 columns wide, centred at column 43.5 of an 88-wide frame:
    // the crop needs no scaling, and the centroid moves by -22 columns.
    let f = rect(128, 88, 32..=95, 34..=53);
    let out = preprocess_silhouette(&f, 64, 44).unwrap();
    assert_eq!(out.size(), (64, 44));
    assert_eq!(out.mask(), rect(64, 44, 0..=63, 12..=31).mask());
    assert_eq!(out.source_size, (128, 88));
}

#[test]
fn short_figure_is_upscaled_by_hand_computed_factor() {
    // rows 10..=41 (32 tall) scale by 2; width 30 -> 60 sample columns at x_j = 29 j / 59.
    // Bilinear value of the column band [5, 12] is >= 0.5 for x in [4.5, 12.5],
    // i.e. j in 10..=25. Centroid 17.5 shifts by round(21.5 - 17.5) = 4.
    let f = rect(60, 30, 10..=41, 5..=12);
    let out = preprocess_silhouette(&f, 64, 44).unwrap();
    assert_eq!(cols(&out), (14..=29).collect::<Vec<_>>());
    assert_eq!(out.mask(), rect(64, 44, 0..=63, 14..=29).mask());
}

#[test]
fn empty_frame_is_rejected() {
    let f = SilhouetteFrame::zeros(64, 44);
    assert!(matches!(preprocess_silhouette(&f, 64, 44), Err(GaitError::EmptyFrame)));
}

#[test]
fn figure_too_thin_to_survive_scaling_is_degenerate() {
    let f = rect(1000, 2, 0..=999, 0..=0);
    assert!(matches!(preprocess_silhouette(&f, 64, 44), Err(GaitError::DegenerateFrame(_))));
}

fn arb_frame() -> impl Strategy<Value = SilhouetteFrame> {
    (4usize..90, 4usize..70)
        .prop_flat_map(|(h, w)| {
            let blobs = prop::collection::vec((0..h, 0..w, 1..h.max(2), 1..w.max(2)), 1..4);
            (Just(h), Just(w), blobs)
        })
        .prop_map(|(h, w, blobs)| {
            let mut f = SilhouetteFrame::zeros(h, w);
            for (r, c, bh, bw) in blobs {
                for rr in r..(r + bh).min(h) {
                    for cc in c..(c + bw).min(w) {
                        f.set(rr, cc, true);
                    }
                }
            }
            f
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn preprocessing_is_idempotent_binary_and_sized(f in arb_frame()) {
        match preprocess_silhouette(&f, TARGET_H, TARGET_W) {
            Ok(once) => {
                prop_assert_eq!(once.size(), (TARGET_H, TARGET_W));
                prop_assert!(once.mask().iter().all(|&v| v <= 1));
                prop_assert!(once.area() > 0);
                let twice = preprocess_silhouette(&once, TARGET_H, TARGET_W).unwrap();
                prop_assert_eq!(twice, once);
            }
            Err(GaitError::DegenerateFrame(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
