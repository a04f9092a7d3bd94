use cvvnet_train::augment::{augment_clip, erase, flip_horizontal, rotate, AugmentConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clip(t: usize, h: usize, w: usize) -> Vec<f64> {
    (0..t * h * w).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect()
}

#[test]
fn flipping_twice_is_the_identity() {
    let c = clip(3, 6, 5);
    let mut x = c.clone();
    flip_horizontal(&mut x, 6, 5);
    assert_ne!(x, c);
    assert_eq!(x[4], c[0]);
    flip_horizontal(&mut x, 6, 5);
    assert_eq!(x, c);
}

#[test]
fn zero_rotation_keeps_the_clip() {
    let c = clip(2, 9, 7);
    let mut x = c.clone();
    rotate(&mut x, 9, 7, 0.0);
    for (a, b) in x.iter().zip(&c) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn rotation_preserves_the_centre_pixel() {
    let mut c = vec![0.0; 9 * 7];
    c[4 * 7 + 3] = 1.0;
    rotate(&mut c, 9, 7, 7.5);
    assert!((c[4 * 7 + 3] - 1.0).abs() < 1e-12);
}

#[test]
fn erasing_zeroes_exactly_the_rectangle_in_every_frame() {
    let mut x = vec![1.0; 2 * 4 * 5];
    erase(&mut x, 4, 5, (1, 2, 2, 2));
    for f in 0..2 {
        for y in 0..4 {
            for c in 0..5 {
                let inside = (1..3).contains(&y) && (2..4).contains(&c);
                assert_eq!(x[f * 20 + y * 5 + c], if inside { 0.0 } else { 1.0 });
            }
        }
    }
}

#[test]
fn disabled_augmentation_is_a_no_op_and_enabled_is_deterministic() {
    let c = clip(2, 16, 11);
    let mut x = c.clone();
    augment_clip(&mut x, 16, 11, &AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(x, c);
    let all = AugmentConfig { flip: true, rotate: true, erase: true };
    let mut a = c.clone();
    let mut b = c.clone();
    augment_clip(&mut a, 16, 11, &all, &mut ChaCha8Rng::seed_from_u64(9));
    augment_clip(&mut b, 16, 11, &all, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
