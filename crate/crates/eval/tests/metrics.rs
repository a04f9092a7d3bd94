use cvvnet_core::{Condition, ViewGroup};
use cvvnet_eval::{
    mean_average_precision, pairwise_distance, rank_curve, rank_k, ranked_gallery, EvalError, EvalRecord, Exclusion,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rec(emb: Vec<f64>, parts: usize, identity: u64, seq: &str) -> EvalRecord {
    let dim = emb.len() / parts;
    EvalRecord::new(emb, parts, dim, identity, Some(ViewGroup::Low), Some(Condition::NM), seq)
}

fn random_records(rng: &mut ChaCha8Rng, n: usize, ids: u64, prefix: &str) -> Vec<EvalRecord> {
    (0..n)
        .map(|i| {
            let emb = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            rec(emb, 2, rng.random_range(0..ids), &format!("{prefix}{i:03}"))
        })
        .collect()
}

/// Distance computed element by element.
fn oracle_distance(a: &EvalRecord, b: &EvalRecord) -> f64 {
    let mut total = 0.0;
    for p in 0..a.parts {
        let mut sq = 0.0;
        for d in 0..a.dim {
            let diff = a.embedding[p * a.dim + d] - b.embedding[p * a.dim + d];
            sq += diff * diff;
        }
        total += sq.sqrt();
    }
    total
}

/// Rank position of each candidate computed by counting the candidates
/// that sort before it, instead of sorting.
fn oracle_ranking(probe: &EvalRecord, gallery: &[EvalRecord]) -> Vec<usize> {
    let cands: Vec<usize> = (0..gallery.len()).filter(|&i| gallery[i].sequence_id != probe.sequence_id).collect();
    let d: Vec<f64> = gallery.iter().map(|g| oracle_distance(probe, g)).collect();
    let before = |a: usize, b: usize| {
        d[a] < d[b] || (d[a] == d[b] && (gallery[a].sequence_id < gallery[b].sequence_id || (gallery[a].sequence_id == gallery[b].sequence_id && a < b)))
    };
    let mut out = vec![0; cands.len()];
    for &c in &cands {
        let pos = cands.iter().filter(|&&o| o != c && before(o, c)).count();
        out[pos] = c;
    }
    out
}

fn oracle_rank_k(probes: &[EvalRecord], gallery: &[EvalRecord], k: usize) -> f64 {
    let hits = probes
        .iter()
        .filter(|p| oracle_ranking(p, gallery).iter().take(k).any(|&i| gallery[i].identity == p.identity))
        .count();
    100.0 * hits as f64 / probes.len() as f64
}

fn oracle_map(probes: &[EvalRecord], gallery: &[EvalRecord]) -> (f64, usize) {
    let (mut sum, mut n) = (0.0, 0);
    for p in probes {
        let order = oracle_ranking(p, gallery);
        let positives = order.iter().filter(|&&i| gallery[i].identity == p.identity).count();
        if positives == 0 {
            continue;
        }
        let mut ap = 0.0;
        for r in 0..order.len() {
            if gallery[order[r]].identity == p.identity {
                let hits_so_far = order[..=r].iter().filter(|&&i| gallery[i].identity == p.identity).count();
                ap += hits_so_far as f64 / (r + 1) as f64;
            }
        }
        sum += ap / positives as f64;
        n += 1;
    }
    (if n == 0 { 0.0 } else { 100.0 * sum / n as f64 }, probes.len() - n)
}

#[test]
fn identical_embeddings_are_at_distance_zero() {
    let a = rec(vec![0.3, -1.0, 2.0, 0.5], 2, 1, "a");
    let b = rec(vec![0.3, -1.0, 2.0, 0.5], 2, 2, "b");
    assert_eq!(pairwise_distance(&a, &[b]).unwrap(), vec![0.0]);
}

#[test]
fn distances_scale_and_rankings_do_not_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gallery = random_records(&mut rng, 12, 4, "g");
    let probe = random_records(&mut rng, 1, 4, "p").remove(0);
    let c = 3.5;
    let scale = |r: &EvalRecord| EvalRecord { embedding: r.embedding.iter().map(|v| v * c).collect(), ..r.clone() };
    let scaled: Vec<EvalRecord> = gallery.iter().map(scale).collect();
    let d0 = pairwise_distance(&probe, &gallery).unwrap();
    let d1 = pairwise_distance(&scale(&probe), &scaled).unwrap();
    for (a, b) in d0.iter().zip(&d1) {
        assert!((a * c - b).abs() < 1e-12);
    }
    assert_eq!(
        ranked_gallery(&probe, &gallery, Exclusion::SameSequence).unwrap(),
        ranked_gallery(&scale(&probe), &scaled, Exclusion::SameSequence).unwrap()
    );
}

#[test]
fn distances_match_the_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rs = random_records(&mut rng, 9, 3, "r");
    for p in &rs {
        let d = pairwise_distance(p, &rs).unwrap();
        for (g, v) in rs.iter().zip(d) {
            assert!((v - oracle_distance(p, g)).abs() < 1e-12);
        }
    }
}

#[test]
fn shape_mismatch_is_reported() {
    let a = rec(vec![0.0; 4], 2, 1, "a");
    let b = rec(vec![0.0; 6], 2, 1, "b");
    assert!(matches!(pairwise_distance(&a, &[b]), Err(EvalError::ShapeMismatch { .. })));
}

#[test]
fn duplicated_sequences_give_perfect_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rs = Vec::new();
    for id in 0..6u64 {
        let emb: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
        rs.push(rec(emb.clone(), 2, id, &format!("s{id}a")));
        rs.push(rec(emb, 2, id, &format!("s{id}b")));
    }
    assert_eq!(rank_k(&rs, &rs, 1, Exclusion::SameSequence).unwrap(), 100.0);
}

#[test]
fn constructed_ranking_gives_rank_one_zero_and_rank_five_full() {
    let probe = rec(vec![0.0, 0.0], 1, 7, "p");
    let gallery = vec![rec(vec![1.0, 0.0], 1, 1, "g1"), rec(vec![2.0, 0.0], 1, 7, "g2"), rec(vec![3.0, 0.0], 1, 2, "g3")];
    let probes = [probe];
    assert_eq!(rank_k(&probes, &gallery, 1, Exclusion::SameSequence).unwrap(), 0.0);
    assert_eq!(rank_k(&probes, &gallery, 5, Exclusion::SameSequence).unwrap(), 100.0);
    let m = mean_average_precision(&probes, &gallery, Exclusion::SameSequence).unwrap();
    assert!((m.map - 50.0).abs() < 1e-12);
}

#[test]
fn random_instance_matches_exhaustive_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let probes = random_records(&mut rng, 10, 5, "p");
    let gallery = random_records(&mut rng, 20, 5, "g");
    for k in [1, 3, 5] {
        let v = rank_k(&probes, &gallery, k, Exclusion::SameSequence).unwrap();
        assert!((v - oracle_rank_k(&probes, &gallery, k)).abs() < 1e-6);
    }
    let m = mean_average_precision(&probes, &gallery, Exclusion::SameSequence).unwrap();
    let (om, skipped) = oracle_map(&probes, &gallery);
    assert!((m.map - om).abs() < 1e-6);
    assert_eq!(m.skipped, skipped);
}

#[test]
fn perfect_ranking_has_full_average_precision() {
    let probe = rec(vec![0.0], 1, 1, "p");
    let gallery: Vec<EvalRecord> = (0..6)
        .map(|i| rec(vec![i as f64 + 1.0], 1, if i < 3 { 1 } else { 2 }, &format!("g{i}")))
        .collect();
    let m = mean_average_precision(&[probe], &gallery, Exclusion::SameSequence).unwrap();
    assert_eq!(m.map, 100.0);
}

#[test]
fn single_positive_at_rank_r_has_precision_one_over_r() {
    for r in 1..=6 {
        let probe = rec(vec![0.0], 1, 1, "p");
        let gallery: Vec<EvalRecord> = (1..=6)
            .map(|i| rec(vec![i as f64], 1, if i == r { 1 } else { 2 }, &format!("g{i}")))
            .collect();
        let m = mean_average_precision(&[probe], &gallery, Exclusion::SameSequence).unwrap();
        assert!((m.map - 100.0 / r as f64).abs() < 1e-12);
    }
}

#[test]
fn probes_without_positives_are_skipped_and_counted() {
    let probes = vec![rec(vec![0.0], 1, 1, "p1"), rec(vec![0.0], 1, 9, "p2")];
    let gallery = vec![rec(vec![1.0], 1, 1, "g1"), rec(vec![2.0], 1, 2, "g2")];
    let m = mean_average_precision(&probes, &gallery, Exclusion::SameSequence).unwrap();
    assert_eq!((m.evaluated, m.skipped), (1, 1));
    assert_eq!(m.map, 100.0);
}

#[test]
fn ties_are_broken_by_sequence_id() {
    let probe = rec(vec![0.0], 1, 1, "p");
    let gallery = vec![rec(vec![1.0], 1, 2, "zz"), rec(vec![-1.0], 1, 1, "aa")];
    assert_eq!(ranked_gallery(&probe, &gallery, Exclusion::SameSequence).unwrap(), vec![1, 0]);
    assert_eq!(rank_k(&[probe], &gallery, 1, Exclusion::SameSequence).unwrap(), 100.0);
}

#[test]
fn exclusion_can_empty_the_gallery() {
    let probe = rec(vec![0.0], 1, 1, "p");
    assert!(matches!(
        rank_k(&[probe.clone()], &[probe.clone()], 1, Exclusion::SameSequence),
        Err(EvalError::EmptyGalleryAfterExclusion { .. })
    ));
    let other = rec(vec![0.0], 1, 1, "q");
    assert!(rank_k(&[probe.clone()], &[other.clone()], 1, Exclusion::SameSequenceAndView).is_err());
    assert_eq!(rank_k(&[probe], &[other], 1, Exclusion::None).unwrap(), 100.0);
}

fn instance() -> impl Strategy<Value = (Vec<EvalRecord>, Vec<EvalRecord>)> {
    let record = |prefix: &'static str| {
        (proptest::collection::vec(-3i32..3, 2), 0u64..4, 0usize..50)
            .prop_map(move |(e, id, s)| rec(e.into_iter().map(f64::from).collect(), 1, id, &format!("{prefix}{s:02}")))
    };
    (proptest::collection::vec(record("p"), 1..12), proptest::collection::vec(record("g"), 1..38))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn metrics_match_oracles_and_bounds((probes, gallery) in instance()) {
        let curve = rank_curve(&probes, &gallery, 5, Exclusion::SameSequence).unwrap();
        for (k, v) in curve.iter().enumerate() {
            prop_assert!((0.0..=100.0).contains(v));
            prop_assert!((v - oracle_rank_k(&probes, &gallery, k + 1)).abs() < 1e-6);
        }
        prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        let m = mean_average_precision(&probes, &gallery, Exclusion::SameSequence).unwrap();
        let (om, skipped) = oracle_map(&probes, &gallery);
        prop_assert!((0.0..=100.0).contains(&m.map));
        prop_assert!((m.map - om).abs() < 1e-6);
        prop_assert_eq!(m.skipped, skipped);
    }

    #[test]
    fn a_probe_never_matches_itself((probes, gallery) in instance()) {
        let mut all = gallery.clone();
        all.extend(probes.iter().cloned());
        for p in &probes {
            if let Ok(order) = ranked_gallery(p, &all, Exclusion::SameSequence) {
                prop_assert!(order.iter().all(|&i| all[i].sequence_id != p.sequence_id));
            }
        }
    }

    #[test]
    fn increasing_transforms_of_distance_preserve_metrics((probes, gallery) in instance(), e in -4i32..5) {
        // a power of two keeps ties exact after scaling
        let c = 2f64.powi(e);
        let scale = |rs: &Vec<EvalRecord>| -> Vec<EvalRecord> {
            rs.iter().map(|r| EvalRecord { embedding: r.embedding.iter().map(|v| v * c).collect(), ..r.clone() }).collect()
        };
        let (sp, sg) = (scale(&probes), scale(&gallery));
        for p in 0..probes.len() {
            let a = ranked_gallery(&probes[p], &gallery, Exclusion::SameSequence).unwrap();
            let b = ranked_gallery(&sp[p], &sg, Exclusion::SameSequence).unwrap();
            prop_assert_eq!(a, b);
        }
        let m0 = mean_average_precision(&probes, &gallery, Exclusion::SameSequence).unwrap();
        let m1 = mean_average_precision(&sp, &sg, Exclusion::SameSequence).unwrap();
        prop_assert_eq!(m0, m1);
    }
}
