use hypdyn::io::{format_partition, parse_partition};
use hypdyn::maps::SystemModel;
use hypdyn::partition::*;
use hypdyn::symbolic::{spectral_radius, TransitionMatrix};
use proptest::prelude::*;
use rand::SeedableRng;

fn refined(k: usize, mode: RefineMode) -> Partition {
    let m = SystemModel::horseshoe();
    refine_rounds(&m, &base_partition(&m).unwrap(), k, mode, DEFAULT_RECTANGLE_CAP).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a / b - 1.0).abs() <= 1e-13
}

#[test]
fn counts_and_diameters_follow_the_law() {
    for k in 0..=10 {
        let push = refined(k, RefineMode::Pushforward);
        let pull = refined(k, RefineMode::Pullback);
        let third = 3f64.powi(-(k as i32));
        assert_eq!(push.len(), 1 << (k + 1));
        assert_eq!(pull.len(), 1 << (k + 1));
        assert!(close(push.s_diameter(), third));
        assert!(close(pull.u_diameter(), third / 3.0));
        if k <= 6 {
            let both = refined(k, RefineMode::Both);
            assert_eq!(both.len(), 1 << (2 * k + 1));
            assert!(close(both.s_diameter(), third) && close(both.u_diameter(), third / 3.0));
        }
        let area: f64 = push.rectangles.iter().map(|r| r.s_len * r.u_len).sum();
        assert!(close(area, 2.0 / 3.0 * 2f64.powi(k as i32) * third));
    }
}

#[test]
fn markov_at_every_depth() {
    let m = SystemModel::horseshoe();
    for k in 0..=6 {
        for mode in [RefineMode::Pushforward, RefineMode::Pullback, RefineMode::Both] {
            if mode == RefineMode::Both && k > 4 {
                continue;
            }
            let p = refined(k, mode);
            let rep = verify_markov(&m, &p, 9);
            assert!(rep.pass, "k = {k} {mode:?}: {:?}", rep.worst);
        }
    }
}

/// Counts of admissible `k`-blocks through the matrix pick out the
/// entropy of the two-symbol shift at every depth.
#[test]
fn refined_matrices_have_radius_two() {
    let m = SystemModel::horseshoe();
    for k in 1..=6 {
        let p = refined(k, RefineMode::Pushforward);
        let a = transition_matrix(&m, &p);
        assert_eq!(a, TransitionMatrix::de_bruijn(2, k as u32 + 1));
        let r = spectral_radius(&a, 1e-12).unwrap();
        assert!((r.rho - 2.0).abs() <= 1e-9, "k = {k}: {}", r.rho);
    }
}

/// Horizontal edges are pieces of stable leaves and must map into horizontal
/// edges; vertical edges pull back into vertical edges.
#[test]
fn boundary_is_invariant() {
    let m = SystemModel::horseshoe();
    let p = refined(3, RefineMode::Both);
    let near = |v: f64, set: &[f64]| set.iter().any(|b| (b - v).abs() <= 1e-12);
    let mut u_edges: Vec<f64> = p.rectangles.iter().flat_map(|r| [r.u.lo, r.u.hi]).collect();
    let mut s_edges: Vec<f64> = p.rectangles.iter().flat_map(|r| [r.s.lo, r.s.hi]).collect();
    u_edges.extend([0.0, 1.0]);
    s_edges.extend([0.0, 1.0]);
    for r in &p.rectangles {
        let xm = r.s.mid();
        let ym = r.u.mid();
        for y in [r.u.lo, r.u.hi] {
            let q = m.forward(&m.point(xm, y)).unwrap();
            assert!(near(q.y, &u_edges), "{y} -> {}", q.y);
        }
        for x in [r.s.lo, r.s.hi] {
            let q = m.inverse(&m.point(x, ym)).unwrap();
            assert!(near(q.x, &s_edges), "{x} -> {}", q.x);
        }
    }
}

#[test]
fn invariant_points_are_located() {
    let m = SystemModel::horseshoe();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let pts = m.sample_invariant_set(500, &mut rng);
    for k in [0, 3, 7] {
        let p = refined(k, RefineMode::Pushforward);
        for x in &pts {
            assert!(p.locate(x, PARTITION_MARGIN).is_some());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn csv_round_trip(k in 0usize..6, pull in any::<bool>()) {
        let mode = if pull { RefineMode::Pullback } else { RefineMode::Pushforward };
        let p = refined(k, mode);
        let text = format_partition(&p);
        let q = parse_partition("horseshoe", &text).unwrap();
        prop_assert_eq!(q.len(), p.len());
        for (a, b) in p.rectangles.iter().zip(&q.rectangles) {
            prop_assert_eq!(a.s, b.s);
            prop_assert_eq!(a.u, b.u);
            prop_assert_eq!(&a.word, &b.word);
            prop_assert_eq!(a.word_offset, b.word_offset);
        }
        prop_assert_eq!(format_partition(&q), text);
    }

    #[test]
    fn corruption_is_detected(idx in 0usize..8, grow in 1.05f64..1.5) {
        let m = SystemModel::horseshoe();
        let p = refined(2, RefineMode::Pushforward);
        let bad = corrupted(&p, idx, grow);
        prop_assert!(!verify_markov(&m, &bad, 16).pass);
    }
}
