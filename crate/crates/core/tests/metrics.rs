use netstate_core::eval::{
    build_pmf, classify_fitness, compute_comp, compute_sep, compute_sim, pmf_cosine, pmf_intersection, roc_auc,
    Classification, FitnessMatrix, SEP_EPSILON,
};
use netstate_core::petri::{Arc, PetriNet};
use netstate_core::state::StateId;
use proptest::prelude::*;

const DEVICES: [&str; 3] = ["d1", "d2", "d3"];

fn ids(n: usize) -> Vec<String> {
    DEVICES[..n].iter().map(|s| s.to_string()).collect()
}

fn states(k: usize) -> Vec<StateId> {
    (0..k).map(StateId::from_index).collect()
}

/// Full matrix over `n` devices and `k` states with values in (0, 1].
fn matrix() -> impl Strategy<Value = (FitnessMatrix, usize, usize)> {
    (2usize..=3, 2usize..=3).prop_flat_map(|(n, k)| {
        prop::collection::vec(0.05f64..=1.0, n * n * k * k).prop_map(move |v| {
            let mut f = FitnessMatrix::new();
            let mut it = v.into_iter();
            for a in &DEVICES[..n] {
                for b in &DEVICES[..n] {
                    for s in states(k) {
                        for t in states(k) {
                            f.insert(a, b, s, t, it.next().unwrap());
                        }
                    }
                }
            }
            (f, n, k)
        })
    })
}

fn pmf_input() -> impl Strategy<Value = (Vec<Classification>, usize)> {
    (1usize..5).prop_flat_map(|k| {
        let c = (0..=k).prop_map(move |i| if i == k { Classification::Unknown } else { Classification::Positive(StateId::from_index(i)) });
        (prop::collection::vec(c, 1..50), Just(k))
    })
}

proptest! {
    #[test]
    fn sim_ignores_fitness_scale((f, n, k) in matrix(), c in 0.1f64..10.0) {
        let a = compute_sim(&f, &ids(n), &states(k)).unwrap();
        let b = compute_sim(&f.scaled(c), &ids(n), &states(k)).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-9);
        prop_assert!(a.value <= 1.0 + 1e-12);
        prop_assert_eq!(a.guarded, 0);
    }

    #[test]
    fn sep_grows_with_own_state_fitness((f, n, k) in matrix(), bump in 0.0f64..1.0) {
        let (devices, states) = (ids(n), states(k));
        let before = compute_sep(&f, &devices, &states).unwrap();
        let mut g = f.clone();
        let own = f.get("d1", "d1", StateId(1), StateId(1)).unwrap();
        g.insert("d1", "d1", StateId(1), StateId(1), own + bump);
        let after = compute_sep(&g, &devices, &states).unwrap();
        prop_assert!(after.value >= before.value - 1e-12);
        prop_assert_eq!(after.terms, before.terms);
    }

    #[test]
    fn pmf_is_a_distribution((c, k) in pmf_input()) {
        let p = build_pmf(&c, k).unwrap();
        prop_assert_eq!(p.k(), k);
        prop_assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let unknown = c.iter().filter(|x| **x == Classification::Unknown).count() as f64 / c.len() as f64;
        prop_assert_eq!(p.unknown(), unknown);
        prop_assert!((pmf_intersection(&p, &p).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((pmf_cosine(&p, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_overlap_is_bounded((c, k) in pmf_input(), shift in 0usize..50) {
        let mut d = c.clone();
        d.rotate_left(shift % c.len());
        d.truncate(1 + shift % c.len());
        let (p, q) = (build_pmf(&c, k).unwrap(), build_pmf(&d, k).unwrap());
        let i = pmf_intersection(&p, &q).unwrap();
        let cos = pmf_cosine(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&i));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&cos));
        prop_assert!((i - pmf_intersection(&q, &p).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn unknown_rate_rises_with_threshold(fit in prop::collection::vec(0.0f64..=1.0, 1..40), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let unknown = |t: f64| fit.iter().filter(|f| classify_fitness(**f, t, StateId(1)) == Classification::Unknown).count();
        prop_assert!(unknown(lo) <= unknown(hi));
    }

    #[test]
    fn auc_matches_curve_area(pos in prop::collection::vec(0u8..6, 1..20), neg in prop::collection::vec(0u8..6, 1..20)) {
        let pos: Vec<f64> = pos.into_iter().map(|v| f64::from(v) / 5.0).collect();
        let neg: Vec<f64> = neg.into_iter().map(|v| f64::from(v) / 5.0).collect();
        let roc = roc_auc(&pos, &neg).unwrap();
        prop_assert!((roc.auc - roc.trapezoid_area()).abs() < 1e-12);
        prop_assert!((roc.auc + roc_auc(&neg, &pos).unwrap().auc - 1.0).abs() < 1e-12);
        let last = roc.points.last().unwrap();
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }
}

#[test]
fn sim_fixture() {
    let mut f = FitnessMatrix::new();
    let s = StateId(1);
    f.insert("d1", "d1", s, s, 0.8);
    f.insert("d1", "d2", s, s, 0.4);
    f.insert("d2", "d2", s, s, 1.0);
    f.insert("d2", "d1", s, s, 1.0);
    // d1: mean 0.6, sd 0.2; d2: no spread.
    let m = compute_sim(&f, &ids(2), &[s]).unwrap();
    assert!((m.value - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(m.terms, 2);
}

#[test]
fn sep_fixture_clamps_zero_cross_fitness() {
    let mut f = FitnessMatrix::new();
    let (s1, s2) = (StateId(1), StateId(2));
    f.insert("d1", "d1", s1, s1, 0.9);
    f.insert("d1", "d1", s1, s2, 0.3);
    f.insert("d1", "d1", s2, s2, 0.5);
    f.insert("d1", "d1", s2, s1, 0.0);
    let m = compute_sep(&f, &ids(1), &[s1, s2]).unwrap();
    let expected = ((0.9 / 0.3 - 1.0) + (0.5 / SEP_EPSILON - 1.0)) / 2.0;
    assert!((m.value - expected).abs() < 1e-6);
    assert_eq!(m.guarded, 1);
    assert!(compute_sep(&f, &ids(1), &[s1]).is_err());
}

#[test]
fn comp_fixture() {
    // Two places joined by three parallel transitions: 5 nodes, 6 arcs,
    // mean degree 2.4.
    let mut net = PetriNet::new();
    let (p0, p1) = (net.add_place("p0"), net.add_place("p1"));
    for i in 0..3 {
        let t = net.add_transition(format!("t{i}"), None);
        net.add_arc(Arc::Input(p0, t)).unwrap();
        net.add_arc(Arc::Output(t, p1)).unwrap();
    }
    assert!((compute_comp([&net]).unwrap() - (1.0 - 1.0 / 1.4)).abs() < 1e-12);
    assert!(compute_comp(std::iter::empty::<&PetriNet>()).is_err());
}

#[test]
fn auc_fixture() {
    let roc = roc_auc(&[0.9, 0.8, 0.5], &[0.7, 0.5, 0.1]).unwrap();
    // 7 wins and one tie out of 9 pairs.
    assert!((roc.auc - 7.5 / 9.0).abs() < 1e-12);
    assert!(roc_auc(&[], &[0.1]).is_err());
}
