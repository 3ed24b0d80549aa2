use proptest::prelude::*;

use idla_core::coupling::{
    classify_discrepancies, forest_window_diff, forest_window_equal, run_natural_coupling,
    run_natural_ladder, run_special_coupling,
};
use idla_core::engine::{build_aggregate, DEFAULT_STEP_BUDGET};
use idla_core::lattice::{hball_overlap, hball_size, ConeSpec, Rational};
use idla_core::percolation::{clusters, BooleanModel};
use idla_core::{SimConfig, Site, Snapshot, SnapshotHeader, BuildMode, Source};

fn hyper(dim: usize) -> impl Strategy<Value = Vec<i32>> {
    proptest::collection::vec(-6i32..=6, dim - 1)
}

fn cube_points(c: &[i32], r: i32) -> Vec<Vec<i32>> {
    let mut out = vec![vec![]];
    for x in c {
        out = out
            .into_iter()
            .flat_map(|p| (x - r..=x + r).map(move |v| [p.clone(), vec![v]].concat()))
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn overlap_matches_point_enumeration(dim in 2usize..=4, a in hyper(4), b in hyper(4), ra in 0u32..3, rb in 0u32..3) {
        let (a, b) = (&a[..dim - 1], &b[..dim - 1]);
        let pa = cube_points(a, ra as i32);
        let pb = cube_points(b, rb as i32);
        let brute = pa.iter().any(|p| pb.contains(p));
        prop_assert_eq!(pa.len() as u64, hball_size(dim, ra));
        let za = Source::from_hyperplane(a).unwrap();
        let zb = Source::from_hyperplane(b).unwrap();
        prop_assert_eq!(hball_overlap(&za, ra, &zb, rb), brute);
    }

    #[test]
    fn cone_is_monotone(num in 1u64..8, den in 1u64..8, p in 1u64..6, z1 in 0i32..40, level in 1i32..200) {
        let cone = ConeSpec::new(Rational::new(num, den).unwrap(), Rational::new(p, 6).unwrap()).unwrap();
        let inside = cone.contains(&Site::new(&[z1, level]).unwrap());
        if inside {
            prop_assert!(cone.contains(&Site::new(&[z1 / 2, level]).unwrap()));
            prop_assert!(cone.contains(&Site::new(&[-z1, level + 1]).unwrap()));
        }
        prop_assert_eq!(inside, cone.contains_exact(z1 as u64, level as u64));
    }

    #[test]
    fn strip_ignores_the_first_coordinate(x in -50i32..50, y in hyper(3), k in 0u32..7) {
        let a = Site::new(&[x, y[0], y[1]]).unwrap();
        let b = Site::new(&[0, y[0], y[1]]).unwrap();
        prop_assert_eq!(a.in_strip(k), b.in_strip(k));
        prop_assert_eq!(a.in_strip(k), a.hyperplane_norm() <= k);
    }

    #[test]
    fn mean_degree_matches_pairwise_count(balls in proptest::collection::vec((hyper(3), 0u32..3), 1..30)) {
        let balls: Vec<(Source, u32)> = balls.iter().map(|(c, r)| (Source::from_hyperplane(c).unwrap(), *r)).collect();
        let model = BooleanModel::from_balls(3, &balls);
        let n = balls.len();
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                if hball_overlap(&balls[i].0, balls[i].1, &balls[j].0, balls[j].1) {
                    pairs += 1;
                }
            }
        }
        prop_assert!((model.mean_degree() - 2.0 * pairs as f64 / n as f64).abs() < 1e-12);
        let members: usize = clusters(&model).iter().map(|c| c.members.len()).sum();
        prop_assert_eq!(members, n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn natural_coupling_is_monotone(seed in any::<u64>(), m in 1u32..5, n in 0.5f64..4.0) {
        let run = run_natural_ladder(seed, 2, &[m, 2 * m, 4 * m], n, DEFAULT_STEP_BUDGET, true).unwrap();
        for p in run.ladder.states.windows(2) {
            prop_assert!(p[0].is_subset_of(&p[1]));
        }
        // the largest window is an ordinary build
        let direct = build_aggregate(&SimConfig::new(2, 4 * m, n, seed)).unwrap();
        prop_assert_eq!(run.ladder.states[2].insertions(), direct.insertions());
    }

    #[test]
    fn special_coupling_keeps_the_small_state(seed in any::<u64>(), m in 1u32..4, n in 0.5f64..4.0) {
        let special = run_special_coupling(seed, 2, m, 2 * m, n, DEFAULT_STEP_BUDGET).unwrap();
        let natural = run_natural_coupling(seed, 2, m, 2 * m, n, DEFAULT_STEP_BUDGET).unwrap();
        prop_assert_eq!(special.small.insertions(), natural.ladder.states[0].insertions());
        prop_assert_eq!(special.large.len(), natural.ladder.states[1].len());
        // one suspended particle per discrepancy of the larger aggregate
        let rep = classify_discrepancies(&special.small, &special.large).unwrap();
        prop_assert_eq!(special.suspended.len(), rep.red.len());
    }

    #[test]
    fn forest_window_diff_is_symmetric(seed in any::<u64>(), k in 0u32..4) {
        let run = run_natural_coupling(seed, 2, 4, 8, 2.0, DEFAULT_STEP_BUDGET).unwrap();
        let f = run.ladder.forests();
        prop_assert!(forest_window_equal(&f[0], &f[0], k));
        prop_assert_eq!(forest_window_diff(&f[0], &f[1], k), forest_window_diff(&f[1], &f[0], k));
        prop_assert_eq!(forest_window_diff(&f[0], &f[1], k).is_empty(), forest_window_equal(&f[0], &f[1], k));
    }

    #[test]
    fn snapshots_round_trip(seed in any::<u64>(), dim in 2usize..=4, m in 0u32..4, ordered in any::<bool>()) {
        let header = SnapshotHeader {
            dim,
            mode: if ordered { BuildMode::LevelOrdered } else { BuildMode::TimeOrdered },
            window: m,
            horizon: 1.5,
            seed,
            step_budget: DEFAULT_STEP_BUDGET,
        };
        let s = Snapshot::build(header).unwrap();
        let back = Snapshot::from_bytes(&s.to_bytes()).unwrap();
        prop_assert_eq!(back.aggregate.insertions(), s.aggregate.insertions());
        prop_assert_eq!(back.header, s.header);
        back.verify_replay().unwrap();
    }
}
