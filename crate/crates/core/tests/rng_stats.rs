use idla_core::percolation::{chi_indicators, p_epsilon};
use idla_core::rng::{clock_count, replicate_seed, walk_step, StepSource, StreamKey, WalkStream};
use idla_core::stats::{chi2_sf, pearson};
use idla_core::Source;

fn src(c: &[i32]) -> Source {
    Source::from_hyperplane(c).unwrap()
}

#[test]
fn walk_steps_are_uniform_over_directions() {
    for dim in 2..=4 {
        let z = src(&vec![3; dim - 1]);
        let k = 2 * dim;
        let mut counts = vec![0u64; k];
        let mut w = WalkStream::new(&StreamKey::walk(17, z, 1));
        let n = 120_000u64;
        for _ in 0..n {
            counts[w.next_step().code() as usize] += 1;
        }
        let e = n as f64 / k as f64;
        let stat: f64 = counts.iter().map(|c| (*c as f64 - e).powi(2) / e).sum();
        assert!(chi2_sf(stat, k as u64 - 1) > 1e-4, "d={dim}: {counts:?}");
    }
}

#[test]
fn random_access_agrees_with_sequential_reading() {
    let key = StreamKey::walk(5, src(&[1, -2]), 9);
    let mut w = WalkStream::new(&key);
    for i in 0..500 {
        assert_eq!(w.next_step(), walk_step(&key, i));
    }
    let mut late = WalkStream::at(&key, 333);
    assert_eq!(late.next_step(), walk_step(&key, 333));
}

#[test]
fn consecutive_steps_are_uncorrelated() {
    let key = StreamKey::walk(23, src(&[0]), 1);
    let x: Vec<f64> = (0..50_000).map(|i| walk_step(&key, i).code() as f64).collect();
    let r = pearson(&x[..x.len() - 1], &x[1..]);
    assert!(r.abs() < 4.0 / (x.len() as f64).sqrt(), "{r}");
}

#[test]
fn clock_counts_have_poisson_mean_and_variance() {
    let t = 3.0;
    let n: Vec<f64> = (-400..=400)
        .map(|y| clock_count(0xc10c, src(&[y]), t) as f64)
        .collect();
    let mean = n.iter().sum::<f64>() / n.len() as f64;
    let var = n.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.len() - 1) as f64;
    let se = (t / n.len() as f64).sqrt();
    assert!((mean - t).abs() < 4.0 * se, "mean {mean}");
    assert!((var / t - 1.0).abs() < 0.2, "variance {var}");
}

#[test]
fn replicate_seeds_are_distinct() {
    let mut s: Vec<u64> = (0..10_000).map(|i| replicate_seed(1, i)).collect();
    s.sort_unstable();
    s.dedup();
    assert_eq!(s.len(), 10_000);
}

#[test]
fn chi_indicators_of_neighbours_are_uncorrelated() {
    let eps = 0.5;
    let line: Vec<Source> = (-5000..=5000).map(|y| src(&[y])).collect();
    let chi: Vec<f64> = chi_indicators(77, &line, eps).into_iter().map(|b| b as u8 as f64).collect();
    let rate = chi.iter().sum::<f64>() / chi.len() as f64;
    let p = p_epsilon(eps);
    assert!((rate - p).abs() < 4.0 * (p * (1.0 - p) / chi.len() as f64).sqrt(), "{rate} vs {p}");
    let r = pearson(&chi[..chi.len() - 1], &chi[1..]);
    assert!(r.abs() < 4.0 / (chi.len() as f64).sqrt(), "{r}");
}
