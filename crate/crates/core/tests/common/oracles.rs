//! Closed forms and fast paths checked against independent brute-force or
//! Monte-Carlo oracles.

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::SeedableRng;
use vsi::gaussian::{kl_diag_gaussian, GaussianDiag};
use vsi::grid::{encode_censored, encode_event, NelsonAalenCurve, TimeGrid};
use vsi::metrics::{c_index, c_td};
use vsi::seed::Rng;
use vsi::sim::GompertzConfig;

pub fn kl_matches_monte_carlo() {
    let draws = 1_000_000;
    let mut rng = Rng::seed_from_u64(7);
    use rand::Rng as _;
    for _ in 0..10 {
        let dim = 3;
        let mut g = || (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let q = GaussianDiag::new(g(), g());
        let p = GaussianDiag::new(g(), g());
        let mut sample_rng = Rng::seed_from_u64(11);
        let mut acc = 0.0;
        for _ in 0..draws {
            let z = q.sample(&mut sample_rng);
            acc += q.log_density(&z) - p.log_density(&z);
        }
        let mc = acc / draws as f64;
        let exact = kl_diag_gaussian(&q, &p);
        assert!((mc - exact).abs() < 1e-2, "closed form {exact} vs Monte Carlo {mc}");
        assert_eq!(kl_diag_gaussian(&q, &q), 0.0);
    }
}

pub fn simulator_inverts_truth_cdf() {
    let cfg = GompertzConfig::default();
    let mut worst: f64 = 0.0;
    for a in 0..100 {
        let age = cfg.age_mean + cfg.age_sd * (a as f64 / 99.0 * 6.0 - 3.0);
        let radon = cfg.radon_mean + cfg.radon_sd * (a as f64 / 99.0 * 2.0 - 0.5);
        let x = [age, radon];
        for k in 0..100 {
            let u = (k as f64 + 0.5) / 100.0;
            let t = cfg.event_time(&x, u);
            worst = worst.max((cfg.truth_cdf(&x, t) - (1.0 - u)).abs());
        }
    }
    assert!(worst <= 1e-10, "worst round-trip error {worst:e}");
}

fn brute_bin(edges: &[f64], t: f64) -> usize {
    (0..edges.len()).find(|&b| t <= edges[b]).unwrap_or(edges.len())
}

/// Nelson-Aalen pmf straight from the at-risk definition.
fn brute_nelson_aalen(obs: &[(f64, bool)], edges: &[f64]) -> Vec<f64> {
    let m = edges.len();
    let mut h = 0.0;
    let mut survival = Vec::new();
    for b in 0..m {
        let d = obs.iter().filter(|(t, e)| *e && brute_bin(edges, *t) == b).count();
        let n = obs.iter().filter(|(t, _)| brute_bin(edges, *t) >= b).count();
        if d > 0 {
            h += d as f64 / n as f64;
        }
        survival.push((-h).exp());
    }
    let mut pmf = vec![1.0 - survival[0]];
    for b in 1..m {
        pmf.push(survival[b - 1] - survival[b]);
    }
    pmf.push(1.0 - pmf.iter().sum::<f64>());
    pmf
}

fn survival_case() -> impl Strategy<Value = (Vec<f64>, Vec<(f64, bool)>)> {
    let edges =
        prop::collection::btree_set(1u32..40, 2..8).prop_map(|s| s.into_iter().map(f64::from).collect::<Vec<_>>());
    let obs = prop::collection::vec((0u32..90, any::<bool>()), 1..=50)
        .prop_map(|v| v.into_iter().map(|(t, e)| (f64::from(t) * 0.5, e)).collect::<Vec<_>>());
    (edges, obs)
}

pub fn nelson_aalen_and_encodings(cases: u32) {
    let mut runner = TestRunner::new(ProptestConfig::with_cases(cases));
    let outcome = runner.run(&survival_case(), |(edges, obs)| {
        let grid = TimeGrid::from_edges(edges.clone()).unwrap();
        let na = NelsonAalenCurve::from_times(&obs, &grid);
        let oracle = brute_nelson_aalen(&obs, &edges);
        prop_assert_eq!(na.pmf.len(), oracle.len());
        for (a, b) in na.pmf.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-12, "pmf {:?} vs oracle {:?}", na.pmf, oracle);
        }
        prop_assert!((na.pmf.iter().sum::<f64>() - 1.0).abs() <= 1e-9);

        for &(t, _) in &obs {
            let k = brute_bin(&edges, t);
            prop_assert_eq!(grid.bin_of(t), k);
            let ev = encode_event(t, &grid).unwrap();
            prop_assert!((ev.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let cens = encode_censored(t, &grid, &na).unwrap();
            prop_assert!((cens.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            if k < grid.overflow_bin() {
                prop_assert!(cens.weights[..=k].iter().all(|&w| w == 0.0));
            }
        }
        Ok(())
    });
    if let Err(e) = outcome {
        panic!("{e}");
    }
}

fn brute_pairs(
    strict: bool,
    times: &[f64],
    events: &[bool],
    better: impl Fn(usize, usize) -> std::cmp::Ordering,
) -> f64 {
    let (mut conc, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for i in 0..times.len() {
        for j in 0..times.len() {
            if events[i] && times[i] < times[j] {
                pairs += 1;
                match better(i, j) {
                    std::cmp::Ordering::Greater => conc += 1,
                    std::cmp::Ordering::Equal => ties += 1,
                    std::cmp::Ordering::Less => {}
                }
            }
        }
    }
    let ties = if strict { 0 } else { ties };
    (2 * conc + ties) as f64 / (2 * pairs) as f64
}

fn concordance_case() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>, Vec<Vec<f64>>, bool)> {
    (2usize..=200).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..30).prop_map(f64::from), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec((0u32..10).prop_map(f64::from), n),
            prop::collection::vec(prop::collection::vec(0u32..4, 5), n),
            any::<bool>(),
        )
            .prop_map(|(t, mut e, s, steps, strict)| {
                e[0] = true;
                // Monotone CDFs over 5 bins on a coarse lattice, so ties occur.
                let cdfs = steps
                    .into_iter()
                    .map(|st| {
                        let mut acc = 0.0;
                        st.into_iter()
                            .map(|v| {
                                acc += f64::from(v);
                                acc / 16.0
                            })
                            .collect()
                    })
                    .collect();
                (t, e, s, cdfs, strict)
            })
    })
}

pub fn concordance_matches_enumeration(cases: u32) {
    let mut runner = TestRunner::new(ProptestConfig::with_cases(cases));
    let outcome = runner.run(&concordance_case(), |(times, events, scores, cdfs, strict)| {
        let has_pairs = (0..times.len()).any(|i| events[i] && times.iter().any(|&t| t > times[i]));
        let fast = c_index(&scores, &times, &events, strict);
        let bins: Vec<usize> = times.iter().map(|&t| (t as usize) / 6).collect();
        let fast_td = c_td(&cdfs, &bins, &times, &events, strict);
        if !has_pairs {
            prop_assert!(fast.is_err() && fast_td.is_err());
            return Ok(());
        }
        let slow = brute_pairs(strict, &times, &events, |i, j| scores[i].total_cmp(&scores[j]));
        prop_assert_eq!(fast.unwrap(), slow);
        let slow_td = brute_pairs(strict, &times, &events, |i, j| cdfs[i][bins[i]].total_cmp(&cdfs[j][bins[i]]));
        prop_assert_eq!(fast_td.unwrap(), slow_td);
        Ok(())
    });
    if let Err(e) = outcome {
        panic!("{e}");
    }
}
