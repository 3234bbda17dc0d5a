use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offgrid::experiment::{match_spikes, run_experiment, ExperimentConfig, RecoveryReport};
use offgrid::{
    back_project_grid, build_design, condition_number, forward, is_separated, merge_project, pgd,
    sample_frequencies, FrequencySet, PgdConfig, SeparationConstraint, SpikeTrain,
};

fn freqs(m: usize, d: usize, c: f64, seed: u64) -> FrequencySet<f64> {
    sample_frequencies(m, d, c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_train(k: usize, d: usize, rng: &mut ChaCha8Rng) -> SpikeTrain<f64> {
    let amps = (0..k).map(|_| rng.random_range(1.0..5.0)).collect();
    let locs = (0..k * d).map(|_| rng.random::<f64>()).collect();
    SpikeTrain::new(d, amps, locs).unwrap()
}

fn gram(locations: &[f64], f: &FrequencySet<f64>) -> Vec<Vec<f64>> {
    let design = build_design(locations, f).unwrap();
    let k = design.cols();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let (ci, cj) = (design.column(i).values(), design.column(j).values());
                    ci.iter().zip(cj).map(|(a, b)| (a.conj() * b).re).sum()
                })
                .collect()
        })
        .collect()
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by plain
/// power iteration.
fn power_iteration(g: &[Vec<f64>], iters: usize) -> f64 {
    let k = g.len();
    let mut x: Vec<f64> = (0..k).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let y: Vec<f64> = g
            .iter()
            .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        lambda = norm / x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = y.iter().map(|v| v / norm).collect();
    }
    lambda
}

#[test]
fn condition_number_matches_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..6 {
        let d = 1 + case % 2;
        let k = 3 + case;
        let f = freqs(60 + 10 * case, d, 8.0, case as u64);
        let train = random_train(k, d, &mut rng);
        let g = gram(train.locations(), &f);
        let top = power_iteration(&g, 20_000);
        // Smallest eigenvalue through the shifted matrix `top I - G`.
        let shifted: Vec<Vec<f64>> = g
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| if i == j { top - v } else { -v })
                    .collect()
            })
            .collect();
        let bottom = top - power_iteration(&shifted, 20_000);
        let oracle = (top / bottom).sqrt();
        let cond = condition_number(&build_design(train.locations(), &f).unwrap());
        assert!(
            (cond - oracle).abs() <= 0.01 * oracle,
            "case {case}: {cond} vs {oracle}"
        );
    }
}

#[test]
fn forward_is_linear_in_the_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = freqs(120, 2, 15.0, 3);
    let a = random_train(4, 2, &mut rng);
    let b = random_train(3, 2, &mut rng);
    let joint = forward(&a.union(&b).unwrap(), &f).unwrap();
    let sum = &forward(&a, &f).unwrap() + &forward(&b, &f).unwrap();
    assert!((&joint - &sum).norm() <= 1e-12 * joint.norm());

    let mut scaled = a.clone();
    scaled.amplitudes_mut().iter_mut().for_each(|v| *v *= -2.5);
    let lhs = forward(&scaled, &f).unwrap();
    let rhs = forward(&a, &f).unwrap().scale(-2.5);
    assert!((&lhs - &rhs).norm() <= 1e-12 * lhs.norm());
}

#[test]
fn pgd_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f = freqs(200, 2, 12.0, 5);
    let truth = SpikeTrain::new(
        2,
        vec![2.0, -1.5, 3.0, 1.0],
        vec![0.2, 0.2, 0.7, 0.3, 0.4, 0.8, 0.85, 0.75],
    )
    .unwrap();
    let y = forward(&truth, &f).unwrap();
    let mut init = truth.clone();
    init.locations_mut()
        .iter_mut()
        .for_each(|x| *x += rng.random_range(-0.01..0.01));
    let mut cfg = PgdConfig::new(SeparationConstraint::new(0.05).unwrap());
    cfg.max_iter = 40;
    let (a, _) = pgd(&init, &f, &y, &cfg).unwrap();
    let order = [2, 0, 3, 1];
    let (b, _) = pgd(&init.permuted(&order), &f, &y, &cfg).unwrap();
    let (a, b) = (a.sorted_by_location(), b.sorted_by_location());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
        assert!((x - y).abs() < 1e-9);
    }
    for (x, y) in a.locations().iter().zip(b.locations()) {
        assert!((x - y).abs() < 1e-9);
    }
}

/// Largest number of pairs within `radius` over all one-to-one assignments.
fn best_assignment(truth: &SpikeTrain<f64>, est: &SpikeTrain<f64>, radius: f64) -> usize {
    fn go(i: usize, used: &mut Vec<bool>, close: &[Vec<bool>]) -> usize {
        if i == close.len() {
            return 0;
        }
        let mut best = go(i + 1, used, close);
        for j in 0..used.len() {
            if close[i][j] && !used[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, used, close));
                used[j] = false;
            }
        }
        best
    }
    let close: Vec<Vec<bool>> = (0..truth.len())
        .map(|i| {
            (0..est.len())
                .map(|j| {
                    let d2: f64 = truth
                        .location(i)
                        .iter()
                        .zip(est.location(j))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    d2.sqrt() <= radius
                })
                .collect()
        })
        .collect();
    go(0, &mut vec![false; est.len()], &close)
}

#[test]
fn greedy_matching_is_optimal_on_separated_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let eps = SeparationConstraint::new(0.2).unwrap();
    let mut checked = 0;
    while checked < 200 {
        let k = rng.random_range(1..=6);
        let truth = random_train(k, 2, &mut rng);
        if !is_separated(&truth, &eps) {
            continue;
        }
        // Perturb within a quarter of the separation, drop some, add clutter.
        let mut est = SpikeTrain::empty(2);
        for (a, t) in truth.iter() {
            if rng.random_bool(0.8) {
                let loc: Vec<f64> = t.iter().map(|x| x + rng.random_range(-0.035..0.035)).collect();
                est.push(a, &loc).unwrap();
            }
        }
        for _ in 0..rng.random_range(0..3) {
            est.push(1.0, &[rng.random(), rng.random()]).unwrap();
        }
        let radius = 0.05;
        let greedy = match_spikes(&truth, &est, radius);
        assert_eq!(greedy.matched(), best_assignment(&truth, &est, radius));
        assert_eq!(greedy.matched() + greedy.unmatched_truth.len(), truth.len());
        assert_eq!(greedy.matched() + greedy.unmatched_estimate.len(), est.len());
        checked += 1;
    }
}

#[test]
fn report_json_round_trips() {
    let mut cfg = ExperimentConfig::<f64>::desk_2d(4, 9);
    cfg.epsilon_dist = 0.1;
    let outcome = run_experiment(&cfg).unwrap();
    let text = outcome.report.to_json().unwrap();
    assert_eq!(RecoveryReport::from_json(&text).unwrap(), outcome.report);
}

#[test]
fn residue_heatmap_of_exact_recovery_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let f = freqs(300, 2, 20.0, 6);
    let truth = random_train(8, 2, &mut rng);
    let y = forward(&truth, &f).unwrap();
    // Same measure, different spike order: the residue is rounding only.
    let recovered = truth.permuted(&[7, 6, 5, 4, 3, 2, 1, 0]);
    let residue = &y - &forward(&recovered, &f).unwrap();
    let field = back_project_grid(&residue, &f, &[64, 64]).unwrap();
    let max_a = truth.amplitudes().iter().fold(0.0f64, |m, a| m.max(a.abs()));
    assert!(field.max_abs() < 1e-6 * f.len() as f64 * max_a);
}

fn arb_train() -> impl Strategy<Value = (SpikeTrain<f64>, f64)> {
    (1usize..=3, 1usize..=25, 0.02f64..0.4).prop_flat_map(|(d, k, eps)| {
        (
            prop::collection::vec(prop_oneof![0.1f64..5.0, -5.0f64..-0.1], k),
            prop::collection::vec(0.0f64..1.0, k * d),
        )
            .prop_map(move |(a, t)| (SpikeTrain::new(d, a, t).unwrap(), eps))
    })
}

proptest! {
    #[test]
    fn merge_projection_invariants((train, eps) in arb_train()) {
        let c = SeparationConstraint::new(eps).unwrap();
        let out = merge_project(&train, &c);
        prop_assert!(is_separated(&out, &c));
        prop_assert!(!out.is_empty() && out.len() <= train.len());
        prop_assert_eq!(merge_project(&out, &c), out.clone());
        let mass: f64 = train.amplitudes().iter().map(|a| a.abs()).sum();
        prop_assert!((out.total_amplitude() - train.total_amplitude()).abs() <= 1e-12 * mass);
    }

    #[test]
    fn merging_positive_spikes_keeps_the_barycenter((train, eps) in arb_train()) {
        let mut positive = train.clone();
        positive.amplitudes_mut().iter_mut().for_each(|a| *a = a.abs());
        let out = merge_project(&positive, &SeparationConstraint::new(eps).unwrap());
        let d = positive.dim();
        for axis in 0..d {
            let moment = |t: &SpikeTrain<f64>| t.iter().map(|(a, x)| a * x[axis]).sum::<f64>();
            let before = moment(&positive) / positive.total_amplitude();
            let after = moment(&out) / out.total_amplitude();
            prop_assert!((before - after).abs() < 1e-12);
        }
    }
}
