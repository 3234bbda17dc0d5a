use serde::{Deserialize, Serialize};

use crate::measure::{squared_distance, SpikeTrain};
use crate::scalar::Real;

/// Result of pairing estimated spikes with true spikes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(truth index, estimate index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_truth: Vec<usize>,
    pub unmatched_estimate: Vec<usize>,
}

impl Matching {
    pub fn matched(&self) -> usize {
        self.pairs.len()
    }
}

/// Greedy one-to-one matching within `radius`.
///
/// Candidate pairs closer than `radius` are taken in increasing distance
/// order, ties broken by truth index then estimate index.
pub fn match_spikes<T: Real>(truth: &SpikeTrain<T>, estimate: &SpikeTrain<T>, radius: T) -> Matching {
    let r2 = radius * radius;
    let mut candidates = Vec::new();
    if truth.dim() == estimate.dim() {
        for i in 0..truth.len() {
            for j in 0..estimate.len() {
                let d2 = squared_distance(truth.location(i), estimate.location(j));
                if d2 <= r2 {
                    candidates.push((d2, i, j));
                }
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimate.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    let left = |used: &[bool]| {
        used.iter()
            .enumerate()
            .filter(|(_, u)| !**u)
            .map(|(i, _)| i)
            .collect()
    };
    Matching {
        pairs,
        unmatched_truth: left(&used_t),
        unmatched_estimate: left(&used_e),
    }
}

/// Root mean squared location error over matched pairs.
pub fn location_rmse<T: Real>(truth: &SpikeTrain<T>, estimate: &SpikeTrain<T>, m: &Matching) -> Option<f64> {
    if m.pairs.is_empty() {
        return None;
    }
    let sum: f64 = m
        .pairs
        .iter()
        .map(|&(i, j)| squared_distance(truth.location(i), estimate.location(j)).to_f64_lossy())
        .sum();
    Some((sum / m.pairs.len() as f64).sqrt())
}

/// Root mean squared relative amplitude error `|a_hat - a| / |a|` over
/// matched pairs.
pub fn amplitude_rel_rmse<T: Real>(
    truth: &SpikeTrain<T>,
    estimate: &SpikeTrain<T>,
    m: &Matching,
) -> Option<f64> {
    if m.pairs.is_empty() {
        return None;
    }
    let sum: f64 = m
        .pairs
        .iter()
        .map(|&(i, j)| {
            let a = truth.amplitudes()[i].to_f64_lossy();
            let e = estimate.amplitudes()[j].to_f64_lossy();
            ((e - a) / a).powi(2)
        })
        .sum();
    Some((sum / m.pairs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train(points: &[(f64, f64)]) -> SpikeTrain<f64> {
        let mut t = SpikeTrain::empty(1);
        for &(a, x) in points {
            t.push(a, &[x]).unwrap();
        }
        t
    }

    #[test]
    fn exact_copy_matches_everything() {
        let t = train(&[(1.0, 0.1), (2.0, 0.5), (3.0, 0.9)]);
        let e = t.permuted(&[2, 0, 1]);
        let m = match_spikes(&t, &e, 0.01);
        assert_eq!(m.pairs, vec![(0, 1), (1, 2), (2, 0)]);
        assert!(m.unmatched_truth.is_empty() && m.unmatched_estimate.is_empty());
        assert_eq!(location_rmse(&t, &e, &m).unwrap(), 0.0);
        assert_eq!(amplitude_rel_rmse(&t, &e, &m).unwrap(), 0.0);
    }

    #[test]
    fn closest_pair_wins() {
        let t = train(&[(1.0, 0.5)]);
        let e = train(&[(1.0, 0.52), (1.0, 0.505)]);
        let m = match_spikes(&t, &e, 0.05);
        assert_eq!(m.pairs, vec![(0, 1)]);
        assert_eq!(m.unmatched_estimate, vec![0]);
    }

    #[test]
    fn outside_radius_is_unmatched() {
        let t = train(&[(1.0, 0.1)]);
        let e = train(&[(1.0, 0.3)]);
        let m = match_spikes(&t, &e, 0.1);
        assert_eq!(m.matched(), 0);
        assert_eq!(location_rmse(&t, &e, &m), None);
        assert_eq!(amplitude_rel_rmse(&t, &e, &m), None);
    }

    #[test]
    fn error_metrics() {
        let t = train(&[(2.0, 0.1), (4.0, 0.5)]);
        let e = train(&[(2.2, 0.13), (4.0, 0.46)]);
        let m = match_spikes(&t, &e, 0.1);
        let loc = location_rmse(&t, &e, &m).unwrap();
        assert!((loc - ((0.03f64.powi(2) + 0.04f64.powi(2)) / 2.0).sqrt()).abs() < 1e-12);
        let amp = amplitude_rel_rmse(&t, &e, &m).unwrap();
        assert!((amp - (0.01f64 / 2.0).sqrt()).abs() < 1e-12);
    }
}
