//! Real-amplitude least squares over fixed spike locations.
//!
//! The complex system `M a ~ y` with `a` real is solved as the real-stacked
//! problem `[Re M; Im M] a ~ [Re y; Im y]`.

use crate::error::{Error, Result};
use crate::fourier::{atom, FrequencySet, MeasurementVector};
use crate::linalg::{
    self, jacobi_svd, pinv_solve, qr_col_pivot, rank_tolerance, triangular_condition_estimate,
    triangular_condition_estimate_from, ColMajor, IncrementalQr,
};
use crate::scalar::Real;

/// Condition numbers above this raise [`LsSolution::ill_conditioned`].
pub const CONDITION_WARNING: f64 = 1e12;

/// Power/inverse iterations used by the running condition estimate.
const ESTIMATE_ITERATIONS: usize = 30;
const WARM_ESTIMATE_ITERATIONS: usize = 4;

/// Design matrix whose columns are the atoms `A delta_{t_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    m: usize,
    columns: Vec<MeasurementVector<T>>,
}

impl<T: Real> DesignMatrix<T> {
    pub fn from_columns(columns: Vec<MeasurementVector<T>>) -> Result<Self> {
        let m = columns
            .first()
            .map(|c| c.len())
            .ok_or_else(|| Error::InvalidArgument("design matrix needs at least one column".into()))?;
        for c in &columns {
            c.check_len(m)?;
        }
        Ok(Self { m, columns })
    }

    /// Number of measurements (complex rows).
    pub fn rows(&self) -> usize {
        self.m
    }

    /// Number of atoms.
    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &MeasurementVector<T> {
        &self.columns[i]
    }

    /// `M a` for real coefficients `a`.
    pub fn apply(&self, a: &[T]) -> MeasurementVector<T> {
        let mut out = MeasurementVector::zeros(self.m);
        for (col, &ai) in self.columns.iter().zip(a) {
            for (o, z) in out.values_mut().iter_mut().zip(col.values()) {
                *o += z * ai;
            }
        }
        out
    }

    fn stacked(&self) -> ColMajor<T> {
        let mut s = ColMajor::zeros(2 * self.m, self.cols());
        for (j, col) in self.columns.iter().enumerate() {
            stack_into(col, s.col_mut(j));
        }
        s
    }
}

fn stack_into<T: Real>(v: &MeasurementVector<T>, out: &mut [T]) {
    let m = v.len();
    for (l, z) in v.values().iter().enumerate() {
        out[l] = z.re;
        out[m + l] = z.im;
    }
}

pub(crate) fn stacked<T: Real>(v: &MeasurementVector<T>) -> Vec<T> {
    let mut out = vec![T::zero(); 2 * v.len()];
    stack_into(v, &mut out);
    out
}

/// Column `i` is `atom(t_i)`; `locations` is a flat row-major buffer.
pub fn build_design<T: Real>(locations: &[T], freqs: &FrequencySet<T>) -> Result<DesignMatrix<T>> {
    let d = freqs.dim();
    if locations.is_empty() {
        return Err(Error::InvalidArgument(
            "design matrix needs k >= 1 locations".into(),
        ));
    }
    if !locations.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: locations.len() % d,
        });
    }
    let columns = locations
        .chunks_exact(d)
        .map(|t| atom(t, freqs))
        .collect::<Result<Vec<_>>>()?;
    DesignMatrix::from_columns(columns)
}

/// Least-squares amplitudes with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution<T> {
    pub amplitudes: Vec<T>,
    /// Numerical rank of the real-stacked design.
    pub rank: usize,
    /// Cheap estimate of `cond(M)` from the triangular factor.
    pub condition_estimate: T,
    /// Set when the condition estimate exceeds [`CONDITION_WARNING`].
    pub ill_conditioned: bool,
}

/// Real `a` minimizing `||M a - y||_2`, minimum-norm when rank deficient.
///
/// Householder QR with column pivoting; a rank-deficient factor falls back
/// to the pseudo-inverse of `R` via Jacobi SVD.
pub fn solve_amplitudes<T: Real>(
    design: &DesignMatrix<T>,
    y: &MeasurementVector<T>,
) -> Result<LsSolution<T>> {
    y.check_len(design.rows())?;
    let (rows, k) = (2 * design.rows(), design.cols());
    let mut rhs = stacked(y);
    let qr = qr_col_pivot(design.stacked(), Some(&mut rhs));
    let steps = rows.min(k);
    let dmax = qr.r.get(0, 0).abs();
    let tol = rank_tolerance::<T>(rows, k);
    let rank = (0..steps)
        .take_while(|&j| qr.r.get(j, j).abs() > tol * dmax)
        .count();

    let z = if rank == k {
        linalg::back_substitute(&qr.r, &rhs)
    } else {
        let svd = jacobi_svd(&qr.r);
        pinv_solve(&svd, &rhs[..steps], tol)
    };
    let mut amplitudes = vec![T::zero(); k];
    for (j, &p) in qr.perm.iter().enumerate() {
        amplitudes[p] = z[j];
    }
    let condition_estimate = if rank == k {
        triangular_condition_estimate(&qr.r, ESTIMATE_ITERATIONS)
    } else {
        T::infinity()
    };
    Ok(LsSolution {
        amplitudes,
        rank,
        condition_estimate,
        ill_conditioned: !(condition_estimate <= T::lit(CONDITION_WARNING)),
    })
}

/// `sigma_max / sigma_min` of the real-stacked design; `+inf` when the
/// smallest singular value vanishes at working precision.
pub fn condition_number<T: Real>(design: &DesignMatrix<T>) -> T {
    let (rows, k) = (2 * design.rows(), design.cols());
    if k > rows {
        return T::infinity();
    }
    let qr = qr_col_pivot(design.stacked(), None);
    let sigma = jacobi_svd(&qr.r).sigma;
    let smax = sigma.iter().fold(T::zero(), |m, &s| m.max(s));
    let smin = sigma.iter().fold(T::infinity(), |m, &s| m.min(s));
    if smin <= smax * T::epsilon() {
        T::infinity()
    } else {
        smax / smin
    }
}

/// Least-squares state for a growing set of atoms against a fixed `y`, as
/// used by greedy pursuit without sliding: each appended atom costs one
/// Householder update instead of a fresh factorization.
#[derive(Debug, Clone)]
pub struct IncrementalLeastSquares<T> {
    qr: IncrementalQr<T>,
    design: Vec<MeasurementVector<T>>,
    /// Singular-vector guesses carried between condition estimates.
    estimate_vectors: (Vec<T>, Vec<T>),
}

impl<T: Real> IncrementalLeastSquares<T> {
    pub fn new(y: &MeasurementVector<T>) -> Self {
        Self {
            qr: IncrementalQr::new(stacked(y)),
            design: Vec::new(),
            estimate_vectors: (Vec::new(), Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }

    /// Adds one atom column. Fails once the atoms outnumber the real rows.
    pub fn push(&mut self, column: MeasurementVector<T>) -> Result<()> {
        if !self.qr.push(stacked(&column)) {
            return Err(Error::InvalidArgument(format!(
                "cannot fit more than {} real-stacked rows worth of atoms",
                2 * column.len()
            )));
        }
        self.design.push(column);
        Ok(())
    }

    /// Amplitudes over the current atoms. The condition estimate is warm
    /// started from the previous call, so a few iterations suffice.
    pub fn solve(&mut self) -> LsSolution<T> {
        let (amplitudes, full_rank) = self.qr.solve();
        let k = amplitudes.len();
        let condition_estimate = if full_rank {
            let (mut x_max, mut x_min) = std::mem::take(&mut self.estimate_vectors);
            let fill = T::one() / T::from_count(k.max(1)).sqrt();
            x_max.resize(k, fill);
            x_min.resize(k, fill);
            let (est, x_max, x_min) =
                triangular_condition_estimate_from(self.qr.r(), WARM_ESTIMATE_ITERATIONS, x_max, x_min);
            self.estimate_vectors = (x_max, x_min);
            est
        } else {
            T::infinity()
        };
        LsSolution {
            rank: if full_rank { k } else { k.saturating_sub(1) },
            amplitudes,
            condition_estimate,
            ill_conditioned: !(condition_estimate <= T::lit(CONDITION_WARNING)),
        }
    }

    /// `M a` over the atoms added so far.
    pub fn apply(&self, a: &[T]) -> MeasurementVector<T> {
        let m = self.design.first().map_or(0, |c| c.len());
        let mut out = MeasurementVector::zeros(m);
        for (col, &ai) in self.design.iter().zip(a) {
            for (o, z) in out.values_mut().iter_mut().zip(col.values()) {
                *o += z * ai;
            }
        }
        out
    }

    /// Residual norm implied by the factorization.
    pub fn residual_norm(&self) -> T {
        self.qr.residual_norm()
    }

    pub fn design(&self) -> Result<DesignMatrix<T>> {
        DesignMatrix::from_columns(self.design.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{forward, sample_frequencies};
    use crate::measure::SpikeTrain;
    use num_complex::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn freqs(m: usize, d: usize, c: f64, seed: u64) -> FrequencySet<f64> {
        sample_frequencies(m, d, c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn stacked_residual(design: &DesignMatrix<f64>, a: &[f64], y: &MeasurementVector<f64>) -> f64 {
        (&design.apply(a) - y).norm()
    }

    #[test]
    fn design_columns_are_atoms() {
        let f = freqs(40, 2, 10.0, 1);
        let m = build_design(&[0.0, 0.0], &f).unwrap();
        assert_eq!((m.rows(), m.cols()), (40, 1));
        assert!(m.column(0).values().iter().all(|z| *z == Complex::new(1.0, 0.0)));
        let locs = [0.1, 0.2, 0.7, 0.4, 0.1, 0.2];
        let m = build_design(&locs, &f).unwrap();
        for i in 0..3 {
            assert_eq!(m.column(i), &atom(&locs[2 * i..2 * i + 2], &f).unwrap());
        }
        assert_eq!(m.column(0), m.column(2));
        assert!(build_design::<f64>(&[], &f).is_err());
    }

    #[test]
    fn recovers_true_amplitudes() {
        let f = freqs(400, 2, 20.0, 2);
        let locs = [0.1, 0.1, 0.5, 0.5, 0.9, 0.2, 0.3, 0.8];
        let amps = [1.5, -2.0, 4.0, 3.25];
        let train = SpikeTrain::new(2, amps.to_vec(), locs.to_vec()).unwrap();
        let y = forward(&train, &f).unwrap();
        let sol = solve_amplitudes(&build_design(&locs, &f).unwrap(), &y).unwrap();
        for (a, b) in sol.amplitudes.iter().zip(amps) {
            assert!((a - b).abs() < 1e-8 * b.abs());
        }
        assert_eq!(sol.rank, 4);
        assert!(!sol.ill_conditioned);
    }

    #[test]
    fn constant_observation_at_origin() {
        let f = freqs(25, 1, 5.0, 3);
        let y = MeasurementVector::new(vec![Complex::new(3.0, 0.0); 25]);
        let sol = solve_amplitudes(&build_design(&[0.0], &f).unwrap(), &y).unwrap();
        assert!((sol.amplitudes[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = freqs(200, 2, 15.0, 5);
        let y = MeasurementVector::new(
            (0..200)
                .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        );
        let locs: Vec<f64> = (0..10).map(|_| rng.random()).collect();
        let design = build_design(&locs, &f).unwrap();
        let sol = solve_amplitudes(&design, &y).unwrap();
        let r = &design.apply(&sol.amplitudes) - &y;
        for j in 0..design.cols() {
            let ip: f64 = design
                .column(j)
                .values()
                .iter()
                .zip(r.values())
                .map(|(c, z)| c.re * z.re + c.im * z.im)
                .sum();
            assert!(ip.abs() < 1e-8 * y.norm(), "column {j}: {ip}");
        }
    }

    #[test]
    fn never_beaten_by_random_competitors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = freqs(120, 2, 10.0, 7);
        let train = SpikeTrain::new(2, vec![1.0, 2.0, -1.0], (0..6).map(|_| rng.random()).collect()).unwrap();
        let y = forward(&train, &f).unwrap();
        let locs: Vec<f64> = (0..8).map(|_| rng.random()).collect();
        let design = build_design(&locs, &f).unwrap();
        let best = stacked_residual(&design, &solve_amplitudes(&design, &y).unwrap().amplitudes, &y);
        for _ in 0..100 {
            let a: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!(best <= stacked_residual(&design, &a, &y) + 1e-12);
        }
    }

    #[test]
    fn adding_columns_never_increases_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = freqs(100, 2, 10.0, 9);
        let y = forward(
            &SpikeTrain::new(2, vec![2.0, -1.0], vec![0.2, 0.3, 0.6, 0.7]).unwrap(),
            &f,
        )
        .unwrap();
        let mut locs = Vec::new();
        let mut last = f64::INFINITY;
        for _ in 0..12 {
            locs.push(rng.random());
            locs.push(rng.random());
            let design = build_design(&locs, &f).unwrap();
            let res = stacked_residual(&design, &solve_amplitudes(&design, &y).unwrap().amplitudes, &y);
            assert!(res <= last + 1e-12 * y.norm());
            last = res;
        }
    }

    #[test]
    fn duplicate_columns_give_min_norm_and_infinite_condition() {
        let f = freqs(60, 1, 10.0, 10);
        let y = forward(&SpikeTrain::new(1, vec![4.0], vec![0.3]).unwrap(), &f).unwrap();
        let design = build_design(&[0.3, 0.3], &f).unwrap();
        let sol = solve_amplitudes(&design, &y).unwrap();
        assert_eq!(sol.rank, 1);
        assert!(sol.ill_conditioned);
        assert!((sol.amplitudes[0] - 2.0).abs() < 1e-10 && (sol.amplitudes[1] - 2.0).abs() < 1e-10);
        assert!(condition_number(&design).is_infinite());
    }

    #[test]
    fn single_column_condition_is_one() {
        let f = freqs(50, 2, 10.0, 11);
        let c = condition_number(&build_design(&[0.4, 0.6], &f).unwrap());
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = freqs(80, 2, 10.0, 13);
        let locs: Vec<f64> = (0..10).map(|_| rng.random()).collect();
        let mut swapped = locs.clone();
        swapped.rotate_left(4);
        let (a, b) = (
            condition_number(&build_design(&locs, &f).unwrap()),
            condition_number(&build_design(&swapped, &f).unwrap()),
        );
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn incremental_solver_agrees_with_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = freqs(150, 2, 15.0, 15);
        let y = forward(
            &SpikeTrain::new(2, vec![2.0, 3.0, -1.5], (0..6).map(|_| rng.random()).collect()).unwrap(),
            &f,
        )
        .unwrap();
        let mut inc = IncrementalLeastSquares::new(&y);
        let mut locs = Vec::new();
        for _ in 0..6 {
            let t: [f64; 2] = [rng.random(), rng.random()];
            locs.extend_from_slice(&t);
            inc.push(atom(&t, &f).unwrap()).unwrap();
            let batch = solve_amplitudes(&build_design(&locs, &f).unwrap(), &y).unwrap();
            let fast = inc.solve();
            for (a, b) in batch.amplitudes.iter().zip(&fast.amplitudes) {
                assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
            let design = inc.design().unwrap();
            let explicit = stacked_residual(&design, &fast.amplitudes, &y);
            assert!((explicit - inc.residual_norm()).abs() < 1e-10 * y.norm());
        }
    }
}
