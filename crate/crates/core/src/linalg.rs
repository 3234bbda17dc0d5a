//! Small dense kernels: Householder QR (pivoted and incremental), one-sided
//! Jacobi SVD, triangular solves.

use crate::scalar::Real;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ColMajor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> ColMajor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.rows + i]
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(a * self.rows + i, b * self.rows + i);
        }
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Householder reflector `I - beta v v^T` acting on rows `offset..`.
#[derive(Debug, Clone)]
pub(crate) struct Reflector<T> {
    offset: usize,
    v: Vec<T>,
    beta: T,
}

impl<T: Real> Reflector<T> {
    /// Reflector mapping `x` onto `alpha e_1`; returns it with `alpha`.
    fn annihilate(offset: usize, x: &[T]) -> (Self, T) {
        let norm = norm2(x);
        if norm == T::zero() {
            return (
                Self {
                    offset,
                    v: vec![T::zero(); x.len()],
                    beta: T::zero(),
                },
                T::zero(),
            );
        }
        let alpha = if x[0] >= T::zero() { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        let beta = if vv == T::zero() {
            T::zero()
        } else {
            T::lit(2.0) / vv
        };
        (Self { offset, v, beta }, alpha)
    }

    fn apply(&self, x: &mut [T]) {
        if self.beta == T::zero() {
            return;
        }
        let tail = &mut x[self.offset..];
        let s = dot(&self.v, tail) * self.beta;
        for (xi, &vi) in tail.iter_mut().zip(&self.v) {
            *xi -= s * vi;
        }
    }
}

/// Upper-triangular factor from a (possibly pivoted) QR factorization.
///
/// `r` holds `min(rows, cols)` rows and `cols` columns, column-major.
#[derive(Debug, Clone)]
pub(crate) struct QrFactor<T> {
    pub r: ColMajor<T>,
    /// `perm[j]` is the original column placed at position `j`.
    pub perm: Vec<usize>,
}

/// Householder QR with column pivoting. `rhs`, when given, is overwritten by
/// `Q^T rhs`.
pub(crate) fn qr_col_pivot<T: Real>(mut a: ColMajor<T>, mut rhs: Option<&mut [T]>) -> QrFactor<T> {
    let (rows, cols) = (a.rows, a.cols);
    let steps = rows.min(cols);
    let mut perm: Vec<usize> = (0..cols).collect();
    for j in 0..steps {
        // Pivot on the largest remaining column norm (recomputed exactly to
        // avoid downdating drift).
        let mut best = j;
        let mut best_norm = T::neg_infinity();
        for c in j..cols {
            let n = dot(&a.col(c)[j..], &a.col(c)[j..]);
            if n > best_norm {
                best_norm = n;
                best = c;
            }
        }
        a.swap_cols(j, best);
        perm.swap(j, best);
        let (h, alpha) = Reflector::annihilate(j, &a.col(j)[j..]);
        {
            let col = a.col_mut(j);
            col[j] = alpha;
            col[j + 1..].iter_mut().for_each(|x| *x = T::zero());
        }
        for c in j + 1..cols {
            h.apply(a.col_mut(c));
        }
        if let Some(b) = rhs.as_deref_mut() {
            h.apply(b);
        }
    }
    let mut r = ColMajor::zeros(steps, cols);
    for c in 0..cols {
        let top = (c + 1).min(steps);
        r.col_mut(c)[..top].copy_from_slice(&a.col(c)[..top]);
    }
    QrFactor { r, perm }
}

/// Singular values of `b` (`rows x cols`) by one-sided Jacobi rotations,
/// returned with the left (`U Sigma`) and right (`V`) factors.
pub(crate) struct Svd<T> {
    /// Columns of `U Sigma` (so column norms are the singular values).
    pub us: ColMajor<T>,
    pub v: ColMajor<T>,
    pub sigma: Vec<T>,
}

pub(crate) fn jacobi_svd<T: Real>(b: &ColMajor<T>) -> Svd<T> {
    let n = b.cols;
    let mut us = b.clone();
    let mut v = ColMajor::zeros(n, n);
    for i in 0..n {
        v.data[i * n + i] = T::one();
    }
    let tol = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(us.col(i), us.col(i));
                let beta = dot(us.col(j), us.col(j));
                let gamma = dot(us.col(i), us.col(j));
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut us, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = (0..n).map(|j| norm2(us.col(j))).collect();
    Svd { us, v, sigma }
}

fn rotate<T: Real>(m: &mut ColMajor<T>, i: usize, j: usize, c: T, s: T) {
    let rows = m.rows;
    for r in 0..rows {
        let x = m.data[i * rows + r];
        let y = m.data[j * rows + r];
        m.data[i * rows + r] = c * x - s * y;
        m.data[j * rows + r] = s * x + c * y;
    }
}

/// Relative threshold under which a singular value counts as zero.
pub(crate) fn rank_tolerance<T: Real>(rows: usize, cols: usize) -> T {
    T::from_count(rows.max(cols)) * T::epsilon()
}

/// Minimum-norm solution of `B x ~ c` from its SVD.
pub(crate) fn pinv_solve<T: Real>(svd: &Svd<T>, c: &[T], rel_tol: T) -> Vec<T> {
    let n = svd.v.cols;
    let smax = svd.sigma.iter().fold(T::zero(), |m, &s| m.max(s));
    let mut x = vec![T::zero(); n];
    for j in 0..n {
        let s = svd.sigma[j];
        if s <= rel_tol * smax || s == T::zero() {
            continue;
        }
        // u_j^T c / sigma_j, with u_j = us_j / sigma_j
        let coef = dot(svd.us.col(j), c) / (s * s);
        for (xi, &vi) in x.iter_mut().zip(svd.v.col(j)) {
            *xi += coef * vi;
        }
    }
    x
}

/// Solves `R x = c` for square upper-triangular `R` (first `n` rows).
pub(crate) fn back_substitute<T: Real>(r: &ColMajor<T>, c: &[T]) -> Vec<T> {
    let n = r.cols;
    let mut x = c[..n].to_vec();
    for j in (0..n).rev() {
        x[j] /= r.get(j, j);
        let xj = x[j];
        for (xi, &rij) in x[..j].iter_mut().zip(&r.col(j)[..j]) {
            *xi -= rij * xj;
        }
    }
    x
}

/// Solves `R^T x = c` for square upper-triangular `R`.
fn forward_substitute_transposed<T: Real>(r: &ColMajor<T>, c: &[T]) -> Vec<T> {
    let n = r.cols;
    let mut x = c[..n].to_vec();
    for j in 0..n {
        let s = dot(&r.col(j)[..j], &x[..j]);
        x[j] = (x[j] - s) / r.get(j, j);
    }
    x
}

fn upper_matvec<T: Real>(r: &ColMajor<T>, x: &[T]) -> Vec<T> {
    let n = r.cols;
    let mut y = vec![T::zero(); n];
    for (j, &xj) in x[..n].iter().enumerate() {
        for (yi, &rij) in y[..=j].iter_mut().zip(&r.col(j)[..=j]) {
            *yi += rij * xj;
        }
    }
    y
}

fn upper_matvec_transposed<T: Real>(r: &ColMajor<T>, x: &[T]) -> Vec<T> {
    (0..r.cols).map(|j| dot(&r.col(j)[..=j], &x[..=j])).collect()
}

fn normalize<T: Real>(x: &mut [T]) -> T {
    let n = norm2(x);
    if n > T::zero() {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Cheap 2-norm condition estimate of a square upper-triangular factor:
/// power iteration for the largest singular value, inverse iteration with
/// triangular solves for the smallest.
pub(crate) fn triangular_condition_estimate<T: Real>(r: &ColMajor<T>, iterations: usize) -> T {
    let start: Vec<T> = (0..r.cols)
        .map(|i| T::one() + T::lit(0.1) * T::from_count(i % 7))
        .collect();
    triangular_condition_estimate_from(r, iterations, start.clone(), start).0
}

/// Power iteration on `R^T R` and on its inverse from the given start
/// vectors. Returns the estimate and the final vectors, which make good
/// starts for a matrix grown by one column.
pub(crate) fn triangular_condition_estimate_from<T: Real>(
    r: &ColMajor<T>,
    iterations: usize,
    mut x_max: Vec<T>,
    mut x_min: Vec<T>,
) -> (T, Vec<T>, Vec<T>) {
    let n = r.cols;
    if n == 0 {
        return (T::one(), x_max, x_min);
    }
    let dmax = (0..n).fold(T::zero(), |m, j| m.max(r.get(j, j).abs()));
    if (0..n).any(|j| r.get(j, j).abs() <= rank_tolerance::<T>(n, n) * dmax) {
        return (T::infinity(), x_max, x_min);
    }
    normalize(&mut x_max);
    let mut smax = T::zero();
    for _ in 0..iterations {
        let y = upper_matvec(r, &x_max);
        let mut z = upper_matvec_transposed(r, &y);
        smax = normalize(&mut z).sqrt();
        x_max = z;
    }

    normalize(&mut x_min);
    let mut inv_smin = T::zero();
    for _ in 0..iterations {
        let y = forward_substitute_transposed(r, &x_min);
        let mut z = back_substitute(r, &y);
        inv_smin = normalize(&mut z).sqrt();
        if !inv_smin.is_finite() {
            return (T::infinity(), x_max, x_min);
        }
        x_min = z;
    }
    (smax * inv_smin, x_max, x_min)
}

/// Householder QR grown one column at a time (no pivoting), carrying
/// `Q^T b` for a fixed right-hand side.
#[derive(Debug, Clone)]
pub(crate) struct IncrementalQr<T> {
    rows: usize,
    reflectors: Vec<Reflector<T>>,
    r: ColMajor<T>,
    qtb: Vec<T>,
}

impl<T: Real> IncrementalQr<T> {
    pub fn new(rhs: Vec<T>) -> Self {
        Self {
            rows: rhs.len(),
            reflectors: Vec::new(),
            r: ColMajor::zeros(0, 0),
            qtb: rhs,
        }
    }

    /// Appends a column. Returns `false` (and leaves the factor unchanged)
    /// once the column count reaches the row count.
    pub fn push(&mut self, mut col: Vec<T>) -> bool {
        let k = self.r.cols;
        if k >= self.rows {
            return false;
        }
        for h in &self.reflectors {
            h.apply(&mut col);
        }
        let (h, alpha) = Reflector::annihilate(k, &col[k..]);
        h.apply(&mut self.qtb);
        self.reflectors.push(h);
        // Grow R to (k+1) x (k+1).
        let mut r = ColMajor::zeros(k + 1, k + 1);
        for c in 0..k {
            r.col_mut(c)[..=c].copy_from_slice(&self.r.col(c)[..=c]);
        }
        r.col_mut(k)[..k].copy_from_slice(&col[..k]);
        r.col_mut(k)[k] = alpha;
        self.r = r;
        true
    }

    pub fn r(&self) -> &ColMajor<T> {
        &self.r
    }

    /// Least-squares coefficients; minimum-norm through the SVD of `R` when
    /// `R` is numerically singular.
    pub fn solve(&self) -> (Vec<T>, bool) {
        let k = self.r.cols;
        let dmax = (0..k).fold(T::zero(), |m, j| m.max(self.r.get(j, j).abs()));
        let tol = rank_tolerance::<T>(self.rows, k);
        let full_rank = (0..k).all(|j| self.r.get(j, j).abs() > tol * dmax);
        if full_rank {
            (back_substitute(&self.r, &self.qtb), true)
        } else {
            let svd = jacobi_svd(&self.r);
            (pinv_solve(&svd, &self.qtb[..k], tol), false)
        }
    }

    /// Norm of the least-squares residual, `||(Q^T b)[k..]||`.
    pub fn residual_norm(&self) -> T {
        norm2(&self.qtb[self.r.cols..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> ColMajor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ColMajor {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    fn matmul_check(a: &ColMajor<f64>, f: &QrFactor<f64>) {
        // ||A P||_F == ||R||_F and column norms preserved per column.
        for j in 0..a.cols {
            let orig = norm2(a.col(f.perm[j]));
            let rc = norm2(f.r.col(j));
            assert!((orig - rc).abs() < 1e-12 * orig.max(1.0));
        }
    }

    #[test]
    fn pivoted_qr_orders_diagonal_and_preserves_norms() {
        let a = random(12, 5, 1);
        let f = qr_col_pivot(a.clone(), None);
        matmul_check(&a, &f);
        for j in 1..5 {
            assert!(f.r.get(j, j).abs() <= f.r.get(j - 1, j - 1).abs() + 1e-14);
        }
    }

    #[test]
    fn jacobi_svd_reconstructs() {
        let a = random(7, 4, 2);
        let svd = jacobi_svd(&a);
        for i in 0..7 {
            for j in 0..4 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += svd.us.get(i, p) * svd.v.get(j, p);
                }
                assert!((s - a.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn incremental_matches_batch_residual() {
        let a = random(20, 6, 3);
        let b: Vec<f64> = random(20, 1, 4).data;
        let mut inc = IncrementalQr::new(b.clone());
        let mut last = f64::INFINITY;
        for j in 0..6 {
            assert!(inc.push(a.col(j).to_vec()));
            let res = inc.residual_norm();
            assert!(res <= last);
            last = res;
        }
        let (x, full) = inc.solve();
        assert!(full);
        let mut r = b.clone();
        for (j, &xj) in x.iter().enumerate() {
            for (i, ri) in r.iter_mut().enumerate() {
                *ri -= a.get(i, j) * xj;
            }
        }
        assert!((norm2(&r) - last).abs() < 1e-12);
    }

    #[test]
    fn condition_estimate_tracks_svd() {
        let a = random(30, 8, 5);
        let f = qr_col_pivot(a.clone(), None);
        let svd = jacobi_svd(&a);
        let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
        let smin = svd.sigma.iter().cloned().fold(f64::INFINITY, f64::min);
        let est = triangular_condition_estimate(&f.r, 60);
        assert!(
            (est / (smax / smin) - 1.0).abs() < 0.05,
            "{est} vs {}",
            smax / smin
        );
    }
}
