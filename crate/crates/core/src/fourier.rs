//! Random Fourier sampling of spike trains.
//!
//! The measurement operator maps a spike train to
//! `y_l = sum_i a_i exp(-i <w_l, t_i>)` for `m` frequencies `w_l`. No
//! `1/sqrt(m)` normalization is applied. Back-projection uses the conjugate
//! kernel `exp(+i <w_l, s>)`, so it is the real part of the adjoint.

use std::io::Write;
use std::ops::{Add, Sub};
use std::path::Path;

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::measure::SpikeTrain;
use crate::scalar::Real;

/// Upper bound on lattice points accepted by [`back_project_grid`].
pub const MAX_GRID_POINTS: u128 = 100_000_000;

/// `m` sampling frequencies in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySet<T> {
    dim: usize,
    freqs: Vec<T>,
}

impl<T: Real> FrequencySet<T> {
    pub fn new(dim: usize, freqs: Vec<T>) -> Result<Self> {
        if dim == 0 || freqs.is_empty() || !freqs.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "frequency buffer of length {} does not hold m >= 1 points of dimension {dim}",
                freqs.len()
            )));
        }
        if freqs.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("frequencies"));
        }
        Ok(Self { dim, freqs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of measurements `m`.
    pub fn len(&self) -> usize {
        self.freqs.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn frequency(&self, l: usize) -> &[T] {
        &self.freqs[l * self.dim..(l + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[T] {
        &self.freqs
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, T> {
        self.freqs.chunks_exact(self.dim)
    }

    /// Root-mean-square frequency coordinate; estimates the Gaussian scale `c`.
    pub fn scale(&self) -> T {
        let ss: T = self.freqs.iter().map(|&w| w * w).sum();
        (ss / T::from_count(self.freqs.len())).sqrt()
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: d,
            });
        }
        Ok(())
    }

    /// `<w_l, t>`.
    #[inline]
    pub(crate) fn phase(&self, l: usize, t: &[T]) -> T {
        self.frequency(l)
            .iter()
            .zip(t)
            .fold(T::zero(), |acc, (&w, &x)| acc + w * x)
    }
}

/// Draws `m * d` i.i.d. `N(0, scale_c^2)` frequency coordinates.
pub fn sample_frequencies<T: Real, R: Rng + ?Sized>(
    m: usize,
    dim: usize,
    scale_c: T,
    rng: &mut R,
) -> Result<FrequencySet<T>> {
    if !(scale_c > T::zero()) || !scale_c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "frequency scale must be positive, got {scale_c}"
        )));
    }
    let c = scale_c.to_f64_lossy();
    let freqs = (0..m * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::lit(c * z)
        })
        .collect();
    FrequencySet::new(dim, freqs)
}

/// Complex measurements (observations or residues).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector<T> {
    values: Vec<Complex<T>>,
}

impl<T: Real> MeasurementVector<T> {
    pub fn new(values: Vec<Complex<T>>) -> Self {
        Self { values }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            values: vec![Complex::new(T::zero(), T::zero()); m],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex<T>> {
        self.values
    }

    pub fn norm_sqr(&self) -> T {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Euclidean norm `||y||_2`.
    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            values: self.values.iter().map(|z| z * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn check_len(&self, m: usize) -> Result<()> {
        if self.values.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

impl<T: Real> Add for &MeasurementVector<T> {
    type Output = MeasurementVector<T>;

    fn add(self, rhs: Self) -> MeasurementVector<T> {
        assert_eq!(self.len(), rhs.len(), "measurement length mismatch");
        MeasurementVector {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &MeasurementVector<T> {
    type Output = MeasurementVector<T>;

    fn sub(self, rhs: Self) -> MeasurementVector<T> {
        assert_eq!(self.len(), rhs.len(), "measurement length mismatch");
        MeasurementVector {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

/// `A delta_t`: the unit-amplitude measurement of a single spike at `t`.
pub fn atom<T: Real>(t: &[T], freqs: &FrequencySet<T>) -> Result<MeasurementVector<T>> {
    freqs.check_dim(t.len())?;
    let values = (0..freqs.len())
        .map(|l| {
            let (s, c) = freqs.phase(l, t).sin_cos();
            Complex::new(c, -s)
        })
        .collect();
    Ok(MeasurementVector { values })
}

/// `A x` for a spike train `x`; the empty train maps to zero.
pub fn forward<T: Real>(train: &SpikeTrain<T>, freqs: &FrequencySet<T>) -> Result<MeasurementVector<T>> {
    freqs.check_dim(train.dim())?;
    let mut out = MeasurementVector::zeros(freqs.len());
    for (l, y) in out.values.iter_mut().enumerate() {
        let mut acc = Complex::new(T::zero(), T::zero());
        for (a, t) in train.iter() {
            let (s, c) = freqs.phase(l, t).sin_cos();
            acc.re += a * c;
            acc.im -= a * s;
        }
        *y = acc;
    }
    Ok(out)
}

/// `Re <A delta_t, r>` with the Hermitian product conjugating the atom:
/// `Re sum_l exp(+i <w_l, t>) r_l`.
pub fn correlate<T: Real>(t: &[T], residue: &MeasurementVector<T>, freqs: &FrequencySet<T>) -> Result<T> {
    freqs.check_dim(t.len())?;
    residue.check_len(freqs.len())?;
    Ok(residue.values.iter().enumerate().fold(T::zero(), |acc, (l, r)| {
        let (s, c) = freqs.phase(l, t).sin_cos();
        acc + c * r.re - s * r.im
    }))
}

/// Gradient of [`correlate`] with respect to `t`:
/// `-sum_l w_l (sin(<w_l,t>) Re r_l + cos(<w_l,t>) Im r_l)`.
pub fn correlate_gradient<T: Real>(
    t: &[T],
    residue: &MeasurementVector<T>,
    freqs: &FrequencySet<T>,
) -> Result<Vec<T>> {
    freqs.check_dim(t.len())?;
    residue.check_len(freqs.len())?;
    let mut grad = vec![T::zero(); t.len()];
    for (l, r) in residue.values.iter().enumerate() {
        let (s, c) = freqs.phase(l, t).sin_cos();
        let w = s * r.re + c * r.im;
        for (g, &om) in grad.iter_mut().zip(freqs.frequency(l)) {
            *g -= om * w;
        }
    }
    Ok(grad)
}

/// Value, gradient and row-major Hessian of the correlation at `t`, from one
/// pass over the frequencies.
pub(crate) fn correlate_second_order<T: Real>(
    t: &[T],
    residue: &MeasurementVector<T>,
    freqs: &FrequencySet<T>,
) -> (T, Vec<T>, Vec<T>) {
    let d = t.len();
    let mut value = T::zero();
    let mut grad = vec![T::zero(); d];
    let mut hess = vec![T::zero(); d * d];
    for (l, r) in residue.values.iter().enumerate() {
        let (s, c) = freqs.phase(l, t).sin_cos();
        let re = c * r.re - s * r.im;
        let w = s * r.re + c * r.im;
        value += re;
        let om = freqs.frequency(l);
        for p in 0..d {
            grad[p] -= om[p] * w;
            for q in p..d {
                hess[p * d + q] -= om[p] * om[q] * re;
            }
        }
    }
    for p in 0..d {
        for q in 0..p {
            hess[p * d + q] = hess[q * d + p];
        }
    }
    (value, grad, hess)
}

/// Real scalar field sampled on a regular lattice of `[0,1]^d`.
///
/// Axis `j` with `n_j` points has coordinates `i / (n_j - 1)`; a single-point
/// axis sits at `0.5`. Values are row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    resolution: Vec<usize>,
    values: Vec<T>,
}

const GRID_MAGIC: &[u8; 4] = b"GRDF";

impl<T: Real> GridField<T> {
    pub fn new(resolution: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let points = lattice_size(&resolution)?;
        if values.len() as u128 != points {
            return Err(Error::LengthMismatch {
                expected: points as usize,
                got: values.len(),
            });
        }
        Ok(Self { resolution, values })
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn axis_coordinate(n: usize, i: usize) -> T {
        if n <= 1 {
            T::lit(0.5)
        } else {
            T::from_count(i) / T::from_count(n - 1)
        }
    }

    /// Coordinates of the lattice point at flat index `index`.
    pub fn point(&self, index: usize) -> Vec<T> {
        let mut rem = index;
        let mut p = vec![T::zero(); self.dim()];
        for axis in (0..self.dim()).rev() {
            let n = self.resolution[axis];
            p[axis] = Self::axis_coordinate(n, rem % n);
            rem /= n;
        }
        p
    }

    /// Flat index and value of the largest `|value|`.
    pub fn argmax_abs(&self) -> Option<(usize, T)> {
        self.values
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, T)>, (i, &v)| match best {
                Some((_, b)) if b.abs() >= v.abs() => best,
                _ => Some((i, v)),
            })
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// CSV rows `s1,...,sd,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("s{i}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self
                .point(i)
                .iter()
                .map(|x| x.to_f64_lossy().to_string())
                .collect();
            row.push(v.to_f64_lossy().to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Binary layout: 16-byte header (`b"GRDF"`, `d`, `n1`, `n2` as
    /// little-endian `u32`; `n2 = 1` when `d = 1`) followed by row-major
    /// little-endian `f64` values. Only `d <= 2` fits the header.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.dim() == 0 || self.dim() > 2 {
            return Err(Error::InvalidArgument(format!(
                "binary grid export supports d <= 2, got d = {}",
                self.dim()
            )));
        }
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(GRID_MAGIC);
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        let n1 = self.resolution[0] as u32;
        let n2 = self.resolution.get(1).copied().unwrap_or(1) as u32;
        out.extend_from_slice(&n1.to_le_bytes());
        out.extend_from_slice(&n2.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != GRID_MAGIC {
            return Err(Error::Parse("missing grid header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let dim = word(4);
        let resolution = match dim {
            1 => vec![word(8)],
            2 => vec![word(8), word(12)],
            _ => return Err(Error::Parse(format!("unsupported grid dimension {dim}"))),
        };
        let body = &bytes[16..];
        if !body.len().is_multiple_of(8) {
            return Err(Error::Parse("truncated grid values".into()));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Self::new(resolution, values)
    }

    pub fn write_files(&self, csv_path: &Path, bin_path: &Path) -> Result<()> {
        let file = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        std::fs::write(bin_path, self.to_bytes()?).map_err(|e| Error::io(bin_path, e))?;
        Ok(())
    }
}

fn lattice_size(resolution: &[usize]) -> Result<u128> {
    if resolution.is_empty() || resolution.contains(&0) {
        return Err(Error::InvalidArgument(
            "grid resolution needs at least one point per axis".into(),
        ));
    }
    let mut points: u128 = 1;
    for &n in resolution {
        points = points.saturating_mul(n as u128);
    }
    Ok(points)
}

/// Back-projection `Re sum_l y_l exp(+i <w_l, s_j>)` on a regular lattice.
pub fn back_project_grid<T: Real>(
    y: &MeasurementVector<T>,
    freqs: &FrequencySet<T>,
    resolution: &[usize],
) -> Result<GridField<T>> {
    freqs.check_dim(resolution.len())?;
    y.check_len(freqs.len())?;
    let points = lattice_size(resolution)?;
    if points > MAX_GRID_POINTS {
        return Err(Error::GridTooLarge {
            points,
            limit: MAX_GRID_POINTS,
        });
    }
    let mut field = GridField {
        resolution: resolution.to_vec(),
        values: vec![T::zero(); points as usize],
    };
    for j in 0..field.values.len() {
        let s = field.point(j);
        field.values[j] = correlate(&s, y, freqs)?;
    }
    Ok(field)
}
