//! Spike trains, the separation constraint and the merge projection.
//!
//! A spike train is a finite signed measure `sum_i a_i delta_{t_i}` on
//! `R^d`. Locations are stored row-major in one flat buffer.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Finite sum of weighted Dirac masses in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain<T> {
    dim: usize,
    amplitudes: Vec<T>,
    locations: Vec<T>,
}

impl<T: Real> SpikeTrain<T> {
    /// An empty train in dimension `dim`.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            amplitudes: Vec::new(),
            locations: Vec::new(),
        }
    }

    /// Builds a train from amplitudes and a flat row-major location buffer.
    pub fn new(dim: usize, amplitudes: Vec<T>, locations: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if locations.len() != amplitudes.len() * dim {
            return Err(Error::LengthMismatch {
                expected: amplitudes.len() * dim,
                got: locations.len(),
            });
        }
        if amplitudes.iter().chain(&locations).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spike train"));
        }
        Ok(Self {
            dim,
            amplitudes,
            locations,
        })
    }

    /// Builds a train from `(amplitude, location)` pairs.
    pub fn from_spikes<'a, I>(dim: usize, spikes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (T, &'a [T])>,
    {
        let mut train = Self::empty(dim);
        for (a, t) in spikes {
            train.push(a, t)?;
        }
        Ok(train)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[T] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [T] {
        &mut self.amplitudes
    }

    /// Flat row-major buffer of all locations (`len() * dim()` values).
    pub fn locations(&self) -> &[T] {
        &self.locations
    }

    pub fn locations_mut(&mut self) -> &mut [T] {
        &mut self.locations
    }

    pub fn location(&self, i: usize) -> &[T] {
        &self.locations[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, &[T])> + '_ {
        self.amplitudes
            .iter()
            .copied()
            .zip(self.locations.chunks_exact(self.dim))
    }

    pub fn push(&mut self, amplitude: T, location: &[T]) -> Result<()> {
        if location.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: location.len(),
            });
        }
        if !amplitude.is_finite() || location.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spike"));
        }
        self.amplitudes.push(amplitude);
        self.locations.extend_from_slice(location);
        Ok(())
    }

    /// Removes spike `i`, shifting later spikes down.
    pub fn remove(&mut self, i: usize) {
        self.amplitudes.remove(i);
        self.locations.drain(i * self.dim..(i + 1) * self.dim);
    }

    /// Concatenation of two trains (the sum of the two measures).
    pub fn union(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        out.amplitudes.extend_from_slice(&other.amplitudes);
        out.locations.extend_from_slice(&other.locations);
        Ok(out)
    }

    pub fn total_amplitude(&self) -> T {
        self.amplitudes.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes
            .iter()
            .chain(&self.locations)
            .all(|v| v.is_finite())
    }

    /// Reorders spikes by `order[new] = old`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = Self::empty(self.dim);
        for &i in order {
            out.amplitudes.push(self.amplitudes[i]);
            out.locations.extend_from_slice(self.location(i));
        }
        out
    }

    /// Copy with spikes sorted lexicographically by location.
    pub fn sorted_by_location(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| {
            self.location(i)
                .iter()
                .zip(self.location(j))
                .map(|(a, b)| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        self.permuted(&order)
    }
}

#[inline]
pub(crate) fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Minimal pairwise separation `epsilon` between spike locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64", bound = "T: Real")]
pub struct SeparationConstraint<T> {
    epsilon: T,
}

impl<T: Real> SeparationConstraint<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero()) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "separation epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }
}

impl<T: Real> TryFrom<f64> for SeparationConstraint<T> {
    type Error = Error;

    fn try_from(eps: f64) -> Result<Self> {
        Self::new(T::lit(eps))
    }
}

impl<T: Real> From<SeparationConstraint<T>> for f64 {
    fn from(c: SeparationConstraint<T>) -> f64 {
        c.epsilon.to_f64_lossy()
    }
}

/// Smallest Euclidean distance between two distinct spike locations.
pub fn min_pairwise_distance<T: Real>(train: &SpikeTrain<T>) -> Result<T> {
    closest_pair(train)
        .map(|(_, _, d2)| d2.sqrt())
        .ok_or(Error::TooFewSpikes(train.len()))
}

/// Closest pair `(i, j, squared distance)` with `i < j`; ties resolve to the
/// lexicographically smallest index pair.
fn closest_pair<T: Real>(train: &SpikeTrain<T>) -> Option<(usize, usize, T)> {
    let k = train.len();
    let mut best: Option<(usize, usize, T)> = None;
    for i in 0..k {
        let ti = train.location(i);
        for j in i + 1..k {
            let d2 = squared_distance(ti, train.location(j));
            if best.is_none_or(|(_, _, b)| d2 < b) {
                best = Some((i, j, d2));
            }
        }
    }
    best
}

/// True when every pair of locations is strictly more than `epsilon` apart.
pub fn is_separated<T: Real>(train: &SpikeTrain<T>, c: &SeparationConstraint<T>) -> bool {
    match closest_pair(train) {
        None => true,
        Some((_, _, d2)) => d2.sqrt() > c.epsilon,
    }
}

/// Merges spikes until the train is `epsilon`-separated.
///
/// The closest pair at distance `<= epsilon` is fused repeatedly: amplitudes
/// add, and the merged location is the amplitude-weighted barycenter. When the
/// summed amplitude cancels (`|a_i + a_j| < 1e-12 (|a_i| + |a_j|)`) the plain
/// midpoint is used instead. The merged spike takes the lower index.
pub fn merge_project<T: Real>(train: &SpikeTrain<T>, c: &SeparationConstraint<T>) -> SpikeTrain<T> {
    merge_project_counted(train, c).0
}

/// [`merge_project`] that also reports the number of pairwise merges.
pub fn merge_project_counted<T: Real>(
    train: &SpikeTrain<T>,
    c: &SeparationConstraint<T>,
) -> (SpikeTrain<T>, usize) {
    let mut out = train.clone();
    let eps2 = c.epsilon * c.epsilon;
    let degenerate = T::lit(1e-12);
    let half = T::lit(0.5);
    let mut merges = 0;
    while let Some((i, j, d2)) = closest_pair(&out) {
        if d2 > eps2 {
            break;
        }
        let (ai, aj) = (out.amplitudes[i], out.amplitudes[j]);
        let sum = ai + aj;
        let mass = ai.abs() + aj.abs();
        let dim = out.dim;
        for axis in 0..dim {
            let xi = out.locations[i * dim + axis];
            let xj = out.locations[j * dim + axis];
            out.locations[i * dim + axis] = if sum.abs() < degenerate * mass || mass == T::zero() {
                (xi + xj) * half
            } else {
                (ai * xi + aj * xj) / sum
            };
        }
        out.amplitudes[i] = sum;
        out.remove(j);
        merges += 1;
    }
    (out, merges)
}

/// Draws `k` spikes uniformly in `[0,1]^d`, pairwise more than `epsilon`
/// apart, with amplitudes uniform on `[amp_low, amp_high]`.
///
/// Locations come from rejection sampling with a budget of `10_000 * k`
/// candidate draws.
pub fn generate_signal<T: Real, R: Rng + ?Sized>(
    k: usize,
    dim: usize,
    c: &SeparationConstraint<T>,
    amp_low: T,
    amp_high: T,
    rng: &mut R,
) -> Result<SpikeTrain<T>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(amp_low <= amp_high) {
        return Err(Error::InvalidArgument(format!(
            "amplitude range [{amp_low}, {amp_high}] is empty"
        )));
    }
    let budget = 10_000usize.saturating_mul(k.max(1));
    let eps2 = c.epsilon * c.epsilon;
    let mut locations: Vec<T> = Vec::with_capacity(k * dim);
    let mut candidate = vec![T::zero(); dim];
    let mut draws = 0usize;
    while locations.len() < k * dim {
        if draws >= budget {
            return Err(Error::PackingInfeasible {
                k,
                d: dim,
                epsilon: c.epsilon.to_f64_lossy(),
                attempts: budget,
            });
        }
        draws += 1;
        for x in candidate.iter_mut() {
            *x = T::lit(rng.random::<f64>());
        }
        let clear = locations
            .chunks_exact(dim)
            .all(|t| squared_distance(t, &candidate) > eps2);
        if clear {
            locations.extend_from_slice(&candidate);
        }
    }
    let (lo, hi) = (amp_low.to_f64_lossy(), amp_high.to_f64_lossy());
    let amplitudes = (0..k)
        .map(|_| T::lit(lo + (hi - lo) * rng.random::<f64>()))
        .collect();
    SpikeTrain::new(dim, amplitudes, locations)
}

#[derive(Serialize, Deserialize)]
struct SpikeRecord {
    amplitude: f64,
    location: Vec<f64>,
}

impl<T: Real> SpikeTrain<T> {
    /// JSON array of `{amplitude, location: [..]}` records.
    pub fn to_json(&self) -> Result<String> {
        let records: Vec<SpikeRecord> = self
            .iter()
            .map(|(a, t)| SpikeRecord {
                amplitude: a.to_f64_lossy(),
                location: t.iter().map(|x| x.to_f64_lossy()).collect(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }

    /// Parses the JSON record layout. The dimension comes from the records;
    /// an empty array needs `dim_hint`.
    pub fn from_json(text: &str, dim_hint: Option<usize>) -> Result<Self> {
        let records: Vec<SpikeRecord> = serde_json::from_str(text)?;
        let dim = records
            .first()
            .map(|r| r.location.len())
            .or(dim_hint)
            .ok_or_else(|| Error::Parse("empty spike list without a dimension".into()))?;
        let mut train = Self::empty(dim);
        for r in &records {
            let loc: Vec<T> = r.location.iter().map(|&x| T::lit(x)).collect();
            train.push(T::lit(r.amplitude), &loc)?;
        }
        Ok(train)
    }

    /// CSV with header `a,t1,...,td`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["a".to_string()];
        header.extend((1..=self.dim).map(|i| format!("t{i}")));
        w.write_record(&header)?;
        for (a, t) in self.iter() {
            let mut row = vec![a.to_f64_lossy().to_string()];
            row.extend(t.iter().map(|x| x.to_f64_lossy().to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        if header.get(0) != Some("a") || dim == 0 {
            return Err(Error::Parse(format!(
                "expected header `a,t1,...,td`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("t{}", i + 1) {
                return Err(Error::Parse(format!("unexpected column `{name}`")));
            }
        }
        let mut train = Self::empty(dim);
        for row in r.records() {
            let row = row?;
            let values: Vec<T> = row
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
                })
                .collect::<Result<_>>()?;
            train.push(values[0], &values[1..])?;
        }
        Ok(train)
    }
}
