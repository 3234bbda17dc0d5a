//! Continuous orthogonal matching pursuit.
//!
//! Each iteration picks the location whose atom correlates best with the
//! current residue, refits every amplitude by least squares and, in sliding
//! mode, runs a descent over all parameters. Without sliding, locations are
//! frozen once chosen and the least-squares factor is updated in place, which
//! makes deliberately over-parametrized runs cheap.

use std::time::Instant;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{atom, correlate, correlate_second_order, forward, FrequencySet, MeasurementVector};
use crate::lstsq::{build_design, solve_amplitudes, IncrementalLeastSquares, LsSolution};
use crate::measure::SpikeTrain;
use crate::pgd::{slide, StepPolicy};
use crate::scalar::Real;

/// Multi-start search for the continuous correlation maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Real")]
pub struct SearchConfig<T> {
    /// Uniform random probes per dimension in `[0,1]^d`.
    pub probes_per_dim: usize,
    /// Best probes refined by local ascent.
    pub n_starts: usize,
    pub ascent_max_iter: usize,
    /// Ascent stops once a step is shorter than this (location units).
    pub ascent_tol: T,
    /// Ascent is confined to `[-margin, 1 + margin]^d`.
    pub bounds_margin: T,
}

impl<T: Real> Default for SearchConfig<T> {
    fn default() -> Self {
        Self {
            probes_per_dim: 128,
            n_starts: 4,
            ascent_max_iter: 50,
            ascent_tol: T::lit(1e-10),
            bounds_margin: T::lit(0.05),
        }
    }
}

/// Parameters of the sliding descent (sliding mode only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Real")]
pub struct SlidingConfig<T> {
    pub max_iter: usize,
    /// Relative to `||y|| * max(1, c)`.
    pub grad_tol: T,
    pub step: StepPolicy<T>,
}

impl<T: Real> Default for SlidingConfig<T> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: T::lit(1e-9),
            step: StepPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CompConfig<T> {
    /// Maximum number of spikes `K`.
    pub max_spikes: usize,
    pub sliding: bool,
    /// Stop once `||r|| <= residue_rel_tol * ||y||`.
    pub residue_rel_tol: T,
    /// Stop once the residue shrank by less than `stagnation_rel_decrease`
    /// (relative) over the last `stagnation_window` iterations.
    pub stagnation_window: usize,
    pub stagnation_rel_decrease: T,
    #[serde(default)]
    pub search: SearchConfig<T>,
    #[serde(default)]
    pub sliding_descent: SlidingConfig<T>,
}

impl<T: Real> CompConfig<T> {
    fn with_mode(max_spikes: usize, sliding: bool) -> Self {
        Self {
            max_spikes,
            sliding,
            residue_rel_tol: T::lit(1e-4),
            stagnation_window: 10,
            stagnation_rel_decrease: T::lit(1e-3),
            search: SearchConfig::default(),
            sliding_descent: SlidingConfig::default(),
        }
    }

    /// Sliding COMP that adds at most `k` spikes.
    pub fn sliding(k: usize) -> Self {
        Self::with_mode(k, true)
    }

    /// Over-parametrized COMP without sliding: up to `6 k` spikes for an
    /// expected `k`.
    pub fn over_parametrized(expected_k: usize) -> Self {
        Self::with_mode(6 * expected_k.max(1), false)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if self.max_spikes == 0 || self.stagnation_window == 0 {
            return Err(Error::InvalidArgument(
                "max_spikes and stagnation_window must be at least 1".into(),
            ));
        }
        if !positive(self.residue_rel_tol)
            || !positive(self.stagnation_rel_decrease)
            || !positive(self.search.ascent_tol)
            || !(self.search.bounds_margin >= T::zero())
        {
            return Err(Error::InvalidArgument("COMP tolerances must be positive".into()));
        }
        if self.search.probes_per_dim == 0 || self.search.n_starts == 0 {
            return Err(Error::InvalidArgument("search needs probes and starts".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Residue fell below the relative threshold.
    Threshold,
    /// Residue stopped decreasing over the stagnation window.
    Stagnation,
    /// `K` spikes were added.
    MaxSpikes,
    /// The residue vanished exactly; no atom left to select.
    ZeroResidue,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Threshold => "threshold",
            StopReason::Stagnation => "stagnation",
            StopReason::MaxSpikes => "max_spikes",
            StopReason::ZeroResidue => "zero_residue",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompIteration {
    pub k: usize,
    pub residue_norm: f64,
    /// Estimated condition number of the running design matrix.
    pub condition: f64,
    pub ill_conditioned: bool,
    pub location: Vec<f64>,
    /// Iterations of the sliding descent (0 without sliding).
    pub slide_iterations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompTrace {
    pub observation_norm: f64,
    pub iterations: Vec<CompIteration>,
    pub stop: StopReason,
}

impl CompTrace {
    pub fn residue_norms(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.residue_norm).collect()
    }

    pub fn final_residue_norm(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.observation_norm, |it| it.residue_norm)
    }

    pub fn ill_conditioned_steps(&self) -> usize {
        self.iterations.iter().filter(|it| it.ill_conditioned).count()
    }

    /// CSV `k,residue_norm,cond_M,wall_ms,stop_reason`; the stop reason is
    /// written on the last row only.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "residue_norm", "cond_M", "wall_ms", "stop_reason"])?;
        let last = self.iterations.len().saturating_sub(1);
        for (i, it) in self.iterations.iter().enumerate() {
            w.write_record([
                it.k.to_string(),
                it.residue_norm.to_string(),
                it.condition.to_string(),
                format!("{:.3}", it.wall_ms),
                if i == last {
                    self.stop.to_string()
                } else {
                    String::new()
                },
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Sign-blind selection criterion `(Re <A delta_t, r>)^2`.
#[inline]
fn criterion<T: Real>(corr: T) -> T {
    corr * corr
}

fn clamp_box<T: Real>(t: &mut [T], margin: T) {
    for x in t.iter_mut() {
        *x = x.max(-margin).min(T::one() + margin);
    }
}

/// Solves the `d x d` SPD system `a x = b` by Cholesky; `None` if `a` is not
/// positive definite.
fn cholesky_solve<T: Real>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let d = b.len();
    let mut l = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for p in 0..j {
                s -= l[i * d + p] * l[j * d + p];
            }
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..d {
        for p in 0..i {
            let v = l[i * d + p] * z[p];
            z[i] -= v;
        }
        z[i] /= l[i * d + i];
    }
    for i in (0..d).rev() {
        for p in i + 1..d {
            let v = l[p * d + i] * z[p];
            z[i] -= v;
        }
        z[i] /= l[i * d + i];
    }
    Some(z)
}

const MAX_HALVINGS: usize = 20;

/// Local maximization of `|Re <A delta_t, r>|` from `start`, by damped
/// Newton steps on the signed correlation (gradient steps where the Hessian
/// is indefinite) with step halving. Returns the point and its criterion.
fn ascend<T: Real>(
    start: &[T],
    residue: &MeasurementVector<T>,
    freqs: &FrequencySet<T>,
    search: &SearchConfig<T>,
) -> (Vec<T>, T) {
    let d = start.len();
    let radius = T::lit(0.5) / freqs.scale().max(T::epsilon());
    let mut t = start.to_vec();
    clamp_box(&mut t, search.bounds_margin);
    let (mut value, _, _) = correlate_second_order(&t, residue, freqs);
    let sign = if value >= T::zero() { T::one() } else { -T::one() };
    for _ in 0..search.ascent_max_iter {
        let (v, grad, hess) = correlate_second_order(&t, residue, freqs);
        value = v;
        // maximize sign * corr: Newton system (-sign H) p = sign g
        let g: Vec<T> = grad.iter().map(|&x| sign * x).collect();
        let neg_h: Vec<T> = hess.iter().map(|&x| -sign * x).collect();
        let mut step = cholesky_solve(&neg_h, &g).unwrap_or_else(|| g.clone());
        let len = step.iter().map(|&x| x * x).sum::<T>().sqrt();
        if len <= search.ascent_tol {
            break;
        }
        if len > radius {
            step.iter_mut().for_each(|x| *x *= radius / len);
        }
        let mut scale = T::one();
        let mut moved = T::zero();
        let mut improved = false;
        for _ in 0..MAX_HALVINGS {
            let mut cand: Vec<T> = t.iter().zip(&step).map(|(&x, &p)| x + scale * p).collect();
            clamp_box(&mut cand, search.bounds_margin);
            let cv = match correlate(&cand, residue, freqs) {
                Ok(cv) => cv,
                Err(_) => break,
            };
            if sign * cv > sign * value {
                moved = t
                    .iter()
                    .zip(&cand)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>()
                    .sqrt();
                t = cand;
                value = cv;
                improved = true;
                break;
            }
            scale *= T::lit(0.5);
            if scale * len.min(radius) < search.ascent_tol {
                break;
            }
        }
        if !improved || moved < search.ascent_tol {
            break;
        }
    }
    debug_assert_eq!(t.len(), d);
    (t, criterion(value))
}

/// Screening pattern: uniform points in `[-1, 1)^d`, drawn once. Each
/// search translates the pattern by a fresh uniform shift in `[0, 1)^d` and
/// keeps the points landing in `[0, 1]^d`, which gives `probes_per_dim * d`
/// uniform probes on average. Translation only modulates the residue, so
/// the atoms of the pattern are computed once when they fit in memory.
struct ProbeBank<T> {
    dim: usize,
    points: Vec<T>,
    /// `atoms[p * m + l]` = (cos, sin) of `<w_l, t_p>`.
    atoms: Option<Vec<(T, T)>>,
}

/// Largest number of precomputed pattern-frequency pairs.
const BANK_LIMIT: usize = 1 << 24;

impl<T: Real> ProbeBank<T> {
    fn draw<R: Rng + ?Sized>(
        search: &SearchConfig<T>,
        freqs: &FrequencySet<T>,
        precompute: bool,
        rng: &mut R,
    ) -> Self {
        let d = freqs.dim();
        let n = search
            .probes_per_dim
            .saturating_mul(d)
            .saturating_mul(1usize << d.min(20))
            .max(1);
        let points: Vec<T> = (0..n * d)
            .map(|_| T::lit(rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let m = freqs.len();
        let atoms = (precompute && n.saturating_mul(m) <= BANK_LIMIT).then(|| {
            let mut atoms = Vec::with_capacity(n * m);
            for t in points.chunks_exact(d) {
                atoms.extend((0..m).map(|l| {
                    let (s, c) = freqs.phase(l, t).sin_cos();
                    (c, s)
                }));
            }
            atoms
        });
        Self {
            dim: d,
            points,
            atoms,
        }
    }

    /// Draws a shift and returns the probes it places in the unit box with
    /// their selection criterion, in pattern order.
    fn screen<R: Rng + ?Sized>(
        &self,
        residue: &MeasurementVector<T>,
        freqs: &FrequencySet<T>,
        rng: &mut R,
    ) -> Result<Vec<(T, Vec<T>)>> {
        let d = self.dim;
        let shift: Vec<T> = (0..d).map(|_| T::lit(rng.random::<f64>())).collect();
        let inside = |t: &[T]| t.iter().all(|&x| x >= T::zero() && x <= T::one());
        let mut out = Vec::new();
        match &self.atoms {
            Some(atoms) => {
                let m = freqs.len();
                // Re sum_l exp(i <w_l, t + shift>) r_l with the shift folded into r.
                let modulated: Vec<Complex<T>> = residue
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(l, r)| {
                        let (s, c) = freqs.phase(l, &shift).sin_cos();
                        Complex::new(c, s) * r
                    })
                    .collect();
                for (t, row) in self.points.chunks_exact(d).zip(atoms.chunks_exact(m)) {
                    let probe: Vec<T> = t.iter().zip(&shift).map(|(&x, &s)| x + s).collect();
                    if !inside(&probe) {
                        continue;
                    }
                    let corr = row
                        .iter()
                        .zip(&modulated)
                        .fold(T::zero(), |acc, (&(c, s), r)| acc + c * r.re - s * r.im);
                    out.push((criterion(corr), probe));
                }
            }
            None => {
                for t in self.points.chunks_exact(d) {
                    let probe: Vec<T> = t.iter().zip(&shift).map(|(&x, &s)| x + s).collect();
                    if inside(&probe) {
                        out.push((criterion(correlate(&probe, residue, freqs)?), probe));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn search_with_bank<T: Real, R: Rng + ?Sized>(
    bank: &ProbeBank<T>,
    residue: &MeasurementVector<T>,
    freqs: &FrequencySet<T>,
    search: &SearchConfig<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    residue.check_len(freqs.len())?;
    if residue.norm_sqr() == T::zero() {
        return Err(Error::ZeroResidue);
    }
    let mut probes = bank.screen(residue, freqs, rng)?;
    if probes.is_empty() {
        let t: Vec<T> = (0..bank.dim).map(|_| T::lit(rng.random::<f64>())).collect();
        probes.push((T::zero(), t));
    }
    // Stable sort keeps pattern order among equal scores.
    probes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut best: Option<(T, Vec<T>)> = None;
    for (_, start) in probes.iter().take(search.n_starts) {
        let (t, c) = ascend(start, residue, freqs, search);
        if best.as_ref().is_none_or(|(bc, _)| c > *bc) {
            best = Some((c, t));
        }
    }
    let (_, t) = best.expect("at least one start");
    Ok(t)
}

/// Best local maximizer of `(Re <A delta_t, r>)^2` over `[0,1]^d`.
///
/// About `probes_per_dim * d` uniform random probes are scored; the `n_starts`
/// best are refined by local ascent and the refined point with the largest
/// criterion wins (ties: lowest start rank).
pub fn argmax_correlation<T: Real, R: Rng + ?Sized>(
    residue: &MeasurementVector<T>,
    freqs: &FrequencySet<T>,
    search: &SearchConfig<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    residue.check_len(freqs.len())?;
    if residue.norm_sqr() == T::zero() {
        return Err(Error::ZeroResidue);
    }
    let bank = ProbeBank::draw(search, freqs, false, rng);
    search_with_bank(&bank, residue, freqs, search, rng)
}

enum Amplitudes<T> {
    Frozen(IncrementalLeastSquares<T>),
    Sliding,
}

/// Continuous OMP with the stopping rules of [`CompConfig`].
pub fn comp<T: Real, R: Rng + ?Sized>(
    y: &MeasurementVector<T>,
    freqs: &FrequencySet<T>,
    cfg: &CompConfig<T>,
    rng: &mut R,
) -> Result<(SpikeTrain<T>, CompTrace)> {
    cfg.validate()?;
    y.check_len(freqs.len())?;
    let y_norm = y.norm();
    if y_norm == T::zero() {
        return Err(Error::ZeroResidue);
    }
    let started = Instant::now();
    let d = freqs.dim();
    let mut train = SpikeTrain::empty(d);
    let mut residue = y.clone();
    let mut solver = if cfg.sliding {
        Amplitudes::Sliding
    } else {
        Amplitudes::Frozen(IncrementalLeastSquares::new(y))
    };
    let mut trace = CompTrace {
        observation_norm: y_norm.to_f64_lossy(),
        iterations: Vec::new(),
        stop: StopReason::MaxSpikes,
    };
    let mut norms: Vec<T> = vec![y_norm];

    let bank = ProbeBank::draw(&cfg.search, freqs, true, rng);
    for k in 1..=cfg.max_spikes {
        let t = match search_with_bank(&bank, &residue, freqs, &cfg.search, rng) {
            Ok(t) => t,
            Err(Error::ZeroResidue) => {
                trace.stop = StopReason::ZeroResidue;
                break;
            }
            Err(e) => return Err(e),
        };
        let ls: LsSolution<T> = match &mut solver {
            Amplitudes::Frozen(inc) => {
                inc.push(atom(&t, freqs)?)?;
                inc.solve()
            }
            Amplitudes::Sliding => {
                let mut locations = train.locations().to_vec();
                locations.extend_from_slice(&t);
                solve_amplitudes(&build_design(&locations, freqs)?, y)?
            }
        };
        let mut locations = train.locations().to_vec();
        locations.extend_from_slice(&t);
        train = SpikeTrain::new(d, ls.amplitudes.clone(), locations)?;

        let mut slide_iterations = 0;
        if cfg.sliding {
            let s = &cfg.sliding_descent;
            let (slid, iters) = slide(&train, freqs, y, &s.step, s.max_iter, s.grad_tol)?;
            train = slid;
            slide_iterations = iters;
        }

        residue = match &solver {
            Amplitudes::Frozen(inc) => y - &inc.apply(train.amplitudes()),
            Amplitudes::Sliding => y - &forward(&train, freqs)?,
        };
        let r_norm = residue.norm();
        norms.push(r_norm);
        trace.iterations.push(CompIteration {
            k,
            residue_norm: r_norm.to_f64_lossy(),
            condition: ls.condition_estimate.to_f64_lossy(),
            ill_conditioned: ls.ill_conditioned,
            location: train.location(k - 1).iter().map(|x| x.to_f64_lossy()).collect(),
            slide_iterations,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });

        if r_norm <= cfg.residue_rel_tol * y_norm {
            trace.stop = StopReason::Threshold;
            break;
        }
        if k >= cfg.stagnation_window {
            let before = norms[k - cfg.stagnation_window];
            if before - r_norm < cfg.stagnation_rel_decrease * before {
                trace.stop = StopReason::Stagnation;
                break;
            }
        }
        if k == cfg.max_spikes {
            trace.stop = StopReason::MaxSpikes;
        }
    }
    Ok((train, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::sample_frequencies;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn freqs(m: usize, d: usize, c: f64, seed: u64) -> FrequencySet<f64> {
        sample_frequencies(m, d, c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn observe(spikes: &[(f64, &[f64])], f: &FrequencySet<f64>) -> MeasurementVector<f64> {
        let train = SpikeTrain::from_spikes(f.dim(), spikes.iter().copied()).unwrap();
        forward(&train, f).unwrap()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn finds_single_spike() {
        let f = freqs(300, 2, 20.0, 1);
        let t0 = [0.37, 0.61];
        let y = observe(&[(1.0, &t0)], &f);
        let search = SearchConfig {
            n_starts: 32,
            ..SearchConfig::default()
        };
        let t = argmax_correlation(&y, &f, &search, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(dist(&t, &t0) < 1e-4, "{t:?}");
        let y = observe(&[(-1.0, &t0)], &f);
        let t = argmax_correlation(&y, &f, &search, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(dist(&t, &t0) < 1e-4, "{t:?}");
    }

    #[test]
    fn prefers_dominant_spike() {
        let f = freqs(400, 2, 20.0, 4);
        let (big, small) = ([0.25, 0.3], [0.75, 0.7]);
        let y = observe(&[(5.0, &big), (1.0, &small)], &f);
        let t = argmax_correlation(
            &y,
            &f,
            &SearchConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert!(dist(&t, &big) < 1e-3, "{t:?}");
        let at_big = correlate(&big, &y, &f).unwrap().powi(2);
        let at_small = correlate(&small, &y, &f).unwrap().powi(2);
        assert!(at_big > at_small);
    }

    #[test]
    fn zero_residue_is_an_error() {
        let f = freqs(50, 1, 10.0, 6);
        let zero = MeasurementVector::zeros(50);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            argmax_correlation(&zero, &f, &SearchConfig::default(), &mut rng),
            Err(Error::ZeroResidue)
        ));
        assert!(matches!(
            comp(&zero, &f, &CompConfig::sliding(3), &mut rng),
            Err(Error::ZeroResidue)
        ));
    }

    #[test]
    fn one_spike_recovered_in_one_iteration() {
        let f = freqs(300, 2, 20.0, 7);
        let y = observe(&[(2.5, &[0.4, 0.55])], &f);
        let cfg = CompConfig::over_parametrized(1);
        let (train, trace) = comp(&y, &f, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(train.len(), 1);
        assert_eq!(trace.stop, StopReason::Threshold);
        assert!(trace.final_residue_norm() < 1e-6 * y.norm());
    }

    #[test]
    fn residue_norms_never_increase() {
        let f = freqs(200, 2, 15.0, 9);
        let y = observe(
            &[
                (3.0, &[0.2, 0.2]),
                (1.5, &[0.5, 0.8]),
                (-2.0, &[0.8, 0.4]),
                (1.0, &[0.3, 0.6]),
            ],
            &f,
        );
        for cfg in [CompConfig::sliding(4), CompConfig::over_parametrized(4)] {
            let (_, trace) = comp(&y, &f, &cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
            let mut prev = y.norm();
            for r in trace.residue_norms() {
                assert!(
                    r <= prev + 1e-12 * y.norm(),
                    "sliding = {}: {r} > {prev}",
                    cfg.sliding
                );
                prev = r;
            }
        }
    }

    #[test]
    fn sliding_recovers_separated_spikes() {
        let f = freqs(300, 2, 20.0, 11);
        let truth = [(3.0, [0.2, 0.25]), (2.0, [0.7, 0.8]), (1.5, [0.75, 0.2])];
        let spikes: Vec<(f64, &[f64])> = truth.iter().map(|(a, t)| (*a, &t[..])).collect();
        let y = observe(&spikes, &f);
        let (train, trace) = comp(
            &y,
            &f,
            &CompConfig::sliding(3),
            &mut ChaCha8Rng::seed_from_u64(12),
        )
        .unwrap();
        assert_eq!(train.len(), 3);
        assert!(
            trace.final_residue_norm() < 1e-3 * y.norm(),
            "{}",
            trace.final_residue_norm()
        );
        for (_, t) in &truth {
            assert!((0..3).any(|i| dist(train.location(i), t) < 1e-3));
        }
    }

    #[test]
    fn deterministic_for_equal_seeds() {
        let f = freqs(150, 2, 15.0, 13);
        let y = observe(&[(2.0, &[0.3, 0.3]), (1.0, &[0.6, 0.7])], &f);
        let cfg = CompConfig::over_parametrized(2);
        let run = || comp(&y, &f, &cfg, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        let (a, mut ta) = run();
        let (b, mut tb) = run();
        assert_eq!(a, b);
        ta.iterations.iter_mut().for_each(|it| it.wall_ms = 0.0);
        tb.iterations.iter_mut().for_each(|it| it.wall_ms = 0.0);
        assert_eq!(ta, tb);
    }

    #[test]
    fn selected_locations_stay_in_box() {
        let f = freqs(200, 2, 15.0, 15);
        let y = observe(&[(2.0, &[0.02, 0.97]), (1.0, &[0.5, 0.5])], &f);
        let cfg = CompConfig::over_parametrized(2);
        let (train, _) = comp(&y, &f, &cfg, &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
        assert!(train.locations().iter().all(|&x| (-0.05..=1.05).contains(&x)));
    }

    #[test]
    fn trace_csv_layout() {
        let f = freqs(100, 1, 10.0, 17);
        let y = observe(&[(2.0, &[0.3]), (1.0, &[0.7])], &f);
        let (_, trace) = comp(
            &y,
            &f,
            &CompConfig::sliding(2),
            &mut ChaCha8Rng::seed_from_u64(18),
        )
        .unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,residue_norm,cond_M,wall_ms,stop_reason");
        assert!(lines.last().unwrap().ends_with(&trace.stop.to_string()));
    }
}
