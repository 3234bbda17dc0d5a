//! Projected gradient descent over all spike parameters.
//!
//! Each iteration takes a block-scaled gradient step (amplitudes with
//! `tau_a`, locations with `tau_t`) and periodically applies the merge
//! projection so that the estimate stays separated.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FrequencySet, MeasurementVector};
use crate::measure::{is_separated, merge_project_counted, SeparationConstraint, SpikeTrain};
use crate::objective::{objective, Evaluation, ParameterGradient};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Constant step; transient increases of the objective are tolerated.
    Fixed,
    /// Armijo backtracking with mild expansion after accepted steps.
    Backtracking,
}

/// Step-size policy shared by PGD and the sliding step of COMP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, bound = "T: Real")]
pub struct StepPolicy<T> {
    pub mode: StepMode,
    /// Amplitude step. Unset: probed down from `1 / (2 m k_init)`.
    pub tau_a: Option<T>,
    /// Location step. Unset: `tau_a / c^2` with `c` the frequency scale.
    pub tau_t: Option<T>,
    pub shrink: T,
    pub expand: T,
    pub armijo: T,
    /// Backtracking gives up (and rejects the step) below
    /// `min_step_ratio * initial tau_a`.
    pub min_step_ratio: T,
    /// Accepted steps may grow up to `max_step_ratio * initial tau_a`.
    pub max_step_ratio: T,
    /// Divide each spike's location step by `max(a_i^2, (floor * max|a|)^2)`
    /// (the diagonal Gauss-Newton curvature); `None` keeps one location
    /// step for all spikes.
    pub amplitude_preconditioning: Option<T>,
}

impl<T: Real> Default for StepPolicy<T> {
    fn default() -> Self {
        Self {
            mode: StepMode::Backtracking,
            tau_a: None,
            tau_t: None,
            shrink: T::lit(0.5),
            expand: T::lit(1.1),
            armijo: T::lit(1e-4),
            min_step_ratio: T::lit(1e-10),
            max_step_ratio: T::lit(1e3),
            amplitude_preconditioning: Some(T::lit(0.1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PgdConfig<T> {
    pub max_iter: usize,
    #[serde(default)]
    pub step: StepPolicy<T>,
    /// Merge projection is applied every `projection_period` iterations.
    pub projection_period: usize,
    /// Merge radius of the projection.
    pub epsilon: SeparationConstraint<T>,
    /// Stop once `||r|| <= converge_rel_tol * ||y||`.
    pub converge_rel_tol: T,
    /// Stop once `||grad g|| <= grad_tol * ||y|| * max(1, c)`.
    pub grad_tol: T,
}

impl<T: Real> PgdConfig<T> {
    pub fn new(epsilon: SeparationConstraint<T>) -> Self {
        Self {
            max_iter: 20_000,
            step: StepPolicy::default(),
            projection_period: 1,
            epsilon,
            converge_rel_tol: T::lit(1e-6),
            grad_tol: T::lit(1e-12),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.step;
        let positive = |v: T| v > T::zero() && v.is_finite();
        if self.max_iter == 0 || self.projection_period == 0 {
            return Err(Error::InvalidArgument(
                "max_iter and projection_period must be at least 1".into(),
            ));
        }
        let steps_ok = s.tau_a.is_none_or(positive) && s.tau_t.is_none_or(positive);
        let factors_ok = positive(s.shrink)
            && s.shrink < T::one()
            && s.expand >= T::one()
            && positive(s.armijo)
            && s.armijo < T::one()
            && positive(s.min_step_ratio)
            && s.max_step_ratio >= T::one();
        if !steps_ok || !factors_ok {
            return Err(Error::InvalidArgument(format!("invalid step policy: {s:?}")));
        }
        if !positive(self.converge_rel_tol) || !(self.grad_tol >= T::zero()) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Mutable step sizes carried across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState<T> {
    /// Current amplitude step.
    pub tau: T,
    /// `tau_t / tau_a`.
    pub location_ratio: T,
    pub floor: T,
    pub cap: T,
    /// Evaluation of the last accepted point, reused by the next step.
    cache: Option<(SpikeTrain<T>, Evaluation<T>)>,
}

impl<T: Real> StepState<T> {
    pub fn new(policy: &StepPolicy<T>, train: &SpikeTrain<T>, freqs: &FrequencySet<T>) -> Self {
        let m = T::from_count(freqs.len());
        let k = T::from_count(train.len().max(1));
        let tau = policy.tau_a.unwrap_or_else(|| T::one() / (T::lit(2.0) * m * k));
        let c = freqs.scale().max(T::epsilon());
        let location_ratio = policy.tau_t.map_or_else(|| T::one() / (c * c), |t| t / tau);
        Self {
            tau,
            location_ratio,
            floor: tau * policy.min_step_ratio,
            cap: tau * policy.max_step_ratio,
            cache: None,
        }
    }

    pub fn tau_t(&self) -> T {
        self.tau * self.location_ratio
    }
}

/// What a single iteration did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics<T> {
    pub objective_before: T,
    pub objective_after: T,
    pub gradient_norm: T,
    pub tau_a: T,
    pub tau_t: T,
    pub backtracks: usize,
    /// Backtracking hit its floor; the step was rejected.
    pub floor_hit: bool,
    pub projected: bool,
    pub merges: usize,
}

/// Per-spike multipliers of the location step.
fn location_weights<T: Real>(train: &SpikeTrain<T>, policy: &StepPolicy<T>) -> Vec<T> {
    let Some(floor) = policy.amplitude_preconditioning else {
        return vec![T::one(); train.len()];
    };
    let a_max = train.amplitudes().iter().fold(T::zero(), |m, a| m.max(a.abs()));
    let lower = (floor * a_max).powi(2).max(T::min_positive_value());
    train
        .amplitudes()
        .iter()
        .map(|a| T::one() / (*a * *a).max(lower))
        .collect()
}

fn take_step<T: Real>(
    train: &SpikeTrain<T>,
    grad: &ParameterGradient<T>,
    weights: &[T],
    tau_a: T,
    tau_t: T,
) -> SpikeTrain<T> {
    let d = train.dim();
    let mut next = train.clone();
    for (a, da) in next.amplitudes_mut().iter_mut().zip(&grad.d_amplitudes) {
        *a -= tau_a * *da;
    }
    for (i, (t, dt)) in next
        .locations_mut()
        .chunks_exact_mut(d)
        .zip(grad.d_locations.chunks_exact(d))
        .enumerate()
    {
        let step = tau_t * weights[i];
        for (x, g) in t.iter_mut().zip(dt) {
            *x -= step * *g;
        }
    }
    next
}

fn descent_step<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
    policy: &StepPolicy<T>,
    state: &mut StepState<T>,
    iteration: usize,
) -> Result<(SpikeTrain<T>, StepDiagnostics<T>)> {
    let eval = match state.cache.take() {
        Some((point, eval)) if point == *train => eval,
        _ => Evaluation::new(train, freqs, y)?,
    };
    let (g0, grad) = (eval.value, eval.gradient(train, freqs));
    if !g0.is_finite() || !grad.is_finite() {
        return Err(Error::Divergence { iteration });
    }
    let grad_norm = grad.norm();
    let mut diag = StepDiagnostics {
        objective_before: g0,
        objective_after: g0,
        gradient_norm: grad_norm,
        tau_a: state.tau,
        tau_t: state.tau_t(),
        backtracks: 0,
        floor_hit: false,
        projected: false,
        merges: 0,
    };
    if grad_norm == T::zero() {
        return Ok((train.clone(), diag));
    }
    let d = train.dim();
    let weights = location_weights(train, policy);
    let amp_sq: T = grad.d_amplitudes.iter().map(|&x| x * x).sum();
    let loc_sq: T = grad
        .d_locations
        .chunks_exact(d)
        .zip(&weights)
        .map(|(g, &w)| w * g.iter().map(|&x| x * x).sum::<T>())
        .sum();
    // Squared gradient norm in the step metric.
    let scaled_sq = amp_sq + state.location_ratio * loc_sq;

    match policy.mode {
        StepMode::Fixed => {
            let next = take_step(train, &grad, &weights, state.tau, state.tau_t());
            let trial = Evaluation::new(&next, freqs, y)?;
            if !trial.value.is_finite() {
                return Err(Error::Divergence { iteration });
            }
            diag.objective_after = trial.value;
            state.cache = Some((next.clone(), trial));
            Ok((next, diag))
        }
        StepMode::Backtracking => loop {
            let (tau_a, tau_t) = (state.tau, state.tau_t());
            let next = take_step(train, &grad, &weights, tau_a, tau_t);
            let trial = Evaluation::new(&next, freqs, y)?;
            let g1 = trial.value;
            if g1.is_finite() && g1 <= g0 - policy.armijo * tau_a * scaled_sq {
                state.cache = Some((next.clone(), trial));
                diag.objective_after = g1;
                diag.tau_a = tau_a;
                diag.tau_t = tau_t;
                state.tau = (state.tau * policy.expand).min(state.cap);
                return Ok((next, diag));
            }
            diag.backtracks += 1;
            state.tau *= policy.shrink;
            if state.tau < state.floor {
                state.tau = state.floor;
                diag.floor_hit = true;
                return Ok((train.clone(), diag));
            }
        },
    }
}

/// One iteration: a gradient step, then the merge projection when
/// `(iteration + 1)` is a multiple of the projection period.
pub fn pgd_step<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
    cfg: &PgdConfig<T>,
    state: &mut StepState<T>,
    iteration: usize,
) -> Result<(SpikeTrain<T>, StepDiagnostics<T>)> {
    let (next, mut diag) = descent_step(train, freqs, y, &cfg.step, state, iteration)?;
    if !(iteration + 1).is_multiple_of(cfg.projection_period) {
        return Ok((next, diag));
    }
    let (projected, merges) = merge_project_counted(&next, &cfg.epsilon);
    diag.projected = true;
    diag.merges = merges;
    if merges > 0 {
        diag.objective_after = objective(&projected, freqs, y)?;
        if !diag.objective_after.is_finite() {
            return Err(Error::Divergence { iteration });
        }
    }
    Ok((projected, diag))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgdStop {
    Converged,
    GradientTolerance,
    StepFloor,
    MaxIterations,
}

impl std::fmt::Display for PgdStop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PgdStop::Converged => "converged",
            PgdStop::GradientTolerance => "gradient_tolerance",
            PgdStop::StepFloor => "step_floor",
            PgdStop::MaxIterations => "max_iterations",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdIteration {
    pub n: usize,
    pub objective: f64,
    pub residue_norm: f64,
    pub spikes: usize,
    pub projected: bool,
    pub merges: usize,
    pub wall_ms: f64,
}

/// Run between two merging projections: `iterations` steps, `spikes_after`
/// spikes once the closing projection is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdSegment {
    pub iterations: usize,
    pub spikes_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgdTrace {
    pub initial_spikes: usize,
    pub initial_residue_norm: f64,
    pub iterations: Vec<PgdIteration>,
    pub segments: Vec<PgdSegment>,
    pub stop: PgdStop,
    pub total_merges: usize,
}

impl PgdTrace {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    pub fn final_residue_norm(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.initial_residue_norm, |it| it.residue_norm)
    }

    /// CSV `n,g,residue_norm,k_n,projected,merges,wall_ms`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "g", "residue_norm", "k_n", "projected", "merges", "wall_ms"])?;
        for it in &self.iterations {
            w.write_record([
                it.n.to_string(),
                it.objective.to_string(),
                it.residue_norm.to_string(),
                it.spikes.to_string(),
                u8::from(it.projected).to_string(),
                it.merges.to_string(),
                format!("{:.3}", it.wall_ms),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Projected gradient descent from `init`.
///
/// The returned train is always separated at `cfg.epsilon`: a final
/// projection runs before returning.
pub fn pgd<T: Real>(
    init: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
    cfg: &PgdConfig<T>,
) -> Result<(SpikeTrain<T>, PgdTrace)> {
    cfg.validate()?;
    if init.is_empty() {
        return Err(Error::InvalidArgument(
            "PGD needs a nonempty initialization".into(),
        ));
    }
    freqs.check_dim(init.dim())?;
    y.check_len(freqs.len())?;
    let started = Instant::now();
    let y_norm = y.norm();
    let grad_floor = cfg.grad_tol * y_norm * freqs.scale().max(T::one());
    let mut state = StepState::new(&cfg.step, init, freqs);

    let mut train = init.clone();
    let g_init = objective(&train, freqs, y)?;
    let mut trace = PgdTrace {
        initial_spikes: init.len(),
        initial_residue_norm: g_init.sqrt().to_f64_lossy(),
        iterations: Vec::new(),
        segments: Vec::new(),
        stop: PgdStop::MaxIterations,
        total_merges: 0,
    };
    let mut residue = g_init.sqrt();
    let mut since_merge = 0usize;
    for n in 0..cfg.max_iter {
        if residue <= cfg.converge_rel_tol * y_norm {
            trace.stop = PgdStop::Converged;
            break;
        }
        let (next, diag) = pgd_step(&train, freqs, y, cfg, &mut state, n)?;
        train = next;
        residue = diag.objective_after.max(T::zero()).sqrt();
        since_merge += 1;
        trace.total_merges += diag.merges;
        trace.iterations.push(PgdIteration {
            n,
            objective: diag.objective_after.to_f64_lossy(),
            residue_norm: residue.to_f64_lossy(),
            spikes: train.len(),
            projected: diag.projected,
            merges: diag.merges,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if diag.merges > 0 {
            trace.segments.push(PgdSegment {
                iterations: since_merge,
                spikes_after: train.len(),
            });
            since_merge = 0;
        }
        if diag.floor_hit {
            trace.stop = PgdStop::StepFloor;
            break;
        }
        if diag.gradient_norm <= grad_floor {
            trace.stop = PgdStop::GradientTolerance;
            break;
        }
    }

    if !is_separated(&train, &cfg.epsilon) {
        let (projected, merges) = merge_project_counted(&train, &cfg.epsilon);
        train = projected;
        trace.total_merges += merges;
        let g = objective(&train, freqs, y)?;
        trace.iterations.push(PgdIteration {
            n: trace.iterations.len(),
            objective: g.to_f64_lossy(),
            residue_norm: g.sqrt().to_f64_lossy(),
            spikes: train.len(),
            projected: true,
            merges,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        since_merge += 1;
        trace.segments.push(PgdSegment {
            iterations: since_merge,
            spikes_after: train.len(),
        });
        since_merge = 0;
    }
    if since_merge > 0 {
        trace.segments.push(PgdSegment {
            iterations: since_merge,
            spikes_after: train.len(),
        });
    }
    Ok((train, trace))
}

/// Unprojected descent used as the sliding step of continuous OMP.
/// Returns the final train and the number of iterations taken.
pub(crate) fn slide<T: Real>(
    init: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
    policy: &StepPolicy<T>,
    max_iter: usize,
    grad_tol: T,
) -> Result<(SpikeTrain<T>, usize)> {
    let mut state = StepState::new(policy, init, freqs);
    let grad_floor = grad_tol * y.norm() * freqs.scale().max(T::one());
    let mut train = init.clone();
    for n in 0..max_iter {
        let (next, diag) = descent_step(&train, freqs, y, policy, &mut state, n)?;
        train = next;
        if diag.floor_hit || diag.gradient_norm <= grad_floor {
            return Ok((train, n + 1));
        }
    }
    Ok((train, max_iter))
}
