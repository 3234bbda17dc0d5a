//! Parametric least-squares objective `g(theta) = ||A phi(theta) - y||^2`
//! and its exact gradient.
//!
//! With `rho = A phi(theta) - y`:
//!
//! * `dg/da_i = 2 Re sum_l exp(+i <w_l, t_i>) rho_l`
//! * `dg/dt_i = -2 a_i sum_l w_l (sin <w_l,t_i> Re rho_l + cos <w_l,t_i> Im rho_l)`

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fourier::{forward, FrequencySet, MeasurementVector};
use crate::measure::SpikeTrain;
use crate::scalar::Real;

/// Gradient of `g` with the same shape as the spike train it differentiates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGradient<T> {
    pub d_amplitudes: Vec<T>,
    /// Flat row-major, `k * d` values.
    pub d_locations: Vec<T>,
}

impl<T: Real> ParameterGradient<T> {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            d_amplitudes: vec![T::zero(); k],
            d_locations: vec![T::zero(); k * d],
        }
    }

    pub fn len(&self) -> usize {
        self.d_amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_amplitudes.is_empty()
    }

    /// Euclidean norm over all components.
    pub fn norm(&self) -> T {
        self.d_amplitudes
            .iter()
            .chain(&self.d_locations)
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.d_amplitudes
            .iter()
            .chain(&self.d_locations)
            .all(|v| v.is_finite())
    }
}

fn check<T: Real>(train: &SpikeTrain<T>, freqs: &FrequencySet<T>, y: &MeasurementVector<T>) -> Result<()> {
    freqs.check_dim(train.dim())?;
    y.check_len(freqs.len())
}

/// `A phi(theta) - y`.
pub fn residual<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
) -> Result<MeasurementVector<T>> {
    check(train, freqs, y)?;
    Ok(&forward(train, freqs)? - y)
}

/// `g(theta) = ||A phi(theta) - y||_2^2`.
pub fn objective<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
) -> Result<T> {
    Ok(residual(train, freqs, y)?.norm_sqr())
}

/// Exact gradient of [`objective`].
pub fn gradient<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
) -> Result<ParameterGradient<T>> {
    Ok(objective_and_gradient(train, freqs, y)?.1)
}

/// Objective and gradient sharing one evaluation of the atom exponentials.
pub fn objective_and_gradient<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
) -> Result<(T, ParameterGradient<T>)> {
    let eval = Evaluation::new(train, freqs, y)?;
    Ok((eval.value, eval.gradient(train, freqs)))
}

/// Objective at one parameter point, keeping the atom exponentials and the
/// residual so the gradient can follow without recomputing them.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Evaluation<T> {
    /// `phases[i * m + l]` = (cos, sin) of `<w_l, t_i>`.
    phases: Vec<(T, T)>,
    rho: Vec<Complex<T>>,
    pub value: T,
}

impl<T: Real> Evaluation<T> {
    pub fn new(train: &SpikeTrain<T>, freqs: &FrequencySet<T>, y: &MeasurementVector<T>) -> Result<Self> {
        check(train, freqs, y)?;
        let m = freqs.len();
        let mut phases: Vec<(T, T)> = Vec::with_capacity(train.len() * m);
        for (_, t) in train.iter() {
            phases.extend((0..m).map(|l| {
                let (s, c) = freqs.phase(l, t).sin_cos();
                (c, s)
            }));
        }
        let mut rho: Vec<Complex<T>> = y.values().iter().map(|z| -z).collect();
        for (i, &a) in train.amplitudes().iter().enumerate() {
            for (r, &(c, s)) in rho.iter_mut().zip(&phases[i * m..(i + 1) * m]) {
                r.re += a * c;
                r.im -= a * s;
            }
        }
        let value = rho.iter().map(|z| z.norm_sqr()).sum();
        Ok(Self { phases, rho, value })
    }

    /// Gradient at the point this evaluation was built from.
    pub fn gradient(&self, train: &SpikeTrain<T>, freqs: &FrequencySet<T>) -> ParameterGradient<T> {
        let (k, d, m) = (train.len(), train.dim(), freqs.len());
        let two = T::lit(2.0);
        let mut grad = ParameterGradient::zeros(k, d);
        for (i, &a) in train.amplitudes().iter().enumerate() {
            let mut corr = T::zero();
            let dt = &mut grad.d_locations[i * d..(i + 1) * d];
            for (l, (r, &(c, s))) in self.rho.iter().zip(&self.phases[i * m..(i + 1) * m]).enumerate() {
                corr += c * r.re - s * r.im;
                let w = s * r.re + c * r.im;
                for (g, &om) in dt.iter_mut().zip(freqs.frequency(l)) {
                    *g -= om * w;
                }
            }
            grad.d_amplitudes[i] = two * corr;
            dt.iter_mut().for_each(|g| *g *= two * a);
        }
        grad
    }
}

/// Central finite-difference steps: `h_scale * max(1, |a_i|)` for
/// amplitudes and `h_scale / c` for locations, with `c` the frequency scale.
pub fn default_fd_steps<T: Real>(train: &SpikeTrain<T>, freqs: &FrequencySet<T>, h_scale: T) -> (Vec<T>, T) {
    let amp = train
        .amplitudes()
        .iter()
        .map(|a| h_scale * a.abs().max(T::one()))
        .collect();
    let c = freqs.scale().max(T::epsilon());
    (amp, h_scale / c)
}

/// Central differences `(g(theta + h e_j) - g(theta - h e_j)) / 2h` with one
/// uniform step `h` for every coordinate.
pub fn finite_diff_gradient<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
    h: T,
) -> Result<ParameterGradient<T>> {
    let steps = vec![h; train.len()];
    finite_diff_gradient_with_steps(train, freqs, y, &steps, h)
}

/// Central differences with per-amplitude steps and a shared location step.
pub fn finite_diff_gradient_with_steps<T: Real>(
    train: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
    amplitude_steps: &[T],
    location_step: T,
) -> Result<ParameterGradient<T>> {
    check(train, freqs, y)?;
    if amplitude_steps.len() != train.len() {
        return Err(Error::LengthMismatch {
            expected: train.len(),
            got: amplitude_steps.len(),
        });
    }
    if amplitude_steps
        .iter()
        .chain([&location_step])
        .any(|h| !(*h > T::zero()))
    {
        return Err(Error::InvalidArgument(
            "finite-difference steps must be positive".into(),
        ));
    }
    let two = T::lit(2.0);
    let mut grad = ParameterGradient::zeros(train.len(), train.dim());
    let mut probe = train.clone();
    for (i, &h) in amplitude_steps.iter().enumerate() {
        let orig = probe.amplitudes()[i];
        probe.amplitudes_mut()[i] = orig + h;
        let plus = objective(&probe, freqs, y)?;
        probe.amplitudes_mut()[i] = orig - h;
        let minus = objective(&probe, freqs, y)?;
        probe.amplitudes_mut()[i] = orig;
        grad.d_amplitudes[i] = (plus - minus) / (two * h);
    }
    for j in 0..train.locations().len() {
        let orig = probe.locations()[j];
        probe.locations_mut()[j] = orig + location_step;
        let plus = objective(&probe, freqs, y)?;
        probe.locations_mut()[j] = orig - location_step;
        let minus = objective(&probe, freqs, y)?;
        probe.locations_mut()[j] = orig;
        grad.d_locations[j] = (plus - minus) / (two * location_step);
    }
    Ok(grad)
}

/// Largest block-normwise relative deviation between two gradients:
/// `max_j |g_j - f_j| / ||f_block||_inf` over the amplitude and location
/// blocks, where `f` is the reference.
pub fn max_relative_error<T: Real>(analytic: &ParameterGradient<T>, reference: &ParameterGradient<T>) -> T {
    fn block<T: Real>(g: &[T], f: &[T]) -> T {
        let scale = f.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let dev = g
            .iter()
            .zip(f)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        if scale == T::zero() {
            dev
        } else {
            dev / scale
        }
    }
    block(&analytic.d_amplitudes, &reference.d_amplitudes)
        .max(block(&analytic.d_locations, &reference.d_locations))
}
