use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{forward, sample_frequencies};
use crate::measure::SpikeTrain;
use crate::objective::{default_fd_steps, finite_diff_gradient_with_steps, gradient, max_relative_error};
use crate::scalar::Real;

use super::stream_rng;

const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub d: usize,
    /// Maximum relative error of each instance.
    pub errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |m, &e| m.max(e))
    }
}

fn random_train<T: Real, R: Rng + ?Sized>(k: usize, d: usize, rng: &mut R) -> Result<SpikeTrain<T>> {
    let amps = (0..k).map(|_| T::lit(rng.random_range(-5.0..5.0))).collect();
    let locs = (0..k * d).map(|_| T::lit(rng.random::<f64>())).collect();
    SpikeTrain::new(d, amps, locs)
}

/// Compares the analytic gradient with central differences on `instances`
/// random problems in dimension `d` with at most `max_k` spikes and `max_m`
/// frequencies. The observation comes from an unrelated spike train so the
/// gradient does not vanish.
pub fn gradient_check<T: Real>(
    d: usize,
    max_k: usize,
    max_m: usize,
    instances: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if d == 0 || max_k == 0 || max_m == 0 {
        return Err(Error::InvalidArgument("d, k and m must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, 16 + d as u64);
    let mut errors = Vec::with_capacity(instances);
    for _ in 0..instances {
        let k = rng.random_range(1..=max_k);
        let m = rng.random_range(max_m.div_ceil(2)..=max_m);
        let c = T::lit(rng.random_range(2.0..20.0));
        let freqs = sample_frequencies(m, d, c, &mut rng)?;
        let train = random_train::<T, _>(k, d, &mut rng)?;
        let other = random_train::<T, _>(rng.random_range(1..=max_k), d, &mut rng)?;
        let y = forward(&other, &freqs)?;
        let analytic = gradient(&train, &freqs, &y)?;
        let (amp_steps, loc_step) = default_fd_steps(&train, &freqs, T::lit(FD_STEP));
        let fd = finite_diff_gradient_with_steps(&train, &freqs, &y, &amp_steps, loc_step)?;
        errors.push(max_relative_error(&analytic, &fd).to_f64_lossy());
    }
    Ok(GradCheckReport { d, errors })
}
