//! Seeded synthetic benchmark: draw a separated spike train and random
//! frequencies, observe, recover with each pipeline, and score the result.

mod config;
mod gradcheck;
mod matching;
mod report;

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{CompOverrides, ExperimentConfig, Method, MethodSelection, PgdOverrides};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use matching::{amplitude_rel_rmse, location_rmse, match_spikes, Matching};
pub use report::{MethodReport, RecoveryReport, Timings};

use crate::comp::{comp, CompTrace};
use crate::error::{Error, Result};
use crate::fourier::{
    back_project_grid, forward, sample_frequencies, FrequencySet, GridField, MeasurementVector,
};
use crate::lstsq::{build_design, condition_number};
use crate::measure::{generate_signal, SpikeTrain};
use crate::pgd::{pgd, PgdTrace};
use crate::scalar::Real;

const SIGNAL_STREAM: u64 = 0;
const FREQUENCY_STREAM: u64 = 1;
const SCOMP_STREAM: u64 = 2;
const OPCOMP_STREAM: u64 = 3;

/// Independent generator for one consumer of the experiment seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Everything produced by one pipeline.
#[derive(Debug, Clone)]
pub struct MethodOutcome<T> {
    pub method: Method,
    /// COMP output (the PGD initialization for the over-parametrized pipeline).
    pub comp_estimate: Option<SpikeTrain<T>>,
    pub estimate: Option<SpikeTrain<T>>,
    pub comp_trace: Option<CompTrace>,
    pub pgd_trace: Option<PgdTrace>,
    pub report: MethodReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome<T> {
    pub config: ExperimentConfig<T>,
    pub truth: SpikeTrain<T>,
    pub freqs: FrequencySet<T>,
    pub observation: MeasurementVector<T>,
    pub methods: Vec<MethodOutcome<T>>,
    pub report: RecoveryReport,
}

impl<T: Real> ExperimentOutcome<T> {
    pub fn method(&self, method: Method) -> Option<&MethodOutcome<T>> {
        self.methods.iter().find(|o| o.method == method)
    }
}

/// Draws the ground truth, frequencies and observation for `cfg`.
pub fn synthesize<T: Real>(
    cfg: &ExperimentConfig<T>,
) -> Result<(SpikeTrain<T>, FrequencySet<T>, MeasurementVector<T>)> {
    cfg.validate()?;
    let truth = generate_signal(
        cfg.k_true,
        cfg.d,
        &cfg.separation()?,
        cfg.amp_low,
        cfg.amp_high,
        &mut stream_rng(cfg.seed, SIGNAL_STREAM),
    )?;
    let freqs = sample_frequencies(
        cfg.measurements(),
        cfg.d,
        cfg.frequency_scale(),
        &mut stream_rng(cfg.seed, FREQUENCY_STREAM),
    )?;
    let y = forward(&truth, &freqs)?;
    Ok((truth, freqs, y))
}

/// Runs every selected pipeline on the synthesized problem.
///
/// Configuration errors are returned as `Err`; a pipeline that fails at run
/// time is recorded in its [`MethodReport::error`] instead.
pub fn run_experiment<T: Real>(cfg: &ExperimentConfig<T>) -> Result<ExperimentOutcome<T>> {
    let (truth, freqs, y) = synthesize(cfg)?;
    let pgd_cfg = cfg.pgd_config()?;
    let mut methods = Vec::new();
    for method in cfg.method.methods() {
        let outcome = match method {
            Method::SlidingComp => run_sliding(cfg, &truth, &freqs, &y),
            Method::OverParametrizedPgd => run_over_parametrized(cfg, &pgd_cfg, &truth, &freqs, &y),
        };
        methods.push(outcome);
    }
    let report = RecoveryReport {
        seed: cfg.seed,
        d: cfg.d,
        k_true: cfg.k_true,
        m: cfg.measurements(),
        c: cfg.frequency_scale().to_f64_lossy(),
        epsilon_dist: cfg.epsilon_dist.to_f64_lossy(),
        match_radius: cfg.radius().to_f64_lossy(),
        observation_norm: y.norm().to_f64_lossy(),
        methods: methods.iter().map(|o| o.report.clone()).collect(),
    };
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        truth,
        freqs,
        observation: y,
        methods,
        report,
    })
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn run_sliding<T: Real>(
    cfg: &ExperimentConfig<T>,
    truth: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
) -> MethodOutcome<T> {
    let method = Method::SlidingComp;
    let started = Instant::now();
    let result = comp(
        y,
        freqs,
        &cfg.sliding_comp(),
        &mut stream_rng(cfg.seed, SCOMP_STREAM),
    );
    let total = elapsed_ms(started);
    let timings = Timings {
        total_ms: total,
        init_ms: total,
        descent_ms: 0.0,
    };
    match result {
        Ok((estimate, trace)) => {
            let report = score(
                cfg, method, truth, freqs, y, &estimate, &estimate, &trace, None, timings,
            );
            MethodOutcome {
                method,
                comp_estimate: Some(estimate.clone()),
                estimate: Some(estimate),
                comp_trace: Some(trace),
                pgd_trace: None,
                report,
            }
        }
        Err(e) => failed(method, e, timings),
    }
}

fn run_over_parametrized<T: Real>(
    cfg: &ExperimentConfig<T>,
    pgd_cfg: &crate::pgd::PgdConfig<T>,
    truth: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
) -> MethodOutcome<T> {
    let method = Method::OverParametrizedPgd;
    let started = Instant::now();
    let init = comp(
        y,
        freqs,
        &cfg.over_parametrized_comp(),
        &mut stream_rng(cfg.seed, OPCOMP_STREAM),
    );
    let init_ms = elapsed_ms(started);
    let (init, comp_trace) = match init {
        Ok(v) => v,
        Err(e) => {
            let t = Timings {
                total_ms: init_ms,
                init_ms,
                descent_ms: 0.0,
            };
            return failed(method, e, t);
        }
    };
    let descent_started = Instant::now();
    let result = pgd(&init, freqs, y, pgd_cfg);
    let descent_ms = elapsed_ms(descent_started);
    let timings = Timings {
        total_ms: init_ms + descent_ms,
        init_ms,
        descent_ms,
    };
    match result {
        Ok((estimate, trace)) => {
            let report = score(
                cfg,
                method,
                truth,
                freqs,
                y,
                &init,
                &estimate,
                &comp_trace,
                Some(&trace),
                timings,
            );
            MethodOutcome {
                method,
                comp_estimate: Some(init),
                estimate: Some(estimate),
                comp_trace: Some(comp_trace),
                pgd_trace: Some(trace),
                report,
            }
        }
        Err(e) => {
            let mut out = failed(method, e, timings);
            out.comp_estimate = Some(init);
            out.comp_trace = Some(comp_trace);
            out
        }
    }
}

fn failed<T>(method: Method, e: Error, timings: Timings) -> MethodOutcome<T> {
    MethodOutcome {
        method,
        comp_estimate: None,
        estimate: None,
        comp_trace: None,
        pgd_trace: None,
        report: MethodReport::failed(method, e.to_string(), timings),
    }
}

#[allow(clippy::too_many_arguments)]
fn score<T: Real>(
    cfg: &ExperimentConfig<T>,
    method: Method,
    truth: &SpikeTrain<T>,
    freqs: &FrequencySet<T>,
    y: &MeasurementVector<T>,
    comp_estimate: &SpikeTrain<T>,
    estimate: &SpikeTrain<T>,
    comp_trace: &CompTrace,
    pgd_trace: Option<&PgdTrace>,
    timings: Timings,
) -> MethodReport {
    let m = match_spikes(truth, estimate, cfg.radius());
    let relative_residue = forward(estimate, freqs)
        .ok()
        .map(|f| ((&f - y).norm() / y.norm()).to_f64_lossy());
    let comp_condition = build_design(comp_estimate.locations(), freqs)
        .ok()
        .map(|design| condition_number(&design).to_f64_lossy())
        .filter(|c| c.is_finite());
    MethodReport {
        method,
        error: None,
        estimated_spikes: estimate.len(),
        matched: m.matched(),
        unmatched_truth: m.unmatched_truth.len(),
        unmatched_estimate: m.unmatched_estimate.len(),
        location_rmse: location_rmse(truth, estimate, &m),
        amplitude_rel_rmse: amplitude_rel_rmse(truth, estimate, &m),
        relative_residue,
        comp_spikes: comp_estimate.len(),
        comp_stop: Some(comp_trace.stop),
        comp_ill_conditioned_steps: comp_trace.ill_conditioned_steps(),
        comp_condition,
        pgd_iterations: pgd_trace.map(|t| t.iteration_count()),
        pgd_stop: pgd_trace.map(|t| t.stop),
        pgd_segments: pgd_trace.map(|t| t.segments.clone()),
        pgd_merges: pgd_trace.map(|t| t.total_merges),
        timings,
    }
}

/// Back-projections of the observation and of each method's residue, on
/// the configured lattice. Empty when `d > 2` or no resolution is set.
pub fn back_projections<T: Real>(outcome: &ExperimentOutcome<T>) -> Result<Vec<(String, GridField<T>)>> {
    let d = outcome.config.d;
    let n = match outcome.config.grid_resolution {
        Some(n) if d <= 2 => n,
        _ => return Ok(Vec::new()),
    };
    let resolution = vec![n; d];
    let mut maps = vec![(
        "bp_observation".to_string(),
        back_project_grid(&outcome.observation, &outcome.freqs, &resolution)?,
    )];
    for o in &outcome.methods {
        if let Some(est) = &o.estimate {
            let residue = &outcome.observation - &forward(est, &outcome.freqs)?;
            maps.push((
                format!("bp_residue_{}", o.method),
                back_project_grid(&residue, &outcome.freqs, &resolution)?,
            ));
        }
    }
    Ok(maps)
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

/// Writes the heatmaps of [`back_projections`] as `<name>.csv` and
/// `<name>.bin` under `dir`.
pub fn write_heatmaps<T: Real>(outcome: &ExperimentOutcome<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, grid) in back_projections(outcome)? {
        grid.write_files(&dir.join(format!("{name}.csv")), &dir.join(format!("{name}.bin")))?;
    }
    Ok(())
}

/// Writes the report, traces, spike trains and heatmaps under `dir`.
///
/// `comp_trace.csv` holds the COMP trace of the over-parametrized pipeline
/// when it ran, else that of sliding COMP; per-method copies are written as
/// `comp_trace_<method>.csv`.
pub fn write_outputs<T: Real>(outcome: &ExperimentOutcome<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, outcome.report.to_json()?).map_err(|e| Error::io(&report_path, e))?;
    let truth_path = dir.join("truth.json");
    std::fs::write(&truth_path, outcome.truth.to_json()?).map_err(|e| Error::io(&truth_path, e))?;

    let main_comp = outcome
        .method(Method::OverParametrizedPgd)
        .and_then(|o| o.comp_trace.as_ref())
        .or_else(|| {
            outcome
                .method(Method::SlidingComp)
                .and_then(|o| o.comp_trace.as_ref())
        });
    if let Some(trace) = main_comp {
        trace.write_csv(create_file(&dir.join("comp_trace.csv"))?)?;
    }
    for o in &outcome.methods {
        if let Some(trace) = &o.comp_trace {
            trace.write_csv(create_file(&dir.join(format!("comp_trace_{}.csv", o.method)))?)?;
        }
        if let Some(trace) = &o.pgd_trace {
            trace.write_csv(create_file(&dir.join("pgd_trace.csv"))?)?;
        }
        if let Some(est) = &o.estimate {
            let p = dir.join(format!("estimate_{}.json", o.method));
            std::fs::write(&p, est.to_json()?).map_err(|e| Error::io(&p, e))?;
        }
    }
    write_heatmaps(outcome, dir)
}
