use serde::{Deserialize, Serialize};

use crate::comp::StopReason;
use crate::pgd::{PgdSegment, PgdStop};

use super::config::Method;

/// Wall-clock split of one pipeline, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: f64,
    /// COMP stage (the whole run for sliding COMP).
    pub init_ms: f64,
    /// PGD stage.
    pub descent_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    /// Set when the pipeline aborted; metrics then describe nothing.
    pub error: Option<String>,
    pub estimated_spikes: usize,
    pub matched: usize,
    pub unmatched_truth: usize,
    pub unmatched_estimate: usize,
    pub location_rmse: Option<f64>,
    pub amplitude_rel_rmse: Option<f64>,
    /// `||A x_hat - y|| / ||y||`.
    pub relative_residue: Option<f64>,
    pub comp_spikes: usize,
    pub comp_stop: Option<StopReason>,
    pub comp_ill_conditioned_steps: usize,
    /// Condition number of the design matrix at the end of COMP; `None`
    /// when it is numerically infinite.
    pub comp_condition: Option<f64>,
    pub pgd_iterations: Option<usize>,
    pub pgd_stop: Option<PgdStop>,
    pub pgd_segments: Option<Vec<PgdSegment>>,
    pub pgd_merges: Option<usize>,
    pub timings: Timings,
}

impl MethodReport {
    pub(crate) fn failed(method: Method, error: String, timings: Timings) -> Self {
        Self {
            method,
            error: Some(error),
            estimated_spikes: 0,
            matched: 0,
            unmatched_truth: 0,
            unmatched_estimate: 0,
            location_rmse: None,
            amplitude_rel_rmse: None,
            relative_residue: None,
            comp_spikes: 0,
            comp_stop: None,
            comp_ill_conditioned_steps: 0,
            comp_condition: None,
            pgd_iterations: None,
            pgd_stop: None,
            pgd_segments: None,
            pgd_merges: None,
            timings,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    /// Every spike recovered and nothing spurious.
    pub fn exact_support(&self, k_true: usize) -> bool {
        self.succeeded() && self.matched == k_true && self.unmatched_estimate == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub seed: u64,
    pub d: usize,
    pub k_true: usize,
    pub m: usize,
    pub c: f64,
    pub epsilon_dist: f64,
    pub match_radius: f64,
    pub observation_norm: f64,
    pub methods: Vec<MethodReport>,
}

impl RecoveryReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == method)
    }

    pub fn any_failed(&self) -> bool {
        self.methods.iter().any(|r| !r.succeeded())
    }

    /// Copy with every wall-clock figure zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.methods {
            r.timings = Timings::default();
        }
        out
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
