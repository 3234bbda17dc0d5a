use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::comp::{CompConfig, SearchConfig, SlidingConfig};
use crate::error::{Error, Result};
use crate::measure::SeparationConstraint;
use crate::pgd::{PgdConfig, StepPolicy};
use crate::scalar::Real;

/// Recovery pipelines compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Sliding continuous OMP.
    #[serde(rename = "scomp")]
    SlidingComp,
    /// Over-parametrized continuous OMP (no sliding) followed by PGD.
    #[serde(rename = "opcomp-pgd")]
    OverParametrizedPgd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::SlidingComp => "scomp",
            Method::OverParametrizedPgd => "opcomp-pgd",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scomp" => Ok(Method::SlidingComp),
            "opcomp-pgd" => Ok(Method::OverParametrizedPgd),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodSelection {
    #[serde(rename = "scomp")]
    SlidingComp,
    #[serde(rename = "opcomp-pgd")]
    OverParametrizedPgd,
    #[serde(rename = "both")]
    Both,
}

impl MethodSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::SlidingComp => vec![Method::SlidingComp],
            MethodSelection::OverParametrizedPgd => vec![Method::OverParametrizedPgd],
            MethodSelection::Both => vec![Method::SlidingComp, Method::OverParametrizedPgd],
        }
    }
}

impl std::str::FromStr for MethodSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scomp" => Ok(MethodSelection::SlidingComp),
            "opcomp-pgd" => Ok(MethodSelection::OverParametrizedPgd),
            "both" => Ok(MethodSelection::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown method `{other}` (expected scomp, opcomp-pgd or both)"
            ))),
        }
    }
}

/// Partial overrides of a [`CompConfig`]; unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct CompOverrides<T> {
    pub max_spikes: Option<usize>,
    pub residue_rel_tol: Option<T>,
    pub stagnation_window: Option<usize>,
    pub stagnation_rel_decrease: Option<T>,
    pub search: Option<SearchConfig<T>>,
    pub sliding_descent: Option<SlidingConfig<T>>,
}

impl<T: Real> CompOverrides<T> {
    fn apply(&self, mut cfg: CompConfig<T>) -> CompConfig<T> {
        if let Some(v) = self.max_spikes {
            cfg.max_spikes = v;
        }
        if let Some(v) = self.residue_rel_tol {
            cfg.residue_rel_tol = v;
        }
        if let Some(v) = self.stagnation_window {
            cfg.stagnation_window = v;
        }
        if let Some(v) = self.stagnation_rel_decrease {
            cfg.stagnation_rel_decrease = v;
        }
        if let Some(v) = &self.search {
            cfg.search = v.clone();
        }
        if let Some(v) = &self.sliding_descent {
            cfg.sliding_descent = v.clone();
        }
        cfg
    }
}

/// Partial overrides of a [`PgdConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct PgdOverrides<T> {
    pub max_iter: Option<usize>,
    pub step: Option<StepPolicy<T>>,
    pub projection_period: Option<usize>,
    /// Merge radius; defaults to `epsilon_dist`.
    pub merge_epsilon: Option<T>,
    pub converge_rel_tol: Option<T>,
    pub grad_tol: Option<T>,
}

/// Declarative description of one synthetic recovery experiment.
///
/// Every field may be omitted from the JSON file; the defaults reproduce the
/// 2D study (`k = 100` spikes, separation `0.015`, amplitudes `U([1, 5])`,
/// `m = 40 k` frequencies of scale `c = 1 / epsilon_dist`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "T: Real")]
pub struct ExperimentConfig<T> {
    pub d: usize,
    pub k_true: usize,
    pub epsilon_dist: T,
    pub amp_low: T,
    pub amp_high: T,
    /// Measurement count; `40 * k_true` when unset.
    pub m: Option<usize>,
    /// Frequency scale; `1 / epsilon_dist` when unset.
    pub c: Option<T>,
    pub seed: u64,
    pub method: MethodSelection,
    pub scomp: CompOverrides<T>,
    pub opcomp: CompOverrides<T>,
    pub pgd: PgdOverrides<T>,
    /// Matching radius; `epsilon_dist / 2` when unset.
    pub match_radius: Option<T>,
    /// Lattice points per axis for back-projection heatmaps (`d <= 2`).
    pub grid_resolution: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl<T: Real> Default for ExperimentConfig<T> {
    fn default() -> Self {
        Self {
            d: 2,
            k_true: 100,
            epsilon_dist: T::lit(0.015),
            amp_low: T::one(),
            amp_high: T::lit(5.0),
            m: None,
            c: None,
            seed: 0,
            method: MethodSelection::Both,
            scomp: CompOverrides::default(),
            opcomp: CompOverrides::default(),
            pgd: PgdOverrides::default(),
            match_radius: None,
            grid_resolution: Some(64),
            out_dir: None,
        }
    }
}

impl<T: Real> ExperimentConfig<T> {
    /// 2D study: `k = 100`, `epsilon = 0.015`, `m = 4000`, `c = 1 / 0.02`.
    pub fn full_scale_2d() -> Self {
        Self {
            c: Some(T::lit(50.0)),
            ..Self::default()
        }
    }

    /// 3D study: `k = 100`, `epsilon = 0.05`, `m = 4000`, `c = 1 / 0.05`.
    pub fn full_scale_3d() -> Self {
        Self {
            d: 3,
            epsilon_dist: T::lit(0.05),
            grid_resolution: None,
            ..Self::default()
        }
    }

    /// Desk-scale 2D configuration used by the acceptance suite.
    pub fn desk_2d(k_true: usize, seed: u64) -> Self {
        Self {
            k_true,
            epsilon_dist: T::lit(0.05),
            c: Some(T::lit(20.0)),
            seed,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn measurements(&self) -> usize {
        self.m.unwrap_or(40 * self.k_true)
    }

    pub fn frequency_scale(&self) -> T {
        self.c.unwrap_or_else(|| T::one() / self.epsilon_dist)
    }

    pub fn radius(&self) -> T {
        self.match_radius
            .unwrap_or_else(|| self.epsilon_dist * T::lit(0.5))
    }

    pub fn separation(&self) -> Result<SeparationConstraint<T>> {
        SeparationConstraint::new(self.epsilon_dist)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.d == 0 || self.k_true == 0 {
            return bad("d and k_true must be at least 1".into());
        }
        if self.measurements() == 0 {
            return bad("m must be at least 1".into());
        }
        if !(self.epsilon_dist > T::zero()) || !(self.frequency_scale() > T::zero()) {
            return bad("epsilon_dist and c must be positive".into());
        }
        if !(self.amp_low <= self.amp_high) {
            return bad("amp_low must not exceed amp_high".into());
        }
        if !(self.radius() > T::zero()) {
            return bad("match_radius must be positive".into());
        }
        if self.grid_resolution == Some(0) {
            return bad("grid_resolution must be at least 1".into());
        }
        self.sliding_comp().validate()?;
        self.over_parametrized_comp().validate()?;
        self.pgd_config()?.validate()
    }

    pub fn sliding_comp(&self) -> CompConfig<T> {
        self.scomp.apply(CompConfig::sliding(self.k_true))
    }

    pub fn over_parametrized_comp(&self) -> CompConfig<T> {
        self.opcomp.apply(CompConfig::over_parametrized(self.k_true))
    }

    pub fn pgd_config(&self) -> Result<PgdConfig<T>> {
        let o = &self.pgd;
        let eps = SeparationConstraint::new(o.merge_epsilon.unwrap_or(self.epsilon_dist))?;
        let mut cfg = PgdConfig::new(eps);
        if let Some(v) = o.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = &o.step {
            cfg.step = v.clone();
        }
        if let Some(v) = o.projection_period {
            cfg.projection_period = v;
        }
        if let Some(v) = o.converge_rel_tol {
            cfg.converge_rel_tol = v;
        }
        if let Some(v) = o.grad_tol {
            cfg.grad_tol = v;
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_2d_defaults() {
        let cfg = ExperimentConfig::<f64>::from_json("{}").unwrap();
        assert_eq!((cfg.d, cfg.k_true, cfg.measurements()), (2, 100, 4000));
        assert_eq!(cfg.epsilon_dist, 0.015);
        assert!((cfg.frequency_scale() - 1.0 / 0.015).abs() < 1e-12);
        assert_eq!(cfg.radius(), 0.0075);
        assert_eq!(cfg.method, MethodSelection::Both);
        assert_eq!(cfg.over_parametrized_comp().max_spikes, 600);
        assert_eq!(cfg.sliding_comp().max_spikes, 100);
        assert_eq!(cfg.pgd_config().unwrap().epsilon.epsilon(), 0.015);
    }

    #[test]
    fn full_scale_presets() {
        let c2 = ExperimentConfig::<f64>::full_scale_2d();
        assert_eq!((c2.measurements(), c2.frequency_scale()), (4000, 50.0));
        let c3 = ExperimentConfig::<f64>::full_scale_3d();
        assert_eq!((c3.d, c3.epsilon_dist, c3.frequency_scale()), (3, 0.05, 20.0));
    }

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::<f64>::from_json(
            r#"{"d": 1, "k_true": 5, "m": 77, "method": "opcomp-pgd",
                "opcomp": {"max_spikes": 12, "search": {"n_starts": 3}},
                "pgd": {"merge_epsilon": 0.01, "step": {"mode": "fixed", "tau_a": 0.001}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.measurements(), 77);
        assert_eq!(cfg.method.methods(), vec![Method::OverParametrizedPgd]);
        let op = cfg.over_parametrized_comp();
        assert_eq!(
            (op.max_spikes, op.search.n_starts, op.search.probes_per_dim),
            (12, 3, 128)
        );
        let pgd = cfg.pgd_config().unwrap();
        assert_eq!(pgd.epsilon.epsilon(), 0.01);
        assert_eq!(pgd.step.tau_a, Some(0.001));
    }

    #[test]
    fn rejects_invalid() {
        assert!(ExperimentConfig::<f64>::from_json(r#"{"k_true": 0}"#).is_err());
        assert!(ExperimentConfig::<f64>::from_json(r#"{"epsilon_dist": -1}"#).is_err());
        assert!(ExperimentConfig::<f64>::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::<f64>::from_json(r#"{"method": "lasso"}"#).is_err());
    }
}
