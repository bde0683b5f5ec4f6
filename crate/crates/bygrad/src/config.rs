//! TOML experiment/theory configuration files.
//!
//! Unknown keys are rejected. A train file holds a `[base]` run template,
//! a `seeds` list, and `[[runs]]` overrides; the cross product of runs and
//! seeds is the sweep. A theory file holds a `[theory]` parameter bundle
//! and an optional `[curves]` section describing the grids to emit.

use serde::Deserialize;

use crate::analysis::TheoryParams;
use crate::error::{Error, Result};
use crate::sim::{ExperimentConfig, Method};
use crate::verify::VerifyOptions;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub base: BaseRun,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub runs: Vec<RunOverride>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseRun {
    pub n: usize,
    pub h: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    pub q: usize,
    pub iterations: usize,
    pub gamma: f64,
    #[serde(default)]
    pub sigma_h: f64,
    #[serde(default = "default_samples")]
    pub samples_per_subset: usize,
    pub aggregator: String,
    #[serde(default = "default_compressor")]
    pub compressor: String,
    #[serde(default = "default_attack")]
    pub attack: String,
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default)]
    pub x0_fill: f64,
    #[serde(default = "default_stride")]
    pub log_stride: usize,
    #[serde(default = "default_max_loss")]
    pub max_loss: f64,
}

fn default_d() -> usize {
    1
}
fn default_samples() -> usize {
    1
}
fn default_compressor() -> String {
    "identity".into()
}
fn default_attack() -> String {
    "none".into()
}
fn default_schedule() -> String {
    "fixed".into()
}
fn default_stride() -> usize {
    1
}
fn default_max_loss() -> f64 {
    1e30
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverride {
    pub method: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub h: Option<usize>,
    #[serde(default)]
    pub aggregator: Option<String>,
    #[serde(default)]
    pub compressor: Option<String>,
    #[serde(default)]
    pub attack: Option<String>,
    #[serde(default)]
    pub sigma_h: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

/// One expanded sweep entry.
#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub label: String,
    pub config: ExperimentConfig,
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.seeds.is_empty() {
            return Err(Error::Config("seeds list must be nonempty".into()));
        }
        Ok(cfg)
    }

    /// Expand into concrete configs: runs x seeds, in file order.
    pub fn expand(&self) -> Result<Vec<SweepEntry>> {
        let mut out = Vec::new();
        for run in &self.runs {
            let method = Method::parse(&run.method)?;
            for &seed in &self.seeds {
                let config = ExperimentConfig {
                    method,
                    n: self.base.n,
                    h: run.h.unwrap_or(self.base.h),
                    d: run.d.unwrap_or(self.base.d),
                    q: self.base.q,
                    iterations: self.base.iterations,
                    gamma: run.gamma.unwrap_or(self.base.gamma),
                    sigma_h: run.sigma_h.unwrap_or(self.base.sigma_h),
                    samples_per_subset: self.base.samples_per_subset,
                    aggregator: run.aggregator.clone().unwrap_or_else(|| self.base.aggregator.clone()),
                    compressor: run.compressor.clone().unwrap_or_else(|| self.base.compressor.clone()),
                    attack: run.attack.clone().unwrap_or_else(|| self.base.attack.clone()),
                    schedule: self.base.schedule.clone(),
                    seed,
                    x0_fill: self.base.x0_fill,
                    log_stride: self.base.log_stride,
                    max_loss: self.base.max_loss,
                };
                config.validate()?;
                let label = run.label.clone().unwrap_or_else(|| config.label());
                out.push(SweepEntry { label, config });
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub theory: TheorySection,
    #[serde(default)]
    pub curves: Option<CurvesSection>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    pub n: usize,
    pub h: usize,
    pub d: usize,
    pub kappa: f64,
    pub beta: f64,
    #[serde(default)]
    pub delta: f64,
    pub smoothness: f64,
    pub gamma0: f64,
    #[serde(default)]
    pub loss_gap: f64,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    #[serde(default)]
    pub delta_start: f64,
    #[serde(default)]
    pub delta_stop: f64,
    #[serde(default)]
    pub delta_step: f64,
    /// Emit the error-versus-load curve over `d = 1..=n`.
    #[serde(default)]
    pub d_grid: bool,
}

impl TheoryConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> TheoryParams<f64> {
        TheoryParams {
            n: self.theory.n,
            h: self.theory.h,
            d: self.theory.d,
            kappa: self.theory.kappa,
            beta: self.theory.beta,
            delta: self.theory.delta,
            smoothness: self.theory.smoothness,
            gamma0: self.theory.gamma0,
            loss_gap: self.theory.loss_gap,
        }
    }

    pub fn delta_grid(&self) -> Vec<f64> {
        let Some(c) = self.curves else { return Vec::new() };
        if c.delta_step <= 0.0 || c.delta_stop < c.delta_start {
            return Vec::new();
        }
        let mut out = Vec::new();
        let steps = ((c.delta_stop - c.delta_start) / c.delta_step).round() as usize;
        for i in 0..=steps {
            out.push(c.delta_start + i as f64 * c.delta_step);
        }
        out
    }

    pub fn wants_d_grid(&self) -> bool {
        self.curves.map(|c| c.d_grid).unwrap_or(false)
    }
}

#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub max_enum_n: Option<usize>,
    #[serde(default)]
    pub mc_samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mutate_weight_formula: Option<bool>,
}

impl VerifyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn options(&self) -> VerifyOptions {
        let mut opts = VerifyOptions::default();
        if let Some(n) = self.max_enum_n {
            opts.max_enum_n = n;
        }
        if let Some(m) = self.mc_samples {
            opts.mc_samples = m;
        }
        if let Some(s) = self.seed {
            opts.seed = s;
        }
        if let Some(m) = self.mutate_weight_formula {
            opts.mutate_weight_formula = m;
        }
        opts
    }
}
