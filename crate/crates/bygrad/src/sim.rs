//! The training loops: coded descent, its compressed variant, the uncoded
//! baselines, and the adversary-free oracle, all producing per-iteration
//! records.
//!
//! One run is driven entirely by its config: the dataset, the per-iteration
//! permutations, the Byzantine sets, compression draws, and attack draws
//! are all derived from the config seed by label, so two runs with equal
//! configs produce bit-identical records.
//!
//! The record CSV schema is `t,loss,grad_norm_sq,agg_deviation_sq,
//! uplink_scalars` with rows `t = 0..=T`. Loss and gradient norm are
//! evaluated at the iterate `x^t`; the deviation and uplink columns
//! describe the update taken from `x^t` (zero on the final row, which has
//! no update). `uplink_scalars` is the per-honest-device uplink cost of
//! one iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{mean_of, Aggregator, AggregatorKind};
use crate::attacks::{AttackContext, AttackPolicy, ByzantineSchedule};
use crate::coding::{encode_from_cache, Assignment, TaskMatrix};
use crate::compression::Compressor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamDomain};
use crate::vector::ModelVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Coded descent with a robust aggregator.
    Lad,
    /// Coded descent with compressed uplinks.
    ComLad,
    /// Uncoded averaging (vanilla).
    BaselineVa,
    /// Uncoded coordinate-wise trimmed mean.
    BaselineCwtm,
    /// Uncoded trimmed mean with nearest-neighbor mixing.
    BaselineCwtmNnm,
    /// Uncoded norm thresholding with compressed uplinks.
    BaselineComTgn,
    /// Adversary-free full-information descent (the decode-everything
    /// stand-in): every device holds the whole dataset, so the update is
    /// the average subset gradient regardless of attack configuration.
    Oracle,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "lad" => Ok(Method::Lad),
            "com_lad" => Ok(Method::ComLad),
            "baseline_va" => Ok(Method::BaselineVa),
            "baseline_cwtm" => Ok(Method::BaselineCwtm),
            "baseline_cwtm_nnm" => Ok(Method::BaselineCwtmNnm),
            "baseline_com_tgn" => Ok(Method::BaselineComTgn),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::invalid(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Lad => "lad",
            Method::ComLad => "com_lad",
            Method::BaselineVa => "baseline_va",
            Method::BaselineCwtm => "baseline_cwtm",
            Method::BaselineCwtmNnm => "baseline_cwtm_nnm",
            Method::BaselineComTgn => "baseline_com_tgn",
            Method::Oracle => "oracle",
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(
            self,
            Method::BaselineVa
                | Method::BaselineCwtm
                | Method::BaselineCwtmNnm
                | Method::BaselineComTgn
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Devices (= subsets).
    pub n: usize,
    /// Honest devices; the worst case of exactly `n - h` Byzantine devices
    /// is simulated.
    pub h: usize,
    /// Computational load per device. Baselines force 1, the oracle has
    /// full information; only the coded methods read this field.
    #[serde(default = "default_one")]
    pub d: usize,
    /// Model dimension.
    pub q: usize,
    /// Iteration count.
    pub iterations: usize,
    /// Constant learning rate (zero allowed, for the frozen-model identity).
    pub gamma: f64,
    /// Data heterogeneity level.
    pub sigma_h: f64,
    #[serde(default = "default_one")]
    pub samples_per_subset: usize,
    /// Aggregator spec string, e.g. `cwtm:0.1`.
    pub aggregator: String,
    /// Compressor spec string, e.g. `sparsify:30`.
    #[serde(default = "default_identity")]
    pub compressor: String,
    /// Attack spec string, e.g. `signflip:-2`.
    #[serde(default = "default_none")]
    pub attack: String,
    /// `fixed` or `resample`.
    #[serde(default = "default_fixed")]
    pub schedule: String,
    pub seed: u64,
    /// Initial model fill value.
    #[serde(default)]
    pub x0_fill: f64,
    /// Record every `log_stride`-th row (rows 0 and T always).
    #[serde(default = "default_one")]
    pub log_stride: usize,
    /// Divergence guard: the loop stops once the loss exceeds this.
    #[serde(default = "default_max_loss")]
    pub max_loss: f64,
}

fn default_one() -> usize {
    1
}
fn default_identity() -> String {
    "identity".into()
}
fn default_none() -> String {
    "none".into()
}
fn default_fixed() -> String {
    "fixed".into()
}
fn default_max_loss() -> f64 {
    1e30
}

/// Everything a run needs, resolved from the config strings with the
/// method's constraints applied.
struct ResolvedRun {
    load: usize,
    aggregator: Aggregator,
    compressor: Compressor,
    attack: AttackPolicy,
    schedule: ByzantineSchedule,
    oracle: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.q == 0 {
            return Err(Error::invalid("n and q must be positive"));
        }
        if self.h <= self.n / 2 || self.h > self.n {
            return Err(Error::invalid("honest majority required: n/2 < h <= n"));
        }
        if self.d < 1 || self.d > self.n {
            return Err(Error::invalid("load must satisfy 1 <= d <= n"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("need at least one iteration"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid("learning rate must be nonnegative"));
        }
        if !(self.sigma_h >= 0.0) {
            return Err(Error::invalid("sigma_h must be nonnegative"));
        }
        if self.log_stride == 0 {
            return Err(Error::invalid("log stride must be positive"));
        }
        Ok(())
    }

    /// Effective load after the method's constraints: baselines are the
    /// coded protocol at load 1.
    pub fn effective_load(&self) -> usize {
        if self.method.is_baseline() {
            1
        } else {
            self.d
        }
    }

    fn resolve(&self) -> Result<ResolvedRun> {
        self.validate()?;
        let aggregator = Aggregator::from_spec(&self.aggregator)?;
        let compressor = Compressor::from_spec(&self.compressor, self.q)?;
        let attack = AttackPolicy::from_spec(&self.attack)?;
        let schedule = ByzantineSchedule::from_spec(&self.schedule, self.n - self.h)?;
        schedule.validate(self.n, self.h)?;

        match self.method {
            Method::Lad => {
                if !compressor.is_identity() {
                    return Err(Error::invalid(
                        "lad does not compress uplinks; use method com_lad",
                    ));
                }
            }
            Method::ComLad => {}
            Method::BaselineVa => {
                if !matches!(aggregator.kind(), AggregatorKind::Mean) {
                    return Err(Error::invalid("baseline_va requires the mean aggregator"));
                }
            }
            Method::BaselineCwtm => {
                if !matches!(aggregator.kind(), AggregatorKind::Cwtm { .. }) {
                    return Err(Error::invalid("baseline_cwtm requires a cwtm aggregator"));
                }
            }
            Method::BaselineCwtmNnm => {
                let ok = matches!(
                    aggregator.kind(),
                    AggregatorKind::NnmThen { inner, .. }
                        if matches!(inner.kind(), AggregatorKind::Cwtm { .. })
                );
                if !ok {
                    return Err(Error::invalid(
                        "baseline_cwtm_nnm requires an nnm+cwtm aggregator",
                    ));
                }
            }
            Method::BaselineComTgn => {
                if !matches!(aggregator.kind(), AggregatorKind::Tgn { .. }) {
                    return Err(Error::invalid("baseline_com_tgn requires a tgn aggregator"));
                }
            }
            Method::Oracle => {}
        }

        Ok(ResolvedRun {
            load: self.effective_load(),
            aggregator,
            compressor,
            attack,
            schedule,
            oracle: self.method == Method::Oracle,
        })
    }

    /// Stable hex digest of the canonical config serialization; output
    /// files are named by it, so identical configs overwrite identically.
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short human-readable tag for summaries.
    pub fn label(&self) -> String {
        let mut label = self.method.name().to_string();
        if matches!(self.method, Method::Lad | Method::ComLad) {
            label.push_str(&format!("(d={},{})", self.d, self.aggregator));
        }
        label
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub t: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub agg_deviation_sq: f64,
    pub uplink_scalars: u64,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config_hash: String,
    pub rows: Vec<RunRow>,
    pub final_model: ModelVector<f64>,
    pub diverged: bool,
    pub clipped_payloads: u64,
}

impl RunRecord {
    pub fn final_loss(&self) -> f64 {
        self.rows.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    /// Bitwise equality of the logged trajectory and final model.
    pub fn same_trajectory(&self, other: &RunRecord) -> bool {
        self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| {
                    a.t == b.t
                        && a.loss.to_bits() == b.loss.to_bits()
                        && a.grad_norm_sq.to_bits() == b.grad_norm_sq.to_bits()
                        && a.agg_deviation_sq.to_bits() == b.agg_deviation_sq.to_bits()
                        && a.uplink_scalars == b.uplink_scalars
                })
            && self.final_model.dim() == other.final_model.dim()
            && self
                .final_model
                .values()
                .iter()
                .zip(other.final_model.values())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,loss,grad_norm_sq,agg_deviation_sq,uplink_scalars\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{}\n",
                r.t, r.loss, r.grad_norm_sq, r.agg_deviation_sq, r.uplink_scalars
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Run one experiment to completion.
pub fn run(config: &ExperimentConfig) -> Result<RunRecord> {
    let resolved = config.resolve()?;
    let dataset = Dataset::<f64>::generate_linear_regression(
        config.seed,
        config.n,
        config.q,
        config.sigma_h,
        config.samples_per_subset,
    )?;
    run_on(config, &resolved, &dataset)
}

/// Convenience wrappers that check the method family.
pub fn run_lad(config: &ExperimentConfig) -> Result<RunRecord> {
    if config.method != Method::Lad {
        return Err(Error::invalid("run_lad requires method = lad"));
    }
    run(config)
}

pub fn run_com_lad(config: &ExperimentConfig) -> Result<RunRecord> {
    if config.method != Method::ComLad {
        return Err(Error::invalid("run_com_lad requires method = com_lad"));
    }
    run(config)
}

pub fn run_baseline(config: &ExperimentConfig) -> Result<RunRecord> {
    if !config.method.is_baseline() && config.method != Method::Oracle {
        return Err(Error::invalid("run_baseline requires a baseline or oracle method"));
    }
    run(config)
}

fn run_on(
    config: &ExperimentConfig,
    resolved: &ResolvedRun,
    dataset: &Dataset<f64>,
) -> Result<RunRecord> {
    let n = config.n;
    let t_total = config.iterations;
    let matrix = TaskMatrix::cyclic(n, resolved.load)?;
    let mean_rule = Aggregator::mean();

    let mut x = ModelVector::filled(config.q, config.x0_fill);
    let mut rows: Vec<RunRow> = Vec::with_capacity(t_total + 1);
    let mut diverged = false;
    let mut clipped_payloads: u64 = 0;
    let mut gradients: Vec<ModelVector<f64>> = vec![ModelVector::zeros(config.q); n];

    for t in 0..=t_total {
        // one pass over the per-subset gradients serves the coded messages,
        // the logged full gradient, and the loss; the accumulation order
        // matches `Dataset::loss_and_gradient` bit for bit
        let mut loss = 0.0;
        let mut grad = ModelVector::zeros(config.q);
        for k in 0..n {
            loss += dataset.subset_loss(&x, k)?;
            dataset.local_gradient_into(&x, k, &mut gradients[k])?;
            grad.add_assign(&gradients[k])?;
        }
        let grad_norm_sq = grad.norm_sq();
        let log_this = t == 0 || t == t_total || t % config.log_stride == 0;

        if !loss.is_finite() || loss > config.max_loss {
            diverged = true;
            rows.push(RunRow { t, loss, grad_norm_sq, agg_deviation_sq: 0.0, uplink_scalars: 0 });
            break;
        }
        if t == t_total {
            rows.push(RunRow { t, loss, grad_norm_sq, agg_deviation_sq: 0.0, uplink_scalars: 0 });
            break;
        }

        let (update, deviation, uplink) = if resolved.oracle {
            // full information: every honest message equals the average
            // subset gradient, bit-identical to what load-n encoding sends
            let message = grad.divided(n as f64);
            let messages = vec![message; n];
            let update = mean_rule.aggregate(&messages)?;
            (update, 0.0, config.q as u64)
        } else {
            let mut trng = RngStream::derive(config.seed, StreamDomain::TaskPerm, 0, t as u64);
            let mut prng = RngStream::derive(config.seed, StreamDomain::DataPerm, 0, t as u64);
            let assignment = Assignment::sample(&mut trng, &mut prng, n)?;
            let byz = resolved.schedule.select(n, t as u64, config.seed)?;
            let mut is_byz = vec![false; n];
            for &b in &byz {
                is_byz[b] = true;
            }

            let mut messages: Vec<ModelVector<f64>> = Vec::with_capacity(n);
            let mut honest_sent: Vec<ModelVector<f64>> = Vec::with_capacity(n - byz.len());
            let mut coded_of_byz: Vec<(usize, ModelVector<f64>)> = Vec::with_capacity(byz.len());
            for device in 0..n {
                let coded = encode_from_cache(device, &assignment, &matrix, &gradients)?;
                if is_byz[device] {
                    // payload is formed below, after the honest mean exists
                    coded_of_byz.push((device, coded));
                    messages.push(ModelVector::zeros(config.q));
                } else {
                    let mut crng = RngStream::derive(
                        config.seed,
                        StreamDomain::Compress,
                        device as u64,
                        t as u64,
                    );
                    let sent = resolved.compressor.compress(&coded, &mut crng)?;
                    honest_sent.push(sent.clone());
                    messages.push(sent);
                }
            }
            if honest_sent.is_empty() {
                return Err(Error::invalid("no honest devices left"));
            }
            let honest_avg = mean_of(&honest_sent);

            for (device, coded) in coded_of_byz {
                let mut crng = RngStream::derive(
                    config.seed,
                    StreamDomain::Compress,
                    device as u64,
                    t as u64,
                );
                let mut arng = RngStream::derive(
                    config.seed,
                    StreamDomain::Attack,
                    device as u64,
                    t as u64,
                );
                let ctx = AttackContext { honest_mean: Some(&honest_avg) };
                let payload = if resolved.attack.applies_after_compression {
                    let compressed = resolved.compressor.compress(&coded, &mut crng)?;
                    resolved.attack.payload(&compressed, &ctx, &mut arng)?
                } else {
                    let raw = resolved.attack.payload(&coded, &ctx, &mut arng)?;
                    let compressed = resolved.compressor.compress(&raw.vector, &mut crng)?;
                    crate::attacks::Payload { vector: compressed, clipped: raw.clipped }
                };
                if payload.clipped {
                    clipped_payloads += 1;
                }
                messages[device] = payload.vector;
            }

            let update = resolved.aggregator.aggregate(&messages)?;
            let deviation = update.distance_sq(&honest_avg)?;
            (update, deviation, resolved.compressor.uplink_scalars())
        };

        if log_this {
            rows.push(RunRow {
                t,
                loss,
                grad_norm_sq,
                agg_deviation_sq: deviation,
                uplink_scalars: uplink,
            });
        }
        x.axpy_assign(-config.gamma, &update)?;
    }

    Ok(RunRecord {
        config_hash: config.config_hash(),
        rows,
        final_model: x,
        diverged,
        clipped_payloads,
    })
}

/// Run a batch of configs, optionally in parallel, preserving input order.
/// Individual failures are recorded and do not abort the sweep.
pub fn sweep(
    configs: &[ExperimentConfig],
    jobs: Option<usize>,
) -> Vec<(ExperimentConfig, Result<RunRecord>)> {
    let execute = || {
        configs
            .par_iter()
            .map(|cfg| (cfg.clone(), run(cfg)))
            .collect::<Vec<_>>()
    };
    match jobs {
        Some(threads) if threads > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(|pool| pool.install(execute))
            .unwrap_or_else(|_| execute()),
        _ => execute(),
    }
}
