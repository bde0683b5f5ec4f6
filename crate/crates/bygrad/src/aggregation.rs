//! Robust aggregation rules and an empirical robustness-coefficient
//! estimator.
//!
//! A rule is kappa-robust when its output deviates from the honest mean by
//! at most `kappa` times the honest empirical variance, for every honest
//! set and every adversarial placement. The estimator below probes that
//! ratio and reports the worst case it finds, a lower bound on the true
//! coefficient.
//!
//! Config strings: `mean`, `cwtm:<alpha>`, `tgn:<tau>`,
//! `nnm+<inner>[:<param>]:f=<budget>` (e.g. `nnm+cwtm:0.1:f=20`).

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamDomain};
use crate::scalar::{real_of, Real};
use crate::vector::ModelVector;

#[derive(Clone, Debug, PartialEq)]
pub enum AggregatorKind {
    /// Coordinate-wise average of all messages.
    Mean,
    /// Coordinate-wise trimmed mean: drop the `ceil(alpha * N)` largest and
    /// smallest values of each coordinate, average the rest.
    Cwtm { trim_fraction: f64 },
    /// Nearest-neighbor mixing: replace each message by the mean of its
    /// `N - budget` nearest messages (Euclidean, self included, ties broken
    /// by lower device index), then apply the inner rule.
    NnmThen { inner: Box<Aggregator>, byzantine_budget: usize },
    /// Norm thresholding: drop the `ceil(tau * N)` messages of largest
    /// norm (ties broken by lower device index), average the rest.
    Tgn { drop_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregator {
    kind: AggregatorKind,
    pub declared_kappa: Option<f64>,
}

impl Aggregator {
    pub fn mean() -> Self {
        Self { kind: AggregatorKind::Mean, declared_kappa: None }
    }

    pub fn cwtm(trim_fraction: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&trim_fraction) {
            return Err(Error::invalid("trim fraction must lie in [0, 0.5)"));
        }
        Ok(Self { kind: AggregatorKind::Cwtm { trim_fraction }, declared_kappa: None })
    }

    pub fn tgn(drop_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&drop_fraction) {
            return Err(Error::invalid("drop fraction must lie in [0, 1)"));
        }
        Ok(Self { kind: AggregatorKind::Tgn { drop_fraction }, declared_kappa: None })
    }

    pub fn nnm_then(inner: Aggregator, byzantine_budget: usize) -> Self {
        Self {
            kind: AggregatorKind::NnmThen { inner: Box::new(inner), byzantine_budget },
            declared_kappa: None,
        }
    }

    pub fn with_declared_kappa(mut self, kappa: f64) -> Self {
        self.declared_kappa = Some(kappa);
        self
    }

    pub fn kind(&self) -> &AggregatorKind {
        &self.kind
    }

    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "mean" {
            return Ok(Self::mean());
        }
        if let Some(rest) = spec.strip_prefix("cwtm:") {
            let alpha: f64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad cwtm parameter {rest:?}")))?;
            return Self::cwtm(alpha);
        }
        if let Some(rest) = spec.strip_prefix("tgn:") {
            let tau: f64 =
                rest.parse().map_err(|_| Error::invalid(format!("bad tgn parameter {rest:?}")))?;
            return Self::tgn(tau);
        }
        if let Some(rest) = spec.strip_prefix("nnm+") {
            let parts: Vec<&str> = rest.split(':').collect();
            let budget_part = parts
                .last()
                .and_then(|p| p.strip_prefix("f="))
                .ok_or_else(|| Error::invalid("nnm spec must end with :f=<budget>"))?;
            let budget: usize = budget_part
                .parse()
                .map_err(|_| Error::invalid(format!("bad nnm budget {budget_part:?}")))?;
            let inner_spec = parts[..parts.len() - 1].join(":");
            let inner = Self::from_spec(&inner_spec)?;
            return Ok(Self::nnm_then(inner, budget));
        }
        Err(Error::Unsupported(format!("unknown aggregator spec {spec:?}")))
    }

    pub fn spec_string(&self) -> String {
        match &self.kind {
            AggregatorKind::Mean => "mean".into(),
            AggregatorKind::Cwtm { trim_fraction } => format!("cwtm:{trim_fraction}"),
            AggregatorKind::Tgn { drop_fraction } => format!("tgn:{drop_fraction}"),
            AggregatorKind::NnmThen { inner, byzantine_budget } => {
                format!("nnm+{}:f={}", inner.spec_string(), byzantine_budget)
            }
        }
    }

    pub fn aggregate<T: Real>(&self, messages: &[ModelVector<T>]) -> Result<ModelVector<T>> {
        if messages.is_empty() {
            return Err(Error::invalid("cannot aggregate an empty message list"));
        }
        let dim = messages[0].dim();
        for m in messages {
            if m.dim() != dim {
                return Err(Error::DimMismatch { expected: dim, got: m.dim() });
            }
            if !m.is_finite() {
                return Err(Error::invalid("aggregation input must have finite norm"));
            }
        }
        self.aggregate_unchecked(messages)
    }

    fn aggregate_unchecked<T: Real>(&self, messages: &[ModelVector<T>]) -> Result<ModelVector<T>> {
        let n = messages.len();
        let dim = messages[0].dim();
        match &self.kind {
            AggregatorKind::Mean => Ok(mean_of(messages)),
            AggregatorKind::Cwtm { trim_fraction } => {
                let trim = (trim_fraction * n as f64).ceil() as usize;
                if 2 * trim >= n {
                    return Err(Error::invalid(format!(
                        "cwtm would trim {trim} per side of {n} messages"
                    )));
                }
                let mut out = ModelVector::zeros(dim);
                let mut column: Vec<T> = vec![T::zero(); n];
                for q in 0..dim {
                    for (slot, m) in column.iter_mut().zip(messages) {
                        *slot = m.values()[q];
                    }
                    column.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
                    let kept = &column[trim..n - trim];
                    let mut acc = T::zero();
                    for &v in kept {
                        acc = acc + v;
                    }
                    out.values_mut()[q] = acc / real_of::<T>(kept.len());
                }
                Ok(out)
            }
            AggregatorKind::Tgn { drop_fraction } => {
                let drop = (drop_fraction * n as f64).ceil() as usize;
                if drop >= n {
                    return Err(Error::invalid(format!(
                        "tgn would drop all {n} messages"
                    )));
                }
                let mut order: Vec<usize> = (0..n).collect();
                let norms: Vec<T> = messages.iter().map(|m| m.norm_sq()).collect();
                order.sort_by(|&a, &b| {
                    norms[a].partial_cmp(&norms[b]).expect("finite").then(a.cmp(&b))
                });
                let mut kept: Vec<usize> = order[..n - drop].to_vec();
                kept.sort_unstable();
                let kept_msgs: Vec<ModelVector<T>> =
                    kept.into_iter().map(|i| messages[i].clone()).collect();
                Ok(mean_of(&kept_msgs))
            }
            AggregatorKind::NnmThen { inner, byzantine_budget } => {
                if *byzantine_budget >= n {
                    return Err(Error::invalid("nnm budget must be below the message count"));
                }
                let keep = n - byzantine_budget;
                let mut mixed = Vec::with_capacity(n);
                let mut dist: Vec<(T, usize)> = Vec::with_capacity(n);
                for i in 0..n {
                    dist.clear();
                    for (j, m) in messages.iter().enumerate() {
                        dist.push((messages[i].distance_sq(m)?, j));
                    }
                    dist.sort_by(|a, b| {
                        a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1))
                    });
                    let mut neighbors: Vec<usize> = dist[..keep].iter().map(|&(_, j)| j).collect();
                    neighbors.sort_unstable();
                    let neighbor_msgs: Vec<ModelVector<T>> =
                        neighbors.into_iter().map(|j| messages[j].clone()).collect();
                    mixed.push(mean_of(&neighbor_msgs));
                }
                inner.aggregate_unchecked(&mixed)
            }
        }
    }
}

/// Coordinate-wise average in list order (sum left to right, divide once).
pub fn mean_of<T: Real>(messages: &[ModelVector<T>]) -> ModelVector<T> {
    let dim = messages[0].dim();
    let mut acc = ModelVector::zeros(dim);
    for m in messages {
        acc.add_assign(m).expect("dims checked by caller");
    }
    acc.div_assign(real_of::<T>(messages.len()));
    acc
}

/// Worst observed deviation ratio of an aggregation rule.
#[derive(Clone, Debug)]
pub struct KappaEstimate {
    /// Max over trials of `||agg - honest mean||^2 / honest variance`;
    /// infinite when the rule was flagged unbounded.
    pub kappa_hat: f64,
    pub num_trials: usize,
    /// Description of the trial and probe that attained the maximum.
    pub worst_case_config: String,
    /// Set when the ratio kept growing under the norm-escalation probe or
    /// when a zero-variance honest set produced a nonzero deviation.
    pub unbounded: bool,
}

/// Adversarial probe family for the estimator. Every policy includes the
/// norm-escalation probe that detects unbounded rules; `Battery` adds
/// deterministic placements derived from each honest sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversaryPolicy {
    Battery,
    NormEscalationOnly,
}

const UNBOUNDED_RATIO: f64 = 1e9;

impl Aggregator {
    /// Probe the deviation ratio of this rule over `num_trials` random
    /// honest sets with `n - h` adversarial messages each. The returned
    /// estimate is a lower bound on the true robustness coefficient.
    pub fn estimate_kappa(
        &self,
        n: usize,
        h: usize,
        dim: usize,
        num_trials: usize,
        seed: u64,
        policy: AdversaryPolicy,
    ) -> Result<KappaEstimate> {
        if h <= n / 2 || h > n {
            return Err(Error::invalid("honest majority required: n/2 < h <= n"));
        }
        if dim == 0 || num_trials == 0 {
            return Err(Error::invalid("need a positive dimension and trial count"));
        }
        let f = n - h;
        let mut kappa_hat = 0.0f64;
        let mut worst = String::from("no deviation observed");
        for trial in 0..num_trials {
            let mut hrng = RngStream::derive(seed, StreamDomain::KappaHonest, 0, trial as u64);
            let honest: Vec<ModelVector<f64>> = (0..h)
                .map(|_| {
                    ModelVector::from_values(
                        (0..dim).map(|_| StandardNormal.sample(&mut hrng)).collect(),
                    )
                })
                .collect();
            let zbar = mean_of(&honest);
            let mut variance = 0.0;
            for z in &honest {
                variance += z.distance_sq(&zbar)?;
            }
            variance /= h as f64;

            let mut arng = RngStream::derive(seed, StreamDomain::KappaAdversary, 0, trial as u64);
            let direction = ModelVector::from_values(
                (0..dim).map(|_| StandardNormal.sample(&mut arng)).collect(),
            );
            let scale = variance.sqrt().max(1e-9);

            let mut probes: Vec<(String, ModelVector<f64>)> = Vec::new();
            // escalation always runs: geometric ladder of outlier norms
            for power in [1i32, 3, 6, 9, 12] {
                let mut v = zbar.clone();
                v.axpy_assign(scale * 10f64.powi(power), &direction)?;
                probes.push((format!("escalation 1e{power}"), v));
            }
            if policy == AdversaryPolicy::Battery {
                let mut cmax = honest[0].clone();
                let mut cmin = honest[0].clone();
                for z in &honest[1..] {
                    for q in 0..dim {
                        cmax.values_mut()[q] = cmax.values()[q].max(z.values()[q]);
                        cmin.values_mut()[q] = cmin.values()[q].min(z.values()[q]);
                    }
                }
                probes.push(("coordinate max".into(), cmax));
                probes.push(("coordinate min".into(), cmin));
                probes.push(("mirrored mean".into(), zbar.scaled(-1.0)));
                probes.push(("sign flip -2".into(), zbar.scaled(-2.0)));
            }

            for (label, byz) in probes {
                let mut messages = honest.clone();
                messages.extend(std::iter::repeat_n(byz, f));
                let out = self.aggregate(&messages)?;
                let deviation = out.distance_sq(&zbar)?;
                if variance == 0.0 {
                    if deviation > 0.0 {
                        return Ok(KappaEstimate {
                            kappa_hat: f64::INFINITY,
                            num_trials: trial + 1,
                            worst_case_config: format!(
                                "trial {trial}, {label}: deviation without honest variance"
                            ),
                            unbounded: true,
                        });
                    }
                    continue;
                }
                let ratio = deviation / variance;
                if ratio > kappa_hat {
                    kappa_hat = ratio;
                    worst = format!("trial {trial}, probe: {label}");
                }
                if ratio > UNBOUNDED_RATIO {
                    return Ok(KappaEstimate {
                        kappa_hat: f64::INFINITY,
                        num_trials: trial + 1,
                        worst_case_config: worst,
                        unbounded: true,
                    });
                }
            }
        }
        Ok(KappaEstimate { kappa_hat, num_trials, worst_case_config: worst, unbounded: false })
    }
}

/// Deviation ratio of a single configuration, exposed for tests and the
/// verification suite.
pub fn deviation_ratio<T: Real>(
    aggregator: &Aggregator,
    honest: &[ModelVector<T>],
    byzantine: &[ModelVector<T>],
) -> Result<(T, T)> {
    if honest.is_empty() {
        return Err(Error::invalid("need honest messages"));
    }
    let zbar = mean_of(honest);
    let mut variance = T::zero();
    for z in honest {
        variance = variance + z.distance_sq(&zbar)?;
    }
    variance = variance / real_of::<T>(honest.len());
    let mut messages = honest.to_vec();
    messages.extend_from_slice(byzantine);
    let out = aggregator.aggregate(&messages)?;
    Ok((out.distance_sq(&zbar)?, variance))
}
