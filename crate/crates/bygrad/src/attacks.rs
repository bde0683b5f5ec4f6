//! Byzantine device behaviors and Byzantine-set scheduling.
//!
//! A Byzantine device receives the same assignment as an honest one and
//! may send any finite-norm vector. The shipped behaviors derive the
//! payload from the device's own would-be message; the default experiment
//! attack multiplies it by a fixed negative coefficient (sign flipping).
//!
//! Config strings: `none`, `signflip:<coefficient>`, `const:<fill>`,
//! `gauss:<scale>`; schedules `fixed` (first `count` devices) or
//! `resample` (fresh uniform set each iteration).

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamDomain};
use crate::scalar::{real, Real};
use crate::vector::ModelVector;

#[derive(Clone, Debug, PartialEq)]
pub enum AttackKind {
    /// Behave honestly (attack disabled).
    None,
    /// Send `coefficient * honest_message`.
    SignFlip { coefficient: f64 },
    /// Send a constant vector with every entry `fill`.
    ConstantFill { fill: f64 },
    /// Send `scale * eta` with `eta` standard normal.
    GaussianNoise { scale: f64 },
    /// Send the negated mean of the honest messages (requires server-side
    /// knowledge; off by default, used for robustness probing).
    OmniscientOpposite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackPolicy {
    pub kind: AttackKind,
    /// When the run compresses uplinks: `false` applies the attack to the
    /// coded vector and compresses the result (the default), `true`
    /// attacks the already-compressed message.
    pub applies_after_compression: bool,
    /// Payloads are clipped to this norm so they always satisfy the
    /// finite-norm requirement of the problem model.
    pub max_payload_norm: f64,
}

/// What a Byzantine device gets to see when forming its payload.
pub struct AttackContext<'a, T: Real> {
    pub honest_mean: Option<&'a ModelVector<T>>,
}

/// A payload plus a flag recording whether it had to be sanitized.
pub struct Payload<T: Real> {
    pub vector: ModelVector<T>,
    pub clipped: bool,
}

impl AttackPolicy {
    pub fn new(kind: AttackKind) -> Self {
        Self { kind, applies_after_compression: false, max_payload_norm: 1e12 }
    }

    pub fn none() -> Self {
        Self::new(AttackKind::None)
    }

    pub fn sign_flip(coefficient: f64) -> Self {
        Self::new(AttackKind::SignFlip { coefficient })
    }

    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "none" || spec.is_empty() {
            return Ok(Self::none());
        }
        if let Some(rest) = spec.strip_prefix("signflip:") {
            let c: f64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad signflip coefficient {rest:?}")))?;
            return Ok(Self::sign_flip(c));
        }
        if let Some(rest) = spec.strip_prefix("const:") {
            let v: f64 =
                rest.parse().map_err(|_| Error::invalid(format!("bad const fill {rest:?}")))?;
            return Ok(Self::new(AttackKind::ConstantFill { fill: v }));
        }
        if let Some(rest) = spec.strip_prefix("gauss:") {
            let s: f64 =
                rest.parse().map_err(|_| Error::invalid(format!("bad gauss scale {rest:?}")))?;
            return Ok(Self::new(AttackKind::GaussianNoise { scale: s }));
        }
        Err(Error::Unsupported(format!("unknown attack spec {spec:?}")))
    }

    pub fn spec_string(&self) -> String {
        match &self.kind {
            AttackKind::None => "none".into(),
            AttackKind::SignFlip { coefficient } => format!("signflip:{coefficient}"),
            AttackKind::ConstantFill { fill } => format!("const:{fill}"),
            AttackKind::GaussianNoise { scale } => format!("gauss:{scale}"),
            AttackKind::OmniscientOpposite => "omniscient_opposite".into(),
        }
    }

    pub fn is_noop(&self) -> bool {
        matches!(self.kind, AttackKind::None)
            || matches!(self.kind, AttackKind::SignFlip { coefficient } if coefficient == 1.0)
    }

    /// Payload of one Byzantine device given the message it would have sent
    /// honestly. Draws, if any, come from the per-device attack stream.
    pub fn payload<T: Real>(
        &self,
        honest_message: &ModelVector<T>,
        ctx: &AttackContext<'_, T>,
        rng: &mut RngStream,
    ) -> Result<Payload<T>>
    where
        StandardNormal: Distribution<T>,
    {
        let raw = match &self.kind {
            AttackKind::None => honest_message.clone(),
            AttackKind::SignFlip { coefficient } => honest_message.scaled(real::<T>(*coefficient)),
            AttackKind::ConstantFill { fill } => {
                ModelVector::filled(honest_message.dim(), real::<T>(*fill))
            }
            AttackKind::GaussianNoise { scale } => {
                let s = real::<T>(*scale);
                ModelVector::from_values(
                    (0..honest_message.dim())
                        .map(|_| s * StandardNormal.sample(rng))
                        .collect(),
                )
            }
            AttackKind::OmniscientOpposite => ctx
                .honest_mean
                .ok_or_else(|| {
                    Error::invalid("omniscient attack needs the honest mean in its context")
                })?
                .scaled(-T::one()),
        };
        Ok(sanitize(raw, real::<T>(self.max_payload_norm)))
    }
}

/// Replace non-finite entries by zero and clip to the norm budget.
fn sanitize<T: Real>(mut v: ModelVector<T>, max_norm: T) -> Payload<T> {
    let mut clipped = false;
    for x in v.values_mut() {
        if !x.is_finite() {
            *x = T::zero();
            clipped = true;
        }
    }
    let norm = v.norm_sq().sqrt();
    if norm > max_norm {
        v.scale_assign(max_norm / norm);
        clipped = true;
    }
    Payload { vector: v, clipped }
}

/// Which devices are Byzantine in a given iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ByzantineSchedule {
    /// The same explicit set every iteration.
    Fixed { devices: Vec<usize> },
    /// A fresh uniform size-`count` subset each iteration.
    Resample { count: usize },
}

impl ByzantineSchedule {
    /// Fixed schedule over the first `count` devices.
    pub fn fixed_first(count: usize) -> Self {
        ByzantineSchedule::Fixed { devices: (0..count).collect() }
    }

    pub fn fixed(mut devices: Vec<usize>) -> Self {
        devices.sort_unstable();
        devices.dedup();
        ByzantineSchedule::Fixed { devices }
    }

    pub fn resample(count: usize) -> Self {
        ByzantineSchedule::Resample { count }
    }

    pub fn from_spec(spec: &str, count: usize) -> Result<Self> {
        match spec.trim() {
            "fixed" | "" => Ok(Self::fixed_first(count)),
            "resample" => Ok(Self::resample(count)),
            other => Err(Error::Unsupported(format!("unknown schedule spec {other:?}"))),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            ByzantineSchedule::Fixed { devices } => devices.len(),
            ByzantineSchedule::Resample { count } => *count,
        }
    }

    /// Validate against the population: at most `n - h` Byzantine devices,
    /// indices in range.
    pub fn validate(&self, n: usize, h: usize) -> Result<()> {
        if self.count() > n - h {
            return Err(Error::invalid(format!(
                "{} byzantine devices exceed the budget n - h = {}",
                self.count(),
                n - h
            )));
        }
        if let ByzantineSchedule::Fixed { devices } = self {
            if devices.iter().any(|&i| i >= n) {
                return Err(Error::invalid("fixed byzantine set contains out-of-range devices"));
            }
        }
        Ok(())
    }

    /// The Byzantine set of iteration `t`, sorted ascending. The honest set
    /// is the complement.
    pub fn select(&self, n: usize, t: u64, seed: u64) -> Result<Vec<usize>> {
        match self {
            ByzantineSchedule::Fixed { devices } => Ok(devices.clone()),
            ByzantineSchedule::Resample { count } => {
                if *count > n {
                    return Err(Error::invalid("byzantine count exceeds population"));
                }
                let mut rng = RngStream::derive(seed, StreamDomain::ByzantineSet, 0, t);
                let mut set = rand::seq::index::sample(&mut rng, n, *count).into_vec();
                set.sort_unstable();
                Ok(set)
            }
        }
    }
}
