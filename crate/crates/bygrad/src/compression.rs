//! Unbiased uplink compressors and their relative-error constants.
//!
//! A compressor satisfies `E[C(g)] = g` and `E||C(g) - g||^2 <= delta ||g||^2`.
//! Shipped kinds:
//!
//! * `identity` — no compression, `delta = 0`, draws nothing from the stream.
//! * `sparsify:<keep>` — keep `keep` coordinates chosen uniformly without
//!   replacement, scaled by `dim/keep`; `delta = dim/keep - 1`, attained
//!   with equality for every input.
//! * `stoch_quant` — per call, each entry of `g` is rounded randomly to one
//!   end of `[min(g), max(g)]` with probabilities that preserve the mean.
//!   The range depends on the input, so its `delta` is reported as an
//!   empirical upper estimate over a deterministic probe battery.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::{real, real_of, Real};
use crate::vector::ModelVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompressorKind {
    Identity,
    RandomSparsification { keep: usize },
    StochasticQuantization,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Compressor {
    kind: CompressorKind,
    dim: usize,
}

impl Compressor {
    pub fn identity(dim: usize) -> Self {
        Self { kind: CompressorKind::Identity, dim }
    }

    pub fn sparsify(dim: usize, keep: usize) -> Result<Self> {
        if keep < 1 || keep > dim {
            return Err(Error::invalid(format!(
                "sparsification must keep between 1 and {dim} coordinates, got {keep}"
            )));
        }
        Ok(Self { kind: CompressorKind::RandomSparsification { keep }, dim })
    }

    pub fn stochastic_quantization(dim: usize) -> Self {
        Self { kind: CompressorKind::StochasticQuantization, dim }
    }

    /// Parse a config string: `identity`, `sparsify:<keep>`, `stoch_quant`.
    pub fn from_spec(spec: &str, dim: usize) -> Result<Self> {
        let spec = spec.trim();
        if spec == "identity" || spec.is_empty() {
            return Ok(Self::identity(dim));
        }
        if spec == "stoch_quant" {
            return Ok(Self::stochastic_quantization(dim));
        }
        if let Some(rest) = spec.strip_prefix("sparsify:") {
            let keep: usize = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad sparsify parameter {rest:?}")))?;
            return Self::sparsify(dim, keep);
        }
        Err(Error::Unsupported(format!("unknown compressor spec {spec:?}")))
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, CompressorKind::Identity)
    }

    pub fn spec_string(&self) -> String {
        match self.kind {
            CompressorKind::Identity => "identity".into(),
            CompressorKind::RandomSparsification { keep } => format!("sparsify:{keep}"),
            CompressorKind::StochasticQuantization => "stoch_quant".into(),
        }
    }

    /// Uplink cost of one compressed message, in scalars: an uncompressed
    /// vector costs `dim`; sparsification sends `keep` (index, value)
    /// pairs; quantization sends one symbol per coordinate plus the two
    /// range scalars.
    pub fn uplink_scalars(&self) -> u64 {
        match self.kind {
            CompressorKind::Identity => self.dim as u64,
            CompressorKind::RandomSparsification { keep } => 2 * keep as u64,
            CompressorKind::StochasticQuantization => self.dim as u64 + 2,
        }
    }

    pub fn compress<T: Real>(
        &self,
        g: &ModelVector<T>,
        rng: &mut RngStream,
    ) -> Result<ModelVector<T>> {
        if g.dim() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, got: g.dim() });
        }
        if !g.is_finite() {
            return Err(Error::invalid("cannot compress a non-finite vector"));
        }
        match self.kind {
            CompressorKind::Identity => Ok(g.clone()),
            CompressorKind::RandomSparsification { keep } => {
                let kept = rand::seq::index::sample(rng, self.dim, keep);
                let factor = real_of::<T>(self.dim) / real_of::<T>(keep);
                let mut out = ModelVector::zeros(self.dim);
                let mut kept: Vec<usize> = kept.into_vec();
                kept.sort_unstable();
                for q in kept {
                    out.values_mut()[q] = g.values()[q] * factor;
                }
                Ok(out)
            }
            CompressorKind::StochasticQuantization => {
                let mut lo = g.values()[0];
                let mut hi = g.values()[0];
                for &v in g.values() {
                    if v < lo {
                        lo = v;
                    }
                    if v > hi {
                        hi = v;
                    }
                }
                if lo == hi {
                    return Ok(g.clone());
                }
                let width = hi - lo;
                let mut out = ModelVector::zeros(self.dim);
                for (o, &v) in out.values_mut().iter_mut().zip(g.values()) {
                    let p_low = (hi - v) / width;
                    let u: f64 = rng.random();
                    *o = if real::<T>(u) < p_low { lo } else { hi };
                }
                Ok(out)
            }
        }
    }

    /// The relative second-moment error constant.
    ///
    /// Exact for identity and sparsification. For quantization the constant
    /// depends on the input through the per-call range, so the returned
    /// value is the maximum of the exact per-input expectation over a fixed
    /// probe battery (an empirical upper estimate, not a certificate).
    pub fn delta<T: Real>(&self) -> T {
        match self.kind {
            CompressorKind::Identity => T::zero(),
            CompressorKind::RandomSparsification { keep } => {
                real_of::<T>(self.dim) / real_of::<T>(keep) - T::one()
            }
            CompressorKind::StochasticQuantization => {
                let mut worst = T::zero();
                for g in quantization_probe_battery::<T>(self.dim) {
                    let ratio = quantization_error_ratio(&g);
                    if ratio > worst {
                        worst = ratio;
                    }
                }
                worst
            }
        }
    }
}

/// Exact `E||C(g) - g||^2 / ||g||^2` for min-max stochastic quantization:
/// per coordinate the error variance is `(v - lo)(hi - v)`.
pub fn quantization_error_ratio<T: Real>(g: &ModelVector<T>) -> T {
    let norm = g.norm_sq();
    if norm == T::zero() {
        return T::zero();
    }
    let mut lo = g.values()[0];
    let mut hi = g.values()[0];
    for &v in g.values() {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    let mut err = T::zero();
    for &v in g.values() {
        err = err + (v - lo) * (hi - v);
    }
    err / norm
}

fn quantization_probe_battery<T: Real>(dim: usize) -> Vec<ModelVector<T>> {
    let mut battery = Vec::new();
    if dim == 0 {
        return battery;
    }
    // symmetric two-spike profile with a flat middle: the worst shape for
    // the min-max range policy
    let mut spike = vec![T::zero(); dim];
    spike[0] = -T::one();
    spike[dim - 1] = T::one();
    battery.push(ModelVector::from_values(spike));
    // linear ramp
    let ramp: Vec<T> = (0..dim)
        .map(|q| real::<T>(q as f64 / (dim.max(2) - 1) as f64 * 2.0 - 1.0))
        .collect();
    battery.push(ModelVector::from_values(ramp));
    // deterministic pseudo-random profile
    let mut x = 0.5f64;
    let noisy: Vec<T> = (0..dim)
        .map(|_| {
            x = (x * 997.0 + 0.1234).fract();
            real::<T>(x * 2.0 - 1.0)
        })
        .collect();
    battery.push(ModelVector::from_values(noisy));
    battery
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamDomain;

    fn stream(i: u64) -> RngStream {
        RngStream::derive(99, StreamDomain::Compress, 0, i)
    }

    #[test]
    fn identity_returns_input() {
        let c = Compressor::identity(4);
        let g = ModelVector::from_values(vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(c.compress(&g, &mut stream(0)).unwrap(), g);
        assert_eq!(c.delta::<f64>(), 0.0);
        assert_eq!(c.uplink_scalars(), 4);
    }

    #[test]
    fn full_keep_sparsification_is_identity() {
        let c = Compressor::sparsify(4, 4).unwrap();
        let g = ModelVector::from_values(vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(c.compress(&g, &mut stream(1)).unwrap(), g);
        assert_eq!(c.delta::<f64>(), 0.0);
    }

    #[test]
    fn sparsification_keeps_exact_count_scaled() {
        let c = Compressor::sparsify(6, 2).unwrap();
        let g = ModelVector::from_values(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let out = c.compress(&g, &mut stream(2)).unwrap();
        let nonzero: Vec<usize> =
            (0..6).filter(|&q| out.values()[q] != 0.0).collect();
        assert_eq!(nonzero.len(), 2);
        for q in nonzero {
            assert_eq!(out.values()[q], g.values()[q] * 3.0);
        }
        assert_eq!(c.uplink_scalars(), 4);
    }

    #[test]
    fn sparsify_bounds_checked() {
        assert!(Compressor::sparsify(4, 0).is_err());
        assert!(Compressor::sparsify(4, 5).is_err());
        assert!(Compressor::from_spec("sparsify:30", 100).is_ok());
        assert!(Compressor::from_spec("sparsify:101", 100).is_err());
    }

    #[test]
    fn sparsify_delta_example() {
        let c = Compressor::sparsify(100, 30).unwrap();
        assert!((c.delta::<f64>() - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quantization_outputs_at_range_ends() {
        let c = Compressor::stochastic_quantization(5);
        let g = ModelVector::from_values(vec![-1.0, 0.2, 0.4, 0.9, 1.5]);
        let out = c.compress(&g, &mut stream(3)).unwrap();
        for &v in out.values() {
            assert!(v == -1.0 || v == 1.5);
        }
        assert_eq!(c.uplink_scalars(), 7);
    }

    #[test]
    fn degenerate_quantization_range_returns_input() {
        let c = Compressor::stochastic_quantization(3);
        let g = ModelVector::from_values(vec![2.5, 2.5, 2.5]);
        assert_eq!(c.compress(&g, &mut stream(4)).unwrap(), g);
    }

    #[test]
    fn unknown_spec_rejected() {
        assert!(matches!(
            Compressor::from_spec("topk:3", 10),
            Err(Error::Unsupported(_))
        ));
    }
}
