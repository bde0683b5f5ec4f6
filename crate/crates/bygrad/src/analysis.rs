//! Closed-form convergence machinery: constants, error terms, stability
//! thresholds, and the enumeration/Monte Carlo checks that verify them.
//!
//! Conventions for the constants, with `N` devices, `H` honest, load `d`,
//! heterogeneity `beta`, compression constant `delta`:
//!
//! ```text
//! k1 = N b^2 (1/H + 1)(4 delta / d) + 4 b^2 (N-d) N / (d H (N-1))
//! k2 = [(1/H + 1)(4 delta / d) + 4 (N-H)(N-d) / (d H (N-1) N)] / N
//! k3 = [4 delta / (H d) + 4 (N-H)(N-d) / (d H (N-1) N)] N b^2
//! k4 = 2/N^2 + 4 delta / (H d N) + 4 (N-H)(N-d) / (d H (N-1) N^2)
//! ```
//!
//! The uncompressed constants `x1..x4` are exactly the `delta = 0`
//! specializations of `k1..k4`; the whole uncompressed bound is the
//! `delta = 0` limit of the compressed one, and the test suite pins that
//! collapse.

use crate::aggregation::{mean_of, Aggregator};
use crate::attacks::{AttackContext, AttackPolicy};
use crate::coding::{encode_from_cache, Assignment, TaskMatrix};
use crate::compression::Compressor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::perm::{binomial, for_each_permutation, for_each_subset};
use crate::rng::{RngStream, StreamDomain};
use crate::scalar::{real, real_of, Compensated, Real};
use crate::vector::ModelVector;

/// Parameter bundle feeding every closed-form bound.
#[derive(Clone, Copy, Debug)]
pub struct TheoryParams<T: Real> {
    pub n: usize,
    pub h: usize,
    pub d: usize,
    /// Robustness coefficient of the aggregation rule.
    pub kappa: T,
    /// Heterogeneity bound.
    pub beta: T,
    /// Compression constant.
    pub delta: T,
    /// Smoothness constant of the loss.
    pub smoothness: T,
    /// Constant learning rate.
    pub gamma0: T,
    /// Initial optimality gap `F(x0) - F*`.
    pub loss_gap: T,
}

impl<T: Real> TheoryParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("need at least two devices"));
        }
        if self.h <= self.n / 2 || self.h > self.n {
            return Err(Error::invalid("honest majority required: n/2 < h <= n"));
        }
        if self.d < 1 || self.d > self.n {
            return Err(Error::invalid("load must satisfy 1 <= d <= n"));
        }
        if self.kappa < T::zero() || self.beta < T::zero() || self.delta < T::zero() {
            return Err(Error::invalid("kappa, beta, delta must be nonnegative"));
        }
        if self.smoothness <= T::zero() {
            return Err(Error::invalid("smoothness constant must be positive"));
        }
        if self.gamma0 <= T::zero() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.loss_gap < T::zero() {
            return Err(Error::invalid("loss gap must be nonnegative"));
        }
        Ok(())
    }

    pub fn with_delta(mut self, delta: T) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_load(mut self, d: usize) -> Self {
        self.d = d;
        self
    }
}

/// The eight closed-form constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryConstants<T: Real> {
    pub kappa1: T,
    pub kappa2: T,
    pub kappa3: T,
    pub kappa4: T,
    pub xi1: T,
    pub xi2: T,
    pub xi3: T,
    pub xi4: T,
}

pub fn compute_constants<T: Real>(p: &TheoryParams<T>) -> Result<TheoryConstants<T>> {
    p.validate()?;
    let n = real_of::<T>(p.n);
    let h = real_of::<T>(p.h);
    let d = real_of::<T>(p.d);
    let beta_sq = p.beta * p.beta;
    let four = real::<T>(4.0);
    let two = real::<T>(2.0);
    let one = T::one();

    let nh = n - h;
    let nd = n - d;
    let n1 = n - one;

    let comp = (one / h + one) * four * p.delta / d;
    let spread = four * nd * n / (d * h * n1);
    let balance = four * nh * nd / (d * h * n1 * n);

    let kappa1 = n * beta_sq * comp + beta_sq * spread;
    let kappa2 = (comp + balance) / n;
    let kappa3 = (four * p.delta / (h * d) + balance) * n * beta_sq;
    let kappa4 = two / (n * n) + four * p.delta / (h * d * n) + balance / n;

    let xi1 = beta_sq * spread;
    let xi2 = balance / n;
    let xi3 = balance * n * beta_sq;
    let xi4 = two / (n * n) + balance / n;

    Ok(TheoryConstants { kappa1, kappa2, kappa3, kappa4, xi1, xi2, xi3, xi4 })
}

/// Expected squared deviation of the normalized honest row weights from
/// uniform, for the cyclic matrix: `(N-H)(N-d) / (d H (N-1) N)`.
pub fn lemma_weight_deviation<T: Real>(n: usize, h: usize, d: usize) -> Result<T> {
    if n < 2 {
        return Err(Error::invalid("formula needs n >= 2"));
    }
    if d < 1 || d > n || h < 1 || h > n {
        return Err(Error::invalid("need 1 <= d <= n and 1 <= h <= n"));
    }
    let nf = real_of::<T>(n);
    let hf = real_of::<T>(h);
    let df = real_of::<T>(d);
    Ok((nf - hf) * (nf - df) / (df * hf * (nf - T::one()) * nf))
}

/// Minimal load at which the coded method's error beats the uncoded
/// baseline: `ceil(N^2 / (kappa H (N-H) + N))`, at least 1.
pub fn d_threshold(n: usize, h: usize, kappa: f64) -> Result<usize> {
    if n < 1 || h < 1 || h > n {
        return Err(Error::invalid("need 1 <= h <= n"));
    }
    if !(kappa >= 0.0) {
        return Err(Error::invalid("kappa must be nonnegative"));
    }
    let denom = kappa * h as f64 * (n - h) as f64 + n as f64;
    let ratio = (n as f64) * (n as f64) / denom;
    Ok((ratio.ceil() as usize).max(1))
}

/// Per-variant bound evaluation.
#[derive(Clone, Copy, Debug)]
pub struct VariantBound<T: Real> {
    /// Whether `sqrt(kappa * k2) < 1/N` holds.
    pub feasible: bool,
    /// Strict upper bound on usable learning rates; callers must stay
    /// strictly below it.
    pub max_stable_gamma: Option<T>,
    /// The non-vanishing error term at `gamma0`; `None` when infeasible or
    /// `gamma0` is not below the stable bound.
    pub error_term: Option<T>,
    /// Coefficient of the `1/T` transient at `gamma0`.
    pub transient_coeff: Option<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundReport<T: Real> {
    pub constants: TheoryConstants<T>,
    pub compressed: VariantBound<T>,
    pub uncompressed: VariantBound<T>,
    pub d_threshold: usize,
}

fn variant_bound<T: Real>(
    p: &TheoryParams<T>,
    c1: T,
    c2: T,
    c3: T,
    c4: T,
    numerator_first_term: Option<T>,
) -> VariantBound<T> {
    let n = real_of::<T>(p.n);
    let inv_n = T::one() / n;
    let root = (p.kappa * c2).sqrt();
    if root >= inv_n {
        return VariantBound {
            feasible: false,
            max_stable_gamma: None,
            error_term: None,
            transient_coeff: None,
        };
    }
    let l = p.smoothness;
    let slope = l * (p.kappa * c2 + c4);
    let max_gamma = (inv_n - root) / slope;
    if p.gamma0 >= max_gamma {
        return VariantBound {
            feasible: true,
            max_stable_gamma: Some(max_gamma),
            error_term: None,
            transient_coeff: None,
        };
    }
    let denom = (inv_n - root) - p.gamma0 * slope;
    let first = match numerator_first_term {
        Some(v) => v,
        None => return VariantBound {
            feasible: true,
            max_stable_gamma: Some(max_gamma),
            error_term: None,
            transient_coeff: None,
        },
    };
    let numer = first + p.gamma0 * l * (p.kappa * c1 + c3);
    let error = numer / denom;
    let transient = p.loss_gap / (p.gamma0 * (inv_n - root) - p.gamma0 * p.gamma0 * slope);
    VariantBound {
        feasible: true,
        max_stable_gamma: Some(max_gamma),
        error_term: Some(error),
        transient_coeff: Some(transient),
    }
}

/// First numerator term of the compressed error: `k1 sqrt(kappa) / (2 sqrt(k2))`.
fn compressed_first_term<T: Real>(kappa: T, c1: T, c2: T) -> Option<T> {
    if kappa * c1 == T::zero() {
        return Some(T::zero());
    }
    if c2 == T::zero() {
        return None; // unbounded numerator
    }
    Some(c1 * kappa.sqrt() / (real::<T>(2.0) * c2.sqrt()))
}

/// First numerator term of the uncompressed error, in its published form:
/// `N beta sqrt(kappa x1)/2 sqrt(N/(N-H))`.
fn uncompressed_first_term<T: Real>(p: &TheoryParams<T>, x1: T) -> Option<T> {
    if p.kappa * x1 == T::zero() {
        return Some(T::zero());
    }
    if p.h == p.n {
        return None;
    }
    let n = real_of::<T>(p.n);
    let nh = real_of::<T>(p.n - p.h);
    Some(n * p.beta * (p.kappa * x1).sqrt() / real::<T>(2.0) * (n / nh).sqrt())
}

pub fn bound_report<T: Real>(p: &TheoryParams<T>) -> Result<BoundReport<T>> {
    let c = compute_constants(p)?;
    let compressed = variant_bound(
        p,
        c.kappa1,
        c.kappa2,
        c.kappa3,
        c.kappa4,
        compressed_first_term(p.kappa, c.kappa1, c.kappa2),
    );
    let uncompressed =
        variant_bound(p, c.xi1, c.xi2, c.xi3, c.xi4, uncompressed_first_term(p, c.xi1));
    let d_threshold = d_threshold(p.n, p.h, p.kappa.to_f64().unwrap_or(0.0))?;
    Ok(BoundReport { constants: c, compressed, uncompressed, d_threshold })
}

/// Error terms of both variants at the configured learning rate.
pub fn error_terms<T: Real>(p: &TheoryParams<T>) -> Result<(Option<T>, Option<T>)> {
    let report = bound_report(p)?;
    Ok((report.compressed.error_term, report.uncompressed.error_term))
}

/// Strict learning-rate bound for one variant.
pub fn max_stable_gamma<T: Real>(p: &TheoryParams<T>, compressed: bool) -> Result<T> {
    let report = bound_report(p)?;
    let v = if compressed { report.compressed } else { report.uncompressed };
    v.max_stable_gamma.ok_or_else(|| {
        Error::Infeasible("sqrt(kappa * k2) >= 1/N: no stable learning rate".into())
    })
}

/// The quantity the overview curves plot: `k1 sqrt(kappa / k2)`, the
/// large-system form of the compressed error term.
pub fn asymptotic_error<T: Real>(p: &TheoryParams<T>) -> Result<T> {
    let c = compute_constants(p)?;
    if p.kappa * c.kappa1 == T::zero() {
        return Ok(T::zero());
    }
    if c.kappa2 == T::zero() {
        return Err(Error::Infeasible("zero denominator in asymptotic error".into()));
    }
    Ok(c.kappa1 * (p.kappa / c.kappa2).sqrt())
}

/// Asymptotic error as a function of the compression constant.
pub fn delta_curve<T: Real>(p: &TheoryParams<T>, deltas: &[T]) -> Result<Vec<(T, T)>> {
    deltas
        .iter()
        .map(|&delta| Ok((delta, asymptotic_error(&p.with_delta(delta))?)))
        .collect()
}

/// Asymptotic error as a function of the computational load.
pub fn d_curve<T: Real>(p: &TheoryParams<T>, loads: &[usize]) -> Result<Vec<(usize, T)>> {
    loads
        .iter()
        .map(|&d| Ok((d, asymptotic_error(&p.with_load(d))?)))
        .collect()
}

/// Both routes to the uncompressed error term: the published closed form
/// and the `delta = 0` limit of the compressed form. They agree
/// analytically; the verification suite asserts it numerically.
pub fn uncompressed_error_both_routes<T: Real>(
    p: &TheoryParams<T>,
) -> Result<(Option<T>, Option<T>)> {
    let report = bound_report(p)?;
    let at_zero = bound_report(&p.with_delta(T::zero()))?;
    Ok((report.uncompressed.error_term, at_zero.compressed.error_term))
}

const SUBSET_ENUMERATION_BUDGET: u128 = 1_000_000;

/// Exhaustive evaluation of the expected squared deviation of the
/// normalized honest row weights from uniform, for an arbitrary row-sum-`d`
/// matrix: the honest rows are a uniform size-`h` subset.
pub fn weight_deviation_exact(matrix: &TaskMatrix, h: usize) -> Result<f64> {
    let n = matrix.size();
    if h < 1 || h > n {
        return Err(Error::invalid("need 1 <= h <= n"));
    }
    let combos = binomial(n, h);
    if combos > SUBSET_ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "C({n},{h}) = {combos} subsets exceed the enumeration budget"
        )));
    }
    let d = matrix.load();
    let scale = 1.0 / (d as f64 * h as f64);
    let uniform = 1.0 / n as f64;
    let mut acc = Compensated::<f64>::new();
    let mut counts = vec![0u32; n];
    for_each_subset(n, h, |rows| {
        counts.iter_mut().for_each(|c| *c = 0);
        for &r in rows {
            for &col in matrix.row(r) {
                counts[col] += 1;
            }
        }
        let mut sq = 0.0;
        for &c in &counts {
            let w = c as f64 * scale - uniform;
            sq += w * w;
        }
        acc.add(sq);
    });
    Ok(acc.value() / combos as f64)
}

/// Monte Carlo counterpart of [`weight_deviation_exact`] for sizes past the
/// enumeration budget. Returns `(mean, standard error)`.
pub fn weight_deviation_mc(
    matrix: &TaskMatrix,
    h: usize,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = matrix.size();
    if h < 1 || h > n {
        return Err(Error::invalid("need 1 <= h <= n"));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let d = matrix.load();
    let scale = 1.0 / (d as f64 * h as f64);
    let uniform = 1.0 / n as f64;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut counts = vec![0u32; n];
    for s in 0..samples {
        let mut rng = RngStream::derive(seed, StreamDomain::Probe, 1, s as u64);
        let rows = rand::seq::index::sample(&mut rng, n, h);
        counts.iter_mut().for_each(|c| *c = 0);
        for r in rows {
            for &col in matrix.row(r) {
                counts[col] += 1;
            }
        }
        let mut sq = 0.0;
        for &c in &counts {
            let w = c as f64 * scale - uniform;
            sq += w * w;
        }
        let delta = sq - mean;
        mean += delta / (s as f64 + 1.0);
        m2 += delta * (sq - mean);
    }
    let var = m2 / (samples as f64 - 1.0);
    Ok((mean, (var / samples as f64).sqrt()))
}

/// Exhaustive mean squared deviation of the honest average of coded
/// vectors from the average subset gradient, over all honest row subsets
/// and data permutations, at a frozen model.
pub fn honest_average_deviation_exact(
    dataset: &Dataset<f64>,
    model: &ModelVector<f64>,
    matrix: &TaskMatrix,
    h: usize,
) -> Result<f64> {
    let n = matrix.size();
    if dataset.num_subsets() != n {
        return Err(Error::invalid("dataset subsets must match matrix size"));
    }
    if h < 1 || h > n {
        return Err(Error::invalid("need 1 <= h <= n"));
    }
    let combos = binomial(n, h);
    let mut fact: u128 = 1;
    for i in 2..=n as u128 {
        fact = fact.saturating_mul(i);
    }
    if combos.saturating_mul(fact) > SUBSET_ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "C({n},{h}) * {n}! combinations exceed the enumeration budget"
        )));
    }
    let d = matrix.load();
    let gradients: Vec<ModelVector<f64>> =
        (0..n).map(|k| dataset.local_gradient(model, k)).collect::<Result<_>>()?;
    let mu = dataset.mean_gradient(model)?;
    let scale = 1.0 / (d as f64 * h as f64);
    let dim = dataset.dim();

    let mut acc = Compensated::<f64>::new();
    let mut count: u64 = 0;
    let mut weights = vec![0.0f64; n];
    for_each_subset(n, h, |rows| {
        weights.iter_mut().for_each(|w| *w = 0.0);
        for &r in rows {
            for &col in matrix.row(r) {
                weights[col] += scale;
            }
        }
        let w = weights.clone();
        for_each_permutation(n, |perm| {
            let mut avg = ModelVector::zeros(dim);
            for (col, &wc) in w.iter().enumerate() {
                if wc != 0.0 {
                    let _ = avg.axpy_assign(wc, &gradients[perm[col]]);
                }
            }
            acc.add(avg.distance_sq(&mu).expect("dims match"));
            count += 1;
        });
    });
    Ok(acc.value() / count as f64)
}

/// Monte Carlo estimates of the two conditional-moment bounds at a frozen
/// model.
#[derive(Clone, Debug)]
pub struct LemmaBoundsReport {
    pub samples: usize,
    pub beta_hat_sq: f64,
    pub grad_norm_sq: f64,
    /// Mean and standard error of `||aggregate - honest average||^2`.
    pub deviation_mean: f64,
    pub deviation_se: f64,
    /// `kappa k1 + kappa k2 ||grad F||^2` with `beta = beta_hat`.
    pub deviation_bound: f64,
    pub deviation_ok: bool,
    /// Mean and standard error of `||honest average||^2`.
    pub honest_norm_mean: f64,
    pub honest_norm_se: f64,
    /// `k3 + k4 ||grad F||^2` with `beta = beta_hat`.
    pub honest_norm_bound: f64,
    pub honest_norm_ok: bool,
}

/// Sample the aggregation deviation and honest-average moments at a frozen
/// model and compare them against the closed-form bounds, with the
/// heterogeneity constant measured at that model. Passing means the
/// sampled mean does not exceed the bound by more than three standard
/// errors.
#[allow(clippy::too_many_arguments)]
pub fn verify_lemma_bounds(
    dataset: &Dataset<f64>,
    model: &ModelVector<f64>,
    matrix: &TaskMatrix,
    aggregator: &Aggregator,
    compressor: &Compressor,
    attack: &AttackPolicy,
    byzantine: &[usize],
    kappa: f64,
    samples: usize,
    seed: u64,
) -> Result<LemmaBoundsReport> {
    let n = matrix.size();
    if dataset.num_subsets() != n {
        return Err(Error::invalid("dataset subsets must match matrix size"));
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let h = n - byzantine.len();
    if h <= n / 2 {
        return Err(Error::invalid("honest majority required"));
    }
    let is_byz = {
        let mut mask = vec![false; n];
        for &b in byzantine {
            if b >= n {
                return Err(Error::invalid("byzantine index out of range"));
            }
            mask[b] = true;
        }
        mask
    };

    let (_, grad) = dataset.loss_and_gradient(model)?;
    let grad_norm_sq = grad.norm_sq();
    let beta_hat_sq = dataset.heterogeneity_sq(model)?;
    let gradients: Vec<ModelVector<f64>> =
        (0..n).map(|k| dataset.local_gradient(model, k)).collect::<Result<_>>()?;

    let params = TheoryParams {
        n,
        h,
        d: matrix.load(),
        kappa,
        beta: beta_hat_sq.sqrt(),
        delta: compressor.delta::<f64>(),
        smoothness: 1.0,
        gamma0: 1.0,
        loss_gap: 0.0,
    };
    let c = compute_constants(&params)?;

    let mut dev_mean = 0.0;
    let mut dev_m2 = 0.0;
    let mut norm_mean = 0.0;
    let mut norm_m2 = 0.0;

    for s in 0..samples {
        let mut trng = RngStream::derive(seed, StreamDomain::TaskPerm, 1, s as u64);
        let mut prng = RngStream::derive(seed, StreamDomain::DataPerm, 1, s as u64);
        let assignment = Assignment::sample(&mut trng, &mut prng, n)?;

        let mut messages: Vec<ModelVector<f64>> = Vec::with_capacity(n);
        let mut honest_sent: Vec<ModelVector<f64>> = Vec::with_capacity(h);
        for device in 0..n {
            let coded = encode_from_cache(device, &assignment, matrix, &gradients)?;
            let mut crng = RngStream::derive(seed, StreamDomain::Compress, device as u64, s as u64);
            if is_byz[device] {
                let mut arng =
                    RngStream::derive(seed, StreamDomain::Attack, device as u64, s as u64);
                let ctx = AttackContext { honest_mean: None };
                let sent = if attack.applies_after_compression {
                    let compressed = compressor.compress(&coded, &mut crng)?;
                    attack.payload(&compressed, &ctx, &mut arng)?.vector
                } else {
                    let raw = attack.payload(&coded, &ctx, &mut arng)?.vector;
                    compressor.compress(&raw, &mut crng)?
                };
                messages.push(sent);
            } else {
                let sent = compressor.compress(&coded, &mut crng)?;
                honest_sent.push(sent.clone());
                messages.push(sent);
            }
        }
        let honest_avg = mean_of(&honest_sent);
        let aggregate = aggregator.aggregate(&messages)?;

        let dev = aggregate.distance_sq(&honest_avg)?;
        let nrm = honest_avg.norm_sq();
        let k = s as f64 + 1.0;
        let d1 = dev - dev_mean;
        dev_mean += d1 / k;
        dev_m2 += d1 * (dev - dev_mean);
        let d2 = nrm - norm_mean;
        norm_mean += d2 / k;
        norm_m2 += d2 * (nrm - norm_mean);
    }

    let dev_se = (dev_m2 / (samples as f64 - 1.0) / samples as f64).sqrt();
    let norm_se = (norm_m2 / (samples as f64 - 1.0) / samples as f64).sqrt();
    let deviation_bound = kappa * c.kappa1 + kappa * c.kappa2 * grad_norm_sq;
    let honest_norm_bound = c.kappa3 + c.kappa4 * grad_norm_sq;
    Ok(LemmaBoundsReport {
        samples,
        beta_hat_sq,
        grad_norm_sq,
        deviation_mean: dev_mean,
        deviation_se: dev_se,
        deviation_bound,
        deviation_ok: dev_mean <= deviation_bound + 3.0 * dev_se,
        honest_norm_mean: norm_mean,
        honest_norm_se: norm_se,
        honest_norm_bound,
        honest_norm_ok: norm_mean <= honest_norm_bound + 3.0 * norm_se,
    })
}

/// Draw a random row-sum-`d` matrix. Retries until the column sums are
/// non-uniform when `require_nonuniform` is set.
pub fn random_task_matrix(
    n: usize,
    d: usize,
    seed: u64,
    index: u64,
    require_nonuniform: bool,
) -> Result<TaskMatrix> {
    for attempt in 0..64u64 {
        let mut rng = RngStream::derive(seed, StreamDomain::Probe, 2 + attempt, index);
        let rows: Vec<Vec<usize>> =
            (0..n).map(|_| rand::seq::index::sample(&mut rng, n, d).into_vec()).collect();
        let m = TaskMatrix::from_rows(n, rows)?;
        if !require_nonuniform || !m.has_uniform_column_sums() {
            return Ok(m);
        }
    }
    Err(Error::invalid("could not draw a non-uniform matrix"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(delta: f64) -> TheoryParams<f64> {
        TheoryParams {
            n: 100,
            h: 65,
            d: 5,
            kappa: 1.5,
            beta: 1.0,
            delta,
            smoothness: 1.0,
            gamma0: 1e-6,
            loss_gap: 1.0,
        }
    }

    #[test]
    fn delta_zero_collapse() {
        let c = compute_constants(&params(0.0)).unwrap();
        assert_eq!(c.kappa1, c.xi1);
        assert_eq!(c.kappa2, c.xi2);
        assert_eq!(c.kappa3, c.xi3);
        assert_eq!(c.kappa4, c.xi4);
    }

    #[test]
    fn full_load_kills_spread_terms() {
        let p = TheoryParams { d: 100, ..params(0.5) };
        let c = compute_constants(&p).unwrap();
        assert_eq!(c.xi1, 0.0);
        assert_eq!(c.xi2, 0.0);
        assert_eq!(c.xi3, 0.0);
        assert_eq!(c.xi4, 2.0 / (100.0 * 100.0));
    }

    #[test]
    fn weight_deviation_no_byzantines_is_zero() {
        assert_eq!(lemma_weight_deviation::<f64>(10, 10, 3).unwrap(), 0.0);
    }

    #[test]
    fn weight_deviation_full_load_is_zero() {
        assert_eq!(lemma_weight_deviation::<f64>(10, 7, 10).unwrap(), 0.0);
    }

    #[test]
    fn weight_deviation_reference_value() {
        let v = lemma_weight_deviation::<f64>(10, 7, 3).unwrap();
        assert!((v - 21.0 / 1890.0).abs() < 1e-15);
    }

    #[test]
    fn weight_deviation_rejects_degenerate_size() {
        assert!(lemma_weight_deviation::<f64>(1, 1, 1).is_err());
    }

    #[test]
    fn enumeration_matches_closed_form_small() {
        for (n, h, d) in [(5, 3, 2), (6, 4, 2), (7, 4, 3), (8, 5, 8)] {
            let m = TaskMatrix::cyclic(n, d).unwrap();
            let exact = weight_deviation_exact(&m, h).unwrap();
            let closed = lemma_weight_deviation::<f64>(n, h, d).unwrap();
            assert!((exact - closed).abs() < 1e-12, "({n},{h},{d}): {exact} vs {closed}");
        }
    }

    #[test]
    fn threshold_reference_and_limits() {
        assert_eq!(d_threshold(100, 65, 1.5).unwrap(), 3);
        assert_eq!(d_threshold(100, 65, 1e12).unwrap(), 1);
        assert_eq!(d_threshold(100, 100, 0.0).unwrap(), 100);
        assert_eq!(d_threshold(100, 99, 0.0).unwrap(), 100);
    }

    #[test]
    fn gamma_bound_scales_inversely_with_smoothness() {
        let p = TheoryParams { d: 20, h: 80, ..params(0.0) };
        let g1 = max_stable_gamma(&p, true).unwrap();
        let p2 = TheoryParams { smoothness: 2.0, ..p };
        let g2 = max_stable_gamma(&p2, true).unwrap();
        assert!((g1 / g2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_params_reported_not_erred() {
        // d = 1 at these sizes violates sqrt(kappa k2) < 1/N
        let p = TheoryParams { d: 1, ..params(0.5) };
        let r = bound_report(&p).unwrap();
        assert!(!r.compressed.feasible);
        assert!(r.compressed.error_term.is_none());
    }

    #[test]
    fn uncompressed_error_routes_agree() {
        let p = TheoryParams { d: 20, h: 80, gamma0: 1e-8, ..params(0.25) };
        let (verbatim, limit) = uncompressed_error_both_routes(&p).unwrap();
        let (a, b) = (verbatim.unwrap(), limit.unwrap());
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn perfect_aggregation_full_load_error_vanishes() {
        let p = TheoryParams { kappa: 0.0, d: 100, gamma0: 1e-9, ..params(0.0) };
        let report = bound_report(&p).unwrap();
        assert_eq!(report.uncompressed.error_term.unwrap(), 0.0);
    }
}
