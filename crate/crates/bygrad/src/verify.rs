//! The identity/property suite behind `bygrad verify`.
//!
//! Every closed-form identity and distributional contract declared by the
//! other modules has a named check here. Checks are deterministic (fixed
//! streams) and print one line each through the CLI. The suite is also the
//! backbone of the acceptance tests.

use rand_distr::{Distribution, StandardNormal};

use crate::aggregation::{AdversaryPolicy, Aggregator};
use crate::analysis::{
    self, compute_constants, honest_average_deviation_exact, lemma_weight_deviation,
    random_task_matrix, uncompressed_error_both_routes, verify_lemma_bounds, weight_deviation_exact,
    TheoryParams,
};
use crate::attacks::AttackPolicy;
use crate::coding::{encoder_moments, MomentMode, TaskMatrix};
use crate::compression::Compressor;
use crate::data::Dataset;
use crate::error::Result;
use crate::perm::{for_each_subset, Permutation};
use crate::rng::{RngStream, StreamDomain};
use crate::scalar::Compensated;
use crate::sim::{run, ExperimentConfig, Method};
use crate::vector::ModelVector;

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Largest matrix size for exhaustive subset enumeration.
    pub max_enum_n: usize,
    /// Monte Carlo sample count for the statistical checks.
    pub mc_samples: usize,
    pub seed: u64,
    /// Negative control: evaluate the weight-deviation closed form with a
    /// deliberately wrong constant so the suite must fail.
    pub mutate_weight_formula: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { max_enum_n: 10, mc_samples: 20_000, seed: 0xB16_5EED, mutate_weight_formula: false }
    }
}

pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|c| c.passed)
}

/// Run the whole suite.
pub fn run_suite(opts: &VerifyOptions) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    out.push(permutation_uniformity(opts)?);
    out.push(resample_frequency(opts)?);
    out.push(feature_variance(opts)?);
    out.push(weight_deviation_enumeration(opts)?);
    out.push(weight_deviation_infimum(opts)?);
    out.push(encoder_moments_exact(opts)?);
    out.push(honest_average_factorization(opts)?);
    out.push(honest_average_bound(opts)?);
    out.push(cyclic_minimizes_honest_deviation(opts)?);
    out.push(sparsifier_enumeration(opts)?);
    out.push(sparsifier_unbiased_mc(opts)?);
    out.push(quantizer_unbiased_mc(opts)?);
    out.push(aggregation_deviation_bound_mc(opts)?);
    out.push(honest_norm_bound_mc(opts)?);
    out.push(constants_collapse(opts)?);
    out.push(error_term_routes(opts)?);
    out.push(threshold_reference(opts)?);
    out.push(frozen_model_update_unbiased(opts)?);
    out.push(reduction_identities(opts)?);
    out.push(oracle_descent_monotone(opts)?);
    out.push(stable_gamma_cross_check(opts)?);
    out.push(kappa_estimator_contracts(opts)?);
    Ok(out)
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed, detail }
}

fn probe_dataset(seed: u64, n: usize, dim: usize) -> Result<Dataset<f64>> {
    // modest magnitudes keep absolute tolerances meaningful
    let mut subsets = Vec::with_capacity(n);
    for k in 0..n {
        let mut rng = RngStream::derive(seed, StreamDomain::Probe, 10, k as u64);
        let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: f64 = StandardNormal.sample(&mut rng);
        subsets.push(crate::data::Subset {
            features: vec![ModelVector::from_values(z)],
            labels: vec![2.0 * y],
        });
    }
    Dataset::from_subsets(subsets)
}

fn probe_model(seed: u64, dim: usize, index: u64) -> ModelVector<f64> {
    let mut rng = RngStream::derive(seed, StreamDomain::Probe, 11, index);
    ModelVector::from_values((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
}

fn permutation_uniformity(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let n = 4usize;
    let cells = 24usize;
    let samples = 100_000usize;
    let mut counts = vec![0u64; cells];
    for s in 0..samples {
        let mut rng = RngStream::derive(opts.seed, StreamDomain::Probe, 12, s as u64);
        let p = Permutation::sample(&mut rng, n)?;
        // Lehmer code to cell index
        let mut idx = 0usize;
        let v = p.as_slice();
        for i in 0..n {
            let smaller = v[i + 1..].iter().filter(|&&x| x < v[i]).count();
            idx = idx * (n - i) + smaller;
        }
        counts[idx] += 1;
    }
    let expected = samples as f64 / cells as f64;
    let sigma = (expected * (1.0 - 1.0 / cells as f64)).sqrt();
    let worst = counts
        .iter()
        .map(|&c| (c as f64 - expected).abs())
        .fold(0.0f64, f64::max);
    let chi_sq: f64 =
        counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9% critical value of chi-square with 23 degrees of freedom
    let passed = worst <= 3.0 * sigma && chi_sq < 49.73;
    Ok(outcome(
        "permutation_uniformity",
        passed,
        format!("worst cell deviation {worst:.1} vs 3 sigma {:.1}, chi^2 {chi_sq:.1}", 3.0 * sigma),
    ))
}

fn resample_frequency(opts: &VerifyOptions) -> Result<CheckOutcome> {
    use crate::attacks::ByzantineSchedule;
    let n = 10usize;
    let count = 3usize;
    let draws = 100_000usize;
    let schedule = ByzantineSchedule::resample(count);
    let mut hits = vec![0u64; n];
    for t in 0..draws {
        for i in schedule.select(n, t as u64, opts.seed)? {
            hits[i] += 1;
        }
    }
    let p = count as f64 / n as f64;
    let sigma = (p * (1.0 - p) / draws as f64).sqrt();
    let worst = hits
        .iter()
        .map(|&h| (h as f64 / draws as f64 - p).abs())
        .fold(0.0f64, f64::max);
    Ok(outcome(
        "byzantine_resample_frequency",
        worst <= 3.0 * sigma,
        format!("worst frequency deviation {worst:.5} vs 3 sigma {:.5}", 3.0 * sigma),
    ))
}

fn feature_variance(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let n = 10_000usize;
    let ds = Dataset::<f64>::generate_linear_regression(opts.seed, n, 1, 0.0, 1)?;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 0..n {
        let v = ds.subset(k).features[0].values()[0];
        let delta = v - mean;
        mean += delta / (k as f64 + 1.0);
        m2 += delta * (v - mean);
    }
    let var = m2 / (n as f64 - 1.0);
    let passed = (var - 100.0).abs() / 100.0 < 0.05;
    Ok(outcome(
        "feature_variance_moment",
        passed,
        format!("sample variance {var:.2}, spec 100 within 5%"),
    ))
}

fn weight_deviation_enumeration(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for n in 2..=opts.max_enum_n {
        for h in (n / 2 + 1)..=n {
            for d in 1..=n {
                let matrix = TaskMatrix::cyclic(n, d)?;
                let exact = weight_deviation_exact(&matrix, h)?;
                let mut closed = lemma_weight_deviation::<f64>(n, h, d)?;
                if opts.mutate_weight_formula {
                    closed *= 1.001;
                    closed += 1e-6;
                }
                worst = worst.max((exact - closed).abs());
                cases += 1;
            }
        }
    }
    Ok(outcome(
        "weight_deviation_enumeration",
        worst <= 1e-10,
        format!("{cases} (n,h,d) cases, max |enumeration - closed form| = {worst:.3e}"),
    ))
}

fn weight_deviation_infimum(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let (n, h, d) = (6usize, 4usize, 2usize);
    let cyclic = weight_deviation_exact(&TaskMatrix::cyclic(n, d)?, h)?;
    let mut min_excess = f64::INFINITY;
    for i in 0..40u64 {
        let m = random_task_matrix(n, d, opts.seed, i, true)?;
        let v = weight_deviation_exact(&m, h)?;
        min_excess = min_excess.min(v - cyclic);
    }
    // a balanced but non-cyclic matrix attains the same value
    let balanced = TaskMatrix::from_rows(
        n,
        vec![vec![0, 3], vec![1, 4], vec![2, 5], vec![0, 3], vec![1, 4], vec![2, 5]],
    )?;
    let balanced_value = weight_deviation_exact(&balanced, h)?;
    let passed = min_excess > 1e-10 && (balanced_value - cyclic).abs() <= 1e-10;
    Ok(outcome(
        "weight_deviation_infimum",
        passed,
        format!(
            "non-uniform excess >= {min_excess:.3e}, balanced matrix matches within {:.1e}",
            (balanced_value - cyclic).abs()
        ),
    ))
}

fn encoder_moments_exact(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for (n, d) in [(5usize, 2usize), (6, 3), (7, 4)] {
        let ds = probe_dataset(opts.seed ^ n as u64, n, 3)?;
        let matrix = TaskMatrix::cyclic(n, d)?;
        for point in 0..3u64 {
            let model = probe_model(opts.seed, 3, point);
            let mu = ds.mean_gradient(&model)?;
            let moments = encoder_moments(&model, &ds, &matrix, MomentMode::Exact)?;
            for (a, b) in moments.mean.values().iter().zip(mu.values()) {
                worst_mean = worst_mean.max((a - b).abs());
            }
            let mut spread = 0.0;
            for k in 0..n {
                spread += ds.local_gradient(&model, k)?.distance_sq(&mu)?;
            }
            let closed =
                spread * (n - d) as f64 / (n as f64 * d as f64 * (n as f64 - 1.0));
            worst_var = worst_var.max((moments.mean_sq_deviation - closed).abs());
        }
    }
    let passed = worst_mean <= 1e-12 && worst_var <= 1e-12;
    Ok(outcome(
        "encoder_moments_exact",
        passed,
        format!("max mean error {worst_mean:.3e}, max variance-identity error {worst_var:.3e}"),
    ))
}

fn honest_average_factorization(opts: &VerifyOptions) -> Result<CheckOutcome> {
    // enumerated deviation == weight deviation * spread / (n - 1), for the
    // cyclic matrix and for an arbitrary member of the row-sum family
    let (n, h, d) = (6usize, 4usize, 2usize);
    let ds = probe_dataset(opts.seed ^ 77, n, 3)?;
    let model = probe_model(opts.seed ^ 77, 3, 0);
    let mu = ds.mean_gradient(&model)?;
    let mut spread = 0.0;
    for k in 0..n {
        spread += ds.local_gradient(&model, k)?.distance_sq(&mu)?;
    }
    let mut worst: f64 = 0.0;
    let cyclic = TaskMatrix::cyclic(n, d)?;
    let random = random_task_matrix(n, d, opts.seed, 7, true)?;
    for matrix in [&cyclic, &random] {
        let enumerated = honest_average_deviation_exact(&ds, &model, matrix, h)?;
        let predicted = weight_deviation_exact(matrix, h)? * spread / (n as f64 - 1.0);
        worst = worst.max((enumerated - predicted).abs());
    }
    Ok(outcome(
        "honest_average_factorization",
        worst <= 1e-12,
        format!("max |enumerated - factorized| = {worst:.3e}"),
    ))
}

fn honest_average_bound(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let (n, h, d) = (6usize, 4usize, 2usize);
    let ds = probe_dataset(opts.seed ^ 78, n, 3)?;
    let model = probe_model(opts.seed ^ 78, 3, 1);
    let matrix = TaskMatrix::cyclic(n, d)?;
    let enumerated = honest_average_deviation_exact(&ds, &model, &matrix, h)?;
    let beta_hat_sq = ds.heterogeneity_sq(&model)?;
    let grad = ds.full_gradient(&model)?;
    let bound = lemma_weight_deviation::<f64>(n, h, d)?
        * (n as f64 * beta_hat_sq + grad.norm_sq() / n as f64);
    Ok(outcome(
        "honest_average_bound",
        enumerated <= bound + 1e-12,
        format!("enumerated {enumerated:.6e} <= bound {bound:.6e}"),
    ))
}

fn cyclic_minimizes_honest_deviation(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let (n, h, d) = (6usize, 4usize, 2usize);
    let ds = probe_dataset(opts.seed ^ 79, n, 3)?;
    let model = probe_model(opts.seed ^ 79, 3, 2);
    let cyclic = honest_average_deviation_exact(&ds, &model, &TaskMatrix::cyclic(n, d)?, h)?;
    let mut min_other = f64::INFINITY;
    for i in 0..20u64 {
        let m = random_task_matrix(n, d, opts.seed ^ 79, i, true)?;
        min_other = min_other.min(honest_average_deviation_exact(&ds, &model, &m, h)?);
    }
    Ok(outcome(
        "cyclic_minimizes_honest_deviation",
        cyclic <= min_other + 1e-12,
        format!("cyclic {cyclic:.6e} <= best non-uniform {min_other:.6e}"),
    ))
}

fn sparsifier_enumeration(_opts: &VerifyOptions) -> Result<CheckOutcome> {
    // enumerate every keep-mask: Q = 4, keep 2 over a generic vector
    let (q, keep) = (4usize, 2usize);
    let g = ModelVector::from_values(vec![1.0, -2.0, 3.0, 0.5]);
    let factor = q as f64 / keep as f64;
    let mut masks = 0u32;
    let mut mean = vec![Compensated::<f64>::new(); q];
    let mut err = Compensated::<f64>::new();
    for_each_subset(q, keep, |kept| {
        masks += 1;
        let mut c = ModelVector::zeros(q);
        for &i in kept {
            c.values_mut()[i] = g.values()[i] * factor;
        }
        for (acc, &v) in mean.iter_mut().zip(c.values()) {
            acc.add(v);
        }
        err.add(c.distance_sq(&g).unwrap());
    });
    let mut worst_mean: f64 = 0.0;
    for (acc, &v) in mean.iter().zip(g.values()) {
        worst_mean = worst_mean.max((acc.value() / masks as f64 - v).abs());
    }
    let expected_err = (factor - 1.0) * g.norm_sq();
    let err_gap = (err.value() / masks as f64 - expected_err).abs();
    let passed = worst_mean <= 1e-12 && err_gap <= 1e-12;
    Ok(outcome(
        "sparsifier_enumeration",
        passed,
        format!("{masks} masks, mean error {worst_mean:.3e}, second-moment error {err_gap:.3e}"),
    ))
}

fn sparsifier_unbiased_mc(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let q = 8usize;
    let keep = 3usize;
    let c = Compressor::sparsify(q, keep)?;
    let g = probe_model(opts.seed ^ 80, q, 0);
    let m = opts.mc_samples.max(10_000);
    let mut mean = vec![0.0f64; q];
    for s in 0..m {
        let mut rng = RngStream::derive(opts.seed, StreamDomain::Probe, 13, s as u64);
        let out = c.compress(&g, &mut rng)?;
        for (acc, &v) in mean.iter_mut().zip(out.values()) {
            *acc += v;
        }
    }
    let delta = c.delta::<f64>();
    let mut worst_sigmas: f64 = 0.0;
    for (acc, &v) in mean.iter().zip(g.values()) {
        let se = (delta * v * v / m as f64).sqrt().max(1e-12);
        worst_sigmas = worst_sigmas.max((acc / m as f64 - v).abs() / se);
    }
    Ok(outcome(
        "sparsifier_unbiased_mc",
        worst_sigmas <= 4.0,
        format!("worst per-coordinate deviation {worst_sigmas:.2} sigma (limit 4)"),
    ))
}

fn quantizer_unbiased_mc(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let q = 6usize;
    let c = Compressor::stochastic_quantization(q);
    let g = ModelVector::from_values(vec![-1.5, -0.3, 0.0, 0.4, 0.9, 2.0]);
    let m = opts.mc_samples.max(10_000);
    let (lo, hi) = (-1.5f64, 2.0f64);
    let mut mean = vec![0.0f64; q];
    let mut in_range = true;
    for s in 0..m {
        let mut rng = RngStream::derive(opts.seed, StreamDomain::Probe, 14, s as u64);
        let out = c.compress(&g, &mut rng)?;
        for (acc, &v) in mean.iter_mut().zip(out.values()) {
            *acc += v;
            in_range &= v == lo || v == hi;
        }
    }
    let mut worst_sigmas: f64 = 0.0;
    for (acc, &v) in mean.iter().zip(g.values()) {
        let var = (v - lo) * (hi - v);
        let se = (var / m as f64).sqrt().max(1e-12);
        worst_sigmas = worst_sigmas.max((acc / m as f64 - v).abs() / se);
    }
    let passed = worst_sigmas <= 4.0 && in_range;
    Ok(outcome(
        "quantizer_unbiased_mc",
        passed,
        format!("worst deviation {worst_sigmas:.2} sigma, outputs at range ends: {in_range}"),
    ))
}

fn lemma_probe(opts: &VerifyOptions, compressor: Compressor) -> Result<analysis::LemmaBoundsReport> {
    let (n, h, d) = (12usize, 9usize, 3usize);
    let ds = probe_dataset(opts.seed ^ 81, n, 4)?;
    let model = probe_model(opts.seed ^ 81, 4, 3);
    let matrix = TaskMatrix::cyclic(n, d)?;
    let aggregator = Aggregator::cwtm(0.25)?;
    let attack = AttackPolicy::sign_flip(-2.0);
    let byz: Vec<usize> = (0..n - h).collect();
    let est = aggregator.estimate_kappa(n, h, 4, 400, opts.seed ^ 82, AdversaryPolicy::Battery)?;
    let kappa = (est.kappa_hat * 1.5).max(0.5);
    verify_lemma_bounds(
        &ds,
        &model,
        &matrix,
        &aggregator,
        &compressor,
        &attack,
        &byz,
        kappa,
        (opts.mc_samples / 10).max(2_000),
        opts.seed ^ 83,
    )
}

fn aggregation_deviation_bound_mc(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let report = lemma_probe(opts, Compressor::sparsify(4, 2)?)?;
    Ok(outcome(
        "aggregation_deviation_bound_mc",
        report.deviation_ok,
        format!(
            "mean {:.4e} (se {:.1e}) <= bound {:.4e}",
            report.deviation_mean, report.deviation_se, report.deviation_bound
        ),
    ))
}

fn honest_norm_bound_mc(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let report = lemma_probe(opts, Compressor::identity(4))?;
    Ok(outcome(
        "honest_norm_bound_mc",
        report.honest_norm_ok,
        format!(
            "mean {:.4e} (se {:.1e}) <= bound {:.4e}",
            report.honest_norm_mean, report.honest_norm_se, report.honest_norm_bound
        ),
    ))
}

fn constants_collapse(_opts: &VerifyOptions) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for (n, h, d, beta) in [(100usize, 65usize, 5usize, 1.0f64), (12, 7, 3, 0.4), (40, 31, 40, 2.0)]
    {
        let p = TheoryParams {
            n,
            h,
            d,
            kappa: 1.5,
            beta,
            delta: 0.0,
            smoothness: 1.0,
            gamma0: 1e-8,
            loss_gap: 1.0,
        };
        let c = compute_constants(&p)?;
        worst = worst
            .max((c.kappa1 - c.xi1).abs())
            .max((c.kappa2 - c.xi2).abs())
            .max((c.kappa3 - c.xi3).abs())
            .max((c.kappa4 - c.xi4).abs());
    }
    Ok(outcome(
        "constants_delta0_collapse",
        worst == 0.0,
        format!("max |k_i(0) - x_i| = {worst:.3e}"),
    ))
}

fn error_term_routes(_opts: &VerifyOptions) -> Result<CheckOutcome> {
    let p = TheoryParams::<f64> {
        n: 100,
        h: 80,
        d: 20,
        kappa: 1.5,
        beta: 1.0,
        delta: 0.7,
        smoothness: 1.0,
        gamma0: 1e-8,
        loss_gap: 1.0,
    };
    let (verbatim, limit) = uncompressed_error_both_routes(&p)?;
    let (a, b) = (verbatim.unwrap(), limit.unwrap());
    let rel = (a - b).abs() / a.abs().max(1.0);
    Ok(outcome(
        "uncompressed_error_term_routes",
        rel <= 1e-9,
        format!("published form {a:.9e} vs delta->0 limit {b:.9e} (rel {rel:.1e})"),
    ))
}

fn threshold_reference(_opts: &VerifyOptions) -> Result<CheckOutcome> {
    let t = analysis::d_threshold(100, 65, 1.5)?;
    Ok(outcome("load_threshold_reference", t == 3, format!("threshold(100,65,1.5) = {t}")))
}

fn frozen_model_update_unbiased(opts: &VerifyOptions) -> Result<CheckOutcome> {
    // no byzantines + mean rule: the expected update at a frozen model is
    // the average subset gradient
    let (n, d) = (10usize, 3usize);
    let ds = probe_dataset(opts.seed ^ 84, n, 4)?;
    let model = probe_model(opts.seed ^ 84, 4, 4);
    let matrix = TaskMatrix::cyclic(n, d)?;
    let mu = ds.mean_gradient(&model)?;
    let gradients: Vec<ModelVector<f64>> =
        (0..n).map(|k| ds.local_gradient(&model, k)).collect::<Result<_>>()?;
    let rule = Aggregator::mean();
    let m = (opts.mc_samples / 4).max(5_000);
    let mut mean = vec![Compensated::<f64>::new(); 4];
    for s in 0..m {
        let mut trng = RngStream::derive(opts.seed ^ 84, StreamDomain::TaskPerm, 2, s as u64);
        let mut prng = RngStream::derive(opts.seed ^ 84, StreamDomain::DataPerm, 2, s as u64);
        let assignment = crate::coding::Assignment::sample(&mut trng, &mut prng, n)?;
        let messages: Vec<ModelVector<f64>> = (0..n)
            .map(|dev| crate::coding::encode_from_cache(dev, &assignment, &matrix, &gradients))
            .collect::<Result<_>>()?;
        let update = rule.aggregate(&messages)?;
        for (acc, &v) in mean.iter_mut().zip(update.values()) {
            acc.add(v);
        }
    }
    // per-coordinate spread of a single coded vector bounds the update's;
    // use it as a generous scale for the 4-sigma band
    let mut spread = 0.0;
    for g in &gradients {
        spread += g.distance_sq(&mu)?;
    }
    let per_coord_var = spread / n as f64;
    let se = (per_coord_var / m as f64).sqrt();
    let mut worst: f64 = 0.0;
    for (acc, &v) in mean.iter().zip(mu.values()) {
        worst = worst.max((acc.value() / m as f64 - v).abs());
    }
    Ok(outcome(
        "frozen_model_update_unbiased",
        worst <= 4.0 * se,
        format!("worst coordinate deviation {worst:.3e} vs 4 sigma {:.3e}", 4.0 * se),
    ))
}

fn reduction_identities(_opts: &VerifyOptions) -> Result<CheckOutcome> {
    let base = ExperimentConfig {
        method: Method::Lad,
        n: 8,
        h: 6,
        d: 2,
        q: 5,
        iterations: 10,
        gamma: 1e-6,
        sigma_h: 0.2,
        samples_per_subset: 1,
        aggregator: "cwtm:0.13".into(),
        compressor: "identity".into(),
        attack: "signflip:-2".into(),
        schedule: "fixed".into(),
        seed: 11,
        x0_fill: 0.0,
        log_stride: 1,
        max_loss: 1e30,
    };
    let com = ExperimentConfig { method: Method::ComLad, ..base.clone() };
    let first = run(&base)?.same_trajectory(&run(&com)?);

    let full = ExperimentConfig {
        method: Method::Lad,
        d: 8,
        h: 8,
        aggregator: "mean".into(),
        attack: "none".into(),
        ..base.clone()
    };
    let oracle = ExperimentConfig { method: Method::Oracle, d: 1, ..full.clone() };
    let second = run(&full)?.same_trajectory(&run(&oracle)?);
    Ok(outcome(
        "reduction_identities",
        first && second,
        format!("identity-compressor match: {first}, full-load oracle match: {second}"),
    ))
}

fn oracle_descent_monotone(_opts: &VerifyOptions) -> Result<CheckOutcome> {
    let n = 20usize;
    let q = 8usize;
    let ds = Dataset::<f64>::generate_linear_regression(21, n, q, 0.3, 1)?;
    let smoothness = ds.smoothness_bound();
    let gamma = n as f64 / smoothness; // effective step 1/L < 2/L
    let cfg = ExperimentConfig {
        method: Method::Oracle,
        n,
        h: n,
        d: 1,
        q,
        iterations: 60,
        gamma,
        sigma_h: 0.3,
        samples_per_subset: 1,
        aggregator: "mean".into(),
        compressor: "identity".into(),
        attack: "none".into(),
        schedule: "fixed".into(),
        seed: 21,
        x0_fill: 0.0,
        log_stride: 1,
        max_loss: 1e30,
    };
    let rec = run(&cfg)?;
    let monotone = rec.rows.windows(2).all(|w| w[1].loss <= w[0].loss);
    Ok(outcome(
        "oracle_descent_monotone",
        monotone && !rec.diverged,
        format!("loss {:.3e} -> {:.3e} over {} iterations", rec.rows[0].loss, rec.final_loss(), 60),
    ))
}

fn stable_gamma_cross_check(_opts: &VerifyOptions) -> Result<CheckOutcome> {
    // run coded descent at half the theoretical stable rate; it must not
    // diverge
    let (n, h, d, q) = (100usize, 80usize, 20usize, 20usize);
    let ds = Dataset::<f64>::generate_linear_regression(31, n, q, 0.3, 1)?;
    let x0 = ModelVector::zeros(q);
    let params = TheoryParams {
        n,
        h,
        d,
        kappa: 1.5,
        beta: ds.heterogeneity_sq(&x0)?.sqrt(),
        delta: 0.0,
        smoothness: ds.smoothness_bound(),
        gamma0: 1e-12,
        loss_gap: 0.0,
    };
    let gamma_max = analysis::max_stable_gamma(&params, false)?;
    let cfg = ExperimentConfig {
        method: Method::Lad,
        n,
        h,
        d,
        q,
        iterations: 150,
        gamma: 0.5 * gamma_max,
        sigma_h: 0.3,
        samples_per_subset: 1,
        aggregator: "cwtm:0.1".into(),
        compressor: "identity".into(),
        attack: "signflip:-2".into(),
        schedule: "fixed".into(),
        seed: 31,
        x0_fill: 0.0,
        log_stride: 1,
        max_loss: 1e30,
    };
    let rec = run(&cfg)?;
    Ok(outcome(
        "stable_gamma_cross_check",
        !rec.diverged && rec.final_loss().is_finite(),
        format!("gamma = {:.3e} (half of bound {gamma_max:.3e}), final loss {:.3e}",
            0.5 * gamma_max, rec.final_loss()),
    ))
}

fn kappa_estimator_contracts(opts: &VerifyOptions) -> Result<CheckOutcome> {
    let mean_est = Aggregator::mean().estimate_kappa(
        10,
        7,
        6,
        100,
        opts.seed ^ 85,
        AdversaryPolicy::NormEscalationOnly,
    )?;
    let cwtm = Aggregator::cwtm(0.1)?;
    let a = cwtm.estimate_kappa(20, 18, 6, 2_000, opts.seed ^ 86, AdversaryPolicy::Battery)?;
    let b = cwtm.estimate_kappa(20, 18, 6, 2_000, opts.seed ^ 87, AdversaryPolicy::Battery)?;
    let stable = (a.kappa_hat - b.kappa_hat).abs() <= 0.2 * a.kappa_hat.max(b.kappa_hat);
    let passed = mean_est.unbounded && !a.unbounded && !b.unbounded && stable;
    Ok(outcome(
        "kappa_estimator_contracts",
        passed,
        format!(
            "mean unbounded: {}, cwtm estimates {:.3} / {:.3}",
            mean_est.unbounded, a.kappa_hat, b.kappa_hat
        ),
    ))
}
