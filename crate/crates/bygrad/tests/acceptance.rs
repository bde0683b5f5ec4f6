//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them). The experiment
//! criteria load the same preset files the CLI ships.

use std::time::Instant;

use bygrad::aggregation::{AdversaryPolicy, Aggregator};
use bygrad::analysis::{
    compute_constants, d_threshold, delta_curve, d_curve, lemma_weight_deviation,
    random_task_matrix, weight_deviation_exact, TheoryParams,
};
use bygrad::coding::{encoder_moments, MomentMode, TaskMatrix};
use bygrad::compression::Compressor;
use bygrad::config::TrainConfig;
use bygrad::data::{Dataset, Subset};
use bygrad::perm::for_each_subset;
use bygrad::rng::{RngStream, StreamDomain};
use bygrad::sim::{run, ExperimentConfig, Method, RunRecord};
use bygrad::vector::ModelVector;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_vector(seed: u64, tag: u64, dim: usize) -> ModelVector<f64> {
    let mut rng = RngStream::derive(seed, StreamDomain::Probe, 40, tag);
    ModelVector::from_values((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
}

fn probe_dataset(seed: u64, n: usize, dim: usize) -> Dataset<f64> {
    let subsets = (0..n)
        .map(|k| {
            let mut rng = RngStream::derive(seed, StreamDomain::Probe, 41, k as u64);
            let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let noise: f64 = StandardNormal.sample(&mut rng);
            let y = 2.0 * noise;
            Subset { features: vec![ModelVector::from_values(z)], labels: vec![y] }
        })
        .collect();
    Dataset::from_subsets(subsets).unwrap()
}

#[test]
fn criterion_01_weight_deviation_identity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for n in 2..=12usize {
        for h in (n / 2 + 1)..=n {
            for d in 1..=n {
                let matrix = TaskMatrix::cyclic(n, d).unwrap();
                let exact = weight_deviation_exact(&matrix, h).unwrap();
                let closed = lemma_weight_deviation::<f64>(n, h, d).unwrap();
                worst = worst.max((exact - closed).abs());
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = worst <= 1e-10 && elapsed.as_secs() < 30;
    println!(
        "{} criterion 1: weight-deviation identity over {cases} cases, max error {worst:.3e}, {elapsed:?}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "max error {worst:.3e}, elapsed {elapsed:?}");
}

#[test]
fn criterion_02_infimum_property() {
    let (n, h, d) = (6usize, 4usize, 2usize);
    let cyclic = weight_deviation_exact(&TaskMatrix::cyclic(n, d).unwrap(), h).unwrap();
    let mut min_excess = f64::INFINITY;
    for i in 0..100u64 {
        let m = random_task_matrix(n, d, 0xC2, i, true).unwrap();
        let v = weight_deviation_exact(&m, h).unwrap();
        min_excess = min_excess.min(v - cyclic);
    }
    // balanced (uniform column sums) but non-cyclic members attain equality
    let balanced = TaskMatrix::from_rows(
        n,
        vec![vec![0, 3], vec![1, 4], vec![2, 5], vec![0, 3], vec![1, 4], vec![2, 5]],
    )
    .unwrap();
    let shifted = TaskMatrix::from_rows(
        n,
        vec![vec![1, 2], vec![2, 3], vec![3, 4], vec![4, 5], vec![0, 5], vec![0, 1]],
    )
    .unwrap();
    let eq1 = (weight_deviation_exact(&balanced, h).unwrap() - cyclic).abs();
    let eq2 = (weight_deviation_exact(&shifted, h).unwrap() - cyclic).abs();
    let passed = min_excess > 1e-10 && eq1 <= 1e-10 && eq2 <= 1e-10;
    println!(
        "{} criterion 2: 100 non-uniform matrices all exceed the cyclic value (min excess {min_excess:.3e}); balanced matrices match ({eq1:.1e}, {eq2:.1e})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed);
}

#[test]
fn criterion_03_encoder_moments() {
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for (n, d) in [(5usize, 2usize), (6, 3), (7, 4), (7, 1), (6, 6)] {
        let ds = probe_dataset(0xC3 ^ n as u64, n, 4);
        let matrix = TaskMatrix::cyclic(n, d).unwrap();
        for point in 0..5u64 {
            let model = gaussian_vector(0xC3, point, 4);
            let mu = ds.mean_gradient(&model).unwrap();
            let moments = encoder_moments(&model, &ds, &matrix, MomentMode::Exact).unwrap();
            for (a, b) in moments.mean.values().iter().zip(mu.values()) {
                worst_mean = worst_mean.max((a - b).abs() / b.abs().max(1.0));
            }
            let mut spread = 0.0;
            for k in 0..n {
                spread += ds.local_gradient(&model, k).unwrap().distance_sq(&mu).unwrap();
            }
            let closed = spread * (n - d) as f64 / (n as f64 * d as f64 * (n as f64 - 1.0));
            worst_var =
                worst_var.max((moments.mean_sq_deviation - closed).abs() / closed.max(1.0));
        }
    }
    let passed = worst_mean <= 1e-12 && worst_var <= 1e-12;
    println!(
        "{} criterion 3: encoder unbiasedness (max {worst_mean:.3e}) and variance identity (max {worst_var:.3e})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed);
}

#[test]
fn criterion_04_compressor_contracts() {
    // exact mask enumeration for random sparsification
    let mut worst_mean: f64 = 0.0;
    let mut worst_second: f64 = 0.0;
    for (q, keep) in [(10usize, 3usize), (10, 7), (6, 2), (10, 10)] {
        let g = gaussian_vector(0xC4, (q * 100 + keep) as u64, q);
        let factor = q as f64 / keep as f64;
        let mut count = 0u64;
        let mut mean = vec![0.0f64; q];
        let mut second = 0.0f64;
        for_each_subset(q, keep, |kept| {
            count += 1;
            let mut c = ModelVector::zeros(q);
            for &i in kept {
                c.values_mut()[i] = g.values()[i] * factor;
            }
            for (acc, &v) in mean.iter_mut().zip(c.values()) {
                *acc += v;
            }
            second += c.distance_sq(&g).unwrap();
        });
        for (acc, &v) in mean.iter().zip(g.values()) {
            worst_mean = worst_mean.max((acc / count as f64 - v).abs() / v.abs().max(1.0));
        }
        let delta = Compressor::sparsify(q, keep).unwrap().delta::<f64>();
        let expected = delta * g.norm_sq();
        worst_second =
            worst_second.max((second / count as f64 - expected).abs() / expected.max(1.0));
    }
    // Monte Carlo unbiasedness for stochastic quantization
    let q = 6usize;
    let quant = Compressor::stochastic_quantization(q);
    let g = ModelVector::from_values(vec![-1.5, -0.3, 0.0, 0.4, 0.9, 2.0]);
    let (lo, hi) = (-1.5f64, 2.0f64);
    let m = 100_000usize;
    let mut mean = vec![0.0f64; q];
    for s in 0..m {
        let mut rng = RngStream::derive(0xC4, StreamDomain::Probe, 42, s as u64);
        let out = quant.compress(&g, &mut rng).unwrap();
        for (acc, &v) in mean.iter_mut().zip(out.values()) {
            *acc += v;
        }
    }
    let mut worst_sigmas: f64 = 0.0;
    for (acc, &v) in mean.iter().zip(g.values()) {
        let se = ((v - lo) * (hi - v) / m as f64).sqrt().max(1e-12);
        worst_sigmas = worst_sigmas.max((acc / m as f64 - v).abs() / se);
    }
    let passed = worst_mean <= 1e-12 && worst_second <= 1e-12 && worst_sigmas <= 4.0;
    println!(
        "{} criterion 4: sparsifier enumeration (mean {worst_mean:.3e}, second moment {worst_second:.3e}), quantizer within {worst_sigmas:.2} sigma",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed);
}

mod rational_oracle {
    //! Independent evaluation of the closed-form constants in exact
    //! big-rational arithmetic, kept separate from the library path.

    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;

    fn r(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    pub struct RationalConstants {
        pub values: [f64; 8],
    }

    pub fn constants(
        n: i64,
        h: i64,
        d: i64,
        beta_num: i64,
        beta_den: i64,
        delta_num: i64,
        delta_den: i64,
    ) -> RationalConstants {
        let beta = BigRational::new(BigInt::from(beta_num), BigInt::from(beta_den));
        let delta = BigRational::new(BigInt::from(delta_num), BigInt::from(delta_den));
        let beta_sq = &beta * &beta;
        let comp = (r(1) / r(h) + r(1)) * r(4) * &delta / r(d);
        let spread = r(4 * (n - d) * n) / r(d * h * (n - 1));
        let balance = r(4 * (n - h) * (n - d)) / r(d * h * (n - 1) * n);
        let k1 = r(n) * &beta_sq * &comp + &beta_sq * &spread;
        let k2 = (&comp + &balance) / r(n);
        let k3 = (r(4) * &delta / r(h * d) + &balance) * r(n) * &beta_sq;
        let k4 = r(2) / r(n * n) + r(4) * &delta / r(h * d * n) + &balance / r(n);
        let x1 = &beta_sq * &spread;
        let x2 = &balance / r(n);
        let x3 = &balance * r(n) * &beta_sq;
        let x4 = r(2) / r(n * n) + &balance / r(n);
        RationalConstants {
            values: [
                k1.to_f64().unwrap(),
                k2.to_f64().unwrap(),
                k3.to_f64().unwrap(),
                k4.to_f64().unwrap(),
                x1.to_f64().unwrap(),
                x2.to_f64().unwrap(),
                x3.to_f64().unwrap(),
                x4.to_f64().unwrap(),
            ],
        }
    }
}

#[test]
fn criterion_05_theory_constants_and_curves() {
    // 20 random parameter points against the rational oracle
    let mut rng = RngStream::derive(0xC5, StreamDomain::Probe, 43, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(3..=60i64);
        let h = rng.random_range(n / 2 + 1..=n);
        let d = rng.random_range(1..=n);
        let (bn, bd) = (rng.random_range(1..=40i64), rng.random_range(1..=20i64));
        let (dn, dd) = (rng.random_range(0..=30i64), rng.random_range(1..=10i64));
        let p = TheoryParams::<f64> {
            n: n as usize,
            h: h as usize,
            d: d as usize,
            kappa: 1.0,
            beta: bn as f64 / bd as f64,
            delta: dn as f64 / dd as f64,
            smoothness: 1.0,
            gamma0: 1e-9,
            loss_gap: 1.0,
        };
        let c = compute_constants(&p).unwrap();
        let oracle = rational_oracle::constants(n, h, d, bn, bd, dn, dd);
        let got = [c.kappa1, c.kappa2, c.kappa3, c.kappa4, c.xi1, c.xi2, c.xi3, c.xi4];
        for (a, b) in got.iter().zip(oracle.values.iter()) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }

    // exact collapse at delta = 0
    let p0 = TheoryParams::<f64> {
        n: 100,
        h: 65,
        d: 5,
        kappa: 1.5,
        beta: 1.0,
        delta: 0.0,
        smoothness: 1.0,
        gamma0: 1e-9,
        loss_gap: 1.0,
    };
    let c0 = compute_constants(&p0).unwrap();
    let collapse = c0.kappa1 == c0.xi1
        && c0.kappa2 == c0.xi2
        && c0.kappa3 == c0.xi3
        && c0.kappa4 == c0.xi4;

    // curve monotonicity at the reference parameters
    let base = TheoryParams::<f64> { delta: 0.5, ..p0 };
    let deltas: Vec<f64> = (0..=60).map(|i| i as f64 * 0.05).collect();
    let dc = delta_curve(&base, &deltas).unwrap();
    let delta_monotone = dc.windows(2).all(|w| w[1].1 > w[0].1);
    let loads: Vec<usize> = (1..=100).collect();
    let lc = d_curve(&base, &loads).unwrap();
    let load_monotone = lc.windows(2).all(|w| w[1].1 < w[0].1);

    let threshold = d_threshold(100, 65, 1.5).unwrap();
    let passed =
        worst <= 1e-12 && collapse && delta_monotone && load_monotone && threshold == 3;
    println!(
        "{} criterion 5: oracle agreement {worst:.3e}, exact collapse {collapse}, delta-curve rising {delta_monotone}, load-curve falling {load_monotone}, threshold {threshold}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed);
}

fn preset(text: &str) -> Vec<(String, ExperimentConfig)> {
    TrainConfig::parse(text)
        .unwrap()
        .expand()
        .unwrap()
        .into_iter()
        .map(|e| (e.label, e.config))
        .collect()
}

fn finals_by_label(entries: &[(String, ExperimentConfig)]) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (label, config) in entries {
        let record = run(config).unwrap();
        assert!(!record.diverged, "{label} diverged");
        match out.iter_mut().find(|(l, _)| l == label) {
            Some((_, v)) => v.push(record.final_loss()),
            None => out.push((label.clone(), vec![record.final_loss()])),
        }
    }
    out
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

struct Leg {
    name: String,
    holds_median: bool,
    seed_wins: usize,
    seeds: usize,
}

fn strict_leg(finals: &[(String, Vec<f64>)], hi: &str, lo: &str) -> Leg {
    let a = &finals.iter().find(|(l, _)| l == hi).unwrap().1;
    let b = &finals.iter().find(|(l, _)| l == lo).unwrap().1;
    Leg {
        name: format!("{hi} > {lo}"),
        holds_median: median(a) > median(b),
        seed_wins: a.iter().zip(b.iter()).filter(|(x, y)| x > y).count(),
        seeds: a.len(),
    }
}

// A note on the two vanilla-averaging legs (criterion 6's "va > cwtm" and
// criterion 8's "com_va worst"): with per-iteration randomized assignment,
// the subsets flipped by the Byzantine devices are a fresh uniform sample
// each iteration, so the expected mean-aggregated update is exactly
// (h - 2(n-h))/n times the average subset gradient — an unbiased,
// attenuated descent direction (0.4x at h=80, 0.1x at h=70). Its noise
// enters the loss only at second order in the learning rate (~1e-4 of the
// drift here), so vanilla averaging descends at least as fast as the
// trimmed mean, whose trimming attenuates the drift below that, at every
// horizon. Drift measurements and long-horizon sweeps (gamma scaled up to
// 4e-3) confirm the inversion is structural, not a tuning artifact: these
// two legs are expected to fail, and the asserts are kept strict on
// purpose. Making averaging collapse would require the Byzantine subsets
// to persist across iterations, which contradicts the randomized
// single-subset baseline this suite pins down in criterion 9.
#[test]
fn criterion_06_uncompressed_orderings() {
    let start = Instant::now();
    let entries = preset(include_str!("../../../presets/fig4.toml"));
    let finals = finals_by_label(&entries);
    for (label, v) in &finals {
        println!("  {label}: median {:.4e}", median(v));
    }
    let legs = [
        strict_leg(&finals, "va", "cwtm"),
        strict_leg(&finals, "cwtm", "lad_cwtm_d10"),
        strict_leg(&finals, "lad_cwtm_d10", "lad_cwtm_nnm_d10"),
        strict_leg(&finals, "lad_cwtm_d5", "lad_cwtm_d10"),
        strict_leg(&finals, "lad_cwtm_d10", "lad_cwtm_d20"),
    ];
    let mut ok = true;
    for leg in &legs {
        let leg_ok = leg.holds_median && leg.seed_wins * 5 >= 4 * leg.seeds;
        ok &= leg_ok;
        println!(
            "  {} leg {}: median {}, {}/{} seeds",
            if leg_ok { "ok  " } else { "FAIL" },
            leg.name,
            leg.holds_median,
            leg.seed_wins,
            leg.seeds
        );
    }
    let nnm = &finals.iter().find(|(l, _)| l == "lad_cwtm_nnm_d10").unwrap().1;
    let oracle = &finals.iter().find(|(l, _)| l == "oracle").unwrap().1;
    let weak_ok = median(nnm) >= median(oracle);
    println!("  {} leg lad_cwtm_nnm_d10 >= oracle: median {}", if weak_ok { "ok  " } else { "FAIL" }, weak_ok);
    ok &= weak_ok;
    let elapsed = start.elapsed();
    ok &= elapsed.as_secs() < 600;
    println!("{} criterion 6: uncompressed orderings ({elapsed:?})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "see leg report above");
}

#[test]
fn criterion_07_heterogeneity_sensitivity() {
    let wanted = |entries: Vec<(String, ExperimentConfig)>| -> Vec<(String, ExperimentConfig)> {
        entries
            .into_iter()
            .filter(|(l, _)| l == "cwtm" || l == "lad_cwtm_d10")
            .collect()
    };
    let iid = finals_by_label(&wanted(preset(include_str!("../../../presets/fig5a.toml"))));
    let het = finals_by_label(&wanted(preset(include_str!("../../../presets/fig5b.toml"))));
    let gap = |finals: &[(String, Vec<f64>)]| -> f64 {
        let c = median(&finals.iter().find(|(l, _)| l == "cwtm").unwrap().1);
        let l = median(&finals.iter().find(|(l, _)| l == "lad_cwtm_d10").unwrap().1);
        c / l
    };
    let (g0, g1) = (gap(&iid), gap(&het));
    let passed = g1 > g0;
    println!(
        "{} criterion 7: trimmed-mean/coded loss ratio {g0:.4} at sigma_h=0 vs {g1:.4} at sigma_h=0.1",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed);
}

#[test]
fn criterion_08_compressed_orderings() {
    let entries = preset(include_str!("../../../presets/fig7.toml"));
    let finals = finals_by_label(&entries);
    for (label, v) in &finals {
        println!("  {label}: median {:.4e}", median(v));
    }
    let va = median(&finals.iter().find(|(l, _)| l == "com_va").unwrap().1);
    let mut ok = true;
    for (label, v) in &finals {
        if label != "com_va" {
            let worst = va > median(v);
            if !worst {
                println!("  FAIL leg com_va > {label}");
            }
            ok &= worst;
        }
    }
    for (hi, lo) in [
        ("com_tgn", "com_lad_cwtm_nnm_d3"),
        ("com_cwtm_nnm", "com_lad_cwtm_nnm_d3"),
        ("com_cwtm", "com_cwtm_nnm"),
    ] {
        let a = median(&finals.iter().find(|(l, _)| l == hi).unwrap().1);
        let b = median(&finals.iter().find(|(l, _)| l == lo).unwrap().1);
        let leg_ok = a > b;
        println!("  {} leg {hi} > {lo}", if leg_ok { "ok  " } else { "FAIL" });
        ok &= leg_ok;
    }
    println!("{} criterion 8: compressed orderings", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "see leg report above");
}

#[test]
fn criterion_09_reduction_identities() {
    let base = ExperimentConfig {
        method: Method::Lad,
        n: 12,
        h: 9,
        d: 3,
        q: 8,
        iterations: 25,
        gamma: 1e-6,
        sigma_h: 0.25,
        samples_per_subset: 1,
        aggregator: "cwtm:0.1".into(),
        compressor: "identity".into(),
        attack: "signflip:-2".into(),
        schedule: "fixed".into(),
        seed: 77,
        x0_fill: 0.0,
        log_stride: 1,
        max_loss: 1e30,
    };
    let com = ExperimentConfig { method: Method::ComLad, ..base.clone() };
    let first = run(&base).unwrap().same_trajectory(&run(&com).unwrap());

    let full = ExperimentConfig {
        method: Method::Lad,
        n: 10,
        h: 10,
        d: 10,
        aggregator: "mean".into(),
        attack: "none".into(),
        ..base.clone()
    };
    let oracle = ExperimentConfig { method: Method::Oracle, d: 1, ..full.clone() };
    let ra: RunRecord = run(&full).unwrap();
    let rb: RunRecord = run(&oracle).unwrap();
    let second = ra.same_trajectory(&rb);
    let passed = first && second;
    println!(
        "{} criterion 9: identity-compressor reduction {first}, full-load oracle reduction {second}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed);
}

#[test]
fn criterion_10_kappa_estimator() {
    let mean_est = Aggregator::mean()
        .estimate_kappa(100, 90, 8, 60, 0xC10, AdversaryPolicy::NormEscalationOnly)
        .unwrap();
    let cwtm = Aggregator::cwtm(0.1).unwrap();
    let a = cwtm.estimate_kappa(100, 90, 8, 10_000, 0xC11, AdversaryPolicy::Battery).unwrap();
    let b = cwtm.estimate_kappa(100, 90, 8, 10_000, 0xC12, AdversaryPolicy::Battery).unwrap();
    let stable = (a.kappa_hat - b.kappa_hat).abs() <= 0.2 * a.kappa_hat.max(b.kappa_hat);
    let passed = mean_est.unbounded
        && !a.unbounded
        && !b.unbounded
        && a.kappa_hat.is_finite()
        && b.kappa_hat.is_finite()
        && stable;
    println!(
        "{} criterion 10: mean flagged unbounded {}, trimmed-mean estimates {:.4}/{:.4} within 20%",
        if passed { "PASS" } else { "FAIL" },
        mean_est.unbounded,
        a.kappa_hat,
        b.kappa_hat
    );
    assert!(passed);
}
