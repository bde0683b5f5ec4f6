//! Property tests for the structural invariants.

use proptest::prelude::*;

use bygrad::aggregation::Aggregator;
use bygrad::coding::TaskMatrix;
use bygrad::compression::Compressor;
use bygrad::perm::Permutation;
use bygrad::rng::{RngStream, StreamDomain};
use bygrad::vector::ModelVector;

fn finite_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e6f64..1e6, dim)
}

proptest! {
    #[test]
    fn permutation_is_bijection(n in 1usize..60, seed in any::<u64>(), t in 0u64..1000) {
        let mut rng = RngStream::derive(seed, StreamDomain::TaskPerm, 0, t);
        let p = Permutation::sample(&mut rng, n).unwrap();
        let mut seen = vec![false; n];
        for i in 0..n {
            let v = p.apply(i);
            prop_assert!(v < n && !seen[v]);
            seen[v] = true;
        }
    }

    #[test]
    fn cyclic_matrix_row_and_column_sums(n in 1usize..40, d_frac in 0.0f64..1.0) {
        let d = 1 + (d_frac * (n as f64 - 1.0)) as usize;
        let m = TaskMatrix::cyclic(n, d).unwrap();
        for r in 0..n {
            prop_assert_eq!(m.row(r).len(), d);
        }
        prop_assert!(m.column_sums().iter().all(|&s| s == d));
    }

    #[test]
    fn trimmed_mean_stays_in_coordinate_box(
        rows in prop::collection::vec(finite_vec(4), 3..20),
        alpha in 0.0f64..0.3,
    ) {
        let msgs: Vec<ModelVector<f64>> =
            rows.iter().map(|r| ModelVector::from_values(r.clone())).collect();
        let agg = Aggregator::cwtm(alpha).unwrap();
        if let Ok(out) = agg.aggregate(&msgs) {
            for q in 0..4 {
                let lo = rows.iter().map(|r| r[q]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[q]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.values()[q] >= lo - 1e-9 && out.values()[q] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn norm_threshold_stays_in_coordinate_box(
        rows in prop::collection::vec(finite_vec(3), 2..15),
        tau in 0.0f64..0.5,
    ) {
        let msgs: Vec<ModelVector<f64>> =
            rows.iter().map(|r| ModelVector::from_values(r.clone())).collect();
        let agg = Aggregator::tgn(tau).unwrap();
        if let Ok(out) = agg.aggregate(&msgs) {
            for q in 0..3 {
                let lo = rows.iter().map(|r| r[q]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[q]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.values()[q] >= lo - 1e-9 && out.values()[q] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn sparsifier_keeps_exact_count_with_uniform_scale(
        values in finite_vec(12),
        keep in 1usize..=12,
        seed in any::<u64>(),
    ) {
        let g = ModelVector::from_values(values.clone());
        let c = Compressor::sparsify(12, keep).unwrap();
        let mut rng = RngStream::derive(seed, StreamDomain::Compress, 0, 0);
        let out = c.compress(&g, &mut rng).unwrap();
        let factor = 12.0 / keep as f64;
        let mut kept = 0usize;
        for q in 0..12 {
            let o = out.values()[q];
            if o != 0.0 {
                prop_assert_eq!(o, g.values()[q] * factor);
                kept += 1;
            }
        }
        // kept coordinates holding an exact zero are indistinguishable from
        // dropped ones, so only bound the count
        let zero_inputs = values.iter().filter(|&&v| v == 0.0).count();
        prop_assert!(kept <= keep && kept + zero_inputs >= keep);
    }

    #[test]
    fn consensus_fixed_point_for_nnm(values in finite_vec(5), n in 3usize..12) {
        // integer-valued consensus input keeps the averages exact
        let v = ModelVector::from_values(values.iter().map(|x| x.round()).collect());
        let msgs = vec![v.clone(); n];
        let agg = Aggregator::nnm_then(Aggregator::mean(), n / 3);
        let out = agg.aggregate(&msgs).unwrap();
        for (a, b) in out.values().iter().zip(v.values()) {
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}
