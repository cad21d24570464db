//! Property tests for the numeric core.

use mmscreen::io::{load_matrix, save_matrix, ExpressionMatrix, MatrixFormat};
use mmscreen::mmtest::{init_params, mm_update, MmFitState};
use mmscreen::qlik::{quadrature_oracle, quasi_loglik, VarianceModel};
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Q is non-positive and the closed forms track the quadrature oracle.
    #[test]
    fn quasi_loglik_matches_oracle(
        x in 0.0f64..60.0,
        mu in 0.05f64..30.0,
        phi in 0.01f64..3.0,
        qnb in any::<bool>(),
    ) {
        let model = if qnb { VarianceModel::QuasiNegBinomial } else { VarianceModel::QuasiPoisson };
        let q = quasi_loglik(&model, x, mu, phi).unwrap();
        prop_assert!(q <= 1e-12, "Q = {q} must be non-positive");
        let tol = 1e-12 + 1e-10 * q.abs();
        let oracle = quadrature_oracle(&model, x, mu, phi, tol).unwrap();
        let ok = if q.abs() < 1.0 {
            (q - oracle).abs() <= 1e-9
        } else {
            ((q - oracle) / oracle).abs() <= 1e-8
        };
        prop_assert!(ok, "closed {q} vs oracle {oracle}");
    }

    /// Every update step ascends the quasi-log-likelihood and keeps the
    /// mixture weights on the simplex.
    #[test]
    fn mm_updates_ascend(
        raw in prop::collection::vec(0u32..40, 20..80),
        k in 2usize..4,
        phi in 0.05f64..2.0,
        seed in any::<u64>(),
    ) {
        let x: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
        prop_assume!(x.iter().any(|&v| v != 0.0));
        let mut rng = mmscreen::rng::stream(seed, 1, 0);
        let (alpha, mu) = init_params(&x, k, &mut rng, 1e-8);
        let model = VarianceModel::QuasiNegBinomial;
        let mut state = MmFitState {
            resp: vec![0.0; x.len() * alpha.len()],
            loglik_trace: vec![],
            alpha,
            mu,
        };
        // seed the trace with the initial quasi-log-likelihood
        let l0: f64 = x
            .iter()
            .map(|&xi| {
                let mix: f64 = state
                    .alpha
                    .iter()
                    .zip(&state.mu)
                    .map(|(&a, &m)| a * quasi_loglik(&model, xi, m, phi).unwrap().exp())
                    .sum();
                mix.ln()
            })
            .sum();
        state.loglik_trace.push(l0);
        for _ in 0..8 {
            mm_update(&mut state, &x, phi, &model, 1e-8).unwrap();
        }
        for w in state.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        let sum: f64 = state.alpha.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(state.alpha.iter().all(|&a| a >= 0.0));
    }

    /// Dense and sparse writer/reader pairs are lossless for finite
    /// non-negative values.
    #[test]
    fn matrix_round_trip_is_lossless(
        cells in prop::collection::vec(0.0f64..1e12, 6..24),
        sparse in any::<bool>(),
    ) {
        let n = 3;
        let p = cells.len() / n;
        let values = Array2::from_shape_vec((n, p), cells[..n * p].to_vec()).unwrap();
        let m = ExpressionMatrix::new(
            values,
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..p).map(|j| format!("g{j}")).collect(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let format = if sparse { MatrixFormat::SparseTriplet } else { MatrixFormat::DenseDelimited };
        save_matrix(&m, &path, format).unwrap();
        let loaded = load_matrix(&path, format).unwrap();
        prop_assert_eq!(loaded.spot_ids, m.spot_ids);
        prop_assert_eq!(loaded.gene_ids, m.gene_ids);
        for (a, b) in loaded.values.iter().zip(m.values.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits(), "{} != {}", a, b);
        }
    }
}
