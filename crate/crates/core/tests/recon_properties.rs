use proptest::prelude::*;
use proxyrecon::pseudoproxy::{generate_truth, run_benchmark, PseudoproxySpec, SignalConfig};
use proxyrecon::recon::{
    fit_lasso, fit_ols_pc, fit_pca, lambda_max, regem, select_k, HybridConfig, KRule, Method, MethodConfig, RegemConfig,
};
use proxyrecon::{TimeSeries, YearMatrix};

/// Deterministic pseudo-random matrix with `p` correlated columns over
/// 1000..1000+n.
fn matrix(seed: u64, n: usize, p: usize) -> YearMatrix {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let base: Vec<f64> = (0..n * p).map(|_| next()).collect();
    let cols: Vec<TimeSeries> = (0..p)
        .map(|j| {
            let v = (0..n)
                .map(|t| base[t * p + j] + 0.5 * base[t * p + (j + 1) % p] + 0.1 * j as f64)
                .collect();
            TimeSeries::from_values(1000, v).unwrap()
        })
        .collect();
    YearMatrix::from_series(1000, 1000 + n as i32 - 1, cols.iter().enumerate().map(|(j, s)| (format!("x{j}"), s)))
}

fn column(m: &YearMatrix, j: usize) -> Vec<f64> {
    m.data().column(j).iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_loadings_orthonormal_and_variance_sorted(seed in any::<u64>(), n in 40usize..120, p in 2usize..10) {
        let m = matrix(seed, n, p);
        let basis = fit_pca(&m, (1000, 1000 + n as i32 - 1)).unwrap();
        let l = basis.loadings();
        let gram = l.transpose() * l;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - expected).abs() < 1e-8);
            }
        }
        let ev = basis.explained_variance();
        prop_assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(ev.iter().sum::<f64>() <= 1.0 + 1e-8);
    }

    #[test]
    fn ols_residuals_orthogonal_to_scores(seed in any::<u64>(), p in 2usize..8, k_pick in 0usize..8) {
        let n = 150;
        let m = matrix(seed, n, p);
        let cal = (1050, 1149);
        let y: Vec<f64> = (0..n).map(|t| column(&m, 0)[t] * 0.7 + ((t * 7919) % 13) as f64 * 0.05).collect();
        let target = TimeSeries::from_values(1000, y).unwrap();
        let basis = fit_pca(&m, cal).unwrap();
        let k = 1 + k_pick % p;
        let model = fit_ols_pc(&basis, &target, k, cal).unwrap();
        prop_assert_eq!(model.k, Some(k));
        prop_assert_eq!(model.coefficients.len(), k);
        prop_assert!(model.residual_variance >= 0.0);
        let scores = basis.scores();
        for j in 0..k {
            let dot: f64 = (cal.0..=cal.1)
                .map(|year| {
                    let fitted = model.intercept
                        + (0..k).map(|c| model.coefficients[c] * scores.get(year, c).unwrap()).sum::<f64>();
                    scores.get(year, j).unwrap() * (target.get(year).unwrap() - fitted)
                })
                .sum();
            prop_assert!(dot.abs() < 1e-6, "component {}: {}", j, dot);
        }
    }

    #[test]
    fn full_k_recovers_noise_free_linear_target(seed in any::<u64>(), p in 2usize..8, w in prop::collection::vec(-2.0f64..2.0, 8)) {
        let n = 140;
        let m = matrix(seed, n, p);
        let y: Vec<f64> = (0..n).map(|t| 0.25 + (0..p).map(|j| w[j] * m.data()[(t, j)]).sum::<f64>()).collect();
        let target = TimeSeries::from_values(1000, y).unwrap();
        let cal = (1040, 1139);
        let basis = fit_pca(&m, cal).unwrap();
        let model = fit_ols_pc(&basis, &target, p, cal).unwrap();
        prop_assert!(model.residual_variance < 1e-12, "{}", model.residual_variance);
    }

    #[test]
    fn lasso_sparsity_monotone_in_penalty(seed in any::<u64>(), p in 2usize..8, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let n = 120;
        let m = matrix(seed, n, p);
        let y: Vec<f64> = (0..n).map(|t| m.data()[(t, 0)] - 0.5 * m.data()[(t, p - 1)] + ((t * 31) % 7) as f64 * 0.1).collect();
        let target = TimeSeries::from_values(1000, y).unwrap();
        let cal = (1000, 1119);
        let lmax = lambda_max(&m, &target, cal).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let nonzero = |l: f64| fit_lasso(&m, &target, l * lmax, cal).unwrap().coefficients.iter().filter(|&&c| c != 0.0).count();
        prop_assert!(nonzero(hi) <= nonzero(lo));
    }

    #[test]
    fn single_pc_target_selects_one(seed in any::<u64>(), p in 3usize..8, max_k in 1usize..8) {
        let n = 200;
        let m = matrix(seed, n, p);
        let cal = (1080, 1199);
        let basis = fit_pca(&m, cal).unwrap();
        let target = basis.scores().column_series(0);
        let k = select_k(&basis, &target, max_k.min(p), cal, KRule::default()).unwrap().k;
        prop_assert_eq!(k, 1);
    }

    #[test]
    fn regem_leaves_complete_data_unchanged(seed in any::<u64>(), n in 10usize..60, p in 2usize..6) {
        let m = matrix(seed, n, p);
        let fit = regem(&m, &RegemConfig::default()).unwrap();
        prop_assert_eq!(fit.completed, m);
        prop_assert_eq!(fit.iterations, 0);
    }
}

#[test]
fn rmse_falls_as_snr_rises() {
    let field = generate_truth(60, (1000, 1980), &SignalConfig::default(), 41).unwrap();
    let patient = RegemConfig {
        max_iterations: 5000,
        ..RegemConfig::default()
    };
    let methods = [
        MethodConfig::default_for(Method::Lasso),
        MethodConfig::default_for(Method::OlsPc),
        MethodConfig::Regem(patient.clone()),
        MethodConfig::RegemHybrid(HybridConfig {
            regem: patient,
            ..HybridConfig::default()
        }),
    ];
    let snrs = [0.4, 1.0, 4.0, f64::INFINITY];
    let medians: Vec<Vec<f64>> = snrs
        .iter()
        .map(|&snr| {
            let report = run_benchmark(&field, &PseudoproxySpec::new(30, snr, 0), &methods, 3, 9).unwrap();
            methods
                .iter()
                .map(|m| report.median_of(m.method(), |s| s.rmse).expect("successful replicates"))
                .collect()
        })
        .collect();
    for (i, m) in methods.iter().enumerate() {
        let curve: Vec<f64> = medians.iter().map(|row| row[i]).collect();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]), "{}: {curve:?}", m.method());
    }
}
