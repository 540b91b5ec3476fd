use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proxyrecon::pseudoproxy::ar1_noise;
use proxyrecon::recon::{fit_ols_pc, fit_pca, PcaBasis, ReconModel};
use proxyrecon::uncertainty::{build_ensemble, calibration_design, prob_warmest_decade, sample_coefficients, Ensemble, NoiseMode};
use proxyrecon::{TimeSeries, YearMatrix};

fn ensemble_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..12, 2usize..7).prop_flat_map(|(draws, blocks)| {
        (Just(draws), Just(blocks), prop::collection::vec(-3.0f64..3.0, draws * blocks * 10))
    })
}

fn block_wins(v: &[f64], draws: usize, blocks: usize, target: usize) -> usize {
    let years = blocks * 10;
    (0..draws)
        .filter(|&i| {
            let mean = |b: usize| v[i * years + 10 * b..i * years + 10 * b + 10].iter().sum::<f64>() / 10.0;
            (0..blocks).filter(|&b| b != target).all(|b| mean(target) > mean(b))
        })
        .count()
}

proptest! {
    #[test]
    fn probability_is_an_exact_draw_fraction((draws, blocks, v) in ensemble_strategy(), pick in 0usize..7) {
        let target = pick % blocks;
        let m = DMatrix::from_row_slice(draws, blocks * 10, &v);
        let e = Ensemble::new(1000, m, "p", 0).unwrap();
        let start = 1000 + 10 * target as i32;
        let p = prob_warmest_decade(&e, (start, start + 9)).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p, block_wins(&v, draws, blocks, target) as f64 / draws as f64);
    }

    #[test]
    fn upward_shift_never_lowers_probability((draws, blocks, v) in ensemble_strategy(), pick in 0usize..7, delta in 0.0f64..2.0) {
        let target = pick % blocks;
        let start = 1000 + 10 * target as i32;
        let base = DMatrix::from_row_slice(draws, blocks * 10, &v);
        let mut shifted = base.clone();
        shifted.columns_mut(10 * target, 10).add_scalar_mut(delta);
        let p0 = prob_warmest_decade(&Ensemble::new(1000, base, "p", 0).unwrap(), (start, start + 9)).unwrap();
        let p1 = prob_warmest_decade(&Ensemble::new(1000, shifted, "p", 0).unwrap(), (start, start + 9)).unwrap();
        prop_assert!(p1 >= p0);
    }
}

/// Three-record network over 1000..1199 with a target over the last 100
/// years, fitted with `k` components.
fn fitted(seed: u64, k: usize) -> (PcaBasis, ReconModel, TimeSeries) {
    let n = 200;
    let cols: Vec<TimeSeries> = (0..3).map(|j| ar1_noise(1000, n, 0.3, 1.0, seed + j).unwrap()).collect();
    let m = YearMatrix::from_series(1000, 1199, cols.iter().enumerate().map(|(j, s)| (format!("x{j}"), s)));
    let noise = ar1_noise(1000, n, 0.0, 0.4, seed + 99).unwrap();
    let y: Vec<f64> = (0..n).map(|t| 0.2 + 0.6 * m.data()[(t, 0)] - 0.3 * m.data()[(t, 2)] + noise.values()[t]).collect();
    let target = TimeSeries::from_values(1000, y).unwrap();
    let cal = (1100, 1199);
    let basis = fit_pca(&m, cal).unwrap();
    let model = fit_ols_pc(&basis, &target, k, cal).unwrap();
    (basis, model, target)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ensembles_are_seed_reproducible(seed in 0u64..1000, k in 1usize..4, draw_seed in any::<u64>()) {
        let (basis, model, target) = fitted(seed, k);
        let (x, y) = calibration_design(basis.scores(), &target, &model).unwrap();
        let a = sample_coefficients(&model, &x, &y, 50, draw_seed).unwrap();
        let b = sample_coefficients(&model, &x, &y, 50, draw_seed).unwrap();
        prop_assert_eq!(&a.beta, &b.beta);
        for noise in [NoiseMode::CoefficientsOnly, NoiseMode::PlusResidualNoise] {
            let e1 = build_ensemble(&a, basis.scores(), noise, draw_seed, "e").unwrap();
            let e2 = build_ensemble(&b, basis.scores(), noise, draw_seed, "e").unwrap();
            prop_assert_eq!(e1.draws(), e2.draws());
        }
    }
}

#[test]
fn ensemble_variance_matches_posterior_covariance() {
    let (basis, model, target) = fitted(7, 3);
    let (x, y) = calibration_design(basis.scores(), &target, &model).unwrap();
    let n_draws = 20_000;
    let draws = sample_coefficients(&model, &x, &y, n_draws, 11).unwrap();
    let e = build_ensemble(&draws, basis.scores(), NoiseMode::CoefficientsOnly, 11, "e").unwrap();

    // Jeffreys posterior: Cov(β) = SSE/(n − p − 2) · (XᵀX)⁻¹.
    let design = x.clone().insert_column(0, 1.0);
    let (n, p) = design.shape();
    let xtx_inv = (design.transpose() * &design).try_inverse().unwrap();
    let beta_hat = &xtx_inv * design.transpose() * &y;
    let sse = (&y - &design * &beta_hat).norm_squared();
    let cov = xtx_inv * (sse / (n - p - 2) as f64);

    for year in [1000, 1042, 1099, 1150, 1199] {
        let row = basis.scores().row_of(year).unwrap();
        let s = DVector::from_fn(p, |j, _| if j == 0 { 1.0 } else { basis.scores().data()[(row, j - 1)] });
        let expected = (s.transpose() * &cov * &s)[0];
        let col: Vec<f64> = e.draws().column(row).iter().copied().collect();
        let mean = col.iter().sum::<f64>() / n_draws as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_draws - 1) as f64;
        assert!((var / expected - 1.0).abs() < 0.06, "{year}: {var} vs {expected}");
    }
}
