use proptest::prelude::*;
use proxyrecon::skill::score;
use proxyrecon::TimeSeries;

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (5usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

fn series(v: &[f64]) -> TimeSeries {
    TimeSeries::from_values(1900, v.to_vec()).unwrap()
}

fn window(v: &[f64]) -> (i32, i32) {
    (1900, 1900 + v.len() as i32 - 1)
}

fn not_flat(v: &[f64]) -> bool {
    v.iter().any(|x| (x - v[0]).abs() > 1e-3)
}

proptest! {
    #[test]
    fn re_dominates_ce((r, t) in pair(), cal_mean in -5.0f64..5.0) {
        prop_assume!(not_flat(&t));
        let s = score(&series(&r), &series(&t), cal_mean, window(&t)).unwrap();
        prop_assert!(s.re >= s.ce - 1e-12);
        prop_assert!(s.re <= 1.0 && s.ce <= 1.0);
        prop_assert!(s.rmse >= 0.0 && (0.0..=1.0).contains(&s.r2) && s.var_ratio >= 0.0);
    }

    #[test]
    fn joint_shift_leaves_scores_unchanged((r, t) in pair(), cal_mean in -5.0f64..5.0, c in -10.0f64..10.0) {
        prop_assume!(not_flat(&t));
        let a = score(&series(&r), &series(&t), cal_mean, window(&t)).unwrap();
        let rs: Vec<f64> = r.iter().map(|v| v + c).collect();
        let ts: Vec<f64> = t.iter().map(|v| v + c).collect();
        let b = score(&series(&rs), &series(&ts), cal_mean + c, window(&t)).unwrap();
        for (x, y) in [(a.re, b.re), (a.ce, b.ce), (a.rmse, b.rmse), (a.r2, b.r2), (a.var_ratio, b.var_ratio)] {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{} vs {}", x, y);
        }
    }

    #[test]
    fn r2_ignores_affine_recon_changes((r, t) in pair(), cal_mean in -5.0f64..5.0, a in 0.1f64..10.0, b in -10.0f64..10.0) {
        prop_assume!(not_flat(&t) && not_flat(&r));
        let base = score(&series(&r), &series(&t), cal_mean, window(&t)).unwrap();
        let moved: Vec<f64> = r.iter().map(|v| a * v + b).collect();
        let s = score(&series(&moved), &series(&t), cal_mean, window(&t)).unwrap();
        prop_assert!((s.r2 - base.r2).abs() < 1e-8);
    }

    #[test]
    fn perfect_recon_is_zero_error(t in prop::collection::vec(-5.0f64..5.0, 5..60), cal_mean in -5.0f64..5.0) {
        prop_assume!(not_flat(&t));
        let s = score(&series(&t), &series(&t), cal_mean, window(&t)).unwrap();
        prop_assert_eq!(s.rmse, 0.0);
        prop_assert_eq!(s.re, 1.0);
        prop_assert_eq!(s.ce, 1.0);
    }
}

#[test]
fn re_and_ce_change_under_recon_rescaling() {
    let t: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
    let r: Vec<f64> = t.iter().map(|v| 0.8 * v + 0.1).collect();
    let base = score(&series(&r), &series(&t), 0.3, window(&t)).unwrap();
    let scaled: Vec<f64> = r.iter().map(|v| 2.0 * v + 1.0).collect();
    let s = score(&series(&scaled), &series(&t), 0.3, window(&t)).unwrap();
    assert!((s.r2 - base.r2).abs() < 1e-12);
    assert!((s.re - base.re).abs() > 0.1);
    assert!((s.ce - base.ce).abs() > 0.1);
}
