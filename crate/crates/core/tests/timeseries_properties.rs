use proptest::prelude::*;
use proxyrecon::timeseries::{align, decadal_average, loess_smooth, split_bands, to_anomaly};
use proxyrecon::TimeSeries;

fn values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, len)
}

proptest! {
    #[test]
    fn bands_sum_to_input(start in -500i32..2000, v in values(2..400), period in 2.5f64..200.0) {
        let s = TimeSeries::from_values(start, v).unwrap();
        let b = split_bands(&s, period).unwrap();
        prop_assert_eq!(b.low.span(), s.span());
        for ((x, l), h) in s.values().iter().zip(b.low.values()).zip(b.high.values()) {
            prop_assert!((l + h - x).abs() < 1e-10);
        }
    }

    #[test]
    fn loess_reproduces_lines(
        start in 0i32..2000,
        n in 10usize..400,
        a in -1.0f64..1.0,
        b in -20.0f64..20.0,
        span in 0.02f64..1.0,
    ) {
        let s = TimeSeries::from_values(start, (0..n).map(|t| a * t as f64 + b).collect()).unwrap();
        let Ok(smooth) = loess_smooth(&s, span) else { return Ok(()) };
        for (year, y) in smooth.present() {
            let x = s.get(year).unwrap();
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }

    #[test]
    fn decadal_constant_round_trips(anchor in 1990i32..2010, blocks in values(1..30)) {
        let first = anchor - 9 - 10 * blocks.len() as i32;
        let annual: Vec<f64> = blocks.iter().flat_map(|&v| std::iter::repeat_n(v, 10)).collect();
        let s = TimeSeries::from_values(first, annual).unwrap();
        let d = decadal_average(&s, anchor).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 4.0 * f64::EPSILON * b.abs();
        prop_assert_eq!(d.values().len(), blocks.len());
        for (got, want) in d.values().iter().zip(&blocks) {
            prop_assert!(close(*got, *want), "{} vs {}", got, want);
        }
        let back = d.to_annual();
        prop_assert_eq!(back.span(), s.span());
        for (got, want) in back.values().iter().zip(s.values()) {
            prop_assert!(close(*got, *want), "{} vs {}", got, want);
        }
    }

    #[test]
    fn anomaly_is_idempotent(start in 1000i32..1900, v in values(20..200), base_len in 2i32..20) {
        let s = TimeSeries::from_values(start, v).unwrap();
        let once = to_anomaly(&s, start, start + base_len - 1).unwrap();
        let twice = to_anomaly(&once, start, start + base_len - 1).unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn align_span_is_symmetric(a0 in 0i32..100, a_len in 1usize..100, b0 in 0i32..100, b_len in 1usize..100) {
        let a = TimeSeries::from_values(a0, vec![1.0; a_len]).unwrap();
        let b = TimeSeries::from_values(b0, vec![2.0; b_len]).unwrap();
        match (align(&a, &b), align(&b, &a)) {
            (Ok((x, y)), Ok((p, q))) => {
                prop_assert_eq!(x.span(), q.span());
                prop_assert_eq!(y.span(), p.span());
                prop_assert_eq!(x.span(), y.span());
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "align is not symmetric in failure"),
        }
    }
}
