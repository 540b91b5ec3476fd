use rayon::prelude::*;

use super::{make_pseudoproxies, PseudoproxyError, PseudoproxySpec, Result, TruthField};
use crate::recon::{reconstruct, Method, MethodConfig};
use crate::seed::derive_seed;
use crate::skill::{score, SkillReport};

/// Score of one method on one replicate; fit or scoring failures are kept
/// as messages.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: Method,
    pub replicate: usize,
    pub outcome: std::result::Result<SkillReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub methods: Vec<Method>,
    pub rows: Vec<BenchmarkRow>,
}

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

impl BenchmarkReport {
    /// Successful reports of `method`, in replicate order.
    pub fn reports(&self, method: Method) -> Vec<&SkillReport> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect()
    }

    /// Median of `stat` over the successful replicates of `method`.
    pub fn median_of(&self, method: Method, stat: impl Fn(&SkillReport) -> f64) -> Option<f64> {
        median(&self.reports(method).into_iter().map(stat).collect::<Vec<_>>())
    }

    pub fn failures(&self) -> impl Iterator<Item = &BenchmarkRow> {
        self.rows.iter().filter(|r| r.outcome.is_err())
    }

    /// `method,replicate,rmse,re,ce,r2,var_ratio` rows, one per replicate and
    /// a `median` row per method. Failed replicates have empty fields.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "method,replicate,rmse,re,ce,r2,var_ratio")?;
        for r in &self.rows {
            match &r.outcome {
                Ok(s) => writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.method, r.replicate, s.rmse, s.re, s.ce, s.r2, s.var_ratio
                )?,
                Err(_) => writeln!(w, "{},{},,,,,", r.method, r.replicate)?,
            }
        }
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for &m in &self.methods {
            writeln!(
                w,
                "{},median,{},{},{},{},{}",
                m,
                fmt(self.median_of(m, |s| s.rmse)),
                fmt(self.median_of(m, |s| s.re)),
                fmt(self.median_of(m, |s| s.ce)),
                fmt(self.median_of(m, |s| s.r2)),
                fmt(self.median_of(m, |s| s.var_ratio)),
            )?;
        }
        Ok(())
    }
}

/// Runs every method on `replicates` independent pseudoproxy networks drawn
/// from `field`. Replicate `i` uses the seed derived from `base_seed` and
/// the label `replicate-i`; `spec.seed` is ignored. Each method calibrates
/// against the hemispheric mean over `spec.calibration` and is scored over
/// all earlier years.
pub fn run_benchmark(
    field: &TruthField,
    spec: &PseudoproxySpec,
    methods: &[MethodConfig],
    replicates: usize,
    base_seed: u64,
) -> Result<BenchmarkReport> {
    if replicates == 0 || methods.is_empty() {
        return Err(PseudoproxyError::Spec("benchmark needs at least one replicate and one method".into()));
    }
    spec.validate(field)?;
    let span = field.span();
    let truth = field.hemisphere_mean();
    let verification = (span.0, spec.calibration.0 - 1);
    let (calibration_mean, _) = truth
        .mean_over(spec.calibration.0, spec.calibration.1)
        .expect("calibration lies inside the field");

    let per_replicate: Vec<Result<Vec<BenchmarkRow>>> = (0..replicates)
        .into_par_iter()
        .map(|replicate| {
            let rep_spec = PseudoproxySpec {
                seed: derive_seed(base_seed, &format!("replicate-{replicate}")),
                ..spec.clone()
            };
            let proxies = make_pseudoproxies(field, &rep_spec)?;
            Ok(methods
                .iter()
                .map(|m| {
                    let outcome = reconstruct(&proxies.network, truth, spec.calibration, span, m)
                        .map_err(|e| e.to_string())
                        .and_then(|r| {
                            score(&r.series, truth, calibration_mean, verification).map_err(|e| e.to_string())
                        });
                    BenchmarkRow {
                        method: m.method(),
                        replicate,
                        outcome,
                    }
                })
                .collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(replicates * methods.len());
    for r in per_replicate {
        rows.extend(r?);
    }
    let mut listed = Vec::new();
    for m in methods {
        if !listed.contains(&m.method()) {
            listed.push(m.method());
        }
    }
    Ok(BenchmarkReport { methods: listed, rows })
}
