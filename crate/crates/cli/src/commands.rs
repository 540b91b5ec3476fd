use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use proxyrecon::proxy::{exclude_flagged, load_network, screen_replication, write_network, ProxyNetwork, Rejection};
use proxyrecon::pseudoproxy::{generate_truth, read_field, run_benchmark, PseudoproxySpec, SignalConfig, TruthField};
use proxyrecon::recon::{reconstruct as fit_and_reconstruct, Method};
use proxyrecon::seed::derive_seed;
use proxyrecon::skill::{holdout_validate, write_validation_csv};
use proxyrecon::timeseries::{loess_smooth, read_series_csv, write_series_csv};
use proxyrecon::uncertainty::{ols_pc_ensemble, prob_warmest_decade, EnsembleConfig};
use proxyrecon::TimeSeries;

use crate::config::RunConfig;
use crate::output::{write_atomic, write_text};
use crate::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Input(format!("`{key}` is required for this command")))
}

fn read_series(path: &Path) -> Result<TimeSeries, CliError> {
    let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    read_series_csv(f).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn network(cfg: &RunConfig) -> Result<ProxyNetwork, CliError> {
    let loaded = load_network(required(&cfg.metadata, "metadata")?, required(&cfg.values, "values")?, cfg.frozen_at)?;
    for r in &loaded.rejections {
        eprintln!("skipping record {}: {}", r.id, r.reason);
    }
    Ok(loaded.network)
}

fn write_resolved(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    write_text(&cfg.output_dir, RESOLVED_CONFIG, &cfg.to_text(command))
}

fn write_network_pair(dir: &Path, prefix: &str, net: &ProxyNetwork) -> Result<(), CliError> {
    let mut meta = Vec::new();
    let mut values = Vec::new();
    write_network(net, &mut meta, &mut values)?;
    write_atomic(dir, &format!("{prefix}_metadata.csv"), |w| w.write_all(&meta))?;
    write_atomic(dir, &format!("{prefix}_values.csv"), |w| w.write_all(&values))
}

pub fn screen(cfg: RunConfig) -> Result<(), CliError> {
    let loaded = load_network(required(&cfg.metadata, "metadata")?, required(&cfg.values, "values")?, cfg.frozen_at)?;
    let replicated = screen_replication(&loaded.network, cfg.min_cores);
    let screened = exclude_flagged(&replicated.network, &cfg.exclude_flag);
    let dir = &cfg.output_dir;
    write_network_pair(dir, "replicated", &replicated.network)?;
    write_network_pair(dir, "screened", &screened.network)?;
    let stages: [(&str, &[Rejection]); 3] = [
        ("coverage", &loaded.rejections),
        ("replication", &replicated.rejected),
        ("flagged", &screened.rejected),
    ];
    write_atomic(dir, "screening_log.csv", |w| {
        writeln!(w, "stage,id,reason")?;
        for (stage, rejections) in stages {
            for r in rejections {
                writeln!(w, "{stage},{},\"{}\"", r.id, r.reason.replace('"', "'"))?;
            }
        }
        Ok(())
    })?;
    write_resolved(&cfg, "screen")?;
    println!(
        "loaded {} records, {} after replication screening, {} after excluding `{}`",
        loaded.network.len(),
        replicated.network.len(),
        screened.network.len(),
        cfg.exclude_flag
    );
    Ok(())
}

pub fn reconstruct(mut cfg: RunConfig) -> Result<(), CliError> {
    let net = network(&cfg)?;
    let target = read_series(required(&cfg.target, "target")?)?;
    let window = cfg.window();
    let recon = fit_and_reconstruct(&net, &target, cfg.calibration, window, &cfg.method_config(cfg.method))?;
    let smoothed = loess_smooth(&recon.series, cfg.smooth_span).map_err(|e| CliError::Input(e.to_string()))?;
    cfg.window = Some(window);
    match cfg.method {
        Method::OlsPc => cfg.k = recon.model.k,
        Method::Lasso => cfg.lambda = recon.model.lambda,
        Method::Regem | Method::RegemHybrid => {}
    }
    let dir = &cfg.output_dir;
    write_atomic(dir, "reconstruction.csv", |w| recon.write_csv(w))?;
    let smoothed_label = format!("{}_loess", recon.label);
    write_atomic(dir, "reconstruction_smoothed.csv", |w| {
        writeln!(w, "year,value,label")?;
        for (year, (&v, &m)) in smoothed.years().zip(smoothed.values().iter().zip(smoothed.mask())) {
            if m {
                writeln!(w, "{year},{v},{smoothed_label}")?;
            } else {
                writeln!(w, "{year},,{smoothed_label}")?;
            }
        }
        Ok(())
    })?;
    write_text(dir, "model.txt", &recon.model.to_key_values())?;
    write_resolved(&cfg, "reconstruct")?;
    println!("{} reconstruction over {}-{} written to {}", recon.label, window.0, window.1, dir.display());
    Ok(())
}

pub fn ensemble(mut cfg: RunConfig) -> Result<(), CliError> {
    let net = network(&cfg)?;
    let target = read_series(required(&cfg.target, "target")?)?;
    let window = cfg.window();
    let ecfg = EnsembleConfig {
        k: cfg.k,
        max_k: cfg.max_k,
        k_rule: cfg.k_rule,
        n_draws: cfg.n_draws,
        noise: cfg.noise,
        splice: cfg.splice,
        seed: derive_seed(cfg.seed, "ensemble"),
    };
    let run = ols_pc_ensemble(&net, &target, cfg.calibration, window, &ecfg)?;
    let probability = prob_warmest_decade(&run.ensemble, cfg.decade)?;
    cfg.window = Some(window);
    cfg.method = Method::OlsPc;
    cfg.k = run.point.model.k;
    let k = cfg.k.unwrap_or_default();
    let dir = &cfg.output_dir;
    write_atomic(dir, "ensemble.csv", |w| run.ensemble.write_csv(w))?;
    write_atomic(dir, "ensemble_summary.csv", |w| run.ensemble.write_summary_csv(w))?;
    write_atomic(dir, "reconstruction.csv", |w| run.point.write_csv(w))?;
    write_text(dir, "model.txt", &run.point.model.to_key_values())?;
    write_text(
        dir,
        "probability.csv",
        &format!(
            "decade_start,decade_end,probability,n_draws,k,noise,splice\n{},{},{},{},{},{},{}\n",
            cfg.decade.0,
            cfg.decade.1,
            probability,
            run.ensemble.n_draws(),
            k,
            cfg.noise.as_str(),
            cfg.splice.as_str()
        ),
    )?;
    write_resolved(&cfg, "ensemble")?;
    println!(
        "P({}-{} warmest decade) = {probability} over {} draws (K = {k})",
        cfg.decade.0,
        cfg.decade.1,
        run.ensemble.n_draws()
    );
    Ok(())
}

fn truth_field(cfg: &RunConfig) -> Result<TruthField, CliError> {
    match (&cfg.field_sites, &cfg.field_values) {
        (Some(sites), Some(values)) => {
            let open = |p: &Path| File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())));
            Ok(read_field(
                open(sites)?,
                &sites.display().to_string(),
                open(values)?,
                &values.display().to_string(),
            )?)
        }
        (None, None) => Ok(generate_truth(
            cfg.grid_sites,
            cfg.field_years,
            &SignalConfig::default(),
            derive_seed(cfg.seed, "truth"),
        )?),
        _ => Err(CliError::Input("`field_sites` and `field_values` must be given together".into())),
    }
}

pub fn benchmark(cfg: RunConfig) -> Result<(), CliError> {
    let field = truth_field(&cfg)?;
    let spec = PseudoproxySpec {
        rho: cfg.rho,
        calibration: cfg.calibration,
        noise_scaling: cfg.noise_scaling,
        ..PseudoproxySpec::new(cfg.n_sites, cfg.snr, 0)
    };
    let methods: Vec<_> = cfg.methods.iter().map(|&m| cfg.method_config(m)).collect();
    let report = run_benchmark(&field, &spec, &methods, cfg.replicates, derive_seed(cfg.seed, "benchmark"))?;
    for row in report.failures() {
        if let Err(message) = &row.outcome {
            eprintln!("{} replicate {} failed: {message}", row.method, row.replicate);
        }
    }
    write_atomic(&cfg.output_dir, "benchmark.csv", |w| report.write_csv(w))?;
    write_resolved(&cfg, "benchmark")?;
    for &m in &report.methods {
        let vr = report.median_of(m, |s| s.var_ratio);
        let re = report.median_of(m, |s| s.re);
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"));
        println!("{m}: median var_ratio {} median RE {}", show(vr), show(re));
    }
    Ok(())
}

pub fn validate(mut cfg: RunConfig) -> Result<(), CliError> {
    let net = network(&cfg)?;
    let target = read_series(required(&cfg.target, "target")?)?;
    let window = cfg.window();
    let blocks = holdout_validate(
        &net,
        &target,
        cfg.calibration,
        window,
        &cfg.method_config(cfg.method),
        cfg.block_length,
        cfg.holdout,
    )?;
    cfg.window = Some(window);
    write_atomic(&cfg.output_dir, "validation.csv", |w| write_validation_csv(w, &blocks))?;
    write_resolved(&cfg, "validate")?;
    println!("{} hold-out blocks scored", blocks.len());
    Ok(())
}

pub fn smooth(cfg: RunConfig) -> Result<(), CliError> {
    let input = read_series(required(&cfg.input, "input")?)?;
    let smoothed = loess_smooth(&input, cfg.smooth_span).map_err(|e| CliError::Input(e.to_string()))?;
    write_atomic(&cfg.output_dir, "smoothed.csv", |w| write_series_csv(w, &smoothed))?;
    write_resolved(&cfg, "smooth")?;
    println!("smoothed {} years with span {}", smoothed.len(), cfg.smooth_span);
    Ok(())
}
