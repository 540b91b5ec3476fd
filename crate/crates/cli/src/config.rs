//! Run configuration: `key = value` text files, command-line overrides and
//! the resolved dump written next to every run's outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;
use proxyrecon::pseudoproxy::NoiseScaling;
use proxyrecon::recon::{CvRule, HybridConfig, KRule, Method, MethodConfig, RegemConfig, Ridge};
use proxyrecon::skill::HoldoutMode;
use proxyrecon::uncertainty::{NoiseMode, SplicePolicy};

use crate::CliError;

macro_rules! run_keys {
    ($($key:ident),* $(,)?) => {
        /// One optional flag per configuration key; set flags win over the
        /// config file.
        #[derive(Args, Debug, Default, Clone)]
        pub struct KeyFlags {
            $(
                #[arg(long, value_name = "VALUE")]
                pub $key: Option<String>,
            )*
        }

        impl KeyFlags {
            pub fn pairs(&self) -> Vec<(&'static str, Option<&str>)> {
                vec![$((stringify!($key), self.$key.as_deref())),*]
            }
        }

        /// Every configuration key, in dump order.
        pub const KEYS: &[&str] = &[$(stringify!($key)),*];
    };
}

run_keys!(
    metadata,
    values,
    target,
    input,
    field_sites,
    field_values,
    output_dir,
    frozen_at,
    min_cores,
    exclude_flag,
    method,
    methods,
    k,
    max_k,
    k_rule,
    lambda,
    lambda_rule,
    ridge,
    max_iterations,
    tolerance,
    split_period,
    calibration,
    window,
    rho,
    snr,
    n_sites,
    grid_sites,
    field_years,
    noise_scaling,
    n_draws,
    noise,
    splice,
    decade,
    replicates,
    seed,
    smooth_span,
    block_length,
    holdout,
);

/// Fully typed run configuration. `None` in an optional tuning field means
/// "choose automatically".
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub metadata: Option<PathBuf>,
    pub values: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub field_sites: Option<PathBuf>,
    pub field_values: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub frozen_at: i32,
    pub min_cores: u32,
    pub exclude_flag: String,
    pub method: Method,
    pub methods: Vec<Method>,
    pub k: Option<usize>,
    pub max_k: usize,
    pub k_rule: KRule,
    pub lambda: Option<f64>,
    pub lambda_rule: CvRule,
    pub ridge: Ridge,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub split_period: f64,
    pub calibration: (i32, i32),
    pub window: Option<(i32, i32)>,
    pub rho: f64,
    pub snr: f64,
    pub n_sites: usize,
    pub grid_sites: usize,
    pub field_years: (i32, i32),
    pub noise_scaling: NoiseScaling,
    pub n_draws: usize,
    pub noise: NoiseMode,
    pub splice: SplicePolicy,
    pub decade: (i32, i32),
    pub replicates: usize,
    pub seed: u64,
    pub smooth_span: f64,
    pub block_length: usize,
    pub holdout: HoldoutMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            metadata: None,
            values: None,
            target: None,
            input: None,
            field_sites: None,
            field_values: None,
            output_dir: PathBuf::from("out"),
            frozen_at: 1000,
            min_cores: proxyrecon::proxy::DEFAULT_MIN_CORES,
            exclude_flag: proxyrecon::proxy::TILJANDER_FLAG.to_string(),
            method: Method::OlsPc,
            methods: vec![Method::Lasso, Method::OlsPc, Method::Regem, Method::RegemHybrid],
            k: None,
            max_k: 10,
            k_rule: KRule::default(),
            lambda: None,
            lambda_rule: CvRule::default(),
            ridge: Ridge::Gcv,
            max_iterations: RegemConfig::default().max_iterations,
            tolerance: RegemConfig::default().tolerance,
            split_period: proxyrecon::timeseries::DEFAULT_SPLIT_PERIOD,
            calibration: proxyrecon::DEFAULT_CALIBRATION,
            window: None,
            rho: proxyrecon::pseudoproxy::DEFAULT_NOISE_RHO,
            snr: proxyrecon::pseudoproxy::DEFAULT_SNR,
            n_sites: 59,
            grid_sites: 200,
            field_years: (1000, 1980),
            noise_scaling: NoiseScaling::default(),
            n_draws: 1000,
            noise: NoiseMode::default(),
            splice: SplicePolicy::default(),
            decade: (1997, 2006),
            replicates: 20,
            seed: 0,
            smooth_span: 0.05,
            block_length: 30,
            holdout: HoldoutMode::Sliding,
        }
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str, source: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("{source}, line {}: expected `key = value`", i + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Input(format!("{source}, line {}: unknown key `{key}`", i + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

fn invalid(key: &str, value: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("invalid value `{value}` for `{key}`: {why}"))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| invalid(key, v, e))
}

fn auto<T: FromStr>(key: &str, v: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn years(key: &str, v: &str) -> Result<(i32, i32), CliError> {
    let (a, b) = v.split_once('-').ok_or_else(|| invalid(key, v, "expected `start-end`"))?;
    let (a, b): (i32, i32) = (num(key, a.trim())?, num(key, b.trim())?);
    if a > b {
        return Err(invalid(key, v, "start after end"));
    }
    Ok((a, b))
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    /// Defaults, then the config file entries, then the set flags.
    pub fn resolve(file: BTreeMap<String, String>, flags: &KeyFlags) -> Result<Self, CliError> {
        let mut merged = file;
        for (key, value) in flags.pairs() {
            if let Some(v) = value {
                merged.insert(key.to_string(), v.to_string());
            }
        }
        let mut c = RunConfig::default();
        for (key, v) in &merged {
            let v = v.as_str();
            match key.as_str() {
                "metadata" => c.metadata = path(v),
                "values" => c.values = path(v),
                "target" => c.target = path(v),
                "input" => c.input = path(v),
                "field_sites" => c.field_sites = path(v),
                "field_values" => c.field_values = path(v),
                "output_dir" => c.output_dir = PathBuf::from(v),
                "frozen_at" => c.frozen_at = num(key, v)?,
                "min_cores" => c.min_cores = num(key, v)?,
                "exclude_flag" => c.exclude_flag = v.to_string(),
                "method" => c.method = num(key, v)?,
                "methods" => {
                    c.methods = v
                        .split(',')
                        .map(|m| num(key, m.trim()))
                        .collect::<Result<_, _>>()?;
                    if c.methods.is_empty() {
                        return Err(invalid(key, v, "empty method list"));
                    }
                }
                "k" => c.k = auto(key, v)?,
                "max_k" => c.max_k = num(key, v)?,
                "k_rule" => c.k_rule = num(key, v)?,
                "lambda" => c.lambda = auto(key, v)?,
                "lambda_rule" => c.lambda_rule = num(key, v)?,
                "ridge" => {
                    c.ridge = match v {
                        "gcv" => Ridge::Gcv,
                        _ => Ridge::Fixed(num(key, v)?),
                    }
                }
                "max_iterations" => c.max_iterations = num(key, v)?,
                "tolerance" => c.tolerance = num(key, v)?,
                "split_period" => c.split_period = num(key, v)?,
                "calibration" => c.calibration = years(key, v)?,
                "window" => c.window = if v == "auto" { None } else { Some(years(key, v)?) },
                "rho" => c.rho = num(key, v)?,
                "snr" => c.snr = num(key, v)?,
                "n_sites" => c.n_sites = num(key, v)?,
                "grid_sites" => c.grid_sites = num(key, v)?,
                "field_years" => c.field_years = years(key, v)?,
                "noise_scaling" => c.noise_scaling = num(key, v)?,
                "n_draws" => c.n_draws = num(key, v)?,
                "noise" => c.noise = num(key, v)?,
                "splice" => c.splice = num(key, v)?,
                "decade" => c.decade = years(key, v)?,
                "replicates" => c.replicates = num(key, v)?,
                "seed" => c.seed = num(key, v)?,
                "smooth_span" => c.smooth_span = num(key, v)?,
                "block_length" => c.block_length = num(key, v)?,
                "holdout" => c.holdout = num(key, v)?,
                other => unreachable!("key `{other}` is validated against KEYS"),
            }
        }
        Ok(c)
    }

    /// Reconstruction window: the configured one, or from the frozen year
    /// to the end of calibration.
    pub fn window(&self) -> (i32, i32) {
        self.window.unwrap_or((self.frozen_at, self.calibration.1))
    }

    pub fn method_config(&self, method: Method) -> MethodConfig {
        let regem = RegemConfig {
            ridge: self.ridge,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            ..RegemConfig::default()
        };
        match method {
            Method::OlsPc => MethodConfig::OlsPc {
                k: self.k,
                max_k: self.max_k,
                rule: self.k_rule,
            },
            Method::Lasso => MethodConfig::Lasso {
                lambda: self.lambda,
                rule: self.lambda_rule,
            },
            Method::Regem => MethodConfig::Regem(regem),
            Method::RegemHybrid => MethodConfig::RegemHybrid(HybridConfig {
                split_period: self.split_period,
                regem,
            }),
        }
    }

    /// `key = value` dump of every key; reading it back gives this config.
    pub fn to_text(&self, command: &str) -> String {
        let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let auto = |v: Option<String>| v.unwrap_or_else(|| "auto".to_string());
        let span = |(a, b): (i32, i32)| format!("{a}-{b}");
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        let mut out = format!("# resolved configuration of `proxyrecon {command}`\n");
        let entries: Vec<(&str, String)> = vec![
            ("metadata", p(&self.metadata)),
            ("values", p(&self.values)),
            ("target", p(&self.target)),
            ("input", p(&self.input)),
            ("field_sites", p(&self.field_sites)),
            ("field_values", p(&self.field_values)),
            ("output_dir", self.output_dir.display().to_string()),
            ("frozen_at", self.frozen_at.to_string()),
            ("min_cores", self.min_cores.to_string()),
            ("exclude_flag", self.exclude_flag.clone()),
            ("method", self.method.to_string()),
            ("methods", methods.join(",")),
            ("k", auto(self.k.map(|k| k.to_string()))),
            ("max_k", self.max_k.to_string()),
            ("k_rule", self.k_rule.as_str().to_string()),
            ("lambda", auto(self.lambda.map(|l| l.to_string()))),
            ("lambda_rule", self.lambda_rule.as_str().to_string()),
            (
                "ridge",
                match self.ridge {
                    Ridge::Gcv => "gcv".to_string(),
                    Ridge::Fixed(h) => h.to_string(),
                },
            ),
            ("max_iterations", self.max_iterations.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("split_period", self.split_period.to_string()),
            ("calibration", span(self.calibration)),
            ("window", auto(self.window.map(span))),
            ("rho", self.rho.to_string()),
            ("snr", self.snr.to_string()),
            ("n_sites", self.n_sites.to_string()),
            ("grid_sites", self.grid_sites.to_string()),
            ("field_years", span(self.field_years)),
            ("noise_scaling", self.noise_scaling.as_str().to_string()),
            ("n_draws", self.n_draws.to_string()),
            ("noise", self.noise.as_str().to_string()),
            ("splice", self.splice.as_str().to_string()),
            ("decade", span(self.decade)),
            ("replicates", self.replicates.to_string()),
            ("seed", self.seed.to_string()),
            ("smooth_span", self.smooth_span.to_string()),
            ("block_length", self.block_length.to_string()),
            ("holdout", self.holdout.as_str().to_string()),
        ];
        debug_assert_eq!(entries.len(), KEYS.len());
        for (key, value) in entries {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
