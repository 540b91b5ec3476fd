//! Pseudoproxy experiments: synthetic truth fields, red-noise pseudoproxies
//! at a prescribed signal-to-noise ratio, and the method benchmark.

mod benchmark;
mod io;

pub use benchmark::{median, run_benchmark, BenchmarkReport, BenchmarkRow};
pub use io::{read_field, write_field};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::matrix::YearMatrix;
use crate::proxy::{ProxyError, ProxyKind, ProxyNetwork, ProxyRecord};
use crate::seed::{derive_seed, rng, substream};
use crate::timeseries::{SeriesError, TimeSeries};

/// Shortest truth field [`generate_truth`] builds.
pub const MIN_TRUTH_YEARS: usize = 200;
/// AR(1) coefficient of the pseudoproxy noise.
pub const DEFAULT_NOISE_RHO: f64 = 0.32;
pub const DEFAULT_SNR: f64 = 0.4;
/// Standard network sizes.
pub const NETWORK_SIZES: [usize; 2] = [59, 104];

const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Error)]
pub enum PseudoproxyError {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("invalid field: {0}")]
    Field(String),
    #[error(transparent)]
    Input(#[from] ProxyError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

pub type Result<T> = std::result::Result<T, PseudoproxyError>;

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

/// Gridded truth: one complete annual series per site plus their
/// cos(latitude)-weighted mean.
#[derive(Debug, Clone)]
pub struct TruthField {
    sites: Vec<Site>,
    series: YearMatrix,
    hemisphere_mean: TimeSeries,
}

impl TruthField {
    /// Column `j` of `series` belongs to `sites[j]`.
    pub fn new(sites: Vec<Site>, series: YearMatrix) -> Result<Self> {
        if sites.is_empty() || sites.len() != series.n_cols() {
            return Err(PseudoproxyError::Field(format!(
                "{} sites for {} series",
                sites.len(),
                series.n_cols()
            )));
        }
        if !series.is_complete() {
            return Err(PseudoproxyError::Field("site series have missing values".into()));
        }
        if let Some(s) = sites.iter().find(|s| !(-90.0..=90.0).contains(&s.lat)) {
            return Err(PseudoproxyError::Field(format!("site `{}` has latitude {}", s.id, s.lat)));
        }
        let hemisphere_mean = area_weighted_mean(&sites, &series);
        Ok(Self {
            sites,
            series,
            hemisphere_mean,
        })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn series(&self) -> &YearMatrix {
        &self.series
    }

    pub fn site_series(&self, i: usize) -> TimeSeries {
        self.series.column_series(i)
    }

    pub fn hemisphere_mean(&self) -> &TimeSeries {
        &self.hemisphere_mean
    }

    pub fn span(&self) -> (i32, i32) {
        (self.series.start_year(), self.series.end_year())
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// cos(latitude)-weighted mean of the site columns.
pub fn area_weighted_mean(sites: &[Site], series: &YearMatrix) -> TimeSeries {
    let weights: Vec<f64> = sites.iter().map(|s| s.lat.to_radians().cos()).collect();
    let total: f64 = weights.iter().sum();
    let data = series.data();
    let values = (0..series.n_years())
        .map(|i| weights.iter().enumerate().map(|(j, w)| w * data[(i, j)]).sum::<f64>() / total)
        .collect();
    TimeSeries::from_values(series.start_year(), values).expect("field has at least one year")
}

/// Parameters of the synthetic truth generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalConfig {
    /// Lag-one autocorrelation of the slow common component.
    pub slow_rho: f64,
    /// Standard deviation of the slow common component.
    pub slow_sd: f64,
    /// First year of the late linear warming ramp.
    pub ramp_start: i32,
    /// Ramp height reached in the final year.
    pub ramp_amplitude: f64,
    /// Standard deviation of the site weather noise.
    pub weather_sd: f64,
    pub weather_rho: f64,
    /// e-folding distance of the inter-site weather correlation.
    pub correlation_length_km: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            slow_rho: 0.98,
            slow_sd: 0.15,
            ramp_start: 1850,
            ramp_amplitude: 0.8,
            weather_sd: 0.5,
            weather_rho: 0.2,
            correlation_length_km: 2000.0,
        }
    }
}

fn great_circle_km(a: &Site, b: &Site) -> f64 {
    let (la, lb) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lb - la;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Fills `out` with a stationary AR(1) path of marginal standard deviation
/// `sigma`.
fn ar1_fill(rng: &mut impl Rng, rho: f64, sigma: f64, out: &mut [f64]) {
    let innovation = sigma * (1.0 - rho * rho).sqrt();
    let mut x = sigma * rng.sample::<f64, _>(StandardNormal);
    for (t, v) in out.iter_mut().enumerate() {
        if t > 0 {
            x = rho * x + innovation * rng.sample::<f64, _>(StandardNormal);
        }
        *v = x;
    }
}

fn check_ar1(rho: f64, sigma: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(PseudoproxyError::Spec(format!("AR(1) coefficient must satisfy |rho| < 1, got {rho}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(PseudoproxyError::Spec(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    Ok(())
}

/// Stationary AR(1) series `x_t = rho·x_{t−1} + e_t` with
/// `var(e) = sigma²(1 − rho²)`, so the marginal variance is `sigma²`; the
/// first value is drawn from the stationary distribution.
pub fn ar1_noise(start_year: i32, n: usize, rho: f64, sigma: f64, seed: u64) -> Result<TimeSeries> {
    check_ar1(rho, sigma)?;
    let mut values = vec![0.0; n];
    ar1_fill(&mut rng(seed), rho, sigma, &mut values);
    Ok(TimeSeries::from_values(start_year, values)?)
}

/// Synthetic truth field over `years`: a common slow AR(1) signal plus a late
/// linear ramp, with spatially correlated AR(1) weather noise at each of
/// `n_sites` random Northern Hemisphere sites.
pub fn generate_truth(n_sites: usize, years: (i32, i32), cfg: &SignalConfig, seed: u64) -> Result<TruthField> {
    let n_years = (years.1 - years.0 + 1).max(0) as usize;
    if n_years < MIN_TRUTH_YEARS {
        return Err(PseudoproxyError::Spec(format!(
            "truth needs at least {MIN_TRUTH_YEARS} years, got {n_years}"
        )));
    }
    if n_sites == 0 {
        return Err(PseudoproxyError::Spec("truth needs at least one site".into()));
    }
    check_ar1(cfg.slow_rho, cfg.slow_sd)?;
    check_ar1(cfg.weather_rho, cfg.weather_sd)?;
    if !(cfg.correlation_length_km > 0.0) {
        return Err(PseudoproxyError::Spec("correlation length must be positive".into()));
    }

    let mut site_rng = rng(derive_seed(seed, "sites"));
    let (sin_lo, sin_hi) = (5f64.to_radians().sin(), 85f64.to_radians().sin());
    let sites: Vec<Site> = (0..n_sites)
        .map(|i| Site {
            id: format!("site{:04}", i + 1),
            lat: site_rng.random_range(sin_lo..sin_hi).asin().to_degrees(),
            lon: site_rng.random_range(-180.0..180.0),
        })
        .collect();

    let mut signal = vec![0.0; n_years];
    ar1_fill(&mut rng(derive_seed(seed, "signal")), cfg.slow_rho, cfg.slow_sd, &mut signal);
    if years.1 > cfg.ramp_start {
        let length = (years.1 - cfg.ramp_start) as f64;
        for (i, v) in signal.iter_mut().enumerate() {
            let year = years.0 + i as i32;
            if year > cfg.ramp_start {
                *v += cfg.ramp_amplitude * (year - cfg.ramp_start) as f64 / length;
            }
        }
    }

    let corr = DMatrix::from_fn(n_sites, n_sites, |a, b| {
        (-great_circle_km(&sites[a], &sites[b]) / cfg.correlation_length_km).exp()
    });
    let chol = corr
        .clone()
        .cholesky()
        .or_else(|| (corr + DMatrix::identity(n_sites, n_sites) * 1e-9).cholesky())
        .ok_or_else(|| PseudoproxyError::Field("site correlation matrix is not positive definite".into()))?;
    let l = chol.l();

    let mut weather_rng = rng(derive_seed(seed, "weather"));
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let z = DVector::from_fn(n_sites, |_, _| rng.sample::<f64, _>(StandardNormal));
        &l * z
    };
    let innovation = cfg.weather_sd * (1.0 - cfg.weather_rho * cfg.weather_rho).sqrt();
    let mut w = draw(&mut weather_rng) * cfg.weather_sd;
    let mut data = DMatrix::zeros(n_years, n_sites);
    for t in 0..n_years {
        if t > 0 {
            w = w * cfg.weather_rho + draw(&mut weather_rng) * innovation;
        }
        for j in 0..n_sites {
            data[(t, j)] = signal[t] + w[j];
        }
    }
    let names = sites.iter().map(|s| s.id.clone()).collect();
    TruthField::new(sites, YearMatrix::new(years.0, names, data))
}

/// How the pseudoproxy noise amplitude is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScaling {
    /// Each noise series is rescaled so its sample standard deviation equals
    /// `std(site)/snr` exactly.
    #[default]
    Sample,
    /// The AR(1) process standard deviation is `std(site)/snr`; the sample
    /// ratio then scatters around the nominal SNR.
    Process,
}

impl NoiseScaling {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseScaling::Sample => "sample",
            NoiseScaling::Process => "process",
        }
    }
}

impl std::str::FromStr for NoiseScaling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sample" => Ok(NoiseScaling::Sample),
            "process" => Ok(NoiseScaling::Process),
            _ => Err(format!("unknown noise scaling `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoproxySpec {
    pub n_sites: usize,
    pub rho: f64,
    /// Signal-to-noise standard-deviation ratio; `f64::INFINITY` means no noise.
    pub snr: f64,
    pub seed: u64,
    pub calibration: (i32, i32),
    pub noise_scaling: NoiseScaling,
}

impl PseudoproxySpec {
    pub fn new(n_sites: usize, snr: f64, seed: u64) -> Self {
        Self {
            n_sites,
            rho: DEFAULT_NOISE_RHO,
            snr,
            seed,
            calibration: crate::DEFAULT_CALIBRATION,
            noise_scaling: NoiseScaling::default(),
        }
    }

    fn validate(&self, field: &TruthField) -> Result<()> {
        if self.n_sites == 0 || self.n_sites > field.len() {
            return Err(PseudoproxyError::Spec(format!(
                "n_sites = {} outside 1..={}",
                self.n_sites,
                field.len()
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(PseudoproxyError::Spec(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.snr > 0.0) {
            return Err(PseudoproxyError::Spec(format!("snr must be positive, got {}", self.snr)));
        }
        let (start, end) = field.span();
        if self.calibration.0 > self.calibration.1 || self.calibration.0 <= start || self.calibration.1 > end {
            return Err(PseudoproxyError::Spec(format!(
                "calibration {}-{} must lie inside {}-{} and leave earlier years",
                self.calibration.0, self.calibration.1, start, end
            )));
        }
        Ok(())
    }
}

/// Pseudoproxy network plus what went into it.
#[derive(Debug, Clone)]
pub struct Pseudoproxies {
    pub network: ProxyNetwork,
    /// Field column of each record.
    pub sites: Vec<usize>,
    /// Noise added to each record.
    pub noise: Vec<TimeSeries>,
}

fn sample_sd(v: &[f64]) -> f64 {
    crate::linalg::variance(v).sqrt()
}

/// Samples `spec.n_sites` sites without replacement and adds AR(1) noise
/// with standard deviation `std(site)/snr` to each.
pub fn make_pseudoproxies(field: &TruthField, spec: &PseudoproxySpec) -> Result<Pseudoproxies> {
    spec.validate(field)?;
    let mut chosen = sample(&mut rng(derive_seed(spec.seed, "sites")), field.len(), spec.n_sites).into_vec();
    chosen.sort_unstable();
    let noise_seed = derive_seed(spec.seed, "noise");
    let (start, _) = field.span();
    let mut records = Vec::with_capacity(chosen.len());
    let mut noises = Vec::with_capacity(chosen.len());
    for (i, &site) in chosen.iter().enumerate() {
        let signal = field.site_series(site);
        let n = signal.len();
        let mut noise = vec![0.0; n];
        if spec.snr.is_finite() {
            let sd = sample_sd(signal.values()) / spec.snr;
            let mut stream = substream(noise_seed, i as u64);
            match spec.noise_scaling {
                NoiseScaling::Process => ar1_fill(&mut stream, spec.rho, sd, &mut noise),
                NoiseScaling::Sample => {
                    ar1_fill(&mut stream, spec.rho, 1.0, &mut noise);
                    let scale = sd / sample_sd(&noise);
                    noise.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        let values = signal.values().iter().zip(&noise).map(|(s, e)| s + e).collect();
        records.push(ProxyRecord::annual(
            field.sites()[site].id.clone(),
            ProxyKind::Other,
            TimeSeries::from_values(start, values)?,
        ));
        noises.push(TimeSeries::from_values(start, noise)?);
    }
    Ok(Pseudoproxies {
        network: ProxyNetwork::new(records, start)?,
        sites: chosen,
        noise: noises,
    })
}
