#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxyrecon::proxy::{write_network, ProxyKind, ProxyNetwork, ProxyRecord, TILJANDER_FLAG};
use proxyrecon::pseudoproxy::{generate_truth, make_pseudoproxies, PseudoproxySpec, SignalConfig};
use proxyrecon::timeseries::write_series_csv;
use proxyrecon::TimeSeries;

pub const UNDER_REPLICATED: usize = 36;
pub const FLAGGED: usize = 4;
pub const FIXTURE_RECORDS: usize = 95;

pub fn proxyrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxyrecon"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Paths of a written network fixture.
pub struct NetworkFiles {
    pub metadata: PathBuf,
    pub values: PathBuf,
    pub target: PathBuf,
}

impl NetworkFiles {
    /// `--metadata`, `--values` and `--target` flags.
    pub fn flags(&self) -> Vec<String> {
        vec![
            "--metadata".into(),
            self.metadata.display().to_string(),
            "--values".into(),
            self.values.display().to_string(),
            "--target".into(),
            self.target.display().to_string(),
        ]
    }
}

fn write_files(dir: &Path, net: &ProxyNetwork, target: &TimeSeries) -> NetworkFiles {
    fs::create_dir_all(dir).unwrap();
    let files = NetworkFiles {
        metadata: dir.join("metadata.csv"),
        values: dir.join("values.csv"),
        target: dir.join("target.csv"),
    };
    write_network(
        net,
        fs::File::create(&files.metadata).unwrap(),
        fs::File::create(&files.values).unwrap(),
    )
    .unwrap();
    write_series_csv(fs::File::create(&files.target).unwrap(), target).unwrap();
    files
}

/// 95 pseudoproxy records over 1000-1995: the first 36 are tree rings with
/// fewer than eight cores, the next four are flagged lake sediments and the
/// rest pass both screens. The target is the hemispheric mean over
/// 1850-2006.
pub fn screening_fixture(dir: &Path, snr: f64, seed: u64) -> NetworkFiles {
    let field = generate_truth(FIXTURE_RECORDS, (1000, 2006), &SignalConfig::default(), seed).unwrap();
    let proxies = make_pseudoproxies(&field, &PseudoproxySpec::new(FIXTURE_RECORDS, snr, seed)).unwrap();
    let records: Vec<ProxyRecord> = proxies
        .network
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let series = r.series.window(1000, 1995).unwrap();
            let id = format!("rec{i:03}");
            if i < UNDER_REPLICATED {
                ProxyRecord::annual(id, ProxyKind::TreeRing, series).with_cores(3 + (i % 5) as u32)
            } else if i < UNDER_REPLICATED + FLAGGED {
                ProxyRecord::annual(id, ProxyKind::LakeSediment, series).with_flag(TILJANDER_FLAG)
            } else {
                match i % 3 {
                    0 => ProxyRecord::annual(id, ProxyKind::TreeRing, series).with_cores(8 + (i % 7) as u32),
                    1 => ProxyRecord::annual(id, ProxyKind::IceCore, series),
                    _ => ProxyRecord::annual(id, ProxyKind::Coral, series),
                }
            }
        })
        .collect();
    let net = ProxyNetwork::new(records, 1000).unwrap();
    let target = field.hemisphere_mean().window(1850, 2006).unwrap();
    write_files(dir, &net, &target)
}

/// Three records over 1000-1980 and a target that is an exact linear
/// combination of them, with observed values after 1980 rising far above
/// anything reconstructed.
pub fn exact_fit_fixture(dir: &Path) -> NetworkFiles {
    let n = 981;
    let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
    let c: Vec<f64> = (0..n).map(|i| ((i * i) % 17) as f64 / 17.0).collect();
    let records = vec![
        ProxyRecord::annual("a", ProxyKind::Coral, TimeSeries::from_values(1000, a.clone()).unwrap()),
        ProxyRecord::annual("b", ProxyKind::IceCore, TimeSeries::from_values(1000, b.clone()).unwrap()),
        ProxyRecord::annual("c", ProxyKind::Other, TimeSeries::from_values(1000, c.clone()).unwrap()),
    ];
    let net = ProxyNetwork::new(records, 1000).unwrap();
    let mut t: Vec<f64> = (850..n).map(|i| 0.2 + 0.5 * a[i] - 0.3 * b[i] + 0.1 * c[i]).collect();
    t.extend((1981..=2006).map(|y| 10.0 + 0.1 * (y - 1980) as f64));
    write_files(dir, &net, &TimeSeries::from_values(1850, t).unwrap())
}

/// Every regular file directly inside `dir`, by name.
pub fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Reads the `key = value` entry of a resolved config.
pub fn config_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("resolved_config.txt")).unwrap();
    text.lines()
        .find_map(|l| {
            let (k, v) = l.split_once('=')?;
            (k.trim() == key).then(|| v.trim().to_string())
        })
        .unwrap_or_else(|| panic!("no `{key}` in resolved config"))
}
