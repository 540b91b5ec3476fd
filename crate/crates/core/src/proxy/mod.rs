//! Proxy records, frozen networks and quality-control screens.

pub(crate) mod io;

pub use io::{load_network, load_network_from_readers, write_network, write_rejections};

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::matrix::YearMatrix;
use crate::timeseries::{first_block_start, TimeSeries, DEFAULT_DECADE_ANCHOR};

/// Tree-ring replication threshold: at least eight contributing cores.
pub const DEFAULT_MIN_CORES: u32 = 8;

/// Flag carried by the lake-sediment records suspected of modern contamination.
pub const TILJANDER_FLAG: &str = "tiljander";

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("{file}, line {line}: {message}")]
    Format {
        file: String,
        line: u64,
        message: String,
    },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("record `{id}`: {message}")]
    InvalidRecord { id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ProxyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProxyKind {
    TreeRing,
    LakeSediment,
    IceCore,
    Coral,
    Documentary,
    Other,
}

impl ProxyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProxyKind::TreeRing => "tree_ring",
            ProxyKind::LakeSediment => "lake_sediment",
            ProxyKind::IceCore => "ice_core",
            ProxyKind::Coral => "coral",
            ProxyKind::Documentary => "documentary",
            ProxyKind::Other => "other",
        }
    }
}

impl FromStr for ProxyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "tree_ring" => ProxyKind::TreeRing,
            "lake_sediment" => ProxyKind::LakeSediment,
            "ice_core" => ProxyKind::IceCore,
            "coral" => ProxyKind::Coral,
            "documentary" => ProxyKind::Documentary,
            "other" => ProxyKind::Other,
            _ => return Err(format!("unknown proxy kind `{s}`")),
        })
    }
}

impl fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    Annual,
    Decadal,
}

impl Resolution {
    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Annual => "annual",
            Resolution::Decadal => "decadal",
        }
    }
}

impl FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "annual" => Ok(Resolution::Annual),
            "decadal" => Ok(Resolution::Decadal),
            _ => Err(format!("unknown resolution `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyRecord {
    pub id: String,
    pub series: TimeSeries,
    pub kind: ProxyKind,
    /// Contributing tree cores; only meaningful for tree-ring chronologies.
    pub core_count: Option<u32>,
    pub flags: BTreeSet<String>,
    pub resolution: Resolution,
}

impl ProxyRecord {
    pub fn annual(id: impl Into<String>, kind: ProxyKind, series: TimeSeries) -> Self {
        Self {
            id: id.into(),
            series,
            kind,
            core_count: None,
            flags: BTreeSet::new(),
            resolution: Resolution::Annual,
        }
    }

    pub fn with_cores(mut self, cores: u32) -> Self {
        self.core_count = Some(cores);
        self
    }

    pub fn with_flag(mut self, flag: impl Into<String>) -> Self {
        self.flags.insert(flag.into());
        self
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.resolution = resolution;
        self
    }

    /// Checks the metadata and resolution invariants.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| ProxyError::InvalidRecord {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if self.core_count.is_some() && self.kind != ProxyKind::TreeRing {
            return Err(invalid(format!("core_count given for a {} record", self.kind)));
        }
        if self.resolution == Resolution::Decadal {
            let mut block = first_block_start(self.series.start_year(), DEFAULT_DECADE_ANCHOR) - 10;
            while block <= self.series.end_year() {
                let n = self
                    .series
                    .present()
                    .filter(|&(y, _)| y >= block && y <= block + 9)
                    .count();
                if n > 1 {
                    return Err(invalid(format!(
                        "decadal record has {n} values in block {block}-{}",
                        block + 9
                    )));
                }
                block += 10;
            }
        }
        Ok(())
    }

    /// Whether the record reaches back to `year` (decadal records may start
    /// anywhere in the block containing it).
    pub fn covers(&self, year: i32) -> bool {
        let slack = match self.resolution {
            Resolution::Annual => 0,
            Resolution::Decadal => 9,
        };
        self.series
            .present_span()
            .is_some_and(|(first, _)| first <= year + slack)
    }
}

/// A record dropped by loading or screening.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyNetwork {
    records: Vec<ProxyRecord>,
    frozen_at: i32,
}

impl ProxyNetwork {
    /// Validates ids, per-record invariants and coverage of `frozen_at`.
    pub fn new(records: Vec<ProxyRecord>, frozen_at: i32) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(ProxyError::DuplicateId(r.id.clone()));
            }
            r.validate()?;
            if !r.covers(frozen_at) {
                return Err(ProxyError::InvalidRecord {
                    id: r.id.clone(),
                    message: format!("does not reach back to {frozen_at}"),
                });
            }
        }
        Ok(Self { records, frozen_at })
    }

    pub fn records(&self) -> &[ProxyRecord] {
        &self.records
    }

    pub fn frozen_at(&self) -> i32 {
        self.frozen_at
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Keeps records for which `keep` returns `None`; the others are
    /// reported with the returned reason. Order is preserved.
    fn partition(&self, keep: impl Fn(&ProxyRecord) -> Option<String>) -> Screening {
        let mut kept = Vec::new();
        let mut rejected = Vec::new();
        for r in &self.records {
            match keep(r) {
                None => kept.push(r.clone()),
                Some(reason) => rejected.push(Rejection {
                    id: r.id.clone(),
                    reason,
                }),
            }
        }
        Screening {
            network: ProxyNetwork {
                records: kept,
                frozen_at: self.frozen_at,
            },
            rejected,
        }
    }

    /// Last year at which at least one record has data.
    pub fn last_year(&self) -> Option<i32> {
        self.records
            .iter()
            .filter_map(|r| r.series.present_span().map(|(_, e)| e))
            .max()
    }
}

/// Result of a screening step.
#[derive(Debug, Clone)]
pub struct Screening {
    pub network: ProxyNetwork,
    pub rejected: Vec<Rejection>,
}

/// Drops tree-ring records with fewer than `min_cores` contributing cores.
/// Tree-ring records without core metadata are dropped as unverifiable;
/// other proxy kinds are untouched.
pub fn screen_replication(net: &ProxyNetwork, min_cores: u32) -> Screening {
    net.partition(|r| match (r.kind, r.core_count) {
        (ProxyKind::TreeRing, Some(c)) if c < min_cores => {
            Some(format!("under_replicated ({c} cores < {min_cores})"))
        }
        (ProxyKind::TreeRing, None) => Some("unknown_core_count".to_string()),
        _ => None,
    })
}

/// Drops records carrying `flag`.
pub fn exclude_flagged(net: &ProxyNetwork, flag: &str) -> Screening {
    net.partition(|r| r.flags.contains(flag).then(|| format!("flagged ({flag})")))
}

/// Years × records matrix over `start..=end` in network order, missing
/// values kept as missing. No standardization is applied.
pub fn network_matrix(net: &ProxyNetwork, start: i32, end: i32) -> YearMatrix {
    YearMatrix::from_series(
        start,
        end,
        net.records.iter().map(|r| (r.id.clone(), &r.series)),
    )
}
