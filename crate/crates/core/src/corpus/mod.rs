//! Review-corpus ingestion: Yelp open-dataset business and review records,
//! cuisine-to-region resolution, inclusion filters and drop accounting.

mod business;
mod cuisine;
mod ndjson;
mod review;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use business::{filter_businesses, load_businesses, Business, BusinessTable, FilterConfig, RawBusiness};
pub use cuisine::{normalize_tag, CuisineRegionMap, Region, Resolution};
pub use review::{
    exclude_nonlocal, load_reviews, parse_pattern_lines, whitespace_tokens, NonlocalFilter, Review, ReviewTable,
};

/// Cap on individually recorded line issues; counts are always complete.
pub const MAX_RECORDED_ISSUES: usize = 1000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Why an input record did not make it into a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MalformedJson,
    MissingField,
    InvalidValue,
    NotRestaurant,
    ExcludedCategory,
    Chain,
    MissingPrice,
    NoCuisine,
    MultiRegion,
    OrphanBusiness,
    InvalidUtf8,
    Nonlocal,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineIssue {
    pub line: usize,
    pub reason: DropReason,
    pub message: String,
}

/// Per-reason drop counts. `input == retained + drops.values().sum()`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub input: usize,
    pub retained: usize,
    pub drops: BTreeMap<DropReason, usize>,
    pub issues: Vec<LineIssue>,
}

impl DropReport {
    pub fn record_drop(&mut self, reason: DropReason) {
        *self.drops.entry(reason).or_insert(0) += 1;
    }

    pub fn record_issue(&mut self, line: usize, reason: DropReason, message: impl Into<String>) {
        let message = message.into();
        log::warn!("line {line}: {message}");
        self.record_drop(reason);
        if self.issues.len() < MAX_RECORDED_ISSUES {
            self.issues.push(LineIssue { line, reason, message });
        }
    }

    pub fn dropped(&self) -> usize {
        self.drops.values().sum()
    }

    pub fn count(&self, reason: DropReason) -> usize {
        self.drops.get(&reason).copied().unwrap_or(0)
    }

    pub fn is_balanced(&self) -> bool {
        self.input == self.retained + self.dropped()
    }
}

/// Filtered business and review tables in one binary file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusCache {
    pub businesses: BusinessTable,
    pub reviews: ReviewTable,
    /// Census link per business id; empty when no census table was given.
    pub neighborhoods: BTreeMap<String, crate::census::NeighborhoodLink>,
}

impl CorpusCache {
    pub fn write(&self, path: &Path) -> Result<(), IngestError> {
        let file = std::fs::File::create(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        bincode::serialize_into(std::io::BufWriter::new(file), self).map_err(|e| IngestError::Cache(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cache: CorpusCache =
            bincode::deserialize_from(std::io::BufReader::new(file)).map_err(|e| IngestError::Cache(e.to_string()))?;
        Ok(CorpusCache {
            businesses: cache.businesses.reindexed(),
            ..cache
        })
    }
}
