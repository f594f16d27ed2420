//! Stage orchestration. Each stage reads flat artifacts from the output
//! directory, writes its own, and records a manifest of both.

mod artifacts;
mod config;
mod report;
mod stages;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Region;
use crate::lexicon::{Frame, FramingScore, Subset};

pub use artifacts::{read_csv, sha256_file, write_csv, FileEntry, Manifest, StageRun, ARTIFACT_VERSION, MANIFEST_DIR};
pub use config::{AuditConfig, LogOddsConfig, Paths, PipelineConfig, RegressConfig};
pub use report::cmd_report;
pub use stages::{cmd_audit, cmd_extract, cmd_ingest, cmd_logodds, cmd_regress, cmd_score};

pub const BUSINESSES_CSV: &str = "businesses.csv";
pub const REVIEWS_CSV: &str = "reviews.csv";
pub const NEIGHBORHOODS_CSV: &str = "neighborhoods.csv";
pub const CORPUS_CACHE: &str = "corpus.bin";
pub const FEATURES_CSV: &str = "features.csv";
pub const SCORES_CSV: &str = "scores.csv";
pub const SYNTHETIC_FEATURES_CSV: &str = "synthetic_features.csv";
pub const SYNTHETIC_SCORES_CSV: &str = "synthetic_scores.csv";
pub const LOGODDS_CSV: &str = "logodds.csv";
pub const TOP_FEATURES_CSV: &str = "top_features.csv";
pub const COEFFICIENTS_CSV: &str = "coefficients.csv";
pub const SYNTHETIC_META_CSV: &str = "audit/synthetic_meta.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: missing input `{artifact}` ({hint})")]
    MissingInput {
        stage: &'static str,
        artifact: String,
        hint: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("regress: VIF at or above {threshold} in {} model(s): {}", .models.len(), .models.join("; "))]
    Vif { threshold: f64, models: Vec<String> },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub(crate) fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusinessRow {
    pub business_id: String,
    pub name: String,
    pub state: String,
    pub zipcode: String,
    pub region: Region,
    pub price_tier: u8,
    pub mean_stars: f64,
    pub review_count: u64,
    /// Resolved cuisine tags joined with `;`.
    pub cuisine_tags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub review_id: String,
    pub business_id: String,
    pub user_id: String,
    pub stars: u8,
    pub token_count: usize,
    pub nonlocal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodRow {
    pub business_id: String,
    pub zipcode: String,
    pub matched: bool,
    pub median_income: Option<f64>,
    pub diversity: Option<f64>,
    pub pct_asian: Option<f64>,
    pub pct_hispanic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub review_id: String,
    pub exoticism: u32,
    pub prototypicality: u32,
    pub authenticity: u32,
    pub luxury: u32,
    pub cost: u32,
    pub hygiene: u32,
    pub cheap: u32,
    pub expensive: u32,
    pub clean: u32,
    pub dirty: u32,
}

impl From<&FramingScore> for ScoreRow {
    fn from(s: &FramingScore) -> Self {
        ScoreRow {
            review_id: s.review_id.clone(),
            exoticism: s.frame(Frame::Exoticism),
            prototypicality: s.frame(Frame::Prototypicality),
            authenticity: s.frame(Frame::Authenticity),
            luxury: s.frame(Frame::Luxury),
            cost: s.frame(Frame::Cost),
            hygiene: s.frame(Frame::Hygiene),
            cheap: s.subset(Subset::Cheap),
            expensive: s.subset(Subset::Expensive),
            clean: s.subset(Subset::Clean),
            dirty: s.subset(Subset::Dirty),
        }
    }
}

impl From<&ScoreRow> for FramingScore {
    fn from(r: &ScoreRow) -> Self {
        let mut s = FramingScore::zero(r.review_id.clone());
        for (f, n) in [
            (Frame::Exoticism, r.exoticism),
            (Frame::Prototypicality, r.prototypicality),
            (Frame::Authenticity, r.authenticity),
            (Frame::Luxury, r.luxury),
            (Frame::Cost, r.cost),
            (Frame::Hygiene, r.hygiene),
        ] {
            s.counts.insert(f, n);
        }
        for (k, n) in [
            (Subset::Cheap, r.cheap),
            (Subset::Expensive, r.expensive),
            (Subset::Clean, r.clean),
            (Subset::Dirty, r.dirty),
        ] {
            s.subset_counts.insert(k, n);
        }
        s
    }
}

/// Runs every stage in order, skipping `audit` unless synthetic inputs are
/// configured.
pub fn run_all(config: &PipelineConfig) -> Result<Vec<Manifest>, PipelineError> {
    let mut out = vec![cmd_ingest(config)?];
    if config.paths.generated.is_some() {
        out.push(cmd_audit(config, None)?);
    }
    out.push(cmd_extract(config)?);
    out.push(cmd_score(config)?);
    out.push(cmd_logodds(config)?);
    out.push(cmd_regress(config)?);
    out.push(cmd_report(config)?);
    Ok(out)
}
