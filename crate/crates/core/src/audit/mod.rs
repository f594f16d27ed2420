//! Synthetic-review audit: prompt grid, generation client, disclaimer
//! removal, stratification and export for parsing.

mod generate;
mod prompt;
mod sample;
mod sanitize;

use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CuisineRegionMap, Region};

pub use generate::{generate, job_id, ChatClient, ClientConfig, ClientError, GenerateSummary, HttpClient, MockClient};
pub use prompt::{
    expand_prompts, price_point, render_prompt, render_template, GridConfig, PromptJob, Sentiment, TemplateSet,
    CUISINES, FOCI, TEMPLATE_1, TEMPLATE_2, TEMPLATE_3,
};
pub use sample::{match_sentiment_distribution, sentiment_target_from_stars, stratify, SentimentMatch, SentimentShare};
pub use sanitize::{split_sentences, strip_disclaimers, DisclaimerFilter, Sanitized};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("render error: {0}")]
    Render(String),
    #[error("no reviews for regions: {}", .0.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(", "))]
    MissingRegions(Vec<Region>),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Ok,
    Failed,
    /// Nothing remained after disclaimer removal.
    Discarded,
}

/// One persisted generation record. `clean_text` is filled by the
/// sanitize pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedReview {
    pub job_index: usize,
    pub job_id: String,
    pub job: PromptJob,
    pub model_id: String,
    pub raw_text: String,
    pub clean_text: Option<String>,
    pub status: ReviewStatus,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<GeneratedReview>, AuditError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| AuditError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AuditError::Record {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_jsonl_path(path: &Path) -> Result<Vec<GeneratedReview>, AuditError> {
    let file = std::fs::File::open(path).map_err(|e| AuditError::Io(format!("{}: {e}", path.display())))?;
    read_jsonl(std::io::BufReader::new(file))
}

pub fn write_jsonl<W: Write>(mut writer: W, reviews: &[GeneratedReview]) -> Result<(), AuditError> {
    for r in reviews {
        let line = serde_json::to_string(r).map_err(|e| AuditError::Io(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| AuditError::Io(e.to_string()))?;
    }
    writer.flush().map_err(|e| AuditError::Io(e.to_string()))
}

/// Fills `clean_text` of successful records, marks empty results
/// discarded, and returns the records in job order.
pub fn sanitize_reviews(mut reviews: Vec<GeneratedReview>, filter: &DisclaimerFilter) -> Vec<GeneratedReview> {
    reviews.sort_by(|a, b| a.job_index.cmp(&b.job_index).then_with(|| a.job_id.cmp(&b.job_id)));
    for r in &mut reviews {
        if r.status == ReviewStatus::Failed {
            continue;
        }
        let s = strip_disclaimers(&r.raw_text, filter);
        r.status = if s.discarded {
            ReviewStatus::Discarded
        } else {
            ReviewStatus::Ok
        };
        r.clean_text = Some(s.clean_text);
    }
    reviews
}

/// Per-review metadata that travels beside the parses of synthetic text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMeta {
    pub review_id: String,
    pub model_id: String,
    pub template_id: u8,
    pub cuisine: String,
    pub region: Region,
    pub sentiment: Sentiment,
    pub price_tier: u8,
    pub focus: String,
}

#[derive(Serialize)]
struct ParseInput<'a> {
    review_id: &'a str,
    text: &'a str,
}

/// Writes usable reviews as `{review_id, text}` NDJSON for the parser and
/// a metadata CSV keyed by the same ids.
pub fn export_for_parsing(
    reviews: &[GeneratedReview],
    map: &CuisineRegionMap,
    ndjson: &Path,
    meta: &Path,
) -> Result<usize, AuditError> {
    let io = |e: std::io::Error| AuditError::Io(e.to_string());
    let mut text_out = std::io::BufWriter::new(std::fs::File::create(ndjson).map_err(io)?);
    let mut meta_out = csv::Writer::from_path(meta).map_err(|e| AuditError::Io(e.to_string()))?;
    let mut n = 0;
    for r in reviews {
        let (ReviewStatus::Ok, Some(text)) = (r.status, r.clean_text.as_deref()) else {
            continue;
        };
        let region = map
            .region_of(&r.job.cuisine)
            .ok_or_else(|| AuditError::Config(format!("cuisine `{}` has no region", r.job.cuisine)))?;
        let line = serde_json::to_string(&ParseInput {
            review_id: &r.job_id,
            text,
        })
        .map_err(|e| AuditError::Io(e.to_string()))?;
        writeln!(text_out, "{line}").map_err(io)?;
        meta_out
            .serialize(SyntheticMeta {
                review_id: r.job_id.clone(),
                model_id: r.model_id.clone(),
                template_id: r.job.template_id,
                cuisine: r.job.cuisine.clone(),
                region,
                sentiment: r.job.sentiment,
                price_tier: r.job.price_tier,
                focus: r.job.focus.clone().unwrap_or_default(),
            })
            .map_err(|e| AuditError::Io(e.to_string()))?;
        n += 1;
    }
    text_out.flush().map_err(io)?;
    meta_out.flush().map_err(io)?;
    Ok(n)
}

pub fn read_synthetic_meta(path: &Path) -> Result<Vec<SyntheticMeta>, AuditError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| AuditError::Io(e.to_string()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| AuditError::Record {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize, raw: &str, status: ReviewStatus) -> GeneratedReview {
        GeneratedReview {
            job_index: i,
            job_id: job_id("m", i),
            job: PromptJob {
                template_id: 3,
                sentiment: Sentiment::Positive,
                price_tier: 1,
                cuisine: ["southern", "greek", "cuban", "thai"][i % 4].into(),
                focus: None,
            },
            model_id: "m".into(),
            raw_text: raw.into(),
            clean_text: None,
            status,
            created_at: DateTime::UNIX_EPOCH,
            error: None,
        }
    }

    #[test]
    fn sanitize_then_stratify_is_reproducible() {
        let filter = DisclaimerFilter::builtin();
        let raw: Vec<GeneratedReview> = (0..40)
            .rev()
            .map(|i| {
                let text = if i % 7 == 0 {
                    "As an AI, I cannot taste."
                } else {
                    "Tasty. As an AI I liked it. Clean tables."
                };
                record(
                    i,
                    text,
                    if i % 11 == 5 {
                        ReviewStatus::Failed
                    } else {
                        ReviewStatus::Ok
                    },
                )
            })
            .collect();
        let a = sanitize_reviews(raw.clone(), &filter);
        let mut shuffled = raw.clone();
        shuffled.reverse();
        let b = sanitize_reviews(shuffled, &filter);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|r| r.status == ReviewStatus::Discarded).count(), 6);
        let ok: Vec<_> = a.iter().filter(|r| r.status == ReviewStatus::Ok).cloned().collect();
        assert!(ok
            .iter()
            .all(|r| r.clean_text.as_deref() == Some("Tasty. Clean tables.")));
        let map = CuisineRegionMap::builtin();
        assert_eq!(stratify(&ok, &map, 3).unwrap(), stratify(&ok, &map, 3).unwrap());
    }

    #[test]
    fn export_writes_text_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let filter = DisclaimerFilter::builtin();
        let reviews = sanitize_reviews(
            vec![
                record(0, "Great grits.", ReviewStatus::Ok),
                record(1, "As an AI.", ReviewStatus::Ok),
            ],
            &filter,
        );
        let n = export_for_parsing(
            &reviews,
            &CuisineRegionMap::builtin(),
            &dir.path().join("t.ndjson"),
            &dir.path().join("m.csv"),
        )
        .unwrap();
        assert_eq!(n, 1);
        let text = std::fs::read_to_string(dir.path().join("t.ndjson")).unwrap();
        assert_eq!(text, "{\"review_id\":\"m-000000\",\"text\":\"Great grits.\"}\n");
        let meta = read_synthetic_meta(&dir.path().join("m.csv")).unwrap();
        assert_eq!(meta[0].region, Region::Us);
        assert_eq!(meta[0].sentiment, Sentiment::Positive);
    }
}
