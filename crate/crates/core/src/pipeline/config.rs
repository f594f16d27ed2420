use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::audit::{ClientConfig, GridConfig};
use crate::corpus::FilterConfig;
use crate::logodds::DEFAULT_Z_MIN;
use crate::regression::{StudyKind, StudyOptions};

/// Input files. Relative paths resolve against the config file's directory.
/// Unset optional paths fall back to the shipped data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub businesses: Option<PathBuf>,
    pub reviews: Option<PathBuf>,
    pub parses: Option<PathBuf>,
    pub coref: Option<PathBuf>,
    pub census: Option<PathBuf>,
    pub cuisines: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub anchors_food: Option<PathBuf>,
    pub anchors_staff: Option<PathBuf>,
    pub anchors_venue: Option<PathBuf>,
    pub dish_names: Option<PathBuf>,
    pub nonlocal_patterns: Option<PathBuf>,
    pub disclaimers: Option<PathBuf>,
    /// Raw generation JSONL to audit instead of calling the model.
    pub generated: Option<PathBuf>,
    /// Parses of the exported synthetic reviews.
    pub synthetic_parses: Option<PathBuf>,
    pub synthetic_coref: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogOddsConfig {
    pub top_k: usize,
    pub z_min: f64,
}

impl Default for LogOddsConfig {
    fn default() -> Self {
        LogOddsConfig {
            top_k: 10,
            z_min: DEFAULT_Z_MIN,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressConfig {
    #[serde(flatten)]
    pub options: StudyOptions,
    /// Fail the stage when any fitted model has a VIF at or above the threshold.
    pub vif_check: bool,
}

impl Default for RegressConfig {
    fn default() -> Self {
        RegressConfig {
            options: StudyOptions::default(),
            vif_check: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub grid: GridConfig,
    pub client: ClientConfig,
    /// Reweight sentiments toward the corpus star distribution.
    pub match_sentiment: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            grid: GridConfig::default(),
            client: ClientConfig::default(),
            match_sentiment: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub filters: FilterConfig,
    pub studies: Vec<StudyKind>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Keep a seeded sample of this many reviews at ingest.
    pub sample: Option<usize>,
    pub logodds: LogOddsConfig,
    pub regression: RegressConfig,
    pub audit: AuditConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            filters: FilterConfig::default(),
            studies: vec![
                StudyKind::Study1A,
                StudyKind::Study1B,
                StudyKind::Study2,
                StudyKind::GlassCeiling,
            ],
            output_dir: PathBuf::from("out"),
            seed: 0,
            sample: None,
            logodds: LogOddsConfig::default(),
            regression: RegressConfig::default(),
            audit: AuditConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads TOML or JSON by extension and resolves relative paths.
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
            }
            _ => toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?,
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative(base);
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.businesses,
            &mut paths.reviews,
            &mut paths.parses,
            &mut paths.coref,
            &mut paths.census,
            &mut paths.cuisines,
            &mut paths.lexicons,
            &mut paths.anchors_food,
            &mut paths.anchors_staff,
            &mut paths.anchors_venue,
            &mut paths.dish_names,
            &mut paths.nonlocal_patterns,
            &mut paths.disclaimers,
            &mut paths.generated,
            &mut paths.synthetic_parses,
            &mut paths.synthetic_coref,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Every configured input path that does not exist.
    pub fn missing_paths(&self) -> Vec<PathBuf> {
        let p = &self.paths;
        [
            &p.businesses,
            &p.reviews,
            &p.parses,
            &p.coref,
            &p.census,
            &p.cuisines,
            &p.lexicons,
            &p.anchors_food,
            &p.anchors_staff,
            &p.anchors_venue,
            &p.dish_names,
            &p.nonlocal_patterns,
            &p.disclaimers,
            &p.generated,
            &p.synthetic_parses,
            &p.synthetic_coref,
        ]
        .into_iter()
        .flatten()
        .filter(|p| !p.exists())
        .cloned()
        .collect()
    }
}
