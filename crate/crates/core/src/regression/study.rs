use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{build_design_matrix, Dataset, RegressionSpec, SampleFilter, Term};
use super::ols::{demean_within, fit_design, OlsOptions, RegressionResult};
use super::vif::vif;
use super::RegressionError;
use crate::census::{code_hi_lo, HiLo};
use crate::corpus::Region;
use crate::lexicon::{Frame, FramingScore, Outcome, Subset};

pub const SENTIMENTS: [&str; 5] = ["very negative", "negative", "neutral", "positive", "very positive"];

const PRICE_LEVELS: [&str; 4] = ["1", "2", "3", "4"];
const REGION_LEVELS: [&str; 4] = ["US", "EUR", "LAT", "AS"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StudyKind {
    #[serde(rename = "study1a")]
    Study1A,
    #[serde(rename = "study1b")]
    Study1B,
    #[serde(rename = "study2")]
    Study2,
    #[serde(rename = "glass_ceiling")]
    GlassCeiling,
    #[serde(rename = "study3")]
    Study3,
}

impl StudyKind {
    pub const ALL: [StudyKind; 5] = [
        StudyKind::Study1A,
        StudyKind::Study1B,
        StudyKind::Study2,
        StudyKind::GlassCeiling,
        StudyKind::Study3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Study1A => "study1a",
            StudyKind::Study1B => "study1b",
            StudyKind::Study2 => "study2",
            StudyKind::GlassCeiling => "glass_ceiling",
            StudyKind::Study3 => "study3",
        }
    }

    pub fn outcomes(self) -> Vec<Outcome> {
        let status = || {
            let mut v: Vec<Outcome> = Frame::STATUS.iter().map(|f| Outcome::Frame(*f)).collect();
            v.extend(Subset::ALL.iter().map(|s| Outcome::Subset(*s)));
            v
        };
        match self {
            StudyKind::Study1A | StudyKind::Study1B => Frame::OTHERING.iter().map(|f| Outcome::Frame(*f)).collect(),
            StudyKind::Study2 | StudyKind::GlassCeiling => status(),
            StudyKind::Study3 => {
                let mut v: Vec<Outcome> = Frame::OTHERING.iter().map(|f| Outcome::Frame(*f)).collect();
                v.extend(status());
                v
            }
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyKind {
    type Err = RegressionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace(['-', ' '], "_");
        StudyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| RegressionError::Spec(format!("unknown study `{s}`")))
    }
}

/// One review with everything the study specifications may need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub review_id: String,
    pub business_id: String,
    pub user_id: String,
    pub region: Region,
    pub price_tier: Option<u8>,
    pub business_stars: Option<f64>,
    pub length: f64,
    pub income: Option<f64>,
    pub diversity: Option<f64>,
    pub pct_asian: Option<f64>,
    pub pct_hispanic: Option<f64>,
    pub sentiment: Option<String>,
    pub nonlocal: bool,
    pub score: FramingScore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    /// Models with fewer rows are skipped.
    pub min_n: usize,
    pub standardize: bool,
    /// VIFs at or above this value are reported as failures.
    pub vif_threshold: f64,
    pub cluster_by_business: bool,
    /// Demean within reviewer (an approximation, not a mixed model).
    pub within_user: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            min_n: 30,
            standardize: true,
            vif_threshold: 2.0,
            cluster_by_business: false,
            within_user: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelResult {
    pub study: StudyKind,
    /// Subsample label, e.g. `AS/pct_asian`, or `all`.
    pub model: String,
    pub outcome: Outcome,
    pub spec: RegressionSpec,
    pub result: RegressionResult,
    pub vif: BTreeMap<String, f64>,
    pub vif_ok: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedModel {
    pub study: StudyKind,
    pub model: String,
    pub outcome: Outcome,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StudyOutput {
    pub models: Vec<ModelResult>,
    pub skipped: Vec<SkippedModel>,
}

impl StudyOutput {
    pub fn find(&self, model: &str, outcome: Outcome) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.model == model && m.outcome == outcome)
    }

    pub fn vif_ok(&self) -> bool {
        self.models.iter().all(|m| m.vif_ok)
    }
}

fn region_term(reference: Region) -> Term {
    Term::categorical("region", &REGION_LEVELS, reference.as_str())
}

fn price_term() -> Term {
    Term::categorical("price", &PRICE_LEVELS, "2")
}

fn controls(with_price: bool) -> Vec<Term> {
    let mut v = vec![Term::continuous("length")];
    if with_price {
        v.push(price_term());
    }
    v.extend(["stars", "income", "diversity"].map(Term::continuous));
    v
}

/// A model to fit: label, specification and the rows it draws from.
struct Job {
    model: String,
    outcome: Outcome,
    spec: RegressionSpec,
    rows: Vec<usize>,
    extra: Vec<(String, Vec<String>)>,
}

fn has_controls(r: &StudyRow, with_price: bool) -> bool {
    (!with_price || r.price_tier.is_some()) && r.business_stars.is_some() && r.income.is_some() && r.diversity.is_some()
}

fn jobs(kind: StudyKind, rows: &[StudyRow], opts: &StudyOptions, skipped: &mut Vec<SkippedModel>) -> Vec<Job> {
    let all: Vec<usize> = (0..rows.len()).collect();
    let mut out = Vec::new();
    let outcomes = kind.outcomes();
    let spec = |outcome: Outcome, covariates: Vec<Term>| RegressionSpec {
        outcome: outcome.as_str().to_string(),
        covariates,
        sample_filter: Vec::new(),
        standardize: opts.standardize,
    };
    match kind {
        StudyKind::Study1A | StudyKind::Study2 | StudyKind::GlassCeiling => {
            let glass = kind == StudyKind::GlassCeiling;
            let reference = if kind == StudyKind::Study1A {
                Region::Us
            } else {
                Region::Eur
            };
            let complete: Vec<usize> = all.iter().copied().filter(|&i| has_controls(&rows[i], true)).collect();
            for &o in &outcomes {
                let mut covs = vec![region_term(reference)];
                covs.extend(controls(!glass));
                let mut s = spec(o, covs);
                if glass {
                    s.sample_filter.push(SampleFilter {
                        column: "price".into(),
                        allowed: vec!["3".into(), "4".into()],
                    });
                }
                out.push(Job {
                    model: "all".into(),
                    outcome: o,
                    spec: s,
                    rows: complete.clone(),
                    extra: vec![],
                });
                if kind == StudyKind::Study1A {
                    let imm: Vec<String> = complete
                        .iter()
                        .map(|&i| if rows[i].region.is_immigrant() { "IMM" } else { "US" }.to_string())
                        .collect();
                    let mut covs = vec![Term::categorical("immigrant", &["US", "IMM"], "US")];
                    covs.extend(controls(true));
                    out.push(Job {
                        model: "pooled".into(),
                        outcome: o,
                        spec: spec(o, covs),
                        rows: complete.clone(),
                        extra: vec![("immigrant".into(), imm)],
                    });
                }
            }
        }
        StudyKind::Study1B => {
            for (region, column) in [(Region::As, "pct_asian"), (Region::Lat, "pct_hispanic")] {
                let pct = |r: &StudyRow| {
                    if region == Region::As {
                        r.pct_asian
                    } else {
                        r.pct_hispanic
                    }
                };
                let sub: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let r = &rows[i];
                        r.region == region && !r.nonlocal && pct(r).is_some() && has_controls(r, true)
                    })
                    .collect();
                let label = format!("{}/{column}", region.as_str());
                let mut by_business: BTreeMap<&str, f64> = BTreeMap::new();
                for &i in &sub {
                    by_business.insert(&rows[i].business_id, pct(&rows[i]).unwrap());
                }
                if by_business.is_empty() {
                    for &o in &outcomes {
                        skipped.push(SkippedModel {
                            study: kind,
                            model: label.clone(),
                            outcome: o,
                            reason: "no rows".into(),
                        });
                    }
                    continue;
                }
                let values: Vec<f64> = by_business.values().copied().collect();
                let coding = match code_hi_lo(&values) {
                    Ok(c) => c,
                    Err(e) => {
                        for &o in &outcomes {
                            skipped.push(SkippedModel {
                                study: kind,
                                model: label.clone(),
                                outcome: o,
                                reason: e.to_string(),
                            });
                        }
                        continue;
                    }
                };
                let code: BTreeMap<&str, HiLo> =
                    by_business.keys().copied().zip(coding.codes.iter().copied()).collect();
                let hilo: Vec<String> = sub
                    .iter()
                    .map(|&i| code[rows[i].business_id.as_str()].to_string())
                    .collect();
                for &o in &outcomes {
                    let mut covs = vec![Term::categorical("population", &["hi", "lo"], "hi")];
                    covs.extend(controls(true));
                    out.push(Job {
                        model: label.clone(),
                        outcome: o,
                        spec: spec(o, covs),
                        rows: sub.clone(),
                        extra: vec![("population".into(), hilo.clone())],
                    });
                }
            }
        }
        StudyKind::Study3 => {
            let sub: Vec<usize> = all.iter().copied().filter(|&i| rows[i].sentiment.is_some()).collect();
            for &o in &outcomes {
                let reference = match o {
                    Outcome::Frame(f) if Frame::OTHERING.contains(&f) => Region::Us,
                    _ => Region::Eur,
                };
                let covs = vec![
                    region_term(reference),
                    Term::categorical("sentiment", &SENTIMENTS, "neutral"),
                ];
                out.push(Job {
                    model: "all".into(),
                    outcome: o,
                    spec: spec(o, covs),
                    rows: sub.clone(),
                    extra: vec![],
                });
            }
        }
    }
    out
}

fn dataset(rows: &[StudyRow], idx: &[usize], outcome: Outcome, extra: &[(String, Vec<String>)]) -> Dataset {
    let pick = |f: &dyn Fn(&StudyRow) -> f64| idx.iter().map(|&i| f(&rows[i])).collect::<Vec<f64>>();
    let mut d = Dataset::new(idx.len())
        .with_categorical(
            "region",
            idx.iter().map(|&i| rows[i].region.as_str().to_string()).collect(),
        )
        .with_categorical(
            "price",
            idx.iter()
                .map(|&i| rows[i].price_tier.map(|p| p.to_string()).unwrap_or_default())
                .collect(),
        )
        .with_categorical(
            "sentiment",
            idx.iter()
                .map(|&i| rows[i].sentiment.clone().unwrap_or_default())
                .collect(),
        )
        .with_numeric("length", pick(&|r| r.length))
        .with_numeric("stars", pick(&|r| r.business_stars.unwrap_or(f64::NAN)))
        .with_numeric("income", pick(&|r| r.income.unwrap_or(f64::NAN)))
        .with_numeric("diversity", pick(&|r| r.diversity.unwrap_or(f64::NAN)))
        .with_numeric(outcome.as_str(), pick(&|r| f64::from(r.score.outcome(outcome))));
    for (name, values) in extra {
        d = d.with_categorical(name, values.clone());
    }
    d
}

fn fit_job(kind: StudyKind, job: &Job, rows: &[StudyRow], opts: &StudyOptions) -> Result<ModelResult, String> {
    if job.rows.len() < opts.min_n {
        return Err(format!("{} rows, below minimum {}", job.rows.len(), opts.min_n));
    }
    let data = dataset(rows, &job.rows, job.outcome, &job.extra);
    let design = build_design_matrix(&data, &job.spec).map_err(|e| e.to_string())?;
    if design.rows.len() < opts.min_n {
        return Err(format!(
            "{} rows after filtering, below minimum {}",
            design.rows.len(),
            opts.min_n
        ));
    }
    let v = if design.columns.len() >= 3 {
        vif(&design.x)
    } else {
        vec![1.0; design.columns.len() - 1]
    };
    let vif_map: BTreeMap<String, f64> = design.columns[1..].iter().cloned().zip(v.iter().copied()).collect();
    let vif_ok = v.iter().all(|x| *x < opts.vif_threshold);
    let mut warnings = design.warnings.clone();
    if !vif_ok {
        warnings.push(format!("VIF at or above {}: {:?}", opts.vif_threshold, vif_map));
    }
    let mut options = OlsOptions::default();
    if opts.cluster_by_business {
        options.clusters = Some(
            design
                .rows
                .iter()
                .map(|&i| rows[job.rows[i]].business_id.clone())
                .collect(),
        );
    }
    let result = if opts.within_user {
        let users: Vec<String> = design.rows.iter().map(|&i| rows[job.rows[i]].user_id.clone()).collect();
        let (within, absorbed) = demean_within(&design, &users);
        options.absorbed_dof = absorbed;
        warnings.push("within-user demeaning: approximation of a random-intercept model".into());
        fit_design(&within, &options)
    } else {
        fit_design(&design, &options)
    }
    .map_err(|e| e.to_string())?;
    Ok(ModelResult {
        study: kind,
        model: job.model.clone(),
        outcome: job.outcome,
        spec: job.spec.clone(),
        result,
        vif: vif_map,
        vif_ok,
        warnings,
    })
}

/// Fits every model of a canned study. Models that cannot be fit are
/// skipped with a reason rather than failing the whole study.
pub fn run_study(kind: StudyKind, rows: &[StudyRow], opts: &StudyOptions) -> StudyOutput {
    let mut skipped = Vec::new();
    let jobs = jobs(kind, rows, opts, &mut skipped);
    let fitted: Vec<_> = jobs.par_iter().map(|j| (j, fit_job(kind, j, rows, opts))).collect();
    let mut models = Vec::new();
    for (job, r) in fitted {
        match r {
            Ok(m) => models.push(m),
            Err(reason) => {
                log::warn!("{kind} {} {}: skipped: {reason}", job.model, job.outcome);
                skipped.push(SkippedModel {
                    study: kind,
                    model: job.model.clone(),
                    outcome: job.outcome,
                    reason,
                });
            }
        }
    }
    let users: BTreeSet<&str> = rows.iter().map(|r| r.user_id.as_str()).collect();
    log::info!(
        "{kind}: {} models fit, {} skipped, {} reviewers",
        models.len(),
        skipped.len(),
        users.len()
    );
    StudyOutput { models, skipped }
}
