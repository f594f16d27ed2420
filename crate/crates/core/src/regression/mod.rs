//! Least-squares regression with dummy coding, inference and diagnostics.

mod design;
pub mod dist;
mod ols;
mod study;
mod vif;
mod wald;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use design::{build_design_matrix, dummy_name, Dataset, Design, RegressionSpec, SampleFilter, Term, INTERCEPT};
pub use ols::{demean_within, fit_design, fit_ols, fit_ols_named, OlsOptions, RegressionResult, StandardErrors};
pub use study::{run_study, ModelResult, SkippedModel, StudyKind, StudyOptions, StudyOutput, StudyRow, SENTIMENTS};
pub use vif::vif;
pub use wald::{wald_compare, WaldTest};

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("empty sample")]
    EmptySample,
    #[error("{n} rows cannot identify {params} parameters")]
    NoDegreesOfFreedom { n: usize, params: usize },
    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("specification error: {0}")]
    Spec(String),
    #[error("{0}")]
    Contract(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Figure legend marks: ns above 0.05, then *, **, *** below 0.05, 0.01, 0.001.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

/// One serialized coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub study: String,
    pub model: String,
    pub outcome: String,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub stars: String,
    pub n: usize,
}

impl CoefficientRow {
    pub fn from_result(study: &str, model: &str, outcome: &str, r: &RegressionResult) -> Vec<Self> {
        (0..r.columns.len())
            .map(|j| CoefficientRow {
                study: study.to_string(),
                model: model.to_string(),
                outcome: outcome.to_string(),
                term: r.columns[j].clone(),
                estimate: r.coefficients[j],
                se: r.standard_errors[j],
                t: r.t_stats[j],
                p: r.p_values[j],
                ci_low: r.ci95[j].0,
                ci_high: r.ci95[j].1,
                stars: significance_stars(r.p_values[j]).to_string(),
                n: r.n,
            })
            .collect()
    }
}
