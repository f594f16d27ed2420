use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::artifacts::{read_csv, write_csv, write_json, Manifest, StageRun};
use super::stages::LogOddsRow;
use super::*;
use crate::census::median;
use crate::regression::{CoefficientRow, INTERCEPT};

/// Terms shown in coefficient plots: group contrasts, not controls.
fn is_key_term(term: &str) -> bool {
    ["region[", "immigrant[", "population[", "sentiment["]
        .iter()
        .any(|p| term.starts_with(p))
}

#[derive(Serialize)]
struct PlotRow<'a> {
    model: &'a str,
    outcome: &'a str,
    term: &'a str,
    estimate: f64,
    ci_low: f64,
    ci_high: f64,
    p: f64,
    stars: &'a str,
    n: usize,
}

#[derive(Serialize)]
struct CovariateRow {
    variable: &'static str,
    region: String,
    n: usize,
    mean: f64,
    sd: f64,
    min: f64,
    median: f64,
    max: f64,
}

#[derive(Serialize)]
struct RegionCountRow {
    region: Region,
    businesses: usize,
    reviews: usize,
}

#[derive(Serialize)]
struct StudySummary {
    models: usize,
    key_terms: usize,
    significant_key_terms: usize,
}

fn describe(variable: &'static str, region: &str, values: &[f64]) -> Option<CovariateRow> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(CovariateRow {
        variable,
        region: region.to_string(),
        n: values.len(),
        mean,
        sd,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        median: median(values).ok()?,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Writes table- and plot-ready files under `report/`.
pub fn cmd_report(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::start("report", config)?;
    let coefficients: Vec<CoefficientRow> = read_csv(&run.artifact(COEFFICIENTS_CSV, "regress")?)?;
    let top: Vec<LogOddsRow> = read_csv(&run.artifact(TOP_FEATURES_CSV, "logodds")?)?;
    let businesses: Vec<BusinessRow> = read_csv(&run.artifact(BUSINESSES_CSV, "ingest")?)?;
    let reviews: Vec<ReviewRow> = read_csv(&run.artifact(REVIEWS_CSV, "ingest")?)?;
    let neighborhoods: Vec<NeighborhoodRow> = if run.out_path(NEIGHBORHOODS_CSV).is_file() {
        read_csv(&run.artifact(NEIGHBORHOODS_CSV, "ingest")?)?
    } else {
        Vec::new()
    };

    let studies: BTreeSet<&str> = coefficients.iter().map(|c| c.study.as_str()).collect();
    let mut summary = BTreeMap::new();
    for study in studies {
        let rows: Vec<&CoefficientRow> = coefficients.iter().filter(|c| c.study == study).collect();
        let out = run.output(&format!("report/tables/{study}_coefficients.csv"))?;
        write_csv(&out, rows.iter().filter(|c| c.term != INTERCEPT))?;
        let out = run.output(&format!("report/tables/{study}_coefficients.json"))?;
        write_json(&out, &rows)?;
        let plot: Vec<PlotRow> = rows
            .iter()
            .filter(|c| is_key_term(&c.term))
            .map(|c| PlotRow {
                model: &c.model,
                outcome: &c.outcome,
                term: &c.term,
                estimate: c.estimate,
                ci_low: c.ci_low,
                ci_high: c.ci_high,
                p: c.p,
                stars: &c.stars,
                n: c.n,
            })
            .collect();
        let models: BTreeSet<(&str, &str)> = rows.iter().map(|c| (c.model.as_str(), c.outcome.as_str())).collect();
        summary.insert(
            study.to_string(),
            StudySummary {
                models: models.len(),
                key_terms: plot.len(),
                significant_key_terms: plot.iter().filter(|p| p.stars != "ns").count(),
            },
        );
        let out = run.output(&format!("report/plots/{study}_coefficients.csv"))?;
        write_csv(&out, &plot)?;
    }

    let scopes: BTreeSet<&str> = top.iter().map(|t| t.scope.as_str()).collect();
    for scope in scopes {
        let out = run.output(&format!("report/tables/top_features_{}.csv", scope.to_lowercase()))?;
        write_csv(&out, top.iter().filter(|t| t.scope == scope))?;
    }

    let hood: HashMap<&str, &NeighborhoodRow> = neighborhoods.iter().map(|n| (n.business_id.as_str(), n)).collect();
    let biz_region: HashMap<&str, Region> = businesses.iter().map(|b| (b.business_id.as_str(), b.region)).collect();
    let mut covariates = Vec::new();
    let mut counts = Vec::new();
    let groups: Vec<Option<Region>> = std::iter::once(None).chain(Region::ALL.into_iter().map(Some)).collect();
    for g in groups {
        let label = g.map(|r| r.as_str().to_string()).unwrap_or_else(|| "ALL".into());
        let bs: Vec<&BusinessRow> = businesses.iter().filter(|b| g.is_none_or(|r| b.region == r)).collect();
        let rs: Vec<&ReviewRow> = reviews
            .iter()
            .filter(|r| g.is_none_or(|g| biz_region.get(r.business_id.as_str()) == Some(&g)))
            .collect();
        if let Some(r) = g {
            counts.push(RegionCountRow {
                region: r,
                businesses: bs.len(),
                reviews: rs.len(),
            });
        }
        let business_values =
            |f: &dyn Fn(&BusinessRow) -> Option<f64>| bs.iter().filter_map(|b| f(b)).collect::<Vec<f64>>();
        let rows = [
            describe(
                "price_tier",
                &label,
                &business_values(&|b| Some(f64::from(b.price_tier))),
            ),
            describe("business_stars", &label, &business_values(&|b| Some(b.mean_stars))),
            describe(
                "median_income",
                &label,
                &business_values(&|b| hood.get(b.business_id.as_str()).and_then(|n| n.median_income)),
            ),
            describe(
                "diversity",
                &label,
                &business_values(&|b| hood.get(b.business_id.as_str()).and_then(|n| n.diversity)),
            ),
            describe(
                "review_tokens",
                &label,
                &rs.iter().map(|r| r.token_count as f64).collect::<Vec<_>>(),
            ),
            describe(
                "review_stars",
                &label,
                &rs.iter().map(|r| f64::from(r.stars)).collect::<Vec<_>>(),
            ),
        ];
        covariates.extend(rows.into_iter().flatten());
    }
    let out = run.output("report/covariates.csv")?;
    write_csv(&out, &covariates)?;
    let out = run.output("report/region_counts.csv")?;
    write_csv(&out, &counts)?;
    let out = run.output("report/summary.json")?;
    write_json(&out, &summary)?;
    run.count("studies", summary.len() as u64);
    run.finish()
}
