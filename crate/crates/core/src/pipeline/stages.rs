use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;

use super::artifacts::{read_csv, write_csv, write_json, Manifest, StageRun};
use super::*;
use crate::audit::{
    self, expand_prompts, export_for_parsing, generate, match_sentiment_distribution, read_jsonl_path,
    read_synthetic_meta, sanitize_reviews, sentiment_target_from_stars, stratify, ChatClient, DisclaimerFilter,
    HttpClient, ReviewStatus, Sentiment, TemplateSet,
};
use crate::census::{link_neighborhood, CensusTable, NeighborhoodLink};
use crate::corpus::{
    load_businesses, load_reviews, parse_pattern_lines, CorpusCache, CuisineRegionMap, NonlocalFilter, Region,
};
use crate::extract::{AnchorCategory, AnchorSet, Anchors, DishNames, Extractor, FeatureRow, FramingFeature};
use crate::lexicon::{score_review, LexiconSet};
use crate::logodds::{frame_filtered_log_odds, top_associated, weighted_log_odds, CountTable, LogOddsEntry};
use crate::parse::{read_conllu, ParseError, ParsedReview};
use crate::regression::{run_study, wald_compare, CoefficientRow, StudyKind, StudyOutput, StudyRow};

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn cuisine_map(run: &mut StageRun) -> Result<CuisineRegionMap, PipelineError> {
    match run.optional(run.config.paths.cuisines.as_ref()) {
        Some(p) => CuisineRegionMap::from_path(&p).map_err(|e| PipelineError::stage(run.stage, e)),
        None => Ok(CuisineRegionMap::builtin()),
    }
}

fn lexicons(run: &mut StageRun) -> Result<LexiconSet, PipelineError> {
    match run.optional(run.config.paths.lexicons.as_ref()) {
        Some(p) => LexiconSet::from_path(&p).map_err(|e| PipelineError::stage(run.stage, e)),
        None => Ok(LexiconSet::builtin()),
    }
}

fn extractor(run: &mut StageRun) -> Result<Extractor, PipelineError> {
    let paths = &run.config.paths;
    let configured = [
        (AnchorCategory::Food, paths.anchors_food.clone()),
        (AnchorCategory::Staff, paths.anchors_staff.clone()),
        (AnchorCategory::Venue, paths.anchors_venue.clone()),
    ];
    let dish = paths.dish_names.clone();
    let builtin = Anchors::builtin();
    let mut sets = Vec::new();
    for (i, (category, path)) in configured.into_iter().enumerate() {
        sets.push(match run.optional(path.as_ref()) {
            Some(p) => AnchorSet::from_path(category, &p).map_err(|e| PipelineError::stage(run.stage, e))?,
            None => builtin.sets()[i].clone(),
        });
    }
    let anchors = Anchors::new(sets).map_err(|e| PipelineError::stage(run.stage, e))?;
    let dish_names = match run.optional(dish.as_ref()) {
        Some(p) => DishNames::from_path(&p).map_err(|e| PipelineError::stage(run.stage, e))?,
        None => DishNames::builtin(),
    };
    Ok(Extractor::new(anchors, dish_names))
}

#[derive(Serialize)]
struct IngestReport<'a> {
    businesses: &'a crate::corpus::DropReport,
    reviews: &'a crate::corpus::DropReport,
    nonlocal_reviews: usize,
    census_matched: usize,
    census_missing: usize,
}

pub fn cmd_ingest(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::start("ingest", config)?;
    let biz_path = run.external(config.paths.businesses.as_ref(), "businesses")?;
    let rev_path = run.external(config.paths.reviews.as_ref(), "reviews")?;
    let map = cuisine_map(&mut run)?;
    let businesses =
        load_businesses(&biz_path, &map, &config.filters).map_err(|e| PipelineError::stage("ingest", e))?;
    let mut reviews = load_reviews(&rev_path, &businesses).map_err(|e| PipelineError::stage("ingest", e))?;
    if let Some(n) = config.sample {
        reviews = reviews.sample(n, config.seed);
    }
    let nonlocal = match run.optional(config.paths.nonlocal_patterns.as_ref()) {
        Some(p) => {
            NonlocalFilter::new(&parse_pattern_lines(&read_text(&p)?)).map_err(|e| PipelineError::stage("ingest", e))?
        }
        None => NonlocalFilter::builtin(),
    };

    let out = run.output(BUSINESSES_CSV)?;
    let n_biz = write_csv(
        &out,
        businesses.iter().map(|b| BusinessRow {
            business_id: b.business_id.clone(),
            name: b.name.clone(),
            state: b.state.clone(),
            zipcode: b.zipcode.clone(),
            region: b.region,
            price_tier: b.price_tier,
            mean_stars: b.mean_stars,
            review_count: b.review_count,
            cuisine_tags: b.cuisine_tags.join(";"),
        }),
    )?;
    let mut n_nonlocal = 0;
    let rows: Vec<ReviewRow> = reviews
        .iter()
        .map(|r| {
            let flag = nonlocal.is_nonlocal(&r.text);
            n_nonlocal += usize::from(flag);
            ReviewRow {
                review_id: r.review_id.clone(),
                business_id: r.business_id.clone(),
                user_id: r.user_id.clone(),
                stars: r.stars,
                token_count: r.token_count,
                nonlocal: flag,
            }
        })
        .collect();
    let out = run.output(REVIEWS_CSV)?;
    let n_rev = write_csv(&out, &rows)?;

    let (mut matched, mut missing) = (0, 0);
    let mut neighborhoods = BTreeMap::new();
    if let Some(p) = run.optional(config.paths.census.as_ref()) {
        let census = CensusTable::from_path(&p).map_err(|e| PipelineError::stage("ingest", e))?;
        let links: Vec<NeighborhoodRow> = businesses
            .iter()
            .map(|b| {
                let link = link_neighborhood(b, &census);
                neighborhoods.insert(b.business_id.clone(), link.clone());
                (b, link)
            })
            .map(|(b, link)| match link {
                NeighborhoodLink::Matched(m) => {
                    matched += 1;
                    NeighborhoodRow {
                        business_id: b.business_id.clone(),
                        zipcode: m.zipcode.clone(),
                        matched: true,
                        median_income: Some(m.median_income),
                        diversity: Some(m.diversity),
                        pct_asian: Some(m.pct_asian),
                        pct_hispanic: Some(m.pct_hispanic),
                    }
                }
                NeighborhoodLink::Missing { zipcode } => {
                    missing += 1;
                    NeighborhoodRow {
                        business_id: b.business_id.clone(),
                        zipcode,
                        matched: false,
                        median_income: None,
                        diversity: None,
                        pct_asian: None,
                        pct_hispanic: None,
                    }
                }
            })
            .collect();
        let out = run.output(NEIGHBORHOODS_CSV)?;
        write_csv(&out, &links)?;
    }
    let out = run.output("ingest_report.json")?;
    write_json(
        &out,
        &IngestReport {
            businesses: &businesses.report,
            reviews: &reviews.report,
            nonlocal_reviews: n_nonlocal,
            census_matched: matched,
            census_missing: missing,
        },
    )?;
    let out = run.output(CORPUS_CACHE)?;
    CorpusCache {
        businesses,
        reviews,
        neighborhoods,
    }
    .write(&out)
    .map_err(|e| PipelineError::stage("ingest", e))?;
    run.count("businesses", n_biz as u64);
    run.count("reviews", n_rev as u64);
    run.count("nonlocal_reviews", n_nonlocal as u64);
    run.count("census_matched", matched as u64);
    run.count("census_missing", missing as u64);
    run.finish()
}

/// Calls `f` for every parsed review, skipping (and counting) reviews
/// rejected by the reader.
fn for_each_parse<F>(stage: &'static str, parses: &Path, coref: Option<&Path>, mut f: F) -> Result<u64, PipelineError>
where
    F: FnMut(ParsedReview) -> Result<(), PipelineError>,
{
    let reader = read_conllu(parses, coref).map_err(|e| PipelineError::stage(stage, e))?;
    let mut rejected = 0;
    for item in reader {
        match item {
            Ok(review) => f(review)?,
            Err(ParseError::Rejected { review_id, reason }) => {
                log::warn!("{stage}: review {review_id} rejected: {reason}");
                rejected += 1;
            }
            Err(e) => return Err(PipelineError::stage(stage, format!("{}: {e}", parses.display()))),
        }
    }
    Ok(rejected)
}

fn extract_file(
    run: &mut StageRun,
    parses: &Path,
    coref: Option<&Path>,
    keep: Option<&HashSet<String>>,
    extractor: &Extractor,
    out_rel: &str,
    prefix: &str,
) -> Result<(), PipelineError> {
    let mut rows: Vec<FeatureRow> = Vec::new();
    let (mut parsed, mut skipped) = (0u64, 0u64);
    let rejected = for_each_parse(run.stage, parses, coref, |review| {
        if keep.is_some_and(|k| !k.contains(&review.review_id)) {
            skipped += 1;
            return Ok(());
        }
        parsed += 1;
        rows.extend(extractor.extract(&review).iter().map(FeatureRow::from));
        Ok(())
    })?;
    let out = run.output(out_rel)?;
    let n = write_csv(&out, &rows)?;
    run.count(&format!("{prefix}parsed_reviews"), parsed);
    run.count(&format!("{prefix}rejected_reviews"), rejected);
    run.count(&format!("{prefix}parses_outside_corpus"), skipped);
    run.count(&format!("{prefix}features"), n as u64);
    Ok(())
}

pub fn cmd_extract(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::start("extract", config)?;
    let reviews: Vec<ReviewRow> = read_csv(&run.artifact(REVIEWS_CSV, "ingest")?)?;
    let parses = run.external(config.paths.parses.as_ref(), "parses")?;
    let coref = run.optional(config.paths.coref.as_ref());
    let extractor = extractor(&mut run)?;
    let keep: HashSet<String> = reviews.into_iter().map(|r| r.review_id).collect();
    extract_file(
        &mut run,
        &parses,
        coref.as_deref(),
        Some(&keep),
        &extractor,
        FEATURES_CSV,
        "",
    )?;
    if let Some(p) = run.optional(config.paths.synthetic_parses.as_ref()) {
        let coref = run.optional(config.paths.synthetic_coref.as_ref());
        extract_file(
            &mut run,
            &p,
            coref.as_deref(),
            None,
            &extractor,
            SYNTHETIC_FEATURES_CSV,
            "synthetic_",
        )?;
    }
    run.finish()
}

fn score_file(
    run: &mut StageRun,
    features: &Path,
    parses: &Path,
    order: Option<&[String]>,
    lexicons: &LexiconSet,
    out_rel: &str,
) -> Result<(), PipelineError> {
    let rows: Vec<FeatureRow> = read_csv(features)?;
    let mut by_review: HashMap<String, Vec<FramingFeature>> = HashMap::new();
    for r in rows {
        by_review
            .entry(r.review_id.clone())
            .or_default()
            .push(FramingFeature::from(r));
    }
    let wanted: Option<HashSet<&str>> = order.map(|o| o.iter().map(String::as_str).collect());
    let mut scores: Vec<ScoreRow> = Vec::new();
    for_each_parse(run.stage, parses, None, |review| {
        if wanted.as_ref().is_some_and(|w| !w.contains(review.review_id.as_str())) {
            return Ok(());
        }
        let features = by_review.remove(&review.review_id).unwrap_or_default();
        let s = score_review(&review.review_id, &features, Some(&review.sentences), lexicons);
        scores.push(ScoreRow::from(&s));
        Ok(())
    })?;
    if !by_review.is_empty() {
        let mut ids: Vec<&String> = by_review.keys().collect();
        ids.sort();
        return Err(PipelineError::stage(
            run.stage,
            format!(
                "{} feature review id(s) absent from the parses, e.g. `{}`",
                ids.len(),
                ids[0]
            ),
        ));
    }
    if let Some(order) = order {
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        scores.sort_by_key(|s| pos[s.review_id.as_str()]);
        run.count("reviews_without_parse", (order.len() - scores.len()) as u64);
    }
    let out = run.output(out_rel)?;
    let n = write_csv(&out, &scores)?;
    run.count(&format!("{}_rows", out_rel.trim_end_matches(".csv")), n as u64);
    Ok(())
}

pub fn cmd_score(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::start("score", config)?;
    let reviews: Vec<ReviewRow> = read_csv(&run.artifact(REVIEWS_CSV, "ingest")?)?;
    let features = run.artifact(FEATURES_CSV, "extract")?;
    let parses = run.external(config.paths.parses.as_ref(), "parses")?;
    let lexicons = lexicons(&mut run)?;
    let order: Vec<String> = reviews.into_iter().map(|r| r.review_id).collect();
    score_file(&mut run, &features, &parses, Some(&order), &lexicons, SCORES_CSV)?;
    if let Some(p) = config.paths.synthetic_parses.clone() {
        let features = run.artifact(SYNTHETIC_FEATURES_CSV, "extract")?;
        let p = run.external(Some(&p), "synthetic_parses")?;
        score_file(&mut run, &features, &p, None, &lexicons, SYNTHETIC_SCORES_CSV)?;
    }
    run.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub(crate) struct LogOddsRow {
    pub scope: String,
    pub group: String,
    pub rank: usize,
    pub word: String,
    pub delta: f64,
    pub n_c: u64,
    pub n_notc: u64,
    pub n_prior: u64,
}

fn logodds_rows(scope: &str, entries: &[LogOddsEntry]) -> Vec<LogOddsRow> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| LogOddsRow {
            scope: scope.to_string(),
            group: e.group.clone(),
            rank: i + 1,
            word: e.word.clone(),
            delta: e.delta,
            n_c: e.n_c,
            n_notc: e.n_notc,
            n_prior: e.n_prior,
        })
        .collect()
}

fn review_regions(businesses: &[BusinessRow], reviews: &[ReviewRow]) -> HashMap<String, Region> {
    let biz: HashMap<&str, Region> = businesses.iter().map(|b| (b.business_id.as_str(), b.region)).collect();
    reviews
        .iter()
        .filter_map(|r| biz.get(r.business_id.as_str()).map(|g| (r.review_id.clone(), *g)))
        .collect()
}

pub fn cmd_logodds(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::start("logodds", config)?;
    let businesses: Vec<BusinessRow> = read_csv(&run.artifact(BUSINESSES_CSV, "ingest")?)?;
    let reviews: Vec<ReviewRow> = read_csv(&run.artifact(REVIEWS_CSV, "ingest")?)?;
    let features: Vec<FeatureRow> = read_csv(&run.artifact(FEATURES_CSV, "extract")?)?;
    let lexicons = lexicons(&mut run)?;
    let regions = review_regions(&businesses, &reviews);
    let labeled: Vec<(&str, &str)> = features
        .iter()
        .filter_map(|f| regions.get(&f.review_id).map(|g| (g.as_str(), f.lemma.as_str())))
        .collect();
    let present: Vec<Region> = Region::ALL
        .into_iter()
        .filter(|g| labeled.iter().any(|(l, _)| *l == g.as_str()))
        .collect();

    let mut all = Vec::new();
    let mut top = Vec::new();
    let mut table = CountTable::new();
    for (g, lemma) in &labeled {
        table.add_observed(g, lemma, 1);
    }
    for g in &present {
        let entries = weighted_log_odds(&table, g.as_str()).map_err(|e| PipelineError::stage("logodds", e))?;
        top.extend(logodds_rows(
            "ALL",
            &top_associated(&entries, config.logodds.top_k, config.logodds.z_min),
        ));
        all.extend(logodds_rows("ALL", &entries));
    }
    for lex in lexicons.iter() {
        let scope = serde_json::to_value(lex.frame)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        for g in &present {
            let entries = frame_filtered_log_odds(labeled.iter().copied(), lex, g.as_str());
            top.extend(logodds_rows(
                &scope,
                &top_associated(&entries, config.logodds.top_k, config.logodds.z_min),
            ));
            all.extend(logodds_rows(&scope, &entries));
        }
    }
    let out = run.output(LOGODDS_CSV)?;
    let n = write_csv(&out, &all)?;
    let out = run.output(TOP_FEATURES_CSV)?;
    let k = write_csv(&out, &top)?;
    run.count("labeled_features", labeled.len() as u64);
    run.count("logodds_rows", n as u64);
    run.count("top_features", k as u64);
    run.finish()
}

/// Joins reviews with business, neighborhood and score artifacts.
pub(crate) fn corpus_study_rows(
    businesses: &[BusinessRow],
    reviews: &[ReviewRow],
    neighborhoods: &[NeighborhoodRow],
    scores: &[ScoreRow],
) -> Vec<StudyRow> {
    let biz: HashMap<&str, &BusinessRow> = businesses.iter().map(|b| (b.business_id.as_str(), b)).collect();
    let hood: HashMap<&str, &NeighborhoodRow> = neighborhoods
        .iter()
        .filter(|n| n.matched)
        .map(|n| (n.business_id.as_str(), n))
        .collect();
    let score: HashMap<&str, &ScoreRow> = scores.iter().map(|s| (s.review_id.as_str(), s)).collect();
    reviews
        .iter()
        .filter_map(|r| {
            let b = biz.get(r.business_id.as_str())?;
            let s = score.get(r.review_id.as_str())?;
            let n = hood.get(r.business_id.as_str());
            Some(StudyRow {
                review_id: r.review_id.clone(),
                business_id: r.business_id.clone(),
                user_id: r.user_id.clone(),
                region: b.region,
                price_tier: Some(b.price_tier),
                business_stars: Some(b.mean_stars),
                length: r.token_count as f64,
                income: n.and_then(|n| n.median_income),
                diversity: n.and_then(|n| n.diversity),
                pct_asian: n.and_then(|n| n.pct_asian),
                pct_hispanic: n.and_then(|n| n.pct_hispanic),
                sentiment: Sentiment::from_stars(r.stars).map(|s| s.as_str().to_string()),
                nonlocal: r.nonlocal,
                score: (*s).into(),
            })
        })
        .collect()
}

fn synthetic_study_rows(run: &mut StageRun) -> Result<Vec<StudyRow>, PipelineError> {
    let scores: Vec<ScoreRow> = read_csv(&run.artifact(SYNTHETIC_SCORES_CSV, "score")?)?;
    let meta_path = run.artifact(SYNTHETIC_META_CSV, "audit")?;
    let meta = read_synthetic_meta(&meta_path).map_err(|e| PipelineError::stage("regress", e))?;
    let by_id: HashMap<&str, &ScoreRow> = scores.iter().map(|s| (s.review_id.as_str(), s)).collect();
    Ok(meta
        .iter()
        .filter_map(|m| {
            let s = by_id.get(m.review_id.as_str())?;
            Some(StudyRow {
                review_id: m.review_id.clone(),
                business_id: m.cuisine.clone(),
                user_id: m.model_id.clone(),
                region: m.region,
                price_tier: Some(m.price_tier),
                business_stars: None,
                length: 0.0,
                income: None,
                diversity: None,
                pct_asian: None,
                pct_hispanic: None,
                sentiment: Some(m.sentiment.as_str().to_string()),
                nonlocal: false,
                score: (*s).into(),
            })
        })
        .collect())
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    study: StudyKind,
    model: &'a str,
    outcome: String,
    n: usize,
    dof: usize,
    r_squared: f64,
    vif: &'a BTreeMap<String, f64>,
    vif_ok: bool,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct SkippedRow<'a> {
    study: StudyKind,
    model: &'a str,
    outcome: String,
    reason: &'a str,
}

#[derive(Serialize)]
struct WaldRow<'a> {
    study: StudyKind,
    model: &'a str,
    outcome: String,
    term_a: &'a str,
    term_b: &'a str,
    difference: f64,
    z: f64,
    p: f64,
}

pub fn cmd_regress(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::start("regress", config)?;
    let scores: Vec<ScoreRow> = read_csv(&run.artifact(SCORES_CSV, "score")?)?;
    let businesses: Vec<BusinessRow> = read_csv(&run.artifact(BUSINESSES_CSV, "ingest")?)?;
    let reviews: Vec<ReviewRow> = read_csv(&run.artifact(REVIEWS_CSV, "ingest")?)?;
    let needs_census = config.studies.iter().any(|s| *s != StudyKind::Study3);
    let neighborhoods: Vec<NeighborhoodRow> = if run.out_path(NEIGHBORHOODS_CSV).is_file() || needs_census {
        read_csv(&run.artifact(NEIGHBORHOODS_CSV, "ingest with paths.census set")?)?
    } else {
        Vec::new()
    };
    let corpus_rows = corpus_study_rows(&businesses, &reviews, &neighborhoods, &scores);
    let synthetic_rows = if config.studies.contains(&StudyKind::Study3) {
        synthetic_study_rows(&mut run)?
    } else {
        Vec::new()
    };

    let outputs: Vec<(StudyKind, StudyOutput)> = config
        .studies
        .iter()
        .map(|&kind| {
            let rows = if kind == StudyKind::Study3 {
                &synthetic_rows
            } else {
                &corpus_rows
            };
            (kind, run_study(kind, rows, &config.regression.options))
        })
        .collect();

    let mut coefficients = Vec::new();
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    let mut walds = Vec::new();
    let mut vif_failures = Vec::new();
    for (kind, output) in &outputs {
        for m in &output.models {
            let outcome = m.outcome.as_str().to_string();
            coefficients.extend(CoefficientRow::from_result(
                kind.as_str(),
                &m.model,
                &outcome,
                &m.result,
            ));
            if !m.vif_ok {
                vif_failures.push(format!("{kind}/{}/{outcome}", m.model));
            }
            summaries.push(ModelSummary {
                study: *kind,
                model: &m.model,
                outcome: outcome.clone(),
                n: m.result.n,
                dof: m.result.dof,
                r_squared: m.result.r_squared,
                vif: &m.vif,
                vif_ok: m.vif_ok,
                warnings: &m.warnings,
            });
            let region_terms: Vec<usize> = (0..m.result.columns.len())
                .filter(|&j| m.result.columns[j].starts_with("region["))
                .collect();
            for (a, &i) in region_terms.iter().enumerate() {
                for &j in &region_terms[a + 1..] {
                    if let Ok(w) = wald_compare(&m.result, i, j) {
                        walds.push(WaldRow {
                            study: *kind,
                            model: &m.model,
                            outcome: outcome.clone(),
                            term_a: &m.result.columns[i],
                            term_b: &m.result.columns[j],
                            difference: m.result.coefficients[i] - m.result.coefficients[j],
                            z: w.z,
                            p: w.p,
                        });
                    }
                }
            }
        }
        for s in &output.skipped {
            skipped.push(SkippedRow {
                study: *kind,
                model: &s.model,
                outcome: s.outcome.as_str().to_string(),
                reason: &s.reason,
            });
        }
    }
    let out = run.output(COEFFICIENTS_CSV)?;
    let n = write_csv(&out, &coefficients)?;
    let out = run.output("models.json")?;
    write_json(&out, &summaries)?;
    let out = run.output("skipped_models.csv")?;
    write_csv(&out, &skipped)?;
    let out = run.output("wald_tests.csv")?;
    write_csv(&out, &walds)?;
    run.count("corpus_rows", corpus_rows.len() as u64);
    run.count("synthetic_rows", synthetic_rows.len() as u64);
    run.count("models", summaries.len() as u64);
    run.count("skipped_models", skipped.len() as u64);
    run.count("coefficients", n as u64);
    run.count("vif_failures", vif_failures.len() as u64);
    run.finish()?;
    if config.regression.vif_check && !vif_failures.is_empty() {
        return Err(PipelineError::Vif {
            threshold: config.regression.options.vif_threshold,
            models: vif_failures,
        });
    }
    Ok(Manifest::read(
        &config.output_dir.join(MANIFEST_DIR).join("regress.json"),
    )?)
}

#[derive(Serialize)]
struct PromptRow {
    index: usize,
    key: String,
    template_id: u8,
    sentiment: Sentiment,
    price_tier: u8,
    cuisine: String,
    focus: String,
    prompt: String,
}

#[derive(Serialize)]
struct AuditReport {
    jobs: usize,
    sentiment_match: Option<audit::SentimentMatch>,
    generation: Option<audit::GenerateSummary>,
    records: usize,
    usable: usize,
    discarded: usize,
    failed: usize,
    usable_by_region: BTreeMap<Region, usize>,
    stratified: usize,
    exported: usize,
}

fn star_histogram(reviews: &[ReviewRow]) -> [u64; 5] {
    let mut h = [0u64; 5];
    for r in reviews {
        if (1..=5).contains(&r.stars) {
            h[usize::from(r.stars) - 1] += 1;
        }
    }
    h
}

/// Expands the prompt grid, generates (or reads) reviews, strips
/// disclaimers, stratifies by region and exports texts for parsing. A
/// client may be injected; otherwise the HTTP client is used, which reads
/// its API key from the environment.
pub fn cmd_audit(config: &PipelineConfig, client: Option<&dyn ChatClient>) -> Result<Manifest, PipelineError> {
    let mut run = StageRun::start("audit", config)?;
    let stage_err = |e: audit::AuditError| PipelineError::stage("audit", e);
    let map = cuisine_map(&mut run)?;
    let filter = match run.optional(config.paths.disclaimers.as_ref()) {
        Some(p) => DisclaimerFilter::new(&parse_pattern_lines(&read_text(&p)?)).map_err(stage_err)?,
        None => DisclaimerFilter::builtin(),
    };
    let grid = expand_prompts(&config.audit.grid).map_err(stage_err)?;
    let matched = if config.audit.match_sentiment && run.out_path(REVIEWS_CSV).is_file() {
        let reviews: Vec<ReviewRow> = read_csv(&run.artifact(REVIEWS_CSV, "ingest")?)?;
        let hist = star_histogram(&reviews);
        if hist.iter().sum::<u64>() > 0 {
            Some(match_sentiment_distribution(&grid, &sentiment_target_from_stars(hist)).map_err(stage_err)?)
        } else {
            None
        }
    } else {
        None
    };
    let jobs = matched.as_ref().map(|m| m.expanded()).unwrap_or_else(|| grid.clone());
    let templates = TemplateSet::default();
    let mut prompts = Vec::with_capacity(jobs.len());
    for (i, j) in jobs.iter().enumerate() {
        prompts.push(PromptRow {
            index: i,
            key: j.key(),
            template_id: j.template_id,
            sentiment: j.sentiment,
            price_tier: j.price_tier,
            cuisine: j.cuisine.clone(),
            focus: j.focus.clone().unwrap_or_default(),
            prompt: templates.render(j).map_err(stage_err)?,
        });
    }
    let out = run.output("audit/prompts.csv")?;
    write_csv(&out, &prompts)?;

    let (raw, generation) = match run.optional(config.paths.generated.as_ref()) {
        Some(p) => (read_jsonl_path(&p).map_err(stage_err)?, None),
        None => {
            let http;
            let client: &dyn ChatClient = match client {
                Some(c) => c,
                None => {
                    http = HttpClient::new(config.audit.client.clone()).map_err(stage_err)?;
                    &http
                }
            };
            let out = run.output("audit/generated.jsonl")?;
            let file = std::fs::File::create(&out).map_err(|e| PipelineError::io(&out, e))?;
            let mut sink = std::io::BufWriter::new(file);
            let summary = generate(&jobs, &templates, client, &config.audit.client, &mut sink).map_err(stage_err)?;
            drop(sink);
            (read_jsonl_path(&out).map_err(stage_err)?, Some(summary))
        }
    };
    let records = raw.len();
    let sanitized = sanitize_reviews(raw, &filter);
    let out = run.output("audit/sanitized.jsonl")?;
    audit::write_jsonl(
        std::io::BufWriter::new(std::fs::File::create(&out).map_err(|e| PipelineError::io(&out, e))?),
        &sanitized,
    )
    .map_err(stage_err)?;
    let status = |s: ReviewStatus| sanitized.iter().filter(|r| r.status == s).count();
    let usable: Vec<_> = sanitized
        .iter()
        .filter(|r| r.status == ReviewStatus::Ok)
        .cloned()
        .collect();
    let mut usable_by_region = BTreeMap::new();
    for r in &usable {
        if let Some(g) = map.region_of(&r.job.cuisine) {
            *usable_by_region.entry(g).or_insert(0) += 1;
        }
    }
    let stratified = stratify(&usable, &map, config.seed).map_err(stage_err)?;
    let out = run.output("audit/stratified.jsonl")?;
    audit::write_jsonl(
        std::io::BufWriter::new(std::fs::File::create(&out).map_err(|e| PipelineError::io(&out, e))?),
        &stratified,
    )
    .map_err(stage_err)?;
    let texts = run.output("audit/synthetic_texts.ndjson")?;
    let meta = run.output(SYNTHETIC_META_CSV)?;
    let exported = export_for_parsing(&stratified, &map, &texts, &meta).map_err(stage_err)?;
    let report = AuditReport {
        jobs: jobs.len(),
        sentiment_match: matched,
        generation,
        records,
        usable: usable.len(),
        discarded: status(ReviewStatus::Discarded),
        failed: status(ReviewStatus::Failed),
        usable_by_region,
        stratified: stratified.len(),
        exported,
    };
    let out = run.output("audit/audit_report.json")?;
    write_json(&out, &report)?;
    run.count("jobs", report.jobs as u64);
    run.count("records", records as u64);
    run.count("stratified", report.stratified as u64);
    run.count("exported", exported as u64);
    run.finish()
}
