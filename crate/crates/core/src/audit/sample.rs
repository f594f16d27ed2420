use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::{PromptJob, Sentiment};
use super::{AuditError, GeneratedReview};
use crate::corpus::{CuisineRegionMap, Region};

/// Seeded subsample with the same number of reviews in every region,
/// equal to the smallest region count. Output keeps job order.
pub fn stratify(
    reviews: &[GeneratedReview],
    map: &CuisineRegionMap,
    seed: u64,
) -> Result<Vec<GeneratedReview>, AuditError> {
    let mut ordered: Vec<&GeneratedReview> = reviews.iter().collect();
    ordered.sort_by_key(|r| r.job_index);
    let mut by_region: BTreeMap<Region, Vec<&GeneratedReview>> = BTreeMap::new();
    for r in ordered {
        let region = map
            .region_of(&r.job.cuisine)
            .ok_or_else(|| AuditError::Config(format!("cuisine `{}` has no region", r.job.cuisine)))?;
        by_region.entry(region).or_default().push(r);
    }
    let missing: Vec<Region> = Region::ALL.into_iter().filter(|r| !by_region.contains_key(r)).collect();
    if !missing.is_empty() {
        return Err(AuditError::MissingRegions(missing));
    }
    let target = by_region.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target * by_region.len());
    for members in by_region.values() {
        let mut keep = sample(&mut rng, members.len(), target).into_vec();
        keep.sort_unstable();
        out.extend(keep.into_iter().map(|i| members[i].clone()));
    }
    out.sort_by_key(|r| r.job_index);
    Ok(out)
}

/// Target sentiment shares from a star histogram (index 0 is one star).
pub fn sentiment_target_from_stars(histogram: [u64; 5]) -> BTreeMap<Sentiment, f64> {
    let total: u64 = histogram.iter().sum();
    Sentiment::ALL
        .into_iter()
        .map(|s| {
            let n = histogram[usize::from(s.stars()) - 1];
            (s, if total == 0 { 0.2 } else { n as f64 / total as f64 })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentShare {
    pub sentiment: Sentiment,
    pub target: f64,
    pub realized: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentMatch {
    /// Jobs with the number of times each should be issued.
    pub jobs: Vec<(PromptJob, usize)>,
    pub total: usize,
    pub report: Vec<SentimentShare>,
}

impl SentimentMatch {
    /// Jobs repeated by multiplicity, in input order.
    pub fn expanded(&self) -> Vec<PromptJob> {
        self.jobs
            .iter()
            .flat_map(|(j, m)| std::iter::repeat(j.clone()).take(*m))
            .collect()
    }
}

/// Assigns each job a multiplicity so that sentiment shares of the issued
/// total follow `target`. The total is the smallest one giving every job
/// of a targeted sentiment at least one issue; per-sentiment counts use
/// largest remainders, so each realized share is within 1/total.
pub fn match_sentiment_distribution(
    jobs: &[PromptJob],
    target: &BTreeMap<Sentiment, f64>,
) -> Result<SentimentMatch, AuditError> {
    let sum: f64 = target.values().sum();
    if (sum - 1.0).abs() > 1e-9 || target.values().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(AuditError::Config(format!(
            "sentiment target must be a distribution, sums to {sum}"
        )));
    }
    let mut n: BTreeMap<Sentiment, usize> = BTreeMap::new();
    for j in jobs {
        *n.entry(j.sentiment).or_insert(0) += 1;
    }
    let share = |s: &Sentiment| target.get(s).copied().unwrap_or(0.0);
    for (s, t) in target {
        if *t > 0.0 && !n.contains_key(s) {
            return Err(AuditError::Config(format!(
                "target gives {s} weight {t} but no job has it"
            )));
        }
    }
    let total = n
        .iter()
        .filter(|(s, _)| share(s) > 0.0)
        .map(|(s, c)| ((*c as f64 / share(s)) - 1e-9).ceil() as usize)
        .max()
        .unwrap_or(0);

    let mut counts: BTreeMap<Sentiment, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for s in n.keys() {
        let exact = share(s) * total as f64;
        let floor = (exact + 1e-9).floor() as usize;
        counts.insert(*s, floor);
        remainders.push((exact - floor as f64, *s));
    }
    let assigned: usize = counts.values().sum();
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, s) in remainders.into_iter().take(total.saturating_sub(assigned)) {
        *counts.get_mut(&s).unwrap() += 1;
    }

    let mut seen: BTreeMap<Sentiment, usize> = BTreeMap::new();
    let weighted = jobs
        .iter()
        .map(|j| {
            let k = seen.entry(j.sentiment).or_insert(0);
            let (c, m) = (counts[&j.sentiment], n[&j.sentiment]);
            let mult = c / m + usize::from(*k < c % m);
            *k += 1;
            (j.clone(), mult)
        })
        .collect();
    let report = Sentiment::ALL
        .into_iter()
        .filter(|s| target.contains_key(s) || n.contains_key(s))
        .map(|s| {
            let count = counts.get(&s).copied().unwrap_or(0);
            SentimentShare {
                sentiment: s,
                target: share(&s),
                realized: if total == 0 { 0.0 } else { count as f64 / total as f64 },
                count,
            }
        })
        .collect();
    Ok(SentimentMatch {
        jobs: weighted,
        total,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::prompt::{expand_prompts, GridConfig};
    use crate::audit::ReviewStatus;
    use proptest::prelude::*;

    fn review(i: usize, cuisine: &str) -> GeneratedReview {
        GeneratedReview {
            job_index: i,
            job_id: format!("{i}"),
            job: PromptJob {
                template_id: 3,
                sentiment: Sentiment::Neutral,
                price_tier: 2,
                cuisine: cuisine.into(),
                focus: None,
            },
            model_id: "mock".into(),
            raw_text: "ok".into(),
            clean_text: Some("ok".into()),
            status: ReviewStatus::Ok,
            created_at: chrono::DateTime::UNIX_EPOCH,
            error: None,
        }
    }

    fn reviews(counts: &[(&str, usize)]) -> Vec<GeneratedReview> {
        let mut out = Vec::new();
        for (c, n) in counts {
            for _ in 0..*n {
                out.push(review(out.len(), c));
            }
        }
        out
    }

    #[test]
    fn stratify_to_smallest_region() {
        let map = CuisineRegionMap::builtin();
        let rs = reviews(&[("southern", 10), ("greek", 8), ("cuban", 8), ("thai", 8)]);
        let out = stratify(&rs, &map, 1).unwrap();
        assert_eq!(out.len(), 32);
        let us = out.iter().filter(|r| r.job.cuisine == "southern").count();
        assert_eq!(us, 8);
        assert_eq!(out, stratify(&rs, &map, 1).unwrap());
        assert!(out.windows(2).all(|w| w[0].job_index < w[1].job_index));

        let even = reviews(&[("southern", 3), ("greek", 3), ("cuban", 3), ("thai", 3)]);
        assert_eq!(stratify(&even, &map, 9).unwrap(), even);
    }

    #[test]
    fn missing_region_is_reported() {
        let map = CuisineRegionMap::builtin();
        let rs = reviews(&[("southern", 2), ("greek", 2)]);
        match stratify(&rs, &map, 1) {
            Err(AuditError::MissingRegions(m)) => assert_eq!(m, vec![Region::Lat, Region::As]),
            other => panic!("{other:?}"),
        }
    }

    fn jobs() -> Vec<PromptJob> {
        expand_prompts(&GridConfig {
            templates: vec![3],
            cuisines: vec!["thai".into(), "greek".into(), "cuban".into()],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn uniform_target_is_one_each() {
        let t: BTreeMap<_, _> = Sentiment::ALL.iter().map(|s| (*s, 0.2)).collect();
        let m = match_sentiment_distribution(&jobs(), &t).unwrap();
        assert!(m.jobs.iter().all(|(_, k)| *k == 1));
        assert_eq!(m.total, jobs().len());
    }

    #[test]
    fn skewed_target_within_rounding() {
        let t: BTreeMap<_, _> = [
            (Sentiment::VeryPositive, 0.45),
            (Sentiment::Positive, 0.25),
            (Sentiment::Neutral, 0.11),
            (Sentiment::Negative, 0.08),
            (Sentiment::VeryNegative, 0.11),
        ]
        .into_iter()
        .collect();
        let m = match_sentiment_distribution(&jobs(), &t).unwrap();
        let total: usize = m.jobs.iter().map(|(_, k)| k).sum();
        assert_eq!(total, m.total);
        for share in &m.report {
            assert!((share.realized - share.target).abs() <= 1.0 / total as f64);
        }
        let vp: usize = m
            .jobs
            .iter()
            .filter(|(j, _)| j.sentiment == Sentiment::VeryPositive)
            .map(|(_, k)| k)
            .sum();
        assert!((vp as f64 / total as f64 - 0.45).abs() <= 1.0 / total as f64);
        assert!(m.jobs.iter().all(|(_, k)| *k >= 1));
    }

    #[test]
    fn single_sentiment_target() {
        let t: BTreeMap<_, _> = [(Sentiment::Negative, 1.0)].into_iter().collect();
        let m = match_sentiment_distribution(&jobs(), &t).unwrap();
        assert!(m.expanded().iter().all(|j| j.sentiment == Sentiment::Negative));
        assert_eq!(m.expanded().len(), jobs().len() / 5);
    }

    #[test]
    fn target_from_histogram() {
        let t = sentiment_target_from_stars([10, 10, 15, 20, 45]);
        assert_eq!(t[&Sentiment::VeryPositive], 0.45);
        assert_eq!(t[&Sentiment::VeryNegative], 0.10);
        assert!(match_sentiment_distribution(&jobs(), &[(Sentiment::Neutral, 0.5)].into_iter().collect()).is_err());
    }

    proptest! {
        #[test]
        fn realized_shares_within_one_over_total(w in proptest::collection::vec(1u32..100, 5)) {
            let sum: u32 = w.iter().sum();
            let t: BTreeMap<_, _> = Sentiment::ALL.iter().zip(&w).map(|(s, x)| (*s, f64::from(*x) / f64::from(sum))).collect();
            let m = match_sentiment_distribution(&jobs(), &t).unwrap();
            let total: usize = m.jobs.iter().map(|(_, k)| k).sum();
            prop_assert_eq!(total, m.total);
            for share in &m.report {
                prop_assert!((share.realized - share.target).abs() <= 1.0 / total as f64 + 1e-12);
            }
        }

        #[test]
        fn stratified_counts_equal(counts in proptest::collection::vec(1usize..30, 4), seed in any::<u64>()) {
            let map = CuisineRegionMap::builtin();
            let rs = reviews(&[("southern", counts[0]), ("greek", counts[1]), ("cuban", counts[2]), ("thai", counts[3])]);
            let out = stratify(&rs, &map, seed).unwrap();
            let min = *counts.iter().min().unwrap();
            for c in ["southern", "greek", "cuban", "thai"] {
                prop_assert_eq!(out.iter().filter(|r| r.job.cuisine == c).count(), min);
            }
        }
    }
}
