use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::{RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};

use super::business::BusinessTable;
use super::ndjson::{for_each_line, LineOutcome};
use super::{DropReason, DropReport, IngestError};

const BUILTIN_NONLOCAL: &str = include_str!("../../data/nonlocal_patterns.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub business_id: String,
    pub user_id: String,
    pub stars: u8,
    pub text: String,
    /// Whitespace-delimited token count of `text`.
    pub token_count: usize,
}

impl Review {
    pub fn new(review_id: String, business_id: String, user_id: String, stars: u8, text: String) -> Self {
        let token_count = whitespace_tokens(&text);
        Review {
            review_id,
            business_id,
            user_id,
            stars,
            text,
            token_count,
        }
    }
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Deserialize)]
struct RawReview {
    review_id: Option<String>,
    business_id: Option<String>,
    user_id: Option<String>,
    stars: Option<f64>,
    text: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewTable {
    pub reviews: Vec<Review>,
    pub report: DropReport,
}

impl ReviewTable {
    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Review> {
        self.reviews.iter()
    }

    /// Keeps a seeded uniform sample of `n` reviews, preserving file order.
    pub fn sample(mut self, n: usize, seed: u64) -> Self {
        if n >= self.reviews.len() {
            return self;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = sample(&mut rng, self.reviews.len(), n).into_vec();
        keep.sort_unstable();
        let dropped = self.reviews.len() - n;
        let mut it = keep.into_iter().peekable();
        let mut i = 0usize;
        self.reviews.retain(|_| {
            let hit = it.peek() == Some(&i);
            if hit {
                it.next();
            }
            i += 1;
            hit
        });
        *self.report.drops.entry(DropReason::Sampled).or_insert(0) += dropped;
        self.report.retained = self.reviews.len();
        self
    }
}

fn decode_review(bytes: &[u8]) -> LineOutcome<RawReview> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => return LineOutcome::Rejected(DropReason::InvalidUtf8, format!("non-UTF-8 review line: {e}")),
    };
    match serde_json::from_str::<RawReview>(text) {
        Ok(raw) => LineOutcome::Record(raw),
        Err(e) => LineOutcome::Rejected(DropReason::MalformedJson, format!("malformed JSON: {e}")),
    }
}

/// Reads Yelp review NDJSON, keeping reviews of retained businesses.
pub fn load_reviews(path: &Path, businesses: &BusinessTable) -> Result<ReviewTable, IngestError> {
    let mut table = ReviewTable::default();
    let report = &mut table.report;
    let reviews = &mut table.reviews;
    for_each_line(path, decode_review, |line, outcome| {
        let raw = match outcome {
            LineOutcome::Blank => return,
            LineOutcome::Rejected(reason, msg) => {
                report.input += 1;
                report.record_issue(line, reason, msg);
                return;
            }
            LineOutcome::Record(raw) => raw,
        };
        report.input += 1;
        let (Some(review_id), Some(business_id), Some(stars), Some(text)) =
            (raw.review_id, raw.business_id, raw.stars, raw.text)
        else {
            report.record_issue(line, DropReason::MissingField, "missing required review field");
            return;
        };
        if !businesses.contains(&business_id) {
            report.record_drop(DropReason::OrphanBusiness);
            return;
        }
        let rounded = stars.round();
        if (rounded - stars).abs() > 1e-9 || !(1.0..=5.0).contains(&rounded) {
            report.record_issue(
                line,
                DropReason::InvalidValue,
                format!("stars {stars} not an integer in 1..=5"),
            );
            return;
        }
        reviews.push(Review::new(
            review_id,
            business_id,
            raw.user_id.unwrap_or_default(),
            rounded as u8,
            text,
        ));
    })?;
    table.report.retained = table.reviews.len();
    log::info!(
        "reviews: {} read, {} retained, {} dropped",
        table.report.input,
        table.report.retained,
        table.report.dropped()
    );
    Ok(table)
}

/// Case-insensitive matcher for reviewers who say they are not local.
#[derive(Debug, Clone)]
pub struct NonlocalFilter {
    set: RegexSet,
}

impl NonlocalFilter {
    /// Compiles every pattern up front; an invalid pattern is a
    /// configuration error before any review is touched.
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, IngestError> {
        for p in patterns {
            if let Err(e) = regex::RegexBuilder::new(p.as_ref()).case_insensitive(true).build() {
                return Err(IngestError::Pattern {
                    pattern: p.as_ref().to_string(),
                    message: e.to_string(),
                });
            }
        }
        let set = RegexSetBuilder::new(patterns.iter().map(AsRef::as_ref))
            .case_insensitive(true)
            .build()
            .map_err(|e| IngestError::Pattern {
                pattern: String::new(),
                message: e.to_string(),
            })?;
        Ok(NonlocalFilter { set })
    }

    pub fn builtin() -> Self {
        Self::new(&parse_pattern_lines(BUILTIN_NONLOCAL)).expect("shipped patterns compile")
    }

    pub fn is_nonlocal(&self, text: &str) -> bool {
        self.set.is_match(text)
    }
}

/// Splits a pattern file into patterns, skipping blanks and `#` comments.
pub fn parse_pattern_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Removes reviews whose text matches any pattern. Returns the filtered
/// table and the number of removed reviews.
pub fn exclude_nonlocal<S: AsRef<str>>(
    mut reviews: ReviewTable,
    patterns: &[S],
) -> Result<(ReviewTable, usize), IngestError> {
    if patterns.is_empty() {
        return Ok((reviews, 0));
    }
    let filter = NonlocalFilter::new(patterns)?;
    let before = reviews.reviews.len();
    reviews.reviews.retain(|r| !filter.is_nonlocal(&r.text));
    let removed = before - reviews.reviews.len();
    *reviews.report.drops.entry(DropReason::Nonlocal).or_insert(0) += removed;
    reviews.report.retained = reviews.reviews.len();
    log::info!("excluded {removed} non-local reviews");
    Ok((reviews, removed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Business, Region};
    use std::io::Write;

    fn businesses() -> BusinessTable {
        BusinessTable::new(
            vec![Business {
                business_id: "b1".into(),
                name: "Pho".into(),
                state: "PA".into(),
                zipcode: "19107".into(),
                latitude: 0.0,
                longitude: 0.0,
                cuisine_tags: vec!["vietnamese".into()],
                region: Region::As,
                price_tier: 1,
                mean_stars: 4.0,
                review_count: 2,
            }],
            DropReport::default(),
        )
    }

    fn table(texts: &[&str]) -> ReviewTable {
        let reviews: Vec<Review> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Review::new(format!("r{i}"), "b1".into(), "u".into(), 5, t.to_string()))
            .collect();
        ReviewTable {
            report: DropReport {
                input: reviews.len(),
                retained: reviews.len(),
                ..Default::default()
            },
            reviews,
        }
    }

    #[test]
    fn loads_retained_and_skips_orphans_and_bad_bytes() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"review_id":"r1","user_id":"u1","business_id":"b1","stars":5.0,"text":"Great  local spot"}}"#
        )
        .unwrap();
        writeln!(
            file,
            r#"{{"review_id":"r2","user_id":"u1","business_id":"gone","stars":4.0,"text":"x"}}"#
        )
        .unwrap();
        file.write_all(b"{\"review_id\":\"r3\",\"business_id\":\"b1\",\"stars\":3,\"text\":\"caf\xe9\"}\n")
            .unwrap();
        writeln!(
            file,
            r#"{{"review_id":"r4","business_id":"b1","stars":2.5,"text":"meh"}}"#
        )
        .unwrap();
        file.flush().unwrap();

        let t = load_reviews(file.path(), &businesses()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.reviews[0].review_id, "r1");
        assert_eq!(t.reviews[0].token_count, 3);
        assert_eq!(t.report.count(DropReason::OrphanBusiness), 1);
        assert_eq!(t.report.count(DropReason::InvalidUtf8), 1);
        assert_eq!(t.report.count(DropReason::InvalidValue), 1);
        assert!(t.report.is_balanced());
    }

    #[test]
    fn out_of_state_review_is_removed() {
        let patterns = NonlocalFilter::builtin();
        assert!(patterns.is_nonlocal("I'm from out of state but this was great"));
        assert!(patterns.is_nonlocal("I’M FROM OUT OF TOWN"));
        assert!(!patterns.is_nonlocal("Great local spot"));

        let pats = parse_pattern_lines(BUILTIN_NONLOCAL);
        let (kept, removed) =
            exclude_nonlocal(table(&["I'm from out of state but...", "Great local spot"]), &pats).unwrap();
        assert_eq!(removed, 1);
        assert_eq!(kept.reviews[0].text, "Great local spot");
        assert!(kept.report.is_balanced());
    }

    #[test]
    fn empty_pattern_list_is_identity() {
        let t = table(&["a", "b"]);
        let none: [&str; 0] = [];
        let (kept, removed) = exclude_nonlocal(t.clone(), &none).unwrap();
        assert_eq!(removed, 0);
        assert_eq!(kept, t);
    }

    #[test]
    fn invalid_regex_is_a_config_error() {
        let err = exclude_nonlocal(table(&["a"]), &["(unclosed"]).unwrap_err();
        assert!(matches!(err, IngestError::Pattern { .. }));
    }

    #[test]
    fn sample_is_seeded_and_order_preserving() {
        let texts: Vec<String> = (0..50).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let a = table(&refs).sample(10, 7);
        let b = table(&refs).sample(10, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let ids: Vec<usize> = a.reviews.iter().map(|r| r.review_id[1..].parse().unwrap()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(a.report.is_balanced());
    }

    proptest::proptest! {
        #[test]
        fn retained_reviews_reference_businesses_and_count_tokens(
            lines in proptest::collection::vec((0usize..3, 0u8..8, "[a-z ]{0,30}", proptest::bool::weighted(0.1)), 0..25)
        ) {
            let mut file = tempfile::NamedTempFile::new().unwrap();
            for (i, (biz, stars, text, broken)) in lines.iter().enumerate() {
                if *broken {
                    writeln!(file, "{{not json").unwrap();
                    continue;
                }
                let business_id = ["b1", "b2", "gone"][*biz];
                let record = serde_json::json!({
                    "review_id": format!("r{i}"),
                    "user_id": "u",
                    "business_id": business_id,
                    "stars": stars,
                    "text": text,
                });
                writeln!(file, "{record}").unwrap();
            }
            file.flush().unwrap();
            let t = load_reviews(file.path(), &businesses()).unwrap();
            proptest::prop_assert!(t.report.is_balanced());
            proptest::prop_assert_eq!(t.report.retained, t.len());
            for r in &t.reviews {
                proptest::prop_assert_eq!(r.business_id.as_str(), "b1");
                proptest::prop_assert_eq!(r.token_count, whitespace_tokens(&r.text));
                proptest::prop_assert!((1..=5).contains(&r.stars));
            }
        }
    }
}
