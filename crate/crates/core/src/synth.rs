//! Seeded generator of pre-parsed reviews with a planted framing
//! disparity, for checking that the pipeline recovers a known effect.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Region;
use crate::extract::Extractor;
use crate::lexicon::{score_review, Frame, FramingScore, LexiconSet};
use crate::parse::{parse_conllu_str, ParseError};
use crate::regression::{StudyRow, SENTIMENTS};

const ANCHOR_NOUNS: [&str; 8] = [
    "food",
    "dish",
    "meal",
    "staff",
    "waiter",
    "service",
    "place",
    "restaurant",
];
const OTHER_NOUNS: [&str; 4] = ["weather", "traffic", "street", "drive"];
const OTHER_ADJECTIVES: [&str; 4] = ["nice", "long", "cold", "busy"];
/// Every generated sentence has this many tokens, so review length does
/// not depend on which features were planted.
pub const SENTENCE_TOKENS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub reviews: usize,
    pub businesses_per_region: usize,
    pub injected: Frame,
    pub immigrant_rate: f64,
    pub domestic_rate: f64,
    /// Rate of every frame other than `injected`, in all regions.
    pub base_rate: f64,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            reviews: 10_000,
            businesses_per_region: 50,
            injected: Frame::Authenticity,
            immigrant_rate: 0.30,
            domestic_rate: 0.10,
            base_rate: 0.20,
            min_sentences: 6,
            max_sentences: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub conllu: String,
    /// Covariates per review, with zero framing scores.
    pub rows: Vec<StudyRow>,
    /// Features planted per review, in row order.
    pub planted: Vec<FramingScore>,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Feature(Frame),
    Negated(Frame),
    Neutral,
}

#[derive(Debug, Clone)]
struct BusinessCovariates {
    id: String,
    price_tier: u8,
    stars: f64,
    income: f64,
    diversity: f64,
    pct_asian: f64,
    pct_hispanic: f64,
}

/// Single-token entries of each frame, usable as a one-word adjective.
fn single_word_entries(lexicons: &LexiconSet) -> BTreeMap<Frame, Vec<String>> {
    lexicons
        .iter()
        .map(|l| {
            let words = l
                .raw_entries
                .iter()
                .filter(|e| e.chars().all(|c| c.is_ascii_lowercase()))
                .cloned()
                .collect();
            (l.frame, words)
        })
        .collect()
}

fn write_sentence(out: &mut String, noun: &str, adverb: &str, adjective: &str) {
    let rows = [
        ("The", "the", "DET", 2, "det"),
        (noun, noun, "NOUN", 5, "nsubj"),
        ("was", "be", "AUX", 5, "cop"),
        (adverb, adverb, "ADV", 5, "advmod"),
        (adjective, adjective, "ADJ", 0, "root"),
        (".", ".", "PUNCT", 5, "punct"),
    ];
    for (i, (form, lemma, upos, head, deprel)) in rows.iter().enumerate() {
        let _ = writeln!(out, "{}\t{form}\t{lemma}\t{upos}\t_\t_\t{head}\t{deprel}\t_\t_", i + 1);
    }
    out.push('\n');
}

/// Builds the corpus. Reviews are spread evenly over the four regions and
/// each frame is planted in exactly `round(rate * n)` reviews of a region,
/// so group rates hold exactly rather than in expectation.
pub fn generate(cfg: &SynthConfig, lexicons: &LexiconSet) -> SynthCorpus {
    assert!(cfg.min_sentences >= Frame::ALL.len() && cfg.min_sentences <= cfg.max_sentences);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words = single_word_entries(lexicons);

    let businesses: BTreeMap<Region, Vec<BusinessCovariates>> = Region::ALL
        .iter()
        .map(|&region| {
            let list = (0..cfg.businesses_per_region)
                .map(|b| BusinessCovariates {
                    id: format!("b-{}-{b:04}", region.as_str()),
                    price_tier: rng.gen_range(1..=4),
                    stars: f64::from(rng.gen_range(2..=10u8)) / 2.0,
                    income: rng.gen_range(25_000.0..150_000.0),
                    diversity: rng.gen_range(0.05..0.8),
                    pct_asian: rng.gen_range(0.0..60.0),
                    pct_hispanic: rng.gen_range(0.0..60.0),
                })
                .collect();
            (region, list)
        })
        .collect();

    let regions: Vec<Region> = (0..cfg.reviews).map(|i| Region::ALL[i % Region::ALL.len()]).collect();
    let mut planted: Vec<FramingScore> = (0..cfg.reviews)
        .map(|i| FramingScore::zero(format!("s{i:06}")))
        .collect();
    for &region in &Region::ALL {
        let mut members: Vec<usize> = (0..cfg.reviews).filter(|&i| regions[i] == region).collect();
        for &frame in &Frame::ALL {
            let rate = match (frame == cfg.injected, region.is_immigrant()) {
                (true, true) => cfg.immigrant_rate,
                (true, false) => cfg.domestic_rate,
                (false, _) => cfg.base_rate,
            };
            let k = (rate * members.len() as f64).round() as usize;
            members.shuffle(&mut rng);
            for &i in &members[..k] {
                planted[i].counts.insert(frame, 1);
            }
        }
    }

    let mut conllu = String::new();
    let mut rows = Vec::with_capacity(cfg.reviews);
    for (i, score) in planted.iter_mut().enumerate() {
        let region = regions[i];
        let business = businesses[&region].choose(&mut rng).expect("businesses per region > 0");
        let n_sentences = rng.gen_range(cfg.min_sentences..=cfg.max_sentences);
        let mut kinds: Vec<Kind> = Frame::ALL
            .iter()
            .filter(|f| score.frame(**f) > 0)
            .map(|f| Kind::Feature(*f))
            .collect();
        while kinds.len() < n_sentences {
            kinds.push(if rng.gen_bool(0.5) {
                Kind::Negated(*Frame::ALL.choose(&mut rng).unwrap())
            } else {
                Kind::Neutral
            });
        }
        kinds.shuffle(&mut rng);

        let _ = writeln!(conllu, "# review_id = {}", score.review_id);
        for kind in kinds {
            let noun = *ANCHOR_NOUNS.choose(&mut rng).unwrap();
            match kind {
                Kind::Feature(frame) => {
                    let adj = words[&frame].choose(&mut rng).expect("frame has single-word entries");
                    if let Some(s) = lexicons.get(frame).and_then(|l| l.subset_of(adj)) {
                        *score.subset_counts.entry(s).or_insert(0) += 1;
                    }
                    write_sentence(&mut conllu, noun, "very", adj);
                }
                Kind::Negated(frame) => {
                    let adj = words[&frame].choose(&mut rng).expect("frame has single-word entries");
                    write_sentence(&mut conllu, noun, "not", adj);
                }
                Kind::Neutral => {
                    let noun = *OTHER_NOUNS.choose(&mut rng).unwrap();
                    let adj = *OTHER_ADJECTIVES.choose(&mut rng).unwrap();
                    write_sentence(&mut conllu, noun, "very", adj);
                }
            }
        }
        rows.push(StudyRow {
            review_id: score.review_id.clone(),
            business_id: business.id.clone(),
            user_id: format!("u{:05}", rng.gen_range(0..cfg.reviews.max(1))),
            region,
            price_tier: Some(business.price_tier),
            business_stars: Some(business.stars),
            length: (n_sentences * SENTENCE_TOKENS) as f64,
            income: Some(business.income),
            diversity: Some(business.diversity),
            pct_asian: Some(business.pct_asian),
            pct_hispanic: Some(business.pct_hispanic),
            sentiment: Some(SENTIMENTS[rng.gen_range(0..SENTIMENTS.len())].to_string()),
            nonlocal: false,
            score: FramingScore::zero(score.review_id.clone()),
        });
    }
    SynthCorpus { conllu, rows, planted }
}

/// Parses the corpus text, extracts and scores each review, and returns
/// the study rows with their scores filled in.
pub fn score_corpus(
    corpus: &SynthCorpus,
    extractor: &Extractor,
    lexicons: &LexiconSet,
) -> Result<Vec<StudyRow>, ParseError> {
    let mut scores: HashMap<String, FramingScore> = HashMap::with_capacity(corpus.rows.len());
    for review in parse_conllu_str(&corpus.conllu, HashMap::new()) {
        let review = review?;
        let features = extractor.extract(&review);
        let score = score_review(&review.review_id, &features, Some(&review.sentences), lexicons);
        scores.insert(review.review_id, score);
    }
    Ok(corpus
        .rows
        .iter()
        .map(|r| {
            let mut row = r.clone();
            if let Some(s) = scores.remove(&r.review_id) {
                row.score = s;
            }
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Outcome;
    use crate::regression::{run_study, StudyKind, StudyOptions};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            reviews: 2_000,
            businesses_per_region: 20,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn extraction_recovers_planted_features() {
        let lex = LexiconSet::builtin();
        let corpus = generate(&small(1), &lex);
        let rows = score_corpus(&corpus, &Extractor::default(), &lex).unwrap();
        for (row, planted) in rows.iter().zip(&corpus.planted) {
            assert_eq!(&row.score, planted, "{}", row.review_id);
        }
    }

    #[test]
    fn planted_rates_are_exact() {
        let lex = LexiconSet::builtin();
        let corpus = generate(&small(2), &lex);
        let rate = |region: Region, frame: Frame| {
            let idx: Vec<usize> = (0..corpus.rows.len())
                .filter(|&i| corpus.rows[i].region == region)
                .collect();
            idx.iter().map(|&i| corpus.planted[i].frame(frame)).sum::<u32>() as f64 / idx.len() as f64
        };
        assert_eq!(rate(Region::As, Frame::Authenticity), 0.30);
        assert_eq!(rate(Region::Us, Frame::Authenticity), 0.10);
        assert_eq!(rate(Region::Eur, Frame::Exoticism), 0.20);
    }

    #[test]
    fn deterministic_per_seed() {
        let lex = LexiconSet::builtin();
        assert_eq!(generate(&small(5), &lex), generate(&small(5), &lex));
        assert_ne!(generate(&small(5), &lex).conllu, generate(&small(6), &lex).conllu);
    }

    #[test]
    fn pooled_model_finds_the_planted_effect() {
        let lex = LexiconSet::builtin();
        let corpus = generate(&small(3), &lex);
        let rows = score_corpus(&corpus, &Extractor::default(), &lex).unwrap();
        let out = run_study(StudyKind::Study1A, &rows, &StudyOptions::default());
        let m = out.find("pooled", Outcome::Frame(Frame::Authenticity)).unwrap();
        let i = m.result.index_of("immigrant[IMM]").unwrap();
        assert!(m.result.coefficients[i] > 0.0);
        assert!(m.result.p_values[i] < 0.001);
    }
}
