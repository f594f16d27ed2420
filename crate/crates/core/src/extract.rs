//! Adjectival framing features attached to food, staff and venue anchors.
//!
//! Three syntactic paths emit an (adjective, anchor) pair:
//!
//! * attributive: the adjective is an `amod` dependent of the anchor;
//! * predicative: the anchor is an `nsubj` of an adjectival predicate, either
//!   the adjective itself (UD copular analysis) or an `acomp`/`xcomp`
//!   adjective of the verb or copula that governs the anchor;
//! * conjoined: an adjective attached by `conj` to an already emitted one,
//!   unless it carries its own subject.
//!
//! Anchors reached only through a coreference chain are labeled `COREF`.
//! Adjectives in negation scope are never emitted.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse::{ParsedReview, Sentence};

const FOOD_ANCHORS: &str = include_str!("../data/anchors_food.txt");
const STAFF_ANCHORS: &str = include_str!("../data/anchors_staff.txt");
const VENUE_ANCHORS: &str = include_str!("../data/anchors_venue.txt");
const DISH_NAMES: &str = include_str!("../data/dish_names.txt");

/// Lemmas that mark negation when attached as a modifier.
pub const NEGATION_CUES: [&str; 8] = ["not", "n't", "never", "no", "nothing", "hardly", "without", "nt"];

const NEGATION_RELATIONS: [&str; 7] = ["advmod", "neg", "det", "case", "prep", "mark", "advmod:neg"];

/// Hops above the adjective that are searched for a negation dependent.
pub const NEGATION_WINDOW: usize = 2;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("anchor set {0} is empty")]
    EmptyAnchorSet(AnchorCategory),
    #[error("lemma `{lemma}` is in both the {first} and {second} anchor sets")]
    OverlappingAnchors {
        lemma: String,
        first: AnchorCategory,
        second: AnchorCategory,
    },
    #[error("unknown anchor category `{0}`")]
    UnknownCategory(String),
    #[error("unknown feature path `{0}`")]
    UnknownPath(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AnchorCategory {
    Food,
    Staff,
    Venue,
}

impl AnchorCategory {
    pub const ALL: [AnchorCategory; 3] = [AnchorCategory::Food, AnchorCategory::Staff, AnchorCategory::Venue];

    pub fn as_str(self) -> &'static str {
        match self {
            AnchorCategory::Food => "FOOD",
            AnchorCategory::Staff => "STAFF",
            AnchorCategory::Venue => "VENUE",
        }
    }
}

impl fmt::Display for AnchorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnchorCategory {
    type Err = ExtractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FOOD" => Ok(AnchorCategory::Food),
            "STAFF" => Ok(AnchorCategory::Staff),
            "VENUE" => Ok(AnchorCategory::Venue),
            other => Err(ExtractError::UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeaturePath {
    Attributive,
    Predicative,
    Conjoined,
    Coref,
}

impl FeaturePath {
    pub fn as_str(self) -> &'static str {
        match self {
            FeaturePath::Attributive => "ATTRIBUTIVE",
            FeaturePath::Predicative => "PREDICATIVE",
            FeaturePath::Conjoined => "CONJOINED",
            FeaturePath::Coref => "COREF",
        }
    }
}

impl fmt::Display for FeaturePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeaturePath {
    type Err = ExtractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ATTRIBUTIVE" => Ok(FeaturePath::Attributive),
            "PREDICATIVE" => Ok(FeaturePath::Predicative),
            "CONJOINED" => Ok(FeaturePath::Conjoined),
            "COREF" => Ok(FeaturePath::Coref),
            other => Err(ExtractError::UnknownPath(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSet {
    pub category: AnchorCategory,
    pub lemmas: BTreeSet<String>,
}

impl AnchorSet {
    /// Parses one lemma per line; `#` starts a comment.
    pub fn parse(category: AnchorCategory, text: &str) -> Self {
        AnchorSet {
            category,
            lemmas: word_lines(text).collect(),
        }
    }

    pub fn from_path(category: AnchorCategory, path: &Path) -> Result<Self, ExtractError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExtractError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(Self::parse(category, &text))
    }
}

fn word_lines(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.to_lowercase())
}

/// The three anchor sets, validated to be nonempty and pairwise disjoint.
#[derive(Debug, Clone)]
pub struct Anchors {
    sets: Vec<AnchorSet>,
    lookup: BTreeMap<String, AnchorCategory>,
}

impl Anchors {
    pub fn new(sets: Vec<AnchorSet>) -> Result<Self, ExtractError> {
        let mut lookup = BTreeMap::new();
        for set in &sets {
            if set.lemmas.is_empty() {
                return Err(ExtractError::EmptyAnchorSet(set.category));
            }
            for lemma in &set.lemmas {
                if let Some(prev) = lookup.insert(lemma.clone(), set.category) {
                    return Err(ExtractError::OverlappingAnchors {
                        lemma: lemma.clone(),
                        first: prev,
                        second: set.category,
                    });
                }
            }
        }
        Ok(Anchors { sets, lookup })
    }

    pub fn builtin() -> Self {
        Self::new(vec![
            AnchorSet::parse(AnchorCategory::Food, FOOD_ANCHORS),
            AnchorSet::parse(AnchorCategory::Staff, STAFF_ANCHORS),
            AnchorSet::parse(AnchorCategory::Venue, VENUE_ANCHORS),
        ])
        .expect("shipped anchor sets are disjoint")
    }

    pub fn category_of(&self, lemma: &str) -> Option<AnchorCategory> {
        self.lookup.get(lemma).copied()
    }

    pub fn sets(&self) -> &[AnchorSet] {
        &self.sets
    }
}

/// Adjective-noun phrases that name a dish ("stinky tofu", "hot pot").
#[derive(Debug, Clone, Default)]
pub struct DishNames {
    phrases: HashSet<String>,
}

impl DishNames {
    pub fn parse(text: &str) -> Self {
        DishNames {
            phrases: word_lines(text).map(|l| normalize_phrase(&l)).collect(),
        }
    }

    pub fn builtin() -> Self {
        Self::parse(DISH_NAMES)
    }

    pub fn from_path(path: &Path) -> Result<Self, ExtractError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExtractError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, phrase: &str) -> bool {
        self.phrases.contains(&normalize_phrase(phrase))
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

fn normalize_phrase(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MentionSource {
    Direct,
    Coref,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorMention {
    pub sentence: usize,
    pub token: usize,
    pub category: AnchorCategory,
    pub source: MentionSource,
}

/// Anchor mentions of one review keyed by (sentence, token).
pub type MentionSet = BTreeMap<(usize, usize), AnchorMention>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FramingFeature {
    pub review_id: String,
    pub adjective_lemma: String,
    pub anchor_category: AnchorCategory,
    pub sentence: usize,
    pub path: FeaturePath,
    /// 1-based index of the adjective token.
    pub token: usize,
    /// 1-based index of the anchor token.
    pub anchor_token: usize,
}

/// Direct lemma matches on nominal tokens, extended through coreference
/// chains whose direct matches all share one category.
pub fn resolve_anchor_mentions(review: &ParsedReview, anchors: &Anchors) -> MentionSet {
    let mut mentions = MentionSet::new();
    for (si, sentence) in review.sentences.iter().enumerate() {
        for token in &sentence.tokens {
            if !token.is_nominal() {
                continue;
            }
            if let Some(category) = anchors.category_of(&token.lemma) {
                mentions.insert(
                    (si, token.index),
                    AnchorMention {
                        sentence: si,
                        token: token.index,
                        category,
                        source: MentionSource::Direct,
                    },
                );
            }
        }
    }

    let mut extensions = Vec::new();
    for chain in &review.coref_chains {
        let categories: BTreeSet<AnchorCategory> = mentions
            .values()
            .filter(|m| chain.iter().any(|span| span.contains(m.sentence, m.token)))
            .map(|m| m.category)
            .collect();
        let category = match categories.len() {
            0 => continue,
            1 => *categories.iter().next().unwrap(),
            _ => {
                log::debug!(
                    "review {}: coref chain mixes anchor categories {:?}; not extended",
                    review.review_id,
                    categories
                );
                continue;
            }
        };
        for span in chain {
            let head = review.mention_head(span);
            extensions.push(AnchorMention {
                sentence: span.sent,
                token: head,
                category,
                source: MentionSource::Coref,
            });
        }
    }
    for m in extensions {
        mentions.entry((m.sentence, m.token)).or_insert(m);
    }
    mentions
}

fn is_negation_dependent(sentence: &Sentence, index: usize) -> bool {
    let t = sentence.token(index);
    t.deprel == "neg" || (NEGATION_CUES.contains(&t.lemma.as_str()) && NEGATION_RELATIONS.contains(&t.deprel.as_str()))
}

/// True when the adjective, or one of its ancestors up to
/// [`NEGATION_WINDOW`] hops away, governs a negation cue.
pub fn in_negation_scope(adjective: usize, sentence: &Sentence) -> bool {
    let mut node = adjective;
    for _ in 0..=NEGATION_WINDOW {
        if sentence
            .children(node)
            .into_iter()
            .any(|c| is_negation_dependent(sentence, c))
        {
            return true;
        }
        node = sentence.token(node).head;
        if node == 0 {
            break;
        }
    }
    false
}

fn has_subject(sentence: &Sentence, index: usize) -> bool {
    sentence
        .children(index)
        .into_iter()
        .any(|c| sentence.token(c).deprel.starts_with("nsubj"))
}

/// Lemmas of the surface span from `from` to `to` (inclusive, any order).
fn span_lemmas(sentence: &Sentence, from: usize, to: usize) -> String {
    let (a, b) = if from <= to { (from, to) } else { (to, from) };
    (a..=b)
        .map(|i| sentence.token(i).lemma.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn names_a_dish(sentence: &Sentence, adjective: usize, noun: usize, dishes: &DishNames) -> bool {
    let adj = &sentence.token(adjective).lemma;
    let n = &sentence.token(noun).lemma;
    dishes.contains(&format!("{adj} {n}")) || dishes.contains(&span_lemmas(sentence, adjective, noun))
}

/// Configured extractor: anchors, dish-name guard list.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub anchors: Anchors,
    pub dish_names: DishNames,
}

impl Default for Extractor {
    fn default() -> Self {
        Extractor {
            anchors: Anchors::builtin(),
            dish_names: DishNames::builtin(),
        }
    }
}

impl Extractor {
    pub fn new(anchors: Anchors, dish_names: DishNames) -> Self {
        Extractor { anchors, dish_names }
    }

    pub fn extract(&self, review: &ParsedReview) -> Vec<FramingFeature> {
        let mentions = resolve_anchor_mentions(review, &self.anchors);
        extract_adjectives(review, &mentions, &self.dish_names)
    }
}

/// Emits the framing features of one review in (sentence, anchor, adjective)
/// discovery order, one per (anchor token, adjective token) pair.
pub fn extract_adjectives(review: &ParsedReview, mentions: &MentionSet, dish_names: &DishNames) -> Vec<FramingFeature> {
    let mut features = Vec::new();
    let mut seen: HashSet<(usize, usize, usize)> = HashSet::new();
    for mention in mentions.values() {
        let sentence = &review.sentences[mention.sentence];
        let anchor = sentence.token(mention.token);
        let mut emitted: Vec<(usize, FeaturePath)> = Vec::new();

        for c in sentence.children(anchor.index) {
            let t = sentence.token(c);
            if t.is_adjective() && t.deprel.split(':').next() == Some("amod") {
                if mention.category == AnchorCategory::Food && names_a_dish(sentence, c, anchor.index, dish_names) {
                    continue;
                }
                emitted.push((c, FeaturePath::Attributive));
            }
        }

        if anchor.deprel.starts_with("nsubj") && anchor.head != 0 {
            let head = sentence.token(anchor.head);
            if head.is_adjective() {
                emitted.push((head.index, FeaturePath::Predicative));
            } else if head.upos == "AUX" || head.upos == "VERB" {
                for c in sentence.children(head.index) {
                    let t = sentence.token(c);
                    if t.is_adjective() && (t.deprel == "acomp" || t.deprel == "xcomp") {
                        emitted.push((c, FeaturePath::Predicative));
                    }
                }
            }
        }

        let mut frontier: Vec<usize> = emitted.iter().map(|(i, _)| *i).collect();
        while let Some(adj) = frontier.pop() {
            for c in sentence.children(adj) {
                let t = sentence.token(c);
                if t.is_adjective()
                    && t.deprel == "conj"
                    && !has_subject(sentence, c)
                    && !emitted.iter().any(|(i, _)| *i == c)
                {
                    emitted.push((c, FeaturePath::Conjoined));
                    frontier.push(c);
                }
            }
        }

        for (adj, path) in emitted {
            if in_negation_scope(adj, sentence) {
                continue;
            }
            if !seen.insert((mention.sentence, anchor.index, adj)) {
                continue;
            }
            let path = match mention.source {
                MentionSource::Coref => FeaturePath::Coref,
                MentionSource::Direct => path,
            };
            features.push(FramingFeature {
                review_id: review.review_id.clone(),
                adjective_lemma: sentence.token(adj).lemma.clone(),
                anchor_category: mention.category,
                sentence: mention.sentence,
                path,
                token: adj,
                anchor_token: anchor.index,
            });
        }
    }
    features
}

/// Feature CSV row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub review_id: String,
    pub lemma: String,
    pub category: AnchorCategory,
    pub sentence: usize,
    pub path: FeaturePath,
    pub token: usize,
    pub anchor_token: usize,
}

impl From<&FramingFeature> for FeatureRow {
    fn from(f: &FramingFeature) -> Self {
        FeatureRow {
            review_id: f.review_id.clone(),
            lemma: f.adjective_lemma.clone(),
            category: f.anchor_category,
            sentence: f.sentence,
            path: f.path,
            token: f.token,
            anchor_token: f.anchor_token,
        }
    }
}

impl From<FeatureRow> for FramingFeature {
    fn from(r: FeatureRow) -> Self {
        FramingFeature {
            review_id: r.review_id,
            adjective_lemma: r.lemma,
            anchor_category: r.category,
            sentence: r.sentence,
            path: r.path,
            token: r.token,
            anchor_token: r.anchor_token,
        }
    }
}
