//! Framing lexicons and per-review raw-count scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::FramingFeature;
use crate::parse::Sentence;

const BUILTIN_LEXICONS: &str = include_str!("../data/lexicons.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("entry `{entry}` appears in both {first} and {second}")]
    Overlap {
        entry: String,
        first: String,
        second: String,
    },
    #[error("unknown frame or subset `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Frame {
    Exoticism,
    Prototypicality,
    Authenticity,
    Luxury,
    Cost,
    Hygiene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Construct {
    Othering,
    StatusHigh,
    StatusLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Subset {
    Cheap,
    Expensive,
    Clean,
    Dirty,
}

impl Frame {
    pub const ALL: [Frame; 6] = [
        Frame::Exoticism,
        Frame::Prototypicality,
        Frame::Authenticity,
        Frame::Luxury,
        Frame::Cost,
        Frame::Hygiene,
    ];
    pub const OTHERING: [Frame; 3] = [Frame::Exoticism, Frame::Prototypicality, Frame::Authenticity];
    pub const STATUS: [Frame; 3] = [Frame::Luxury, Frame::Cost, Frame::Hygiene];

    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Exoticism => "EXOTICISM",
            Frame::Prototypicality => "PROTOTYPICALITY",
            Frame::Authenticity => "AUTHENTICITY",
            Frame::Luxury => "LUXURY",
            Frame::Cost => "COST",
            Frame::Hygiene => "HYGIENE",
        }
    }

    pub fn construct(self) -> Construct {
        match self {
            Frame::Exoticism | Frame::Prototypicality | Frame::Authenticity => Construct::Othering,
            Frame::Luxury => Construct::StatusHigh,
            Frame::Cost | Frame::Hygiene => Construct::StatusLow,
        }
    }

    pub fn subsets(self) -> &'static [Subset] {
        match self {
            Frame::Cost => &[Subset::Cheap, Subset::Expensive],
            Frame::Hygiene => &[Subset::Clean, Subset::Dirty],
            _ => &[],
        }
    }
}

impl Subset {
    pub const ALL: [Subset; 4] = [Subset::Cheap, Subset::Expensive, Subset::Clean, Subset::Dirty];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Cheap => "CHEAP",
            Subset::Expensive => "EXPENSIVE",
            Subset::Clean => "CLEAN",
            Subset::Dirty => "DIRTY",
        }
    }

    pub fn frame(self) -> Frame {
        match self {
            Subset::Cheap | Subset::Expensive => Frame::Cost,
            Subset::Clean | Subset::Dirty => Frame::Hygiene,
        }
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Frame {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Frame::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LexiconError::Unknown(s.to_string()))
    }
}

impl FromStr for Subset {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subset::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| LexiconError::Unknown(s.to_string()))
    }
}

/// A regression outcome: a whole frame or one polarity subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Frame(Frame),
    Subset(Subset),
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Frame(f) => f.as_str(),
            Outcome::Subset(s) => s.as_str(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<Frame>()
            .map(Outcome::Frame)
            .or_else(|_| s.parse::<Subset>().map(Outcome::Subset))
    }
}

/// Lowercases and removes hyphens and whitespace so that spelling
/// variants of one entry share a key.
pub fn normalize_entry(s: &str) -> String {
    s.chars()
        .filter(|c| *c != '-' && !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLexicon {
    pub frame: Frame,
    /// Entries as written in the source file.
    pub raw_entries: BTreeSet<String>,
    /// Normalized keys.
    pub entries: BTreeSet<String>,
    pub subsets: BTreeMap<Subset, BTreeSet<String>>,
}

impl FrameLexicon {
    fn new(frame: Frame) -> Self {
        FrameLexicon {
            frame,
            raw_entries: BTreeSet::new(),
            entries: BTreeSet::new(),
            subsets: BTreeMap::new(),
        }
    }

    pub fn construct(&self) -> Construct {
        self.frame.construct()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains(&normalize_entry(key))
    }

    pub fn subset_of(&self, key: &str) -> Option<Subset> {
        let key = normalize_entry(key);
        self.subsets.iter().find(|(_, e)| e.contains(&key)).map(|(s, _)| *s)
    }
}

/// All six lexicons, checked pairwise disjoint.
#[derive(Debug, Clone)]
pub struct LexiconSet {
    lexicons: Vec<FrameLexicon>,
}

impl LexiconSet {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICONS).expect("shipped lexicons are well formed")
    }

    pub fn from_path(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut by_frame: BTreeMap<Frame, FrameLexicon> = BTreeMap::new();
        let mut current: Option<(Frame, Option<Subset>)> = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let (frame, subset) = match header.split_once('/') {
                    Some((f, s)) => (f, Some(s)),
                    None => (header, None),
                };
                let frame: Frame = frame.parse().map_err(|_| LexiconError::Format {
                    line: i + 1,
                    message: format!("unknown frame `{frame}`"),
                })?;
                let subset = match subset {
                    Some(s) => {
                        let s: Subset = s.parse().map_err(|_| LexiconError::Format {
                            line: i + 1,
                            message: format!("unknown subset `{s}`"),
                        })?;
                        if s.frame() != frame {
                            return Err(LexiconError::Format {
                                line: i + 1,
                                message: format!("subset {s} does not belong to {frame}"),
                            });
                        }
                        Some(s)
                    }
                    None => None,
                };
                current = Some((frame, subset));
                continue;
            }
            let Some((frame, subset)) = current else {
                return Err(LexiconError::Format {
                    line: i + 1,
                    message: "entry before any section header".into(),
                });
            };
            let lex = by_frame.entry(frame).or_insert_with(|| FrameLexicon::new(frame));
            let key = normalize_entry(line);
            lex.raw_entries.insert(line.to_lowercase());
            lex.entries.insert(key.clone());
            if let Some(s) = subset {
                for (other, keys) in &lex.subsets {
                    if *other != s && keys.contains(&key) {
                        return Err(LexiconError::Overlap {
                            entry: line.to_string(),
                            first: other.to_string(),
                            second: s.to_string(),
                        });
                    }
                }
                lex.subsets.entry(s).or_default().insert(key);
            }
        }
        let set = LexiconSet {
            lexicons: by_frame.into_values().collect(),
        };
        set.check_disjoint()?;
        Ok(set)
    }

    /// Reports the first entry shared by two lexicons.
    pub fn check_disjoint(&self) -> Result<(), LexiconError> {
        let mut owner: BTreeMap<&str, Frame> = BTreeMap::new();
        for lex in &self.lexicons {
            for e in &lex.entries {
                if let Some(prev) = owner.insert(e, lex.frame) {
                    return Err(LexiconError::Overlap {
                        entry: e.clone(),
                        first: prev.to_string(),
                        second: lex.frame.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, frame: Frame) -> Option<&FrameLexicon> {
        self.lexicons.iter().find(|l| l.frame == frame)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FrameLexicon> {
        self.lexicons.iter()
    }

    /// Frame and subset of the first lexicon the feature matches.
    pub fn classify(&self, feature: &FramingFeature, context: Option<&Sentence>) -> Option<(Frame, Option<Subset>)> {
        self.lexicons
            .iter()
            .find_map(|lex| matched_key(feature, context, lex).map(|key| (lex.frame, lex.subset_of(&key))))
    }
}

/// Keys a feature can match: its lemma, and its lemma joined with a
/// surface-adjacent token that is its head or one of its dependents.
fn candidate_keys(feature: &FramingFeature, context: Option<&Sentence>) -> Vec<String> {
    let mut keys = vec![normalize_entry(&feature.adjective_lemma)];
    let Some(sentence) = context else {
        return keys;
    };
    let Some(adj) = sentence.get(feature.token) else {
        return keys;
    };
    for neighbor in [feature.token.wrapping_sub(1), feature.token + 1] {
        let Some(n) = sentence.get(neighbor) else {
            continue;
        };
        if n.head == adj.index || adj.head == n.index {
            let pair = if neighbor < feature.token {
                format!("{}{}", n.lemma, adj.lemma)
            } else {
                format!("{}{}", adj.lemma, n.lemma)
            };
            keys.push(normalize_entry(&pair));
        }
    }
    keys
}

fn matched_key(feature: &FramingFeature, context: Option<&Sentence>, lexicon: &FrameLexicon) -> Option<String> {
    candidate_keys(feature, context)
        .into_iter()
        .find(|k| lexicon.entries.contains(k))
}

/// True iff the feature lemma, or the lemma with an adjacent head or
/// dependent, is a lexicon entry. Without context only the lemma is tried.
pub fn match_entry(feature: &FramingFeature, context: Option<&Sentence>, lexicon: &FrameLexicon) -> bool {
    matched_key(feature, context, lexicon).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramingScore {
    pub review_id: String,
    pub counts: BTreeMap<Frame, u32>,
    pub subset_counts: BTreeMap<Subset, u32>,
}

impl FramingScore {
    pub fn zero(review_id: impl Into<String>) -> Self {
        FramingScore {
            review_id: review_id.into(),
            counts: Frame::ALL.iter().map(|f| (*f, 0)).collect(),
            subset_counts: Subset::ALL.iter().map(|s| (*s, 0)).collect(),
        }
    }

    pub fn frame(&self, frame: Frame) -> u32 {
        self.counts.get(&frame).copied().unwrap_or(0)
    }

    pub fn subset(&self, subset: Subset) -> u32 {
        self.subset_counts.get(&subset).copied().unwrap_or(0)
    }

    pub fn outcome(&self, outcome: Outcome) -> u32 {
        match outcome {
            Outcome::Frame(f) => self.frame(f),
            Outcome::Subset(s) => self.subset(s),
        }
    }
}

/// Counts the features of one review per frame and subset. `context`
/// supplies the review's sentences for bigram matching.
pub fn score_review(
    review_id: &str,
    features: &[FramingFeature],
    context: Option<&[Sentence]>,
    lexicons: &LexiconSet,
) -> FramingScore {
    let mut score = FramingScore::zero(review_id);
    for f in features {
        debug_assert_eq!(f.review_id, review_id);
        let sentence = context.and_then(|s| s.get(f.sentence));
        if let Some((frame, subset)) = lexicons.classify(f, sentence) {
            *score.counts.entry(frame).or_insert(0) += 1;
            if let Some(s) = subset {
                *score.subset_counts.entry(s).or_insert(0) += 1;
            }
        }
    }
    score
}
