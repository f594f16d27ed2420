//! Weighted log-odds ratios with an informative Dirichlet prior
//! ("Fightin' Words"), reported as z-scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::FrameLexicon;

/// Smallest z-score kept by [`top_associated`] unless configured otherwise.
pub const DEFAULT_Z_MIN: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum AssocError {
    #[error("group `{0}` has no counts")]
    UnknownGroup(String),
}

/// Word counts per group plus a prior over the same vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    group_counts: BTreeMap<String, BTreeMap<String, u64>>,
    prior_counts: BTreeMap<String, u64>,
    group_totals: BTreeMap<String, u64>,
    prior_total: u64,
}

impl CountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, group: &str, word: &str, n: u64) {
        *self
            .group_counts
            .entry(group.to_string())
            .or_default()
            .entry(word.to_string())
            .or_insert(0) += n;
        *self.group_totals.entry(group.to_string()).or_insert(0) += n;
    }

    pub fn add_prior(&mut self, word: &str, n: u64) {
        *self.prior_counts.entry(word.to_string()).or_insert(0) += n;
        self.prior_total += n;
    }

    /// Adds to the group and to the prior; the prior is then the whole corpus.
    pub fn add_observed(&mut self, group: &str, word: &str, n: u64) {
        self.add(group, word, n);
        self.add_prior(word, n);
    }

    pub fn merge(&mut self, other: &CountTable) {
        for (g, words) in &other.group_counts {
            for (w, n) in words {
                self.add(g, w, *n);
            }
        }
        for (w, n) in &other.prior_counts {
            self.add_prior(w, *n);
        }
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.group_counts.keys().map(String::as_str)
    }

    pub fn count(&self, group: &str, word: &str) -> u64 {
        self.group_counts
            .get(group)
            .and_then(|w| w.get(word))
            .copied()
            .unwrap_or(0)
    }

    pub fn prior(&self, word: &str) -> u64 {
        self.prior_counts.get(word).copied().unwrap_or(0)
    }

    pub fn group_total(&self, group: &str) -> u64 {
        self.group_totals.get(group).copied().unwrap_or(0)
    }

    pub fn prior_total(&self) -> u64 {
        self.prior_total
    }

    /// Every word with a group or prior count.
    pub fn vocabulary(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self
            .group_counts
            .values()
            .flat_map(|m| m.keys())
            .chain(self.prior_counts.keys())
            .map(String::as_str)
            .collect();
        words.sort_unstable();
        words.dedup();
        words
    }

    /// True when every word with a group count also has a prior count.
    pub fn prior_covers_vocabulary(&self) -> bool {
        self.group_counts
            .values()
            .flat_map(|m| m.iter())
            .all(|(w, n)| *n == 0 || self.prior(w) > 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsEntry {
    pub group: String,
    pub word: String,
    pub delta: f64,
    pub n_c: u64,
    pub n_notc: u64,
    pub n_prior: u64,
}

/// z-scored log-odds of each word in `group` against all other groups,
/// sorted by delta descending. Words whose variance term is undefined
/// are left out.
pub fn weighted_log_odds(table: &CountTable, group: &str) -> Result<Vec<LogOddsEntry>, AssocError> {
    if !table.group_counts.contains_key(group) {
        return Err(AssocError::UnknownGroup(group.to_string()));
    }
    let total_c = table.group_total(group) as f64;
    let total_all: u64 = table.group_totals.values().sum();
    let total_notc = (total_all - table.group_total(group)) as f64;
    let total_p = table.prior_total as f64;

    let mut entries = Vec::new();
    for word in table.vocabulary() {
        let n_c = table.count(group, word);
        let n_notc: u64 = table
            .group_counts
            .iter()
            .filter(|(g, _)| g.as_str() != group)
            .map(|(_, m)| m.get(word).copied().unwrap_or(0))
            .sum();
        let n_p = table.prior(word);
        let (c, nc, p) = (n_c as f64, n_notc as f64, n_p as f64);
        let l_c = (c + p) / (total_c - c + total_p - p);
        let l_notc = (nc + p) / (total_notc - nc + total_p - p);
        let delta = (l_c / l_notc).ln() / (1.0 / (c + p) + 1.0 / (nc + p)).sqrt();
        if !delta.is_finite() {
            log::debug!("log-odds for `{word}` in {group} undefined; skipped");
            continue;
        }
        entries.push(LogOddsEntry {
            group: group.to_string(),
            word: word.to_string(),
            delta,
            n_c,
            n_notc,
            n_prior: n_p,
        });
    }
    entries.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.word.cmp(&b.word)));
    Ok(entries)
}

/// At most `k` leading entries with `delta >= z_min`.
pub fn top_associated(entries: &[LogOddsEntry], k: usize, z_min: f64) -> Vec<LogOddsEntry> {
    entries
        .iter()
        .take_while(|e| e.delta >= z_min)
        .take(k)
        .cloned()
        .collect()
}

/// Log-odds of lexicon words for `group` over labeled feature lemmas.
/// The prior is the pooled count over every group.
pub fn frame_filtered_log_odds<'a, I>(features: I, lexicon: &FrameLexicon, group: &str) -> Vec<LogOddsEntry>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut table = CountTable::new();
    for (g, lemma) in features {
        if lexicon.contains(lemma) {
            table.add_observed(g, lemma, 1);
        }
    }
    weighted_log_odds(&table, group).unwrap_or_default()
}
