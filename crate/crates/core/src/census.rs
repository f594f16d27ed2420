//! Neighborhood covariates joined by zipcode: median income, racial
//! composition, Simpson diversity, and median-split population codes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Business;

/// Census CSV header, in order. Files must match it byte for byte.
pub const CENSUS_HEADER: [&str; 10] = [
    "zipcode",
    "median_income",
    "white",
    "black",
    "asian",
    "hispanic",
    "american_indian",
    "pacific_islander",
    "other",
    "two_or_more",
];

/// Race-group count columns of the census CSV.
pub const RACE_GROUPS: [&str; 8] = [
    "white",
    "black",
    "asian",
    "hispanic",
    "american_indian",
    "pacific_islander",
    "other",
    "two_or_more",
];

#[derive(Debug, Error)]
pub enum CensusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("census header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("diversity undefined: no group has a positive count")]
    UndefinedInput,
    #[error("invalid count {0}: counts must be finite and nonnegative")]
    InvalidCount(f64),
    #[error("cannot compute a median over an empty sample")]
    EmptySample,
    #[error("duplicate zipcode `{0}` in census table")]
    DuplicateZipcode(String),
}

/// Simpson diversity `1 - sum(p_i^2)` with `p_i = count_i / total`.
pub fn simpson_diversity<I>(counts: I) -> Result<f64, CensusError>
where
    I: IntoIterator<Item = f64>,
{
    let counts: Vec<f64> = counts.into_iter().collect();
    if let Some(&bad) = counts.iter().find(|c| !c.is_finite() || **c < 0.0) {
        return Err(CensusError::InvalidCount(bad));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(CensusError::UndefinedInput);
    }
    let concentration: f64 = counts.iter().map(|c| (c / total).powi(2)).sum();
    // a single positive group gives exactly 0
    if counts.iter().filter(|c| **c > 0.0).count() == 1 {
        return Ok(0.0);
    }
    Ok((1.0 - concentration).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodMeta {
    pub zipcode: String,
    pub median_income: f64,
    pub race_counts: BTreeMap<String, u64>,
    pub diversity: f64,
    pub pct_asian: f64,
    pub pct_hispanic: f64,
}

impl NeighborhoodMeta {
    pub fn from_counts(
        zipcode: String,
        median_income: f64,
        race_counts: BTreeMap<String, u64>,
    ) -> Result<Self, CensusError> {
        let diversity = simpson_diversity(race_counts.values().map(|&c| c as f64))?;
        let total: u64 = race_counts.values().sum();
        let pct = |group: &str| 100.0 * race_counts.get(group).copied().unwrap_or(0) as f64 / total as f64;
        Ok(NeighborhoodMeta {
            pct_asian: pct("asian"),
            pct_hispanic: pct("hispanic"),
            zipcode,
            median_income,
            race_counts,
            diversity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NeighborhoodLink {
    Matched(NeighborhoodMeta),
    /// No census row for the business's zipcode; excluded from regression samples.
    Missing {
        zipcode: String,
    },
}

impl NeighborhoodLink {
    pub fn meta(&self) -> Option<&NeighborhoodMeta> {
        match self {
            NeighborhoodLink::Matched(m) => Some(m),
            NeighborhoodLink::Missing { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CensusTable {
    rows: HashMap<String, NeighborhoodMeta>,
}

#[derive(Debug, Deserialize)]
struct CensusRow {
    zipcode: String,
    median_income: f64,
    white: u64,
    black: u64,
    asian: u64,
    hispanic: u64,
    american_indian: u64,
    pacific_islander: u64,
    other: u64,
    two_or_more: u64,
}

impl CensusTable {
    pub fn from_path(path: &Path) -> Result<Self, CensusError> {
        let file = std::fs::File::open(path).map_err(|e| CensusError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self, CensusError> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::None).from_reader(reader);
        let header = csv.headers()?.clone();
        if header.iter().ne(CENSUS_HEADER.iter().copied()) {
            return Err(CensusError::Header {
                expected: CENSUS_HEADER.join(","),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }
        let mut rows = HashMap::new();
        for record in csv.deserialize::<CensusRow>() {
            let r = record?;
            let counts: BTreeMap<String, u64> = [
                ("white", r.white),
                ("black", r.black),
                ("asian", r.asian),
                ("hispanic", r.hispanic),
                ("american_indian", r.american_indian),
                ("pacific_islander", r.pacific_islander),
                ("other", r.other),
                ("two_or_more", r.two_or_more),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            let meta = NeighborhoodMeta::from_counts(r.zipcode.clone(), r.median_income, counts)?;
            if rows.insert(r.zipcode.clone(), meta).is_some() {
                return Err(CensusError::DuplicateZipcode(r.zipcode));
            }
        }
        Ok(CensusTable { rows })
    }

    pub fn get(&self, zipcode: &str) -> Option<&NeighborhoodMeta> {
        self.rows.get(zipcode)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Joins a business to its zipcode's census row.
pub fn link_neighborhood(business: &Business, census: &CensusTable) -> NeighborhoodLink {
    match census.get(&business.zipcode) {
        Some(meta) => NeighborhoodLink::Matched(meta.clone()),
        None => NeighborhoodLink::Missing {
            zipcode: business.zipcode.clone(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HiLo {
    #[serde(rename = "hi")]
    Hi,
    #[serde(rename = "lo")]
    Lo,
}

impl fmt::Display for HiLo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HiLo::Hi => "hi",
            HiLo::Lo => "lo",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiLoCoding {
    pub threshold: f64,
    pub codes: Vec<HiLo>,
}

/// Median of a nonempty sample (mean of the two middle values for even n).
pub fn median(values: &[f64]) -> Result<f64, CensusError> {
    if values.is_empty() {
        return Err(CensusError::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

/// Codes each percentage `hi` when it is at or above the sample median.
pub fn code_hi_lo(pcts: &[f64]) -> Result<HiLoCoding, CensusError> {
    let threshold = median(pcts)?;
    let codes = pcts
        .iter()
        .map(|&p| if p >= threshold { HiLo::Hi } else { HiLo::Lo })
        .collect();
    Ok(HiLoCoding { threshold, codes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Region;
    use proptest::prelude::*;

    #[test]
    fn single_group_is_zero() {
        assert_eq!(simpson_diversity([100.0]).unwrap(), 0.0);
        assert_eq!(simpson_diversity([0.0, 7.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn two_equal_groups_is_half() {
        assert!((simpson_diversity([50.0, 50.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_groups_direct_evaluation() {
        // 1 - (0.1^2 + 0.2^2 + 0.7^2)
        let expected = 1.0 - (0.01 + 0.04 + 0.49);
        assert!((simpson_diversity([10.0, 20.0, 70.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.46).abs() < 1e-12);
    }

    #[test]
    fn zero_and_invalid_counts_error() {
        assert!(matches!(
            simpson_diversity([0.0, 0.0]),
            Err(CensusError::UndefinedInput)
        ));
        assert!(matches!(
            simpson_diversity(Vec::<f64>::new()),
            Err(CensusError::UndefinedInput)
        ));
        assert!(matches!(
            simpson_diversity([-1.0, 3.0]),
            Err(CensusError::InvalidCount(_))
        ));
    }

    #[test]
    fn hi_lo_median_definition() {
        let c = code_hi_lo(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c.threshold, 2.0);
        assert_eq!(c.codes, vec![HiLo::Lo, HiLo::Hi, HiLo::Hi]);
    }

    #[test]
    fn hi_lo_ties_are_hi() {
        let c = code_hi_lo(&[4.0; 5]).unwrap();
        assert!(c.codes.iter().all(|&h| h == HiLo::Hi));
        assert!(code_hi_lo(&[]).is_err());
    }

    fn brute_median(values: &[f64]) -> f64 {
        // selection by counting: the k-th smallest is the value with k smaller
        // or equal elements below it
        let n = values.len();
        let kth = |k: usize| {
            *values
                .iter()
                .find(|&&v| {
                    let below = values.iter().filter(|&&w| w < v).count();
                    let at_or_below = values.iter().filter(|&&w| w <= v).count();
                    below <= k && k < at_or_below
                })
                .unwrap()
        };
        if n % 2 == 1 {
            kth(n / 2)
        } else {
            0.5 * (kth(n / 2 - 1) + kth(n / 2))
        }
    }

    #[test]
    fn skewed_sample_matches_counting_oracle() {
        let sample = [0.2, 0.3, 0.3, 1.0, 45.0, 60.0, 2.5, 0.1, 88.0, 0.3];
        let c = code_hi_lo(&sample).unwrap();
        assert_eq!(c.threshold, brute_median(&sample));
        assert_eq!(c.threshold, 0.65);
    }

    #[test]
    fn census_fixture_loads_and_links() {
        let table = CensusTable::from_path(Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/fixtures/census.csv"
        )))
        .unwrap();
        assert_eq!(table.len(), 30);
        let meta = table.get("19107").unwrap();
        let total: u64 = meta.race_counts.values().sum();
        assert!((meta.pct_asian - 100.0 * meta.race_counts["asian"] as f64 / total as f64).abs() < 1e-12);
        let mut business = crate::corpus::Business {
            business_id: "b".into(),
            name: "n".into(),
            state: "PA".into(),
            zipcode: "19107".into(),
            latitude: 0.0,
            longitude: 0.0,
            cuisine_tags: vec!["thai".into()],
            region: Region::As,
            price_tier: 2,
            mean_stars: 4.0,
            review_count: 1,
        };
        assert!(link_neighborhood(&business, &table).meta().is_some());
        business.zipcode = "00000".into();
        assert_eq!(
            link_neighborhood(&business, &table),
            NeighborhoodLink::Missing {
                zipcode: "00000".into()
            }
        );
    }

    #[test]
    fn wrong_header_is_rejected() {
        let csv = "zip,median_income,white,black,asian,hispanic,american_indian,pacific_islander,other,two_or_more\n";
        assert!(matches!(
            CensusTable::from_reader(csv.as_bytes()),
            Err(CensusError::Header { .. })
        ));
    }

    proptest! {
        #[test]
        fn diversity_in_unit_interval(counts in prop::collection::vec(0u32..10_000, 1..12)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let d = simpson_diversity(counts.iter().map(|&c| c as f64)).unwrap();
            prop_assert!((0.0..1.0).contains(&d));
            let positive = counts.iter().filter(|&&c| c > 0).count();
            prop_assert_eq!(d == 0.0, positive == 1);
        }

        #[test]
        fn hi_lo_partitions_with_hi_majority(pcts in prop::collection::vec(0.0f64..100.0, 1..60)) {
            let c = code_hi_lo(&pcts).unwrap();
            let hi = c.codes.iter().filter(|&&h| h == HiLo::Hi).count();
            prop_assert_eq!(c.codes.len(), pcts.len());
            prop_assert!(hi >= pcts.len() - hi);
            prop_assert_eq!(c.threshold, brute_median(&pcts));
        }
    }
}
