use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;

const BUILTIN_CUISINES: &str = include_str!("../../data/cuisines.toml");

/// Cuisine region. `US` is the non-immigrant reference group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "US")]
    Us,
    #[serde(rename = "EUR")]
    Eur,
    #[serde(rename = "LAT")]
    Lat,
    #[serde(rename = "AS")]
    As,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Us, Region::Eur, Region::Lat, Region::As];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Us => "US",
            Region::Eur => "EUR",
            Region::Lat => "LAT",
            Region::As => "AS",
        }
    }

    pub fn is_immigrant(self) -> bool {
        self != Region::Us
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "US" => Ok(Region::Us),
            "EUR" => Ok(Region::Eur),
            "LAT" => Ok(Region::Lat),
            "AS" => Ok(Region::As),
            other => Err(IngestError::Config(format!("unknown region `{other}`"))),
        }
    }
}

/// Outcome of mapping a business's category tags to a region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    /// Every known cuisine tag maps to this region.
    Single { region: Region, tags: Vec<String> },
    /// Known tags span more than one region.
    MultiRegion(Vec<String>),
    /// No known cuisine tag remains after exclusions.
    Empty,
}

#[derive(Debug, Deserialize)]
struct CuisineFile {
    #[serde(default)]
    excluded: Vec<String>,
    regions: BTreeMap<String, String>,
}

/// Mapping from normalized cuisine tag to region, plus the tags that are
/// removed before resolution because they straddle regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuisineRegionMap {
    entries: BTreeMap<String, Region>,
    excluded: BTreeSet<String>,
}

impl CuisineRegionMap {
    pub fn new<I, J>(entries: I, excluded: J) -> Self
    where
        I: IntoIterator<Item = (String, Region)>,
        J: IntoIterator<Item = String>,
    {
        CuisineRegionMap {
            entries: entries
                .into_iter()
                .map(|(tag, region)| (normalize_tag(&tag), region))
                .collect(),
            excluded: excluded.into_iter().map(|t| normalize_tag(&t)).collect(),
        }
    }

    /// The shipped top-25 map.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_CUISINES).expect("shipped cuisine map parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, IngestError> {
        let file: CuisineFile = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        Self::from_file_struct(file)
    }

    pub fn from_json_str(text: &str) -> Result<Self, IngestError> {
        let file: CuisineFile = serde_json::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        Self::from_file_struct(file)
    }

    /// Loads a TOML or JSON map, chosen by file extension.
    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    fn from_file_struct(file: CuisineFile) -> Result<Self, IngestError> {
        let mut entries = Vec::with_capacity(file.regions.len());
        for (tag, region) in file.regions {
            entries.push((tag, region.parse()?));
        }
        let map = Self::new(entries, file.excluded);
        if let Some(tag) = map.entries.keys().find(|t| map.excluded.contains(*t)) {
            return Err(IngestError::Config(format!("tag `{tag}` is both mapped and excluded")));
        }
        Ok(map)
    }

    /// Drops a tag from the map (e.g. the cajun/creole robustness switch).
    pub fn without(mut self, tag: &str) -> Self {
        self.entries.remove(&normalize_tag(tag));
        self
    }

    pub fn region_of(&self, tag: &str) -> Option<Region> {
        self.entries.get(&normalize_tag(tag)).copied()
    }

    pub fn is_excluded(&self, tag: &str) -> bool {
        self.excluded.contains(&normalize_tag(tag))
    }

    pub fn tags(&self) -> impl Iterator<Item = (&str, Region)> {
        self.entries.iter().map(|(t, r)| (t.as_str(), *r))
    }

    pub fn excluded_tags(&self) -> impl Iterator<Item = &str> {
        self.excluded.iter().map(String::as_str)
    }

    /// Resolves a business's category tags to one region. Excluded tags are
    /// removed first; tags absent from the map are ignored.
    pub fn resolve<S: AsRef<str>>(&self, raw_tags: &[S]) -> Resolution {
        let mut tags: Vec<String> = Vec::new();
        let mut regions = BTreeSet::new();
        for raw in raw_tags {
            let tag = normalize_tag(raw.as_ref());
            if self.excluded.contains(&tag) {
                continue;
            }
            if let Some(region) = self.entries.get(&tag) {
                regions.insert(*region);
                if !tags.contains(&tag) {
                    tags.push(tag);
                }
            }
        }
        match regions.len() {
            0 => Resolution::Empty,
            1 => Resolution::Single {
                region: *regions.iter().next().unwrap(),
                tags,
            },
            _ => Resolution::MultiRegion(tags),
        }
    }
}

/// Lowercases a Yelp category and strips parentheses:
/// `"American (New)"` becomes `"american new"`.
pub fn normalize_tag(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .filter(|c| *c != '(' && *c != ')')
        .collect::<String>()
        .to_lowercase();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_twenty_mapped_and_five_excluded() {
        let map = CuisineRegionMap::builtin();
        assert_eq!(map.tags().count(), 20);
        assert_eq!(map.excluded_tags().count(), 5);
        for t in ["asian fusion", "ethnic food", "caribbean", "middle eastern", "tex-mex"] {
            assert!(map.is_excluded(t), "{t}");
        }
    }

    #[test]
    fn mexican_is_latin_american() {
        let map = CuisineRegionMap::builtin();
        assert_eq!(
            map.resolve(&["Mexican"]),
            Resolution::Single {
                region: Region::Lat,
                tags: vec!["mexican".into()]
            }
        );
    }

    #[test]
    fn mexican_and_spanish_is_multi_region() {
        let map = CuisineRegionMap::builtin();
        assert!(matches!(
            map.resolve(&["mexican", "spanish"]),
            Resolution::MultiRegion(_)
        ));
    }

    #[test]
    fn empty_and_unknown_only_tags_are_empty() {
        let map = CuisineRegionMap::builtin();
        let none: [&str; 0] = [];
        assert_eq!(map.resolve(&none), Resolution::Empty);
        assert_eq!(map.resolve(&["Bars", "Nightlife"]), Resolution::Empty);
        assert_eq!(map.resolve(&["Tex-Mex"]), Resolution::Empty);
    }

    #[test]
    fn excluded_tag_is_removed_not_fatal() {
        let map = CuisineRegionMap::builtin();
        assert_eq!(
            map.resolve(&["Tex-Mex", "Mexican", "Bars"]),
            Resolution::Single {
                region: Region::Lat,
                tags: vec!["mexican".into()]
            }
        );
    }

    #[test]
    fn parenthesized_yelp_names_normalize() {
        assert_eq!(normalize_tag("American (Traditional)"), "american traditional");
        let map = CuisineRegionMap::builtin();
        assert_eq!(map.region_of("American (New)"), Some(Region::Us));
    }

    #[test]
    fn cajun_switch_removes_tag() {
        let map = CuisineRegionMap::builtin().without("cajun/creole");
        assert_eq!(map.region_of("Cajun/Creole"), None);
        assert_eq!(map.resolve(&["Cajun/Creole"]), Resolution::Empty);
    }

    #[test]
    fn json_map_loads() {
        let map =
            CuisineRegionMap::from_json_str(r#"{"excluded": ["tex-mex"], "regions": {"thai": "AS", "irish": "EUR"}}"#)
                .unwrap();
        assert_eq!(map.region_of("thai"), Some(Region::As));
        assert!(map.is_excluded("Tex-Mex"));
    }

    #[test]
    fn mapped_and_excluded_conflict_is_rejected() {
        let err = CuisineRegionMap::from_json_str(r#"{"excluded": ["thai"], "regions": {"thai": "AS"}}"#);
        assert!(err.is_err());
    }

    proptest::proptest! {
        #[test]
        fn resolution_drops_excluded_and_agrees_on_region(picks in proptest::collection::vec(0usize..28, 0..6)) {
            let map = CuisineRegionMap::builtin();
            let mut pool: Vec<String> = map.tags().map(|(t, _)| t.to_uppercase()).collect();
            pool.extend(map.excluded_tags().map(str::to_string));
            pool.extend(["bars", "nightlife", "coffee & tea"].map(String::from));
            let raw: Vec<&str> = picks.iter().map(|&i| pool[i % pool.len()].as_str()).collect();
            let known: BTreeSet<Region> = raw.iter().filter_map(|t| map.region_of(t)).collect();
            match map.resolve(&raw) {
                Resolution::Single { region, tags } => {
                    proptest::prop_assert_eq!(known, BTreeSet::from([region]));
                    proptest::prop_assert!(tags.iter().all(|t| !map.is_excluded(t) && map.region_of(t) == Some(region)));
                }
                Resolution::MultiRegion(tags) => {
                    proptest::prop_assert!(known.len() > 1);
                    proptest::prop_assert!(tags.iter().all(|t| !map.is_excluded(t)));
                }
                Resolution::Empty => proptest::prop_assert!(known.is_empty()),
            }
        }
    }
}
