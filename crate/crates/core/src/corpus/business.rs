use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cuisine::{CuisineRegionMap, Region, Resolution};
use super::ndjson::{for_each_line, LineOutcome};
use super::{DropReason, DropReport, IngestError};

/// Business record as it appears in the Yelp open-dataset NDJSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawBusiness {
    #[serde(default)]
    pub business_id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub postal_code: Option<String>,
    #[serde(default)]
    pub latitude: Option<f64>,
    #[serde(default)]
    pub longitude: Option<f64>,
    #[serde(default)]
    pub stars: Option<f64>,
    #[serde(default)]
    pub review_count: Option<u64>,
    #[serde(default)]
    pub attributes: Option<serde_json::Value>,
    #[serde(default)]
    pub categories: Option<String>,
}

impl RawBusiness {
    pub fn category_list(&self) -> Vec<String> {
        self.categories
            .as_deref()
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect()
    }

    /// `RestaurantsPriceRange2`, which Yelp stores as a string ("2"),
    /// occasionally as a number, and sometimes as "None".
    pub fn price_tier(&self) -> Option<u8> {
        let value = self.attributes.as_ref()?.get("RestaurantsPriceRange2")?;
        let tier = match value {
            serde_json::Value::String(s) => s.trim().trim_matches('\'').parse::<u8>().ok()?,
            serde_json::Value::Number(n) => u8::try_from(n.as_u64()?).ok()?,
            _ => return None,
        };
        (1..=4).contains(&tier).then_some(tier)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Business {
    pub business_id: String,
    pub name: String,
    pub state: String,
    pub zipcode: String,
    pub latitude: f64,
    pub longitude: f64,
    pub cuisine_tags: Vec<String>,
    pub region: Region,
    pub price_tier: u8,
    pub mean_stars: f64,
    pub review_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// A name shared by at least this many distinct business ids is a chain.
    pub chain_threshold: usize,
    /// Category tags that exclude a business outright (cafes, fast food).
    pub excluded_categories: Vec<String>,
    /// Require the `Restaurants` category.
    pub require_restaurant: bool,
    pub include_cajun_creole: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            chain_threshold: 5,
            excluded_categories: vec!["cafes".into(), "fast food".into(), "coffee & tea".into()],
            require_restaurant: true,
            include_cajun_creole: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BusinessTable {
    businesses: Vec<Business>,
    #[serde(skip)]
    by_id: HashMap<String, usize>,
    pub report: DropReport,
}

impl BusinessTable {
    pub fn new(businesses: Vec<Business>, report: DropReport) -> Self {
        let by_id = businesses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.business_id.clone(), i))
            .collect();
        BusinessTable {
            businesses,
            by_id,
            report,
        }
    }

    /// Rebuilds the id index, e.g. after deserializing.
    pub fn reindexed(self) -> Self {
        Self::new(self.businesses, self.report)
    }

    pub fn get(&self, business_id: &str) -> Option<&Business> {
        self.by_id.get(business_id).map(|&i| &self.businesses[i])
    }

    pub fn contains(&self, business_id: &str) -> bool {
        self.by_id.contains_key(business_id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Business> {
        self.businesses.iter()
    }

    pub fn as_slice(&self) -> &[Business] {
        &self.businesses
    }

    pub fn len(&self) -> usize {
        self.businesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.businesses.is_empty()
    }

    pub fn region_counts(&self) -> BTreeMap<Region, usize> {
        let mut counts = BTreeMap::new();
        for b in &self.businesses {
            *counts.entry(b.region).or_insert(0) += 1;
        }
        counts
    }
}

fn decode_business(bytes: &[u8]) -> LineOutcome<RawBusiness> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => return LineOutcome::Rejected(DropReason::MalformedJson, format!("invalid UTF-8: {e}")),
    };
    match serde_json::from_str::<RawBusiness>(text) {
        Ok(raw) => LineOutcome::Record(raw),
        Err(e) => LineOutcome::Rejected(DropReason::MalformedJson, format!("malformed JSON: {e}")),
    }
}

/// Reads a Yelp business NDJSON file and applies the inclusion filters.
/// Undecodable lines are skipped, logged with their line number and counted.
pub fn load_businesses(
    path: &Path,
    map: &CuisineRegionMap,
    filters: &FilterConfig,
) -> Result<BusinessTable, IngestError> {
    let mut records = Vec::new();
    let mut report = DropReport::default();
    for_each_line(path, decode_business, |line, outcome| match outcome {
        LineOutcome::Record(raw) => records.push((line, raw)),
        LineOutcome::Rejected(reason, msg) => {
            report.input += 1;
            report.record_issue(line, reason, msg);
        }
        LineOutcome::Blank => {}
    })?;
    let (businesses, filtered) = filter_businesses(&records, map, filters);
    report.input += filtered.input;
    report.retained = filtered.retained;
    for (reason, n) in filtered.drops {
        *report.drops.entry(reason).or_insert(0) += n;
    }
    report.issues.extend(filtered.issues);
    log::info!(
        "businesses: {} read, {} retained, {} dropped",
        report.input,
        report.retained,
        report.dropped()
    );
    Ok(BusinessTable::new(businesses, report))
}

fn chain_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Applies the inclusion rules to decoded records, in order: required
/// fields, restaurant category, excluded categories, chain, price, cuisine
/// resolution. The first failing rule is the recorded drop reason.
pub fn filter_businesses(
    records: &[(usize, RawBusiness)],
    map: &CuisineRegionMap,
    filters: &FilterConfig,
) -> (Vec<Business>, DropReport) {
    let map = if filters.include_cajun_creole {
        map.clone()
    } else {
        map.clone().without("cajun/creole")
    };
    let excluded: BTreeSet<String> = filters
        .excluded_categories
        .iter()
        .map(|c| super::normalize_tag(c))
        .collect();

    let mut ids_per_name: HashMap<String, BTreeSet<&str>> = HashMap::new();
    for (_, raw) in records {
        if let (Some(id), Some(name)) = (&raw.business_id, &raw.name) {
            ids_per_name.entry(chain_key(name)).or_default().insert(id);
        }
    }

    let mut report = DropReport {
        input: records.len(),
        ..DropReport::default()
    };
    let mut kept = Vec::new();
    for (line, raw) in records {
        let (Some(id), Some(name), Some(lat), Some(lon), Some(stars)) = (
            raw.business_id.as_ref(),
            raw.name.as_ref(),
            raw.latitude,
            raw.longitude,
            raw.stars,
        ) else {
            report.record_issue(*line, DropReason::MissingField, "missing required business field");
            continue;
        };
        if !(1.0..=5.0).contains(&stars) {
            report.record_issue(*line, DropReason::InvalidValue, format!("stars {stars} outside [1, 5]"));
            continue;
        }
        let categories: Vec<String> = raw.category_list().iter().map(|c| super::normalize_tag(c)).collect();
        if filters.require_restaurant && !categories.iter().any(|c| c == "restaurants") {
            report.record_drop(DropReason::NotRestaurant);
            continue;
        }
        if categories.iter().any(|c| excluded.contains(c)) {
            report.record_drop(DropReason::ExcludedCategory);
            continue;
        }
        if ids_per_name.get(&chain_key(name)).map_or(0, BTreeSet::len) >= filters.chain_threshold {
            report.record_drop(DropReason::Chain);
            continue;
        }
        let Some(price_tier) = raw.price_tier() else {
            report.record_drop(DropReason::MissingPrice);
            continue;
        };
        let (region, tags) = match map.resolve(&categories) {
            Resolution::Single { region, tags } => (region, tags),
            Resolution::MultiRegion(_) => {
                report.record_drop(DropReason::MultiRegion);
                continue;
            }
            Resolution::Empty => {
                report.record_drop(DropReason::NoCuisine);
                continue;
            }
        };
        let zipcode: String = raw
            .postal_code
            .as_deref()
            .unwrap_or("")
            .trim()
            .chars()
            .take(5)
            .collect();
        kept.push(Business {
            business_id: id.clone(),
            name: name.clone(),
            state: raw.state.clone().unwrap_or_default(),
            zipcode,
            latitude: lat,
            longitude: lon,
            cuisine_tags: tags,
            region,
            price_tier,
            mean_stars: stars,
            review_count: raw.review_count.unwrap_or(0),
        });
    }
    report.retained = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn raw(id: &str, name: &str, categories: &str, price: Option<&str>) -> RawBusiness {
        RawBusiness {
            business_id: Some(id.into()),
            name: Some(name.into()),
            state: Some("PA".into()),
            postal_code: Some("19107".into()),
            latitude: Some(39.95),
            longitude: Some(-75.16),
            stars: Some(4.0),
            review_count: Some(12),
            attributes: price.map(|p| serde_json::json!({ "RestaurantsPriceRange2": p })),
            categories: Some(categories.into()),
        }
    }

    fn run(records: Vec<RawBusiness>) -> (Vec<Business>, DropReport) {
        let numbered: Vec<_> = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        filter_businesses(&numbered, &CuisineRegionMap::builtin(), &FilterConfig::default())
    }

    #[test]
    fn single_region_restaurant_is_kept() {
        let (kept, report) = run(vec![raw("b1", "Taqueria", "Mexican, Restaurants", Some("1"))]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].region, Region::Lat);
        assert_eq!(kept[0].price_tier, 1);
        assert!(report.is_balanced());
    }

    #[test]
    fn drop_reasons_are_accounted() {
        let mut records = vec![
            raw("b1", "Taqueria", "Mexican, Restaurants", Some("1")),
            raw("b2", "Tapas", "Mexican, Spanish, Restaurants", Some("2")),
            raw("b3", "Bar Only", "Bars, Restaurants", Some("2")),
            raw("b4", "Bean", "Cafes, Restaurants, Italian", Some("1")),
            raw("b5", "Hardware", "Hardware Stores", Some("1")),
            raw("b6", "No Price", "Thai, Restaurants", None),
            raw("b7", "Odd Price", "Thai, Restaurants", Some("None")),
        ];
        for i in 0..5 {
            records.push(raw(
                &format!("c{i}"),
                "Burger Chain ",
                "American (Traditional), Restaurants",
                Some("1"),
            ));
        }
        let mut missing = raw("m1", "x", "Thai, Restaurants", Some("2"));
        missing.latitude = None;
        records.push(missing);

        let (kept, report) = run(records);
        assert_eq!(kept.len(), 1);
        assert_eq!(report.count(DropReason::MultiRegion), 1);
        assert_eq!(report.count(DropReason::NoCuisine), 1);
        assert_eq!(report.count(DropReason::ExcludedCategory), 1);
        assert_eq!(report.count(DropReason::NotRestaurant), 1);
        assert_eq!(report.count(DropReason::MissingPrice), 2);
        assert_eq!(report.count(DropReason::Chain), 5);
        assert_eq!(report.count(DropReason::MissingField), 1);
        assert_eq!(report.input, 13);
        assert!(report.is_balanced());
    }

    #[test]
    fn chain_threshold_is_configurable() {
        let records: Vec<_> = (0..3)
            .map(|i| {
                (
                    i + 1,
                    raw(&format!("c{i}"), "Noodle Co", "Chinese, Restaurants", Some("1")),
                )
            })
            .collect();
        let mut cfg = FilterConfig::default();
        let (kept, _) = filter_businesses(&records, &CuisineRegionMap::builtin(), &cfg);
        assert_eq!(kept.len(), 3);
        cfg.chain_threshold = 3;
        let (kept, report) = filter_businesses(&records, &CuisineRegionMap::builtin(), &cfg);
        assert!(kept.is_empty());
        assert_eq!(report.count(DropReason::Chain), 3);
    }

    #[test]
    fn cajun_switch() {
        let records = vec![(1, raw("b", "Gumbo", "Cajun/Creole, Restaurants", Some("2")))];
        let mut cfg = FilterConfig::default();
        assert_eq!(
            filter_businesses(&records, &CuisineRegionMap::builtin(), &cfg).0.len(),
            1
        );
        cfg.include_cajun_creole = false;
        let (kept, report) = filter_businesses(&records, &CuisineRegionMap::builtin(), &cfg);
        assert!(kept.is_empty());
        assert_eq!(report.count(DropReason::NoCuisine), 1);
    }

    #[test]
    fn filtering_is_idempotent() {
        let mut records = vec![
            raw("b1", "Taqueria", "Mexican, Restaurants", Some("1")),
            raw("b2", "Tapas", "Mexican, Spanish, Restaurants", Some("2")),
            raw("b3", "Trattoria", "Italian, Restaurants, Wine Bars", Some("3")),
        ];
        for i in 0..6 {
            records.push(raw(&format!("c{i}"), "Chain", "Thai, Restaurants", Some("2")));
        }
        let numbered: Vec<_> = records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect();
        let map = CuisineRegionMap::builtin();
        let cfg = FilterConfig::default();
        let (first, _) = filter_businesses(&numbered, &map, &cfg);
        let survivors: Vec<_> = numbered
            .iter()
            .filter(|(_, r)| first.iter().any(|b| Some(&b.business_id) == r.business_id.as_ref()))
            .cloned()
            .collect();
        let (second, report) = filter_businesses(&survivors, &map, &cfg);
        assert_eq!(first, second);
        assert_eq!(report.dropped(), 0);
    }

    #[test]
    fn malformed_lines_are_skipped_with_line_numbers() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        let good = serde_json::to_string(&raw("b1", "Pho", "Vietnamese, Restaurants", Some("1"))).unwrap();
        writeln!(file, "{good}").unwrap();
        writeln!(file, "{{not json").unwrap();
        writeln!(file).unwrap();
        writeln!(file, r#"{{"business_id": "b9"}}"#).unwrap();
        file.flush().unwrap();

        let table = load_businesses(file.path(), &CuisineRegionMap::builtin(), &FilterConfig::default()).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.get("b1").unwrap().region, Region::As);
        let report = &table.report;
        assert_eq!(report.input, 3);
        assert_eq!(report.count(DropReason::MalformedJson), 1);
        assert_eq!(report.count(DropReason::MissingField), 1);
        assert_eq!(report.issues[0].line, 2);
        assert!(report.issues.iter().any(|i| i.line == 4));
        assert!(report.is_balanced());
        let counts = table.region_counts();
        assert_eq!(counts.values().sum::<usize>(), table.len());
    }

    proptest::proptest! {
        #[test]
        fn retained_businesses_satisfy_invariants(
            specs in proptest::collection::vec(
                (0usize..6, proptest::collection::vec(0usize..10, 0..4), proptest::option::of(0u8..6), 0.0f64..6.0),
                0..30,
            )
        ) {
            const NAMES: [&str; 6] = ["Chain", "Chain", "A", "B", "C", "D"];
            const TAGS: [&str; 10] = [
                "Restaurants", "Restaurants", "Thai", "Mexican", "Italian", "Spanish", "Tex-Mex", "Cafes", "Bars", "Korean",
            ];
            let records: Vec<RawBusiness> = specs
                .iter()
                .enumerate()
                .map(|(i, (name, tags, price, stars))| {
                    let cats: Vec<&str> = tags.iter().map(|t| TAGS[*t]).collect();
                    let price = price.map(|p| p.to_string());
                    let mut r = raw(&format!("b{i}"), NAMES[*name], &cats.join(", "), price.as_deref());
                    r.stars = Some(*stars);
                    r
                })
                .collect();
            let (kept, report) = run(records);
            let map = CuisineRegionMap::builtin();
            proptest::prop_assert!(report.is_balanced());
            proptest::prop_assert_eq!(report.retained, kept.len());
            for b in &kept {
                proptest::prop_assert!((1..=4).contains(&b.price_tier));
                proptest::prop_assert!((1.0..=5.0).contains(&b.mean_stars));
                proptest::prop_assert!(!b.cuisine_tags.is_empty());
                proptest::prop_assert!(b.cuisine_tags.iter().all(|t| !map.is_excluded(t) && map.region_of(t) == Some(b.region)));
            }
        }
    }
}
