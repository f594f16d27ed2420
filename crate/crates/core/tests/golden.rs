use std::collections::BTreeSet;
use std::path::PathBuf;

use cuisine_framing::extract::Extractor;
use cuisine_framing::parse::{read_conllu, ParsedReview};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/golden")
        .join(name)
}

type Key = (String, usize, usize, usize, String, String, String);

fn reviews() -> Vec<ParsedReview> {
    read_conllu(&fixture("parses.conllu"), Some(&fixture("coref.jsonl")))
        .unwrap()
        .map(|r| r.unwrap())
        .collect()
}

fn gold() -> BTreeSet<Key> {
    std::fs::read_to_string(fixture("gold_features.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            (
                c[0].to_string(),
                c[1].parse().unwrap(),
                c[2].parse().unwrap(),
                c[3].parse().unwrap(),
                c[4].to_string(),
                c[5].to_string(),
                c[6].to_string(),
            )
        })
        .collect()
}

fn extracted(reviews: &[ParsedReview]) -> BTreeSet<Key> {
    let ex = Extractor::default();
    reviews
        .iter()
        .flat_map(|r| ex.extract(r))
        .map(|f| {
            (
                f.review_id,
                f.sentence,
                f.token,
                f.anchor_token,
                f.adjective_lemma,
                f.anchor_category.as_str().to_string(),
                f.path.as_str().to_string(),
            )
        })
        .collect()
}

#[test]
fn token_counts_match_manifest() {
    let reviews = reviews();
    assert_eq!(reviews.len(), 50);
    let manifest = std::fs::read_to_string(fixture("tokens.tsv")).unwrap();
    for (line, r) in manifest.lines().skip(1).zip(&reviews) {
        let c: Vec<&str> = line.split('\t').collect();
        assert_eq!(c[0], r.review_id);
        assert_eq!(c[1].parse::<usize>().unwrap(), r.sentences.len(), "{}", r.review_id);
        assert_eq!(c[2].parse::<usize>().unwrap(), r.token_count(), "{}", r.review_id);
    }
}

#[test]
fn extraction_matches_gold() {
    let got = extracted(&reviews());
    let want = gold();
    let missing: Vec<_> = want.difference(&got).collect();
    let extra: Vec<_> = got.difference(&want).collect();
    assert!(
        missing.is_empty() && extra.is_empty(),
        "missing {missing:#?}\nextra {extra:#?}"
    );
}

#[test]
fn named_examples() {
    let got = extracted(&reviews());
    let lemmas = |id: &str| -> BTreeSet<String> { got.iter().filter(|k| k.0 == id).map(|k| k.4.clone()).collect() };
    assert_eq!(lemmas("g01"), BTreeSet::from(["stinky".to_string()]));
    assert!(lemmas("g02").is_empty());
    assert!(lemmas("g03").is_empty());
    assert!(lemmas("g07").is_empty());
}

#[test]
fn round_trip_is_identical() {
    for r in reviews() {
        let text = r.to_conllu();
        let mut coref = std::collections::HashMap::new();
        coref.insert(r.review_id.clone(), r.coref_chains.clone());
        let back: Vec<ParsedReview> = cuisine_framing::parse::parse_conllu_str(&text, coref)
            .map(|x| x.unwrap())
            .collect();
        assert_eq!(back.len(), 1);
        let mut a = r.clone();
        let mut b = back[0].clone();
        for s in a.sentences.iter_mut().chain(b.sentences.iter_mut()) {
            s.comments.clear();
        }
        assert_eq!(a, b);
    }
}
