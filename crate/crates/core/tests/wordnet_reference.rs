mod common;

use std::path::PathBuf;
use std::sync::OnceLock;

use openmetrics::similarity::{path_similarity, wup_similarity};
use openmetrics::{SynsetId, Taxonomy};
use serde_json::Value;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn wn30() -> &'static Taxonomy {
    static T: OnceLock<Taxonomy> = OnceLock::new();
    T.get_or_init(|| Taxonomy::from_dir(data_dir().join("wordnet-3.0")).expect("WordNet 3.0 loads"))
}

fn reference() -> Value {
    let text = include_str!("fixtures/wordnet30_reference.json");
    serde_json::from_str(text).unwrap()
}

#[test]
fn noun_count_and_clean_load() {
    let r = reference();
    assert_eq!(wn30().len() as u64, r["noun_synsets"].as_u64().unwrap());
    assert!(wn30().warnings().is_empty(), "{:?}", wn30().warnings());
    assert_eq!(wn30().root(), SynsetId(1740));
}

#[test]
fn named_synsets() {
    let r = reference();
    for (name, v) in r["named"].as_object().unwrap() {
        let id = SynsetId(v["offset"].as_u64().unwrap() as u32);
        assert_eq!(u64::from(wn30().depth(id).unwrap()), v["depth"].as_u64().unwrap(), "{name}");
    }
    for (lemma, offsets) in r["lemmas"].as_object().unwrap() {
        let want: Vec<SynsetId> = offsets
            .as_array()
            .unwrap()
            .iter()
            .map(|o| SynsetId(o.as_u64().unwrap() as u32))
            .collect();
        assert_eq!(wn30().lookup(lemma), &want[..], "{lemma}");
    }
}

#[test]
fn reference_pairs() {
    let r = reference();
    let mut pairs = r["pairs"].as_array().unwrap().clone();
    pairs.extend(r["named_pairs"].as_array().unwrap().iter().cloned());
    assert!(pairs.len() >= 100);
    for p in &pairs {
        let a = SynsetId(p["a"].as_u64().unwrap() as u32);
        let b = SynsetId(p["b"].as_u64().unwrap() as u32);
        let (d, lcs) = wn30().shortest_hypernym_distance(a, b).unwrap();
        assert_eq!(u64::from(d), p["distance"].as_u64().unwrap(), "{a} {b}");
        if let Some(l) = p.get("lcs") {
            assert_eq!(u64::from(lcs.0), l.as_u64().unwrap(), "{a} {b}");
        }
        let path = path_similarity(wn30(), a, b).unwrap();
        let wup = wup_similarity(wn30(), a, b).unwrap();
        assert!((path - p["path"].as_f64().unwrap()).abs() <= 1e-9, "{a} {b}");
        assert!((wup - p["wup"].as_f64().unwrap()).abs() <= 1e-9, "{a} {b}");
    }
}

#[test]
fn random_dags_match_enumeration() {
    for seed in 0..20 {
        let dag = common::random_dag(&mut common::rng(seed), 50);
        let (index, data) = dag.grind();
        let t = Taxonomy::from_readers(index.as_bytes(), data.as_bytes()).unwrap();
        assert!(t.warnings().is_empty());
        for a in 0..50 {
            let sa = SynsetId(dag.offsets[a]);
            assert_eq!(t.depth(sa).unwrap(), dag.depth(a));
            for b in 0..50 {
                let sb = SynsetId(dag.offsets[b]);
                let (d, lcs, path, wup) = dag.oracle(a, b);
                assert_eq!(t.shortest_hypernym_distance(sa, sb).unwrap(), (d, SynsetId(dag.offsets[lcs])));
                assert_eq!(path_similarity(&t, sa, sb).unwrap(), path);
                assert_eq!(wup_similarity(&t, sa, sb).unwrap(), wup);
            }
        }
    }
}

#[test]
fn grind_round_trip() {
    let dag = common::random_dag(&mut common::rng(99), 30);
    let (index, data) = dag.grind();
    let t = Taxonomy::from_readers(index.as_bytes(), data.as_bytes()).unwrap();
    let (i2, d2) = t.to_grind();
    let t2 = Taxonomy::from_readers(i2.as_bytes(), d2.as_bytes()).unwrap();
    assert_eq!(t2.len(), t.len());
    for s in t.synsets() {
        assert_eq!(t2.depth(s.offset).unwrap(), t.depth(s.offset).unwrap());
    }
}
