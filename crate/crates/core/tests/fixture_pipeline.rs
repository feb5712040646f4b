use std::path::PathBuf;

use addrmatch::analyzer::Analyzer;
use addrmatch::corpus::{Corpus, Format};
use addrmatch::index::InvertedIndex;
use addrmatch::matcher::{DecisionPath, Matcher, PipelineConfig};
use addrmatch::reranker::Category;
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn jsonl<T: for<'de> Deserialize<'de>>(name: &str) -> Vec<T> {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[derive(Deserialize)]
struct Query {
    id: String,
    query: String,
}

#[derive(Deserialize)]
struct Expected {
    id: String,
    gold: String,
    category: Category,
}

struct Setup {
    corpus: Corpus,
    analyzer: Analyzer,
    index: InvertedIndex,
}

fn setup() -> Setup {
    let corpus = Corpus::ingest(&fixture("addresses.jsonl"), Format::Jsonl).unwrap();
    let analyzer = Analyzer::default();
    let index = InvertedIndex::build(&corpus, &analyzer).unwrap();
    Setup {
        corpus,
        analyzer,
        index,
    }
}

fn query(id: &str) -> String {
    jsonl::<Query>("benchmark_queries.jsonl")
        .into_iter()
        .find(|q| q.id == id)
        .unwrap()
        .query
}

#[test]
fn midwest_query_is_reranked_to_menard() {
    let s = setup();
    let m = Matcher::new(&s.index, &s.corpus, &s.analyzer, PipelineConfig::default()).unwrap();
    let t = m.trace(&query("Q1")).unwrap();
    let gap = t.candidates[0].score - t.candidates[1].score;
    assert!(gap < 3.0, "gap {gap}");
    assert_eq!(t.result.decision_path, DecisionPath::ReRanked);
    assert_eq!(t.result.best.name, "MIDWEST MANUFACTURING (MENARD INC.)");
}

#[test]
fn alliance_and_ael_span_rank_first() {
    let s = setup();
    let m = Matcher::new(&s.index, &s.corpus, &s.analyzer, PipelineConfig::default()).unwrap();
    let (_, hits) = m.retrieve(&query("Q2"));
    assert_eq!(s.corpus.records()[hits[0].doc as usize].record_id, "T3-01");
    let (_, hits) = m.retrieve(&query("Q8"));
    assert_eq!(
        s.corpus.records()[hits[0].doc as usize].name,
        "AEL SPAN LLC"
    );
}

#[test]
fn benchmark_winners_and_categories() {
    let s = setup();
    let m = Matcher::new(&s.index, &s.corpus, &s.analyzer, PipelineConfig::default()).unwrap();
    let mut agree = 0;
    for (q, e) in jsonl::<Query>("benchmark_queries.jsonl")
        .iter()
        .zip(jsonl::<Expected>("benchmark_expected.jsonl"))
    {
        assert_eq!(q.id, e.id);
        let r = m.match_query(&q.query).unwrap();
        assert_eq!(r.record_id, e.gold, "{}", q.id);
        agree += usize::from(r.category == e.category);
    }
    assert!(agree >= 8, "{agree}/10 categories agree");
}

#[test]
fn chainworks_is_very_high() {
    let s = setup();
    let m = Matcher::new(&s.index, &s.corpus, &s.analyzer, PipelineConfig::default()).unwrap();
    let r = m
        .match_query("Chainworks, Inc. 3255 Hart Rd Jackson, MI 49201")
        .unwrap();
    assert_eq!(
        r.best.full_address,
        "CHAINWORKS, 3255 HART ROAD, JACKSON, MI, 49201, USA"
    );
    assert_eq!(r.category, Category::VeryHigh);
}
