//! The end-to-end pipeline: analyze, retrieve, gate, re-rank, categorize.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{Analyzer, ParsedAddress};
use crate::bm25::{Bm25Error, Bm25Params, QueryVector, ScoredCandidate, Scorer};
use crate::corpus::{AddressRecord, Corpus};
use crate::index::{DocId, InvertedIndex};
use crate::reranker::{
    self, categorize, component_breakdown, gate, Category, CategoryBands, ComponentContribution,
    ComponentWeights, EditDistanceSimilarity, FieldSimilarity, GateConfig, GateDecision,
    RerankError,
};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("no indexed term occurs in query {0:?}")]
    NoCandidates(String),
    #[error("no address component could be recognised in {0:?}")]
    Unparsable(String),
    #[error("index has {index} documents but the corpus has {corpus} records")]
    CorpusMismatch { index: u32, corpus: usize },
    #[error("index was built with a different analyzer configuration")]
    AnalyzerMismatch,
    #[error(transparent)]
    Bm25(#[from] Bm25Error),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Every tunable of the pipeline. Missing fields take their defaults when
/// deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub bm25: Bm25Params,
    pub gate: GateConfig,
    pub weights: ComponentWeights,
    pub bands: CategoryBands,
    /// Retrieval depth.
    pub k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bm25: Bm25Params::default(),
            gate: GateConfig::default(),
            weights: ComponentWeights::default(),
            bands: CategoryBands::default(),
            k: 10,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        self.bm25.validate()?;
        self.gate.validate()?;
        self.weights.validate()?;
        self.bands.validate()?;
        if self.k == 0 {
            return Err(MatchError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionPath {
    DirectAccept,
    ReRanked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub query_text: String,
    pub record_id: String,
    pub best: AddressRecord,
    pub bm25_score: f64,
    /// Only set when the winner came out of re-ranking.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rerank_score: Option<f64>,
    /// Component similarity of the query and the winner, whatever the path.
    pub similarity: f64,
    pub category: Category,
    pub decision_path: DecisionPath,
    pub pool_size: usize,
}

/// Everything behind one match: the retrieved list, the gate's pool in
/// re-ranked order, and the parsed query.
#[derive(Debug, Clone)]
pub struct MatchTrace {
    pub query: QueryVector,
    pub parsed: ParsedAddress,
    pub candidates: Vec<ScoredCandidate>,
    pub pool: Vec<ScoredCandidate>,
    pub winner: DocId,
    pub result: MatchResult,
}

pub struct Matcher<'a> {
    index: &'a InvertedIndex,
    corpus: &'a Corpus,
    analyzer: &'a Analyzer,
    similarity: Box<dyn FieldSimilarity + 'a>,
    config: PipelineConfig,
}

impl<'a> Matcher<'a> {
    /// Fails when the config is invalid or `index` was not built from
    /// `corpus` with `analyzer`.
    pub fn new(
        index: &'a InvertedIndex,
        corpus: &'a Corpus,
        analyzer: &'a Analyzer,
        config: PipelineConfig,
    ) -> Result<Self, MatchError> {
        config.validate()?;
        if index.n_docs() as usize != corpus.len() {
            return Err(MatchError::CorpusMismatch {
                index: index.n_docs(),
                corpus: corpus.len(),
            });
        }
        if index.analyzer_digest() != analyzer.config_digest() {
            return Err(MatchError::AnalyzerMismatch);
        }
        Ok(Matcher {
            index,
            corpus,
            analyzer,
            similarity: Box::new(EditDistanceSimilarity),
            config,
        })
    }

    pub fn with_similarity(mut self, sim: impl FieldSimilarity + 'a) -> Self {
        self.similarity = Box::new(sim);
        self
    }

    /// Same index, corpus and similarity under different BM25 parameters.
    pub fn with_bm25(&self, bm25: Bm25Params) -> Result<Matcher<'_>, MatchError> {
        bm25.validate()?;
        Ok(Matcher {
            index: self.index,
            corpus: self.corpus,
            analyzer: self.analyzer,
            similarity: Box::new(SharedSimilarity(self.similarity.as_ref())),
            config: PipelineConfig {
                bm25,
                ..self.config
            },
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    pub fn analyzer(&self) -> &Analyzer {
        self.analyzer
    }

    pub fn scorer(&self) -> Scorer<'a> {
        Scorer::new(self.index, self.config.bm25)
    }

    /// The top `k` BM25 candidates for `text`.
    pub fn retrieve(&self, text: &str) -> (QueryVector, Vec<ScoredCandidate>) {
        let query = QueryVector::analyze(self.analyzer, text);
        let hits = self.scorer().top_k(&query, self.config.k);
        (query, hits)
    }

    /// Components of a corpus record, normalized the same way as queries.
    pub fn record_components(&self, doc: DocId) -> ParsedAddress {
        let r = &self.corpus.records()[doc as usize];
        let norm = |s: &str| self.analyzer.normalize_field(s);
        ParsedAddress {
            name: norm(&r.name),
            street_name: norm(&r.street_name),
            city: norm(&r.city),
            state: norm(&r.state),
            zip_code: norm(&r.zip_code),
            extn_zip: norm(&r.extn_zip),
            country: norm(&r.country),
        }
    }

    pub fn breakdown(&self, parsed: &ParsedAddress, doc: DocId) -> Vec<ComponentContribution> {
        component_breakdown(
            parsed,
            &self.record_components(doc),
            &self.config.weights,
            self.similarity.as_ref(),
        )
    }

    pub fn match_query(&self, text: &str) -> Result<MatchResult, MatchError> {
        self.trace(text).map(|t| t.result)
    }

    pub fn trace(&self, text: &str) -> Result<MatchTrace, MatchError> {
        let (query, candidates) = self.retrieve(text);
        if candidates.is_empty() {
            return Err(MatchError::NoCandidates(text.to_string()));
        }
        let parsed = self
            .analyzer
            .parse_components(text)
            .map_err(|_| MatchError::Unparsable(text.to_string()))?;
        let sim = self.similarity.as_ref();
        let weights = &self.config.weights;
        let (winner, pool, path) = match gate(&candidates, &self.config.gate)? {
            GateDecision::DirectAccept(c) => {
                let s = reranker::component_similarity(
                    &parsed,
                    &self.record_components(c.doc),
                    weights,
                    sim,
                );
                (
                    ScoredCandidate {
                        rerank: Some(s),
                        ..c
                    },
                    vec![c],
                    DecisionPath::DirectAccept,
                )
            }
            GateDecision::ReRank(pool) => {
                let ranked =
                    reranker::rerank(&pool, &parsed, |d| self.record_components(d), weights, sim);
                (ranked[0], ranked, DecisionPath::ReRanked)
            }
        };
        let similarity = winner.rerank.unwrap_or(0.0);
        let best = self.corpus.records()[winner.doc as usize].clone();
        let result = MatchResult {
            query_text: text.to_string(),
            record_id: best.record_id.clone(),
            best,
            bm25_score: winner.score,
            rerank_score: (path == DecisionPath::ReRanked).then_some(similarity),
            similarity,
            category: categorize(similarity, &self.config.bands)?,
            decision_path: path,
            pool_size: pool.len(),
        };
        Ok(MatchTrace {
            query,
            parsed,
            candidates,
            pool,
            winner: winner.doc,
            result,
        })
    }

    /// Matches every query independently; results keep the input order.
    pub fn match_batch<S: AsRef<str> + Sync>(
        &self,
        queries: &[S],
    ) -> Vec<Result<MatchResult, MatchError>> {
        queries
            .par_iter()
            .map(|q| self.match_query(q.as_ref()))
            .collect()
    }
}

struct SharedSimilarity<'s>(&'s dyn FieldSimilarity);

impl FieldSimilarity for SharedSimilarity<'_> {
    fn similarity(&self, c: crate::analyzer::Component, a: &str, b: &str) -> f64 {
        self.0.similarity(c, a, b)
    }
}

#[derive(Debug, Error)]
pub enum BatchInputError {
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
}

/// One row of a batch file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub query: String,
}

#[derive(Deserialize)]
struct RawBatchQuery {
    #[serde(default)]
    id: Option<serde_json::Value>,
    query: String,
}

/// Reads either plain text (one query per non-blank line) or JSONL objects
/// with a `query` and an optional `id`. A file whose first non-blank line
/// starts with `{` is treated as JSONL.
pub fn read_batch_queries(text: &str) -> Result<Vec<BatchQuery>, BatchInputError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();
    let jsonl = lines.peek().is_some_and(|(_, l)| l.starts_with('{'));
    lines
        .map(|(line, l)| {
            if !jsonl {
                return Ok(BatchQuery {
                    id: None,
                    query: l.to_string(),
                });
            }
            let raw: RawBatchQuery =
                serde_json::from_str(l).map_err(|e| BatchInputError::BadLine {
                    line,
                    reason: e.to_string(),
                })?;
            let id = match raw.id {
                None | Some(serde_json::Value::Null) => None,
                Some(serde_json::Value::String(s)) => Some(s),
                Some(serde_json::Value::Number(n)) => Some(n.to_string()),
                Some(other) => {
                    return Err(BatchInputError::BadLine {
                        line,
                        reason: format!("id must be a string or number, got {other}"),
                    })
                }
            };
            Ok(BatchQuery {
                id,
                query: raw.query,
            })
        })
        .collect()
}

/// One line of batch output: either a result or the reason the row failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<MatchResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn batch_rows(matcher: &Matcher<'_>, queries: &[BatchQuery]) -> Vec<BatchRow> {
    let texts: Vec<&str> = queries.iter().map(|q| q.query.as_str()).collect();
    matcher
        .match_batch(&texts)
        .into_iter()
        .zip(queries)
        .map(|(res, q)| {
            let (result, error) = match res {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BatchRow {
                id: q.id.clone(),
                query: q.query.clone(),
                result,
                error,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Format;

    const RECORDS: &str = r#"{"Name":"CHAINWORKS","StreetName":"3255 HART ROAD","City":"JACKSON","State":"MI","Country":"USA","ZipCode":"49201","Address":"CHAINWORKS, 3255 HART ROAD, JACKSON, MI, 49201, USA"}
{"Name":"ACME TOOL","StreetName":"12 MAIN ST","City":"OMAHA","State":"NE","Country":"USA","ZipCode":"68117","Address":"ACME TOOL, 12 MAIN ST, OMAHA, NE, 68117, USA"}
{"Name":"HART SUPPLY","StreetName":"90 PINE AVE","City":"LANSING","State":"MI","Country":"USA","ZipCode":"48906","Address":"HART SUPPLY, 90 PINE AVE, LANSING, MI, 48906, USA"}
"#;

    fn setup() -> (Corpus, Analyzer, InvertedIndex) {
        let corpus = Corpus::from_bytes(RECORDS.as_bytes(), Format::Jsonl).unwrap();
        let analyzer = Analyzer::default();
        let index = InvertedIndex::build(&corpus, &analyzer).unwrap();
        (corpus, analyzer, index)
    }

    #[test]
    fn exact_query_is_found() {
        let (corpus, analyzer, index) = setup();
        let m = Matcher::new(&index, &corpus, &analyzer, PipelineConfig::default()).unwrap();
        let r = m
            .match_query("Chainworks 3255 Hart Rd, Jackson, MI 49201, USA")
            .unwrap();
        assert_eq!(r.best.name, "CHAINWORKS");
        assert_eq!(r.similarity, 1.0);
        assert_eq!(r.category, Category::VeryHigh);
        match r.decision_path {
            DecisionPath::DirectAccept => assert_eq!(r.rerank_score, None),
            DecisionPath::ReRanked => assert_eq!(r.rerank_score, Some(1.0)),
        }
    }

    #[test]
    fn unknown_terms_have_no_candidates() {
        let (corpus, analyzer, index) = setup();
        let m = Matcher::new(&index, &corpus, &analyzer, PipelineConfig::default()).unwrap();
        assert!(matches!(
            m.match_query("zzzz qqqq"),
            Err(MatchError::NoCandidates(_))
        ));
        assert!(matches!(
            m.match_query("???"),
            Err(MatchError::NoCandidates(_))
        ));
    }

    #[test]
    fn batch_keeps_order_and_isolates_failures() {
        let (corpus, analyzer, index) = setup();
        let m = Matcher::new(&index, &corpus, &analyzer, PipelineConfig::default()).unwrap();
        let out = m.match_batch(&["acme 12 main st omaha", "zzzz", "hart supply lansing"]);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].as_ref().unwrap().best.name, "ACME TOOL");
        assert!(out[1].is_err());
        assert_eq!(out[2].as_ref().unwrap().best.name, "HART SUPPLY");
        assert!(m.match_batch::<&str>(&[]).is_empty());
    }

    #[test]
    fn mismatched_index_is_rejected() {
        let (corpus, analyzer, _) = setup();
        let other =
            InvertedIndex::from_documents(vec![vec!["a"]], analyzer.config_digest()).unwrap();
        assert!(matches!(
            Matcher::new(&other, &corpus, &analyzer, PipelineConfig::default()),
            Err(MatchError::CorpusMismatch { .. })
        ));
        let stale = InvertedIndex::from_documents(
            corpus
                .records()
                .iter()
                .map(|r| analyzer.tokenize(&r.full_address)),
            "stale".into(),
        )
        .unwrap();
        assert!(matches!(
            Matcher::new(&stale, &corpus, &analyzer, PipelineConfig::default()),
            Err(MatchError::AnalyzerMismatch)
        ));
    }

    #[test]
    fn batch_input_formats() {
        let plain = read_batch_queries("a b\n\n  c d  \n").unwrap();
        assert_eq!(
            plain.iter().map(|q| q.query.as_str()).collect::<Vec<_>>(),
            ["a b", "c d"]
        );
        let json =
            read_batch_queries("{\"id\":\"Q1\",\"query\":\"x\"}\n{\"id\":7,\"query\":\"y\"}\n")
                .unwrap();
        assert_eq!(json[0].id.as_deref(), Some("Q1"));
        assert_eq!(json[1].id.as_deref(), Some("7"));
        assert!(read_batch_queries("{\"id\":1}\n").is_err());
        assert!(read_batch_queries("").unwrap().is_empty());
    }

    #[test]
    fn config_round_trips_and_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"k": 5, "bm25": {"k1": 2.0}}"#).unwrap();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.bm25.k1, 2.0);
        assert_eq!(cfg.bm25.b, 0.75);
        assert_eq!(cfg.gate, GateConfig::default());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"kk": 1}"#).is_err());
    }
}
