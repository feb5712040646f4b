use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use addrmatch::analyzer::Analyzer;
use addrmatch::bm25::{ScoredCandidate, TermContribution};
use addrmatch::corpus::{Corpus, Format};
use addrmatch::eval::{self, LabeledPair, ParamGrid};
use addrmatch::index::{IndexError, InvertedIndex};
use addrmatch::matcher::{self, DecisionPath, MatchError, MatchResult, Matcher};
use addrmatch::reranker::{
    estimate_threshold, ComponentContribution, RerankError, DEFAULT_THRESHOLD,
};
use serde::Serialize;

use crate::config::{Config, Overrides};
use crate::{CliError, Command, GlobalOpts};

pub fn run(command: Command, global: &GlobalOpts) -> Result<(), CliError> {
    let config = resolve_config(global)?;
    match command {
        Command::Index { corpus, output } => index(&config, &corpus, &output),
        Command::Query {
            index,
            corpus,
            text,
            explain,
            json,
        } => {
            let ctx = Context::load(&config, &index, &corpus)?;
            let m = ctx.matcher(&config, &index)?;
            query(&m, &text, explain, json)
        }
        Command::MatchBatch {
            index,
            corpus,
            queries,
            output,
        } => {
            let ctx = Context::load(&config, &index, &corpus)?;
            let m = ctx.matcher(&config, &index)?;
            match_batch(&m, &queries, &output)
        }
        Command::Eval {
            index,
            corpus,
            pairs,
            grid_k1,
            grid_b,
            grid_k3,
            json,
        } => {
            let ctx = Context::load(&config, &index, &corpus)?;
            let m = ctx.matcher(&config, &index)?;
            let pairs = read_pairs(&pairs)?;
            if grid_k1.is_empty() && grid_b.is_empty() && grid_k3.is_empty() {
                evaluate(&m, &pairs, json)
            } else {
                let or_current =
                    |v: Vec<f64>, current: f64| if v.is_empty() { vec![current] } else { v };
                let grid = ParamGrid {
                    k1: or_current(grid_k1, config.bm25.k1),
                    b: or_current(grid_b, config.bm25.b),
                    k3: or_current(grid_k3, config.bm25.k3),
                };
                grid_search(&m, &pairs, &grid, json)
            }
        }
        Command::EstimateThreshold {
            index,
            corpus,
            queries,
            json,
        } => {
            let ctx = Context::load(&config, &index, &corpus)?;
            let m = ctx.matcher(&config, &index)?;
            threshold(&m, &queries, json)
        }
    }
}

fn resolve_config(g: &GlobalOpts) -> Result<Config, CliError> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply(&Overrides {
        stoplist: g.stoplist.clone(),
        abbreviations: g.abbreviations.clone(),
        k1: g.k1,
        b: g.b,
        k3: g.k3,
        threshold: g.threshold,
        k: g.k,
    });
    cfg.pipeline()
        .validate()
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(cfg)
}

fn analyzer(cfg: &Config) -> Result<Analyzer, CliError> {
    Analyzer::from_files(
        cfg.analyzer.stoplist.as_deref(),
        cfg.analyzer.abbreviations.as_deref(),
    )
    .map_err(|e| CliError::input(e.to_string()))
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Corpus::ingest(path, Format::from_path(path))
        .map_err(|e| CliError::input(format!("corpus {}: {e}", path.display())))
}

fn read_text(path: &Path, what: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {what} {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::input(format!("cannot write {}: {e}", path.display()))
}

struct Context {
    analyzer: Analyzer,
    corpus: Corpus,
    index: InvertedIndex,
}

impl Context {
    fn load(cfg: &Config, index: &Path, corpus: &Path) -> Result<Context, CliError> {
        let analyzer = analyzer(cfg)?;
        let corpus = load_corpus(corpus)?;
        let index = InvertedIndex::load(index).map_err(|e| match e {
            IndexError::Io { .. } => CliError::input(e.to_string()),
            _ => CliError::input(format!("index {}: {e}", index.display())),
        })?;
        Ok(Context {
            analyzer,
            corpus,
            index,
        })
    }

    fn matcher(&self, cfg: &Config, index_path: &Path) -> Result<Matcher<'_>, CliError> {
        Matcher::new(&self.index, &self.corpus, &self.analyzer, cfg.pipeline()).map_err(|e| match e {
            MatchError::AnalyzerMismatch => CliError::input(format!(
                "index {} was built with a different stop list or abbreviation table; rebuild it with `addrmatch index`",
                index_path.display()
            )),
            MatchError::CorpusMismatch { .. } => CliError::input(format!(
                "index {} does not belong to this corpus: {e}",
                index_path.display()
            )),
            other => CliError::input(other.to_string()),
        })
    }
}

fn match_failure(e: MatchError) -> CliError {
    match e {
        MatchError::NoCandidates(_) | MatchError::Unparsable(_) | MatchError::InvalidConfig(_) => {
            CliError::input(e.to_string())
        }
        other => CliError::internal(other.to_string()),
    }
}

fn index(cfg: &Config, corpus: &Path, output: &Path) -> Result<(), CliError> {
    let analyzer = analyzer(cfg)?;
    let corpus_data = load_corpus(corpus)?;
    let index = InvertedIndex::build(&corpus_data, &analyzer)
        .map_err(|e| CliError::input(format!("corpus {}: {e}", corpus.display())))?;
    index
        .save(output)
        .map_err(|e| CliError::input(e.to_string()))?;
    println!(
        "indexed {} records, {} terms -> {}",
        index.n_docs(),
        index.vocabulary_size(),
        output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RankedRow<'a> {
    rank: usize,
    record_id: &'a str,
    score: f64,
    address: &'a str,
}

#[derive(Serialize)]
struct Explanation {
    terms: Vec<TermContribution>,
    components: Vec<ComponentContribution>,
}

#[derive(Serialize)]
struct QueryOutput<'a> {
    result: &'a MatchResult,
    candidates: Vec<RankedRow<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explain: Option<Explanation>,
}

fn ranked_rows<'a>(m: &'a Matcher<'_>, hits: &[ScoredCandidate]) -> Vec<RankedRow<'a>> {
    hits.iter()
        .enumerate()
        .map(|(i, c)| {
            let r = &m.corpus().records()[c.doc as usize];
            RankedRow {
                rank: i + 1,
                record_id: &r.record_id,
                score: c.score,
                address: &r.full_address,
            }
        })
        .collect()
}

fn query(m: &Matcher<'_>, text: &str, explain: bool, json: bool) -> Result<(), CliError> {
    let trace = m.trace(text).map_err(match_failure)?;
    let winner = trace.winner;
    let explanation = if explain {
        Some(Explanation {
            terms: m
                .scorer()
                .explain(&trace.query, winner)
                .map_err(|e| CliError::internal(e.to_string()))?,
            components: m.breakdown(&trace.parsed, winner),
        })
    } else {
        None
    };
    let rows = ranked_rows(m, &trace.candidates);
    let out = std::io::stdout();
    let mut out = out.lock();
    let io = |e: std::io::Error| CliError::internal(e.to_string());
    if json {
        let doc = QueryOutput {
            result: &trace.result,
            candidates: rows,
            explain: explanation,
        };
        serde_json::to_writer(&mut out, &doc).map_err(|e| CliError::internal(e.to_string()))?;
        writeln!(out).map_err(io)?;
        return Ok(());
    }
    writeln!(out, "{:<4}  {:>9}  ADDRESS", "RANK", "SCORE").map_err(io)?;
    for r in &rows {
        writeln!(out, "{:<4}  {:>9.4}  {}", r.rank, r.score, r.address).map_err(io)?;
    }
    let res = &trace.result;
    writeln!(out).map_err(io)?;
    writeln!(out, "best:       {}", res.best.full_address).map_err(io)?;
    writeln!(out, "record:     {}", res.record_id).map_err(io)?;
    writeln!(out, "category:   {}", res.category.label()).map_err(io)?;
    let path = match res.decision_path {
        DecisionPath::DirectAccept => "accepted on BM25 lead".to_string(),
        DecisionPath::ReRanked => format!("re-ranked over {} candidates", res.pool_size),
    };
    writeln!(out, "decision:   {path}").map_err(io)?;
    writeln!(out, "similarity: {:.4}", res.similarity).map_err(io)?;
    if let Some(x) = explanation {
        writeln!(out).map_err(io)?;
        writeln!(
            out,
            "{:<20} {:>9} {:>6} {:>6} {:>9}",
            "TERM", "WEIGHT", "TF", "QTF", "SUMMAND"
        )
        .map_err(io)?;
        for t in &x.terms {
            writeln!(
                out,
                "{:<20} {:>9.4} {:>6} {:>6} {:>9.4}",
                t.term, t.weight, t.tf_doc, t.tf_query, t.summand
            )
            .map_err(io)?;
        }
        let total: f64 = x.terms.iter().map(|t| t.summand).sum();
        writeln!(out, "{:<20} {:>33.4}", "total", total).map_err(io)?;
        writeln!(out).map_err(io)?;
        writeln!(
            out,
            "{:<12} {:>6} {:>10} {:>12}",
            "COMPONENT", "WEIGHT", "SIMILARITY", "CONTRIBUTION"
        )
        .map_err(io)?;
        for c in &x.components {
            writeln!(
                out,
                "{:<12} {:>6.2} {:>10.4} {:>12.4}",
                c.component.as_str(),
                c.weight,
                c.similarity,
                c.contribution
            )
            .map_err(io)?;
        }
    }
    Ok(())
}

fn read_queries(path: &Path) -> Result<Vec<matcher::BatchQuery>, CliError> {
    let text = read_text(path, "queries")?;
    matcher::read_batch_queries(&text)
        .map_err(|e| CliError::input(format!("queries {}: {e}", path.display())))
}

fn match_batch(m: &Matcher<'_>, queries: &Path, output: &Path) -> Result<(), CliError> {
    let queries = read_queries(queries)?;
    let rows = matcher::batch_rows(m, &queries);
    let mut out = create(output)?;
    for row in &rows {
        serde_json::to_writer(&mut out, row).map_err(|e| CliError::internal(e.to_string()))?;
        out.write_all(b"\n").map_err(write_err(output))?;
    }
    out.flush().map_err(write_err(output))?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} queries, {} failed -> {}",
        rows.len(),
        failed,
        output.display()
    );
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<LabeledPair>, CliError> {
    let text = read_text(path, "pairs")?;
    eval::read_pairs(&text).map_err(|e| CliError::input(format!("pairs {}: {e}", path.display())))
}

fn eval_failure(e: eval::EvalError) -> CliError {
    match e {
        eval::EvalError::Match(m) => match_failure(m),
        other => CliError::input(other.to_string()),
    }
}

fn evaluate(m: &Matcher<'_>, pairs: &[LabeledPair], json: bool) -> Result<(), CliError> {
    let metrics = eval::evaluate(m, pairs).map_err(eval_failure)?;
    if json {
        println!(
            "{}",
            serde_json::to_string(&metrics).map_err(|e| CliError::internal(e.to_string()))?
        );
    } else {
        print!("{}", eval::metrics_table(&metrics));
    }
    Ok(())
}

fn grid_search(
    m: &Matcher<'_>,
    pairs: &[LabeledPair],
    grid: &ParamGrid,
    json: bool,
) -> Result<(), CliError> {
    let res = eval::grid_search(m, pairs, grid).map_err(eval_failure)?;
    if json {
        println!(
            "{}",
            serde_json::to_string(&res).map_err(|e| CliError::internal(e.to_string()))?
        );
    } else {
        print!("{}", eval::grid_table(&res));
        println!(
            "best: k1={} b={} k3={} f1={:.4}",
            res.best.k1, res.best.b, res.best.k3, res.best_metrics.f1
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ThresholdOutput {
    threshold: f64,
    estimated: bool,
    gaps: usize,
}

fn threshold(m: &Matcher<'_>, queries: &Path, json: bool) -> Result<(), CliError> {
    let queries = read_queries(queries)?;
    let gaps: Vec<f64> = queries
        .iter()
        .filter_map(|q| {
            let (_, hits) = m.retrieve(&q.query);
            (hits.len() >= 2).then(|| hits[0].score - hits[1].score)
        })
        .collect();
    let (threshold, estimated) = match estimate_threshold(&gaps) {
        Ok(t) => (t, true),
        Err(RerankError::DegenerateGaps) => (DEFAULT_THRESHOLD, false),
        Err(e) => return Err(CliError::internal(e.to_string())),
    };
    if json {
        let out = ThresholdOutput {
            threshold,
            estimated,
            gaps: gaps.len(),
        };
        println!(
            "{}",
            serde_json::to_string(&out).map_err(|e| CliError::internal(e.to_string()))?
        );
    } else if estimated {
        println!("threshold: {threshold:.6} (from {} gaps)", gaps.len());
    } else {
        println!(
            "threshold: {threshold} (default; {} gaps could not be split into two groups)",
            gaps.len()
        );
    }
    Ok(())
}
