//! Text normalization for address strings.
//!
//! The same [`Analyzer`] is used to build the index, to tokenize queries and
//! to segment free-text queries into address components, so every stage sees
//! identical tokens.

mod parse;
pub(crate) mod tables;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use parse::{Component, ParsedAddress};

const DEFAULT_ABBREVIATIONS: &str = include_str!("../../data/abbreviations.tsv");
const DEFAULT_STOPLIST: &str = include_str!("../../data/stoplist.txt");

/// Bumped whenever the tokenization rules change, so stale indexes are detected.
const TOKENIZER_REVISION: &str = "addr-tokenizer/1";

/// Label words that introduce contact details rather than address content.
const NOISE_LABELS: &[&str] = &[
    "tel",
    "telephone",
    "phone",
    "ph",
    "fax",
    "attn",
    "email",
    "ctc",
    "hours",
];

static EMAIL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\S+@\S+").unwrap());
static PHONE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:\(\d{3}\)\s*|\b\d{3}[-.])\d{3}[-.]\d{4}\b").unwrap());
static CLOCK_TIME: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b\d{1,2}:\d{2}\b").unwrap());
static CARE_OF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bc\s*/\s*o\b").unwrap());
static EMAIL_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\be-?mail\b").unwrap());
static CAMEL_BOUNDARY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([a-z])([A-Z])").unwrap());

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `variant<TAB>canonical[<TAB>street]`, got {text:?}")]
    BadTableLine { line: usize, text: String },
    #[error("no address component could be recognised in {0:?}")]
    UnparsableAddress(String),
}

/// A normalized, lowercase term with no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Terms dropped from every token stream. Lookup is exact on normalized tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopList {
    terms: BTreeSet<String>,
}

impl StopList {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms = terms
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        StopList { terms }
    }

    /// One term per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self, AnalyzerError> {
        Ok(Self::parse(&read(path)?))
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer::new(
            StopList::parse(DEFAULT_STOPLIST),
            AbbreviationTable::parse(DEFAULT_ABBREVIATIONS).expect("bundled abbreviation table"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rewrite {
    variant: Vec<String>,
    canonical: Vec<String>,
    street_context: bool,
}

/// Rewrites token sequences to a canonical spelling (`rd` -> `road`,
/// `united states` -> `usa`). Longest variant wins when several match.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbbreviationTable {
    rewrites: Vec<Rewrite>,
    by_first: HashMap<String, Vec<usize>>,
}

impl AbbreviationTable {
    pub fn parse(text: &str) -> Result<Self, AnalyzerError> {
        let mut table = AbbreviationTable::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = || AnalyzerError::BadTableLine {
                line: n + 1,
                text: raw.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            let street_context = match cols.len() {
                2 => false,
                3 if cols[2].trim().eq_ignore_ascii_case("street") => true,
                _ => return Err(bad()),
            };
            let words =
                |s: &str| -> Vec<String> { s.split_whitespace().map(str::to_lowercase).collect() };
            let (variant, canonical) = (words(cols[0]), words(cols[1]));
            if variant.is_empty() || canonical.is_empty() {
                return Err(bad());
            }
            table.push(Rewrite {
                variant,
                canonical,
                street_context,
            });
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, AnalyzerError> {
        Self::parse(&read(path)?)
    }

    fn push(&mut self, rewrite: Rewrite) {
        let idx = self.rewrites.len();
        let first = rewrite.variant[0].clone();
        self.rewrites.push(rewrite);
        let slot = self.by_first.entry(first).or_default();
        slot.push(idx);
        let rewrites = &self.rewrites;
        slot.sort_by_key(|&i| std::cmp::Reverse(rewrites[i].variant.len()));
    }

    fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.rewrites.iter().map(|r| {
            format!(
                "{}\t{}\t{}",
                r.variant.join(" "),
                r.canonical.join(" "),
                r.street_context
            )
        })
    }

    /// Applies the table to `tokens`, carrying each token's segment number.
    fn apply(&self, tokens: Vec<(String, usize)>) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let candidates = self.by_first.get(&tokens[i].0);
            let hit = candidates.into_iter().flatten().copied().find(|&idx| {
                let rw = &self.rewrites[idx];
                let end = i + rw.variant.len();
                end <= tokens.len()
                    && tokens[i..end].iter().map(|t| &t.0).eq(rw.variant.iter())
                    && (!rw.street_context || street_context(&out))
            });
            match hit {
                Some(idx) => {
                    let rw = &self.rewrites[idx];
                    let seg = tokens[i].1;
                    out.extend(rw.canonical.iter().map(|w| (w.clone(), seg)));
                    i += rw.variant.len();
                }
                None => {
                    out.push(tokens[i].clone());
                    i += 1;
                }
            }
        }
        out
    }
}

fn street_context(previous: &[(String, usize)]) -> bool {
    previous
        .iter()
        .rev()
        .take(3)
        .any(|(t, _)| t.bytes().any(|b| b.is_ascii_digit()))
}

fn read(path: &Path) -> Result<String, AnalyzerError> {
    std::fs::read_to_string(path).map_err(|source| AnalyzerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Tokenizer, normalizer and component segmenter for address text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Analyzer {
    stop: StopList,
    abbreviations: AbbreviationTable,
}

impl Analyzer {
    pub fn new(stop: StopList, abbreviations: AbbreviationTable) -> Self {
        Analyzer {
            stop,
            abbreviations,
        }
    }

    /// Loads user tables, falling back to the bundled ones for missing paths.
    pub fn from_files(
        stoplist: Option<&Path>,
        abbreviations: Option<&Path>,
    ) -> Result<Self, AnalyzerError> {
        let defaults = Analyzer::default();
        let stop = match stoplist {
            Some(p) => StopList::load(p)?,
            None => defaults.stop,
        };
        let abbreviations = match abbreviations {
            Some(p) => AbbreviationTable::load(p)?,
            None => defaults.abbreviations,
        };
        Ok(Analyzer::new(stop, abbreviations))
    }

    pub fn stop_list(&self) -> &StopList {
        &self.stop
    }

    /// Lowercases, strips contact noise, splits on whitespace and punctuation,
    /// applies the abbreviation table and drops stop words. Order is preserved.
    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        self.segmented(text)
            .into_iter()
            .map(|(t, _)| Token(t))
            .collect()
    }

    /// Tokens joined by single spaces; the normalized form of one field.
    pub fn normalize_field(&self, text: &str) -> String {
        let tokens: Vec<String> = self.segmented(text).into_iter().map(|(t, _)| t).collect();
        tokens.join(" ")
    }

    pub fn parse_components(&self, text: &str) -> Result<ParsedAddress, AnalyzerError> {
        parse::parse(&self.segmented(text))
            .ok_or_else(|| AnalyzerError::UnparsableAddress(text.to_string()))
    }

    /// Tokens tagged with the index of the comma-delimited segment they came from.
    pub(crate) fn segmented(&self, text: &str) -> Vec<(String, usize)> {
        let cleaned = strip_noise(text);
        let mut raw = Vec::new();
        let mut segment = 0;
        let mut current = String::new();
        for ch in cleaned.chars() {
            if ch.is_alphanumeric() {
                current.extend(ch.to_lowercase());
                continue;
            }
            if !current.is_empty() {
                raw.push((std::mem::take(&mut current), segment));
            }
            if ch == ',' {
                segment += 1;
            }
        }
        if !current.is_empty() {
            raw.push((current, segment));
        }
        raw.retain(|(t, _)| !NOISE_LABELS.contains(&t.as_str()) && !self.stop.contains(t));
        self.abbreviations.apply(raw)
    }

    /// Checksum of everything that influences the token stream.
    pub fn config_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(TOKENIZER_REVISION.as_bytes());
        h.update(b"\nstop\n");
        for t in self.stop.iter() {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.update(b"abbreviations\n");
        for line in self.abbreviations.lines() {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

fn strip_noise(text: &str) -> String {
    let mut s = EMAIL.replace_all(text, " ").into_owned();
    for re in [&*PHONE, &*CLOCK_TIME, &*CARE_OF, &*EMAIL_LABEL] {
        s = re.replace_all(&s, " ").into_owned();
    }
    CAMEL_BOUNDARY.replace_all(&s, "$1 $2").into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::as_str).collect()
    }

    #[test]
    fn tokenizes_plain_address_line() {
        let a = Analyzer::default();
        let toks = a.tokenize("14320 COUNTY ROAD 15, HOLIDAY CITY, OH 43554");
        assert_eq!(
            words(&toks),
            ["14320", "county", "road", "15", "holiday", "city", "oh", "43554"]
        );
    }

    #[test]
    fn contact_noise_is_removed() {
        let a = Analyzer::default();
        let toks = a.tokenize("TEL: 419-485-6584 eMAIL: jcrawfor@midwestmanufacturing.com");
        assert!(toks.is_empty(), "{toks:?}");
        assert!(a
            .tokenize("ATTN C/O PH: (402) 731-3636 Hours: 8:00")
            .is_empty());
    }

    #[test]
    fn empty_input() {
        assert!(Analyzer::default().tokenize("").is_empty());
    }

    #[test]
    fn street_abbreviations_need_numeric_context() {
        let a = Analyzer::default();
        assert_eq!(
            words(&a.tokenize("4949 264th St")),
            ["4949", "264th", "street"]
        );
        assert_eq!(words(&a.tokenize("St Louis")), ["st", "louis"]);
        assert_eq!(
            words(&a.tokenize("1245 E Henri Rd")),
            ["1245", "east", "henri", "road"]
        );
        assert_eq!(words(&a.tokenize("E Main")), ["e", "main"]);
    }

    #[test]
    fn country_phrases_collapse() {
        let a = Analyzer::default();
        assert_eq!(words(&a.tokenize("Omaha, United States")), ["omaha", "usa"]);
        assert_eq!(
            words(&a.tokenize("HUMBOLDT, IA 50548, US")),
            ["humboldt", "ia", "50548", "usa"]
        );
    }

    #[test]
    fn glued_words_are_split() {
        let a = Analyzer::default();
        assert_eq!(
            words(&a.tokenize("Inc.4949 264th StValley")),
            ["inc", "4949", "264th", "street", "valley"]
        );
    }

    #[test]
    fn stop_words_dropped() {
        let a = Analyzer::default();
        assert_eq!(
            words(&a.tokenize("The House of Bread and Wine")),
            ["house", "bread", "wine"]
        );
    }

    #[test]
    fn segments_follow_commas() {
        let a = Analyzer::default();
        let seg = a.segmented("a b, c,, d");
        let ids: Vec<usize> = seg.iter().map(|s| s.1).collect();
        assert_eq!(ids, [0, 0, 1, 3]);
    }

    #[test]
    fn table_parse_errors_carry_line() {
        let err = AbbreviationTable::parse("rd\troad\nbroken line\n").unwrap_err();
        assert!(matches!(err, AnalyzerError::BadTableLine { line: 2, .. }));
        assert!(AbbreviationTable::parse("a\tb\tavenue\n").is_err());
    }

    #[test]
    fn longest_variant_wins() {
        let t = AbbreviationTable::parse("us\tusa\nus highway\tushwy\n").unwrap();
        let a = Analyzer::new(StopList::default(), t);
        assert_eq!(words(&a.tokenize("us highway 2 us")), ["ushwy", "2", "usa"]);
    }

    #[test]
    fn digest_tracks_tables() {
        let base = Analyzer::default();
        let other = Analyzer::new(StopList::new(["the"]), AbbreviationTable::default());
        assert_ne!(base.config_digest(), other.config_digest());
        assert_eq!(base.config_digest(), Analyzer::default().config_digest());
    }
}
