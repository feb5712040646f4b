//! Structured address records and their ingestion from CSV or JSONL.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Column names of the source dataset, in canonical spelling.
pub const COLUMNS: [&str; 9] = [
    "city",
    "name",
    "state",
    "country",
    "extnZip",
    "shortID",
    "zipCode",
    "streetName",
    "Address",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} contains no records")]
    EmptyFile(PathBuf),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("line {line}: {reason}: {row}")]
    MalformedRow {
        line: usize,
        reason: String,
        row: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.csv` is CSV; anything else is read as JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressRecord {
    pub record_id: String,
    pub name: String,
    pub street_name: String,
    pub city: String,
    pub state: String,
    pub country: String,
    pub zip_code: String,
    pub extn_zip: String,
    pub short_id: String,
    pub full_address: String,
}

impl AddressRecord {
    /// `", "`-join of the non-empty components, each whitespace-collapsed.
    pub fn synthesize_full_address(&self) -> String {
        [
            &self.name,
            &self.street_name,
            &self.city,
            &self.state,
            &self.zip_code,
            &self.country,
        ]
        .iter()
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(", ")
    }

    fn components_empty(&self) -> bool {
        [
            &self.name,
            &self.street_name,
            &self.city,
            &self.state,
            &self.country,
            &self.zip_code,
            &self.extn_zip,
        ]
        .iter()
        .all(|s| s.trim().is_empty())
    }
}

/// Immutable, ordered set of records. Position in `records` is the document id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<AddressRecord>,
    source_digest: String,
}

impl Corpus {
    pub fn ingest(path: &Path, format: Format) -> Result<Corpus, CorpusError> {
        let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let corpus = Corpus::from_bytes(&bytes, format)?;
        if corpus.is_empty() {
            return Err(CorpusError::EmptyFile(path.to_path_buf()));
        }
        Ok(corpus)
    }

    /// Parses in-memory data. An input without rows yields an empty corpus.
    pub fn from_bytes(bytes: &[u8], format: Format) -> Result<Corpus, CorpusError> {
        let rows = match format {
            Format::Csv => csv_rows(bytes)?,
            Format::Jsonl => jsonl_rows(bytes)?,
        };
        let mut seen = HashSet::new();
        let mut records = Vec::with_capacity(rows.len());
        for (ordinal, row) in rows.into_iter().enumerate() {
            let RawRow { line, text, fields } = row;
            let mut rec = AddressRecord::default();
            for (col, value) in fields {
                let slot = match col {
                    0 => &mut rec.city,
                    1 => &mut rec.name,
                    2 => &mut rec.state,
                    3 => &mut rec.country,
                    4 => &mut rec.extn_zip,
                    5 => &mut rec.short_id,
                    6 => &mut rec.zip_code,
                    7 => &mut rec.street_name,
                    _ => &mut rec.full_address,
                };
                *slot = value;
            }
            let malformed = |reason: &str| CorpusError::MalformedRow {
                line,
                reason: reason.to_string(),
                row: text.clone(),
            };
            if rec.components_empty() && rec.full_address.trim().is_empty() {
                return Err(malformed("every field is empty"));
            }
            if rec.full_address.trim().is_empty() {
                rec.full_address = rec.synthesize_full_address();
            }
            rec.record_id = if rec.short_id.trim().is_empty() {
                format!("{:06}", ordinal + 1)
            } else {
                rec.short_id.trim().to_string()
            };
            if !seen.insert(rec.record_id.clone()) {
                return Err(malformed("duplicate record id"));
            }
            records.push(rec);
        }
        Ok(Corpus {
            records,
            source_digest: hex::encode(Sha256::digest(bytes)),
        })
    }

    pub fn records(&self) -> &[AddressRecord] {
        &self.records
    }

    pub fn get(&self, doc: usize) -> Option<&AddressRecord> {
        self.records.get(doc)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    /// Writes one JSON object per record using the source column names.
    pub fn export_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            let row = serde_json::json!({
                "city": r.city,
                "name": r.name,
                "state": r.state,
                "country": r.country,
                "extnZip": r.extn_zip,
                "shortID": r.short_id,
                "zipCode": r.zip_code,
                "streetName": r.street_name,
                "Address": r.full_address,
            });
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct RawRow {
    line: usize,
    text: String,
    fields: Vec<(usize, String)>,
}

fn column_index(name: &str) -> Result<usize, CorpusError> {
    let trimmed = name.trim();
    COLUMNS
        .iter()
        .position(|c| c.eq_ignore_ascii_case(trimmed))
        .ok_or_else(|| CorpusError::UnknownColumn(trimmed.to_string()))
}

fn csv_rows(bytes: &[u8]) -> Result<Vec<RawRow>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header_err = |e: csv::Error| CorpusError::MalformedRow {
        line: 1,
        reason: e.to_string(),
        row: String::new(),
    };
    let headers = reader.headers().map_err(header_err)?.clone();
    let columns = headers
        .iter()
        .map(column_index)
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| CorpusError::MalformedRow {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
            row: String::new(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let text = record.iter().collect::<Vec<_>>().join(",");
        let fields = columns
            .iter()
            .zip(record.iter())
            .map(|(&c, v)| (c, v.to_string()))
            .collect();
        rows.push(RawRow { line, text, fields });
    }
    Ok(rows)
}

fn jsonl_rows(bytes: &[u8]) -> Result<Vec<RawRow>, CorpusError> {
    let text = String::from_utf8_lossy(bytes);
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::MalformedRow {
            line: n + 1,
            reason,
            row: line.to_string(),
        };
        let obj = match serde_json::from_str::<Value>(line) {
            Ok(Value::Object(obj)) => obj,
            Ok(_) => return Err(malformed("expected a JSON object".into())),
            Err(e) => return Err(malformed(e.to_string())),
        };
        let mut fields = Vec::with_capacity(obj.len());
        for (key, value) in obj {
            let col = column_index(&key)?;
            let value = match value {
                Value::Null => String::new(),
                Value::String(s) => s,
                Value::Number(num) => num.to_string(),
                other => return Err(malformed(format!("field {key:?} is not a string: {other}"))),
            };
            fields.push((col, value));
        }
        rows.push(RawRow {
            line: n + 1,
            text: line.to_string(),
            fields,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "city,name,state,country,extnZip,shortID,zipCode,streetName,Address\n\
        JACKSON,CHAINWORKS,MI,USA,,C1,49201,3255 HART ROAD,\"CHAINWORKS, 3255 HART ROAD, JACKSON, MI, 49201, USA\"\n";

    #[test]
    fn csv_row_kept_verbatim() {
        let c = Corpus::from_bytes(CSV.as_bytes(), Format::Csv).unwrap();
        let r = &c.records()[0];
        assert_eq!(r.record_id, "C1");
        assert_eq!(r.city, "JACKSON");
        assert_eq!(r.name, "CHAINWORKS");
        assert_eq!(r.street_name, "3255 HART ROAD");
        assert_eq!(r.zip_code, "49201");
        assert_eq!(
            r.full_address,
            "CHAINWORKS, 3255 HART ROAD, JACKSON, MI, 49201, USA"
        );
    }

    #[test]
    fn headers_match_case_insensitively() {
        let csv = "CITY,Name,ZIPCODE\nOmaha,Quin,68117\n";
        let c = Corpus::from_bytes(csv.as_bytes(), Format::Csv).unwrap();
        assert_eq!(c.records()[0].zip_code, "68117");
        assert_eq!(c.records()[0].record_id, "000001");
    }

    #[test]
    fn missing_address_is_synthesized() {
        let line =
            r#"{"name":"A","streetName":"B","city":"C","state":"D","zipCode":"1","country":"X"}"#;
        let c = Corpus::from_bytes(line.as_bytes(), Format::Jsonl).unwrap();
        assert_eq!(c.records()[0].full_address, "A, B, C, D, 1, X");
    }

    #[test]
    fn empty_row_is_malformed() {
        let data = "{\"name\":\"A\"}\n{\"name\":\"\",\"city\":\"  \"}\n";
        match Corpus::from_bytes(data.as_bytes(), Format::Jsonl) {
            Err(CorpusError::MalformedRow { line, row, .. }) => {
                assert_eq!(line, 2);
                assert!(row.contains("city"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_column_rejected() {
        let err = Corpus::from_bytes(b"{\"lat\":1.0}\n", Format::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownColumn(c) if c == "lat"));
        let err = Corpus::from_bytes(b"city,phone\nx,y\n", Format::Csv).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownColumn(_)));
    }

    #[test]
    fn duplicate_short_ids_rejected() {
        let data = "{\"name\":\"A\",\"shortID\":\"x\"}\n{\"name\":\"B\",\"shortID\":\"x\"}\n";
        assert!(matches!(
            Corpus::from_bytes(data.as_bytes(), Format::Jsonl),
            Err(CorpusError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn numeric_zip_accepted() {
        let c = Corpus::from_bytes(b"{\"zipCode\":43554}\n", Format::Jsonl).unwrap();
        assert_eq!(c.records()[0].zip_code, "43554");
    }

    #[test]
    fn empty_file_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        std::fs::write(&p, "\n\n").unwrap();
        assert!(matches!(
            Corpus::ingest(&p, Format::Jsonl),
            Err(CorpusError::EmptyFile(_))
        ));
    }

    #[test]
    fn duplicates_by_address_are_kept() {
        let data = "{\"Address\":\"1 A ST\",\"shortID\":\"a\"}\n{\"Address\":\"1 A ST\",\"shortID\":\"b\"}\n";
        let c = Corpus::from_bytes(data.as_bytes(), Format::Jsonl).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn digest_is_deterministic() {
        let a = Corpus::from_bytes(CSV.as_bytes(), Format::Csv).unwrap();
        let b = Corpus::from_bytes(CSV.as_bytes(), Format::Csv).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source_digest().len(), 64);
    }
}
