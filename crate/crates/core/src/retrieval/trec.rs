//! TREC run files: `query_id Q0 doc_id rank score tag`, one hit per line.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{Hit, RetrievalResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Writes results in the given order. Scores are printed with enough
/// digits to round-trip.
pub fn write_run(mut out: impl Write, results: &[RetrievalResult], tag: &str) -> std::io::Result<()> {
    for r in results {
        for h in &r.hits {
            writeln!(out, "{} Q0 {} {} {:?} {}", r.query_id, h.doc_id, h.rank, h.score, tag)?;
        }
    }
    Ok(())
}

/// Reads a run file back into per-query results, in first-seen query order.
/// Representation ids are not stored in run files and come back equal to
/// the document id.
pub fn read_run(reader: impl BufRead, origin: &Path) -> Result<Vec<RetrievalResult>> {
    let mut results: Vec<RetrievalResult> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: &str| Error::MalformedRecord {
            path: origin.to_path_buf(),
            line: i + 1,
            message: message.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(bad("expected 6 whitespace-separated fields"));
        }
        let rank: usize = fields[3].parse().map_err(|_| bad("rank is not an integer"))?;
        let score: f64 = fields[4].parse().map_err(|_| bad("score is not a number"))?;
        let hit = Hit {
            representation_id: fields[2].to_string(),
            doc_id: fields[2].to_string(),
            score,
            rank,
        };
        match results.last_mut() {
            Some(r) if r.query_id == fields[0] => r.hits.push(hit),
            _ => results.push(RetrievalResult {
                query_id: fields[0].to_string(),
                hits: vec![hit],
            }),
        }
    }
    Ok(results)
}

impl RunEntry {
    pub fn from_hit(query_id: &str, hit: &Hit, tag: &str) -> Self {
        RunEntry {
            query_id: query_id.to_string(),
            doc_id: hit.doc_id.clone(),
            rank: hit.rank,
            score: hit.score,
            tag: tag.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let results = vec![
            RetrievalResult {
                query_id: "q1".into(),
                hits: vec![
                    Hit { representation_id: "d3".into(), doc_id: "d3".into(), score: 2.5, rank: 1 },
                    Hit { representation_id: "d1".into(), doc_id: "d1".into(), score: 0.1 + 0.2, rank: 2 },
                ],
            },
            RetrievalResult {
                query_id: "q2".into(),
                hits: vec![Hit { representation_id: "d2".into(), doc_id: "d2".into(), score: 0.0, rank: 1 }],
            },
        ];
        let mut buf = Vec::new();
        write_run(&mut buf, &results, "ski").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("q1 Q0 d3 1 2.5 ski\n"));
        let back = read_run(&buf[..], Path::new("run")).unwrap();
        assert_eq!(back, results);
    }

    #[test]
    fn malformed_line_is_reported() {
        let err = read_run(&b"q1 Q0 d1 x 1.0 t\n"[..], Path::new("run")).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 1, .. }));
    }
}
