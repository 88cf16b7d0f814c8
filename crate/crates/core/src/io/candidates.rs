use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::layout::{scan_id_of, validate_id};

/// Ranked database image ids retrieved for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub query_id: String,
    pub ranked: Vec<String>,
}

impl Candidates {
    /// Scan ids of the first `k` candidates.
    pub fn top_scans(&self, k: usize) -> impl Iterator<Item = &str> {
        // ids were checked at parse time
        self.ranked.iter().take(k).map(|id| scan_id_of(id).unwrap())
    }
}

/// Parses a candidates file: `query_id image_id [image_id ...]` per line.
pub fn parse_candidates(text: &str) -> Result<Vec<Candidates>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = format!("line {}", n + 1);
        let mut toks = line.split_whitespace();
        let qid = toks.next().unwrap();
        validate_id(qid).map_err(|_| Error::parse(&loc, format!("invalid query id `{qid}`")))?;
        let ranked: Vec<String> = toks.map(str::to_string).collect();
        if ranked.is_empty() {
            return Err(Error::parse(&loc, format!("query `{qid}` has no candidates")));
        }
        for id in &ranked {
            scan_id_of(id).map_err(|e| Error::parse(&loc, e.to_string()))?;
        }
        if !seen.insert(qid.to_string()) {
            return Err(Error::parse(&loc, format!("duplicate line for query `{qid}`")));
        }
        out.push(Candidates {
            query_id: qid.to_string(),
            ranked,
        });
    }
    Ok(out)
}

pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<Candidates>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_candidates(&text).map_err(|e| e.with_path(path))
}
