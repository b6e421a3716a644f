//! Plain-text formats: rank-list TSV, label TSV, posterior and trace CSV,
//! and `key=value` / JSON config files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::data::{RankEntry, RankList};
use crate::em::{Posteriors, TraceEntry};
use crate::error::{Result, ScopError};

pub const LIST_HEADER: &str = "locus_id\tscore";
pub const LABEL_HEADER: &str = "locus_id\tb";

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> ScopError {
    ScopError::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

pub fn parse_rank_list(text: &str, path: &Path, list_id: &str, cutoff: f64) -> Result<RankList> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == LIST_HEADER => {}
        Some((_, h)) => return Err(parse_err(path, 1, format!("expected header `locus_id<TAB>score`, found `{h}`"))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(id), Some(score), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(parse_err(path, i + 1, "expected two tab-separated columns"));
        };
        if id.is_empty() {
            return Err(parse_err(path, i + 1, "empty locus id"));
        }
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("score `{score}` is not a number")))?;
        entries.push(RankEntry {
            locus_id: id.to_string(),
            score,
        });
    }
    RankList::new(list_id, entries, cutoff)
}

pub fn read_rank_list(path: &Path, list_id: &str, cutoff: f64) -> Result<RankList> {
    let text = fs::read_to_string(path)?;
    parse_rank_list(&text, path, list_id, cutoff)
}

pub fn rank_list_tsv(list: &RankList) -> String {
    let mut out = format!("{LIST_HEADER}\n");
    for e in &list.entries {
        let _ = writeln!(out, "{}\t{}", e.locus_id, e.score);
    }
    out
}

pub fn labels_tsv(ids: impl IntoIterator<Item = impl AsRef<str>>, labels: &[u8]) -> String {
    let mut out = format!("{LABEL_HEADER}\n");
    for (id, b) in ids.into_iter().zip(labels) {
        let _ = writeln!(out, "{}\t{}", id.as_ref(), b);
    }
    out
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<(String, u8)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (id, b) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected two tab-separated columns"))?;
        let b: u8 = b
            .trim()
            .parse()
            .ok()
            .filter(|&b| b <= 3)
            .ok_or_else(|| parse_err(path, i + 1, format!("label `{b}` is not in 0..=3")))?;
        out.push((id.to_string(), b));
    }
    Ok(out)
}

pub fn posteriors_csv(ids: impl IntoIterator<Item = impl AsRef<str>>, post: &Posteriors) -> String {
    let mut out = String::from("locus_id,p0,p1,p2,p3\n");
    for (id, r) in ids.into_iter().zip(&post.rows) {
        let _ = writeln!(out, "{},{},{},{},{}", id.as_ref(), r[0], r[1], r[2], r[3]);
    }
    out
}

pub fn parse_posteriors_csv(text: &str, path: &Path) -> Result<(Vec<String>, Posteriors)> {
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(parse_err(path, i + 1, "expected 5 columns"));
        }
        let mut row = [0.0; 4];
        for k in 0..4 {
            row[k] = cols[k + 1]
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad probability `{}`", cols[k + 1])))?;
        }
        ids.push(cols[0].to_string());
        rows.push(row);
    }
    Ok((ids, Posteriors { rows }))
}

pub fn trace_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("outer,inner,loglik\n");
    for e in trace {
        let _ = writeln!(out, "{},{},{}", e.outer, e.inner, e.loglik);
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Parses a config file as JSON when it starts with `{`, otherwise as
/// `key = value` lines (`#` comments, dotted keys for nested tables, values
/// read as JSON where possible and as strings otherwise).
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(text).map_err(|e| ScopError::Config(e.to_string()));
    }
    let mut root = Map::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ScopError::Config(format!("line {}: expected key=value", i + 1)))?;
        let value = value.trim();
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let mut parts: Vec<&str> = key.trim().split('.').collect();
        let leaf = parts.pop().unwrap_or_default();
        let mut table = &mut root;
        for p in parts {
            let entry = table
                .entry(p.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            table = entry
                .as_object_mut()
                .ok_or_else(|| ScopError::Config(format!("line {}: `{p}` is not a table", i + 1)))?;
        }
        table.insert(leaf.to_string(), parsed);
    }
    serde_json::from_value(Value::Object(root)).map_err(|e| ScopError::Config(e.to_string()))
}
