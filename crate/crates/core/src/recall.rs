//! How much of an observed call graph a reference call graph covers.

use std::collections::BTreeSet;
use std::path::Path;

use num_rational::Ratio;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Edges match on invocation site and callee.
    #[default]
    Exact,
    /// Edges match on caller method and callee; lines are ignored.
    MethodPair,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub invocation: String,
    pub method: String,
}

impl Edge {
    pub fn new(invocation: impl Into<String>, method: impl Into<String>) -> Self {
        Edge { invocation: invocation.into(), method: method.into() }
    }

    /// The invocation with its `/line` suffix removed.
    pub fn caller(&self) -> &str {
        self.invocation.rsplit_once('/').map_or(&self.invocation, |(c, _)| c)
    }

    fn key(&self, mode: MatchMode) -> (String, String) {
        match mode {
            MatchMode::Exact => (self.invocation.clone(), self.method.clone()),
            MatchMode::MethodPair => (self.caller().to_owned(), self.method.clone()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RecallError {
    #[error("the observed edge set is empty")]
    EmptyObserved,
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecallReport {
    pub recall: Ratio<u64>,
    pub matched: u64,
    pub observed: u64,
    /// Observed edges the reference lacks, sorted, as `(invocation-or-caller, callee)`.
    pub missing: Vec<(String, String)>,
}

impl RecallReport {
    pub fn as_f64(&self) -> f64 {
        *self.recall.numer() as f64 / *self.recall.denom() as f64
    }
}

/// `|observed ∩ reference| / |observed|`, after projecting both sets onto
/// the matching key.
pub fn recall(reference: &BTreeSet<Edge>, observed: &BTreeSet<Edge>, mode: MatchMode) -> Result<RecallReport, RecallError> {
    let reference: BTreeSet<_> = reference.iter().map(|e| e.key(mode)).collect();
    let observed: BTreeSet<_> = observed.iter().map(|e| e.key(mode)).collect();
    if observed.is_empty() {
        return Err(RecallError::EmptyObserved);
    }
    let missing: Vec<_> = observed.difference(&reference).cloned().collect();
    let total = observed.len() as u64;
    let matched = total - missing.len() as u64;
    Ok(RecallReport { recall: Ratio::new(matched, total), matched, observed: total, missing })
}

/// Reads a call-graph edge CSV: either `invocation,method` or the
/// context-qualified four-column form. A header row is optional.
pub fn read_edges(path: &Path) -> Result<BTreeSet<Edge>, RecallError> {
    let err = |message: String| RecallError::Input { path: path.display().to_string(), message };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut edges = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let fields: Vec<&str> = rec.iter().collect();
        let edge = match fields.as_slice() {
            ["invocation", "method"] | ["callerCtx", "invocation", "calleeCtx", "method"] if i == 0 => continue,
            [inv, m] | [_, inv, _, m] => Edge::new(*inv, *m),
            [] | [""] => continue,
            _ => return Err(err(format!("row {} has {} columns", i + 1, fields.len()))),
        };
        edges.insert(edge);
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> BTreeSet<Edge> {
        pairs.iter().map(|(a, b)| Edge::new(*a, *b)).collect()
    }

    #[test]
    fn method_pair_ignores_lines() {
        let reference = set(&[("<A: void m()>/3", "<B: void n()>")]);
        let observed = set(&[("<A: void m()>/7", "<B: void n()>")]);
        assert_eq!(recall(&reference, &observed, MatchMode::Exact).unwrap().matched, 0);
        assert_eq!(recall(&reference, &observed, MatchMode::MethodPair).unwrap().recall, Ratio::from_integer(1));
    }

    #[test]
    fn empty_observed_is_an_error() {
        assert!(matches!(recall(&set(&[("a/1", "b")]), &BTreeSet::new(), MatchMode::Exact), Err(RecallError::EmptyObserved)));
    }
}
