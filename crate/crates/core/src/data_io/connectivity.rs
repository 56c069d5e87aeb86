//! Synapse-to-device mapping, stored as CSV with header `pre,post,row,col`.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::{csv_records, header_fields, parse_field, DataError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Synapse {
    pub pre: usize,
    pub post: usize,
    pub row: usize,
    pub col: usize,
}

/// Sizes the mapping is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub pre: usize,
    pub post: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityMatrix {
    pub synapses: Vec<Synapse>,
}

impl ConnectivityMatrix {
    /// All-to-all mapping with synapse `(i, j)` on device number `i·post + j`
    /// in row-major order.
    pub fn dense(dims: Dims) -> Self {
        let synapses = (0..dims.pre)
            .flat_map(|i| (0..dims.post).map(move |j| (i, j)))
            .map(|(pre, post)| {
                let idx = pre * dims.post + post;
                Synapse { pre, post, row: idx / dims.cols, col: idx % dims.cols }
            })
            .collect();
        Self { synapses }
    }

    pub fn len(&self) -> usize {
        self.synapses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synapses.is_empty()
    }

    /// Errors report `line` as if each synapse were one CSV record after the
    /// header.
    pub fn validate(&self, dims: Dims) -> Result<(), DataError> {
        check(self.synapses.iter().enumerate().map(|(k, s)| (k + 2, s)), dims)
    }

    /// Device of each synapse, indexed `pre·post_count + post`.
    pub fn lookup(&self, dims: Dims) -> Vec<Option<(usize, usize)>> {
        let mut table = vec![None; dims.pre * dims.post];
        for s in &self.synapses {
            table[s.pre * dims.post + s.post] = Some((s.row, s.col));
        }
        table
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pre,post,row,col\n");
        for s in &self.synapses {
            writeln!(out, "{},{},{},{}", s.pre, s.post, s.row, s.col).unwrap();
        }
        out
    }
}

fn check<'a>(synapses: impl Iterator<Item = (usize, &'a Synapse)>, dims: Dims) -> Result<(), DataError> {
    let mut seen_syn = HashSet::new();
    let mut seen_dev = HashSet::new();
    for (line, s) in synapses {
        for (field, value, limit) in [
            ("pre", s.pre, dims.pre),
            ("post", s.post, dims.post),
            ("row", s.row, dims.rows),
            ("col", s.col, dims.cols),
        ] {
            if value >= limit {
                return Err(DataError::IndexOverflow { line, field, value, limit });
            }
        }
        if !seen_syn.insert((s.pre, s.post)) {
            return Err(DataError::DuplicateSynapse { line, pre: s.pre, post: s.post });
        }
        if !seen_dev.insert((s.row, s.col)) {
            return Err(DataError::DuplicateDevice { line, row: s.row, col: s.col });
        }
    }
    Ok(())
}

pub fn parse_connectivity(text: &str, dims: Dims) -> Result<ConnectivityMatrix, DataError> {
    if header_fields(text) != ["pre", "post", "row", "col"] {
        return Err(DataError::Malformed { line: 1, reason: "expected header 'pre,post,row,col'".into() });
    }
    let mut synapses = vec![];
    let mut lines = vec![];
    for (line, rec) in csv_records(text, true)? {
        if rec.len() != 4 {
            return Err(DataError::Malformed { line, reason: format!("expected 4 fields, found {}", rec.len()) });
        }
        synapses.push(Synapse {
            pre: parse_field(line, "pre", &rec[0])?,
            post: parse_field(line, "post", &rec[1])?,
            row: parse_field(line, "row", &rec[2])?,
            col: parse_field(line, "col", &rec[3])?,
        });
        lines.push(line);
    }
    check(lines.iter().copied().zip(&synapses), dims)?;
    Ok(ConnectivityMatrix { synapses })
}
