//! Feature vectors computed elsewhere and keyed by patch id.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::FeatureVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedStore {
    dim: usize,
    entries: HashMap<String, FeatureVector>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    id: String,
    values: Vec<f64>,
}

impl PrecomputedStore {
    /// Build a store, checking ids are unique and every vector has the same
    /// dimension.
    pub fn from_entries(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = match entries.first() {
            Some((_, v)) if !v.is_empty() => v.len(),
            _ => return Err(Error::invalid("precomputed store", "no entries or empty first vector")),
        };
        let mut map = HashMap::with_capacity(entries.len());
        for (id, values) in entries {
            if values.len() != dim {
                return Err(Error::Record {
                    id,
                    msg: format!("dimension {} differs from {dim}", values.len()),
                });
            }
            let f = FeatureVector::new(values).map_err(|e| Error::Record {
                id: id.clone(),
                msg: e.to_string(),
            })?;
            if map.insert(id.clone(), f).is_some() {
                return Err(Error::Record {
                    id,
                    msg: "duplicate id".into(),
                });
            }
        }
        Ok(Self { dim, entries: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, id: &str) -> Result<FeatureVector> {
        self.entries
            .get(id)
            .cloned()
            .ok_or_else(|| Error::MissingFeature(id.to_string()))
    }
}

/// Load a JSONL file of `{"id": ..., "values": [...]}` records.
pub fn precomputed_store(path: &Path) -> Result<PrecomputedStore> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Entry = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: i + 1,
            msg: e.to_string(),
        })?;
        entries.push((e.id, e.values));
    }
    PrecomputedStore::from_entries(entries)
}
