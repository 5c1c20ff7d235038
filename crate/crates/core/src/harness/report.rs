//! CSV tables with a fixed column order and their JSON metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::format_float;
use crate::error::Result;

/// Rows of pre-formatted cells under a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&'static str]) -> Self {
        CsvTable {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

pub fn cell(v: f64) -> String {
    format_float(v)
}

pub fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// SHA-256 of the compact JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a, T: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: String,
    pub config: &'a T,
    pub outputs: Vec<OutputDescription>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDescription {
    pub file: String,
    pub columns: Vec<&'static str>,
}

/// Writes each table to `dir/<name>.csv` plus `dir/<command>.meta.json`.
pub fn write_report<T: Serialize>(dir: impl AsRef<Path>, command: &str, config: &T, tables: &[(&str, &CsvTable)]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut outputs = Vec::new();
    for (name, table) in tables {
        let file = format!("{name}.csv");
        let path = dir.join(&file);
        table.write(&path)?;
        written.push(path);
        outputs.push(OutputDescription {
            file,
            columns: table.columns.clone(),
        });
    }
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(config)?,
        config,
        outputs,
    };
    let path = dir.join(format!("{command}.meta.json"));
    fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    written.push(path);
    Ok(written)
}
