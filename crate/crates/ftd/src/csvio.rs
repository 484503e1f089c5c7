//! CSV files: labelled pixel rows for datasets, and hash-stamped tables for
//! logs and reports.

use std::path::Path;

use ftd_core::data::Split;

use crate::error::{Error, Result};

/// Writes one row per example: the label, then `dim` pixels.
pub fn write_split(path: &Path, split: &Split, dim: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for r in 0..split.rows() {
        let mut record = vec![split.labels[r].to_string()];
        record.extend(split.row(r, dim).iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads rows written by [`write_split`]; every row must carry `dim` pixels.
pub fn read_split(path: &Path, dim: usize) -> Result<Split> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rd.records().enumerate() {
        let record = record?;
        if record.len() != dim + 1 {
            return Err(Error::Format(format!(
                "{}:{}: expected a label and {dim} pixels, found {} fields",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        let bad = |f: &str| Error::Format(format!("{}:{}: bad value `{f}`", path.display(), i + 1));
        labels.push(record[0].trim().parse().map_err(|_| bad(&record[0]))?);
        for f in record.iter().skip(1) {
            pixels.push(f.trim().parse::<f64>().map_err(|_| bad(f))?);
        }
    }
    Ok(Split::new(pixels, labels))
}

/// A table whose first line is `# config_hash=<hex>`, followed by a header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub config_hash: u64,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(config_hash: u64, header: &[&str]) -> Self {
        Self { config_hash, header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = format!("# config_hash={}\n", crate::config::hash_hex(self.config_hash)).into_bytes();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        out.extend(w.into_inner().map_err(|e| Error::Format(e.to_string()))?);
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let hash = first
            .strip_prefix("# config_hash=")
            .and_then(|h| u64::from_str_radix(h.trim(), 16).ok())
            .ok_or_else(|| Error::Format("table does not start with a config hash line".into()))?;
        let mut rd = csv::Reader::from_reader(rest.as_bytes());
        let header = rd.headers()?.iter().map(String::from).collect();
        let rows = rd
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { config_hash: hash, header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
