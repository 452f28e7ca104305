//! Reading samples from `sample,value` CSV.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::MultiSample;

#[derive(Debug, Deserialize)]
struct Row {
    sample: usize,
    value: f64,
}

/// Parses CSV with header `sample,value`; sample `0` is the baseline and the
/// indices must be contiguous.
pub fn read_samples<R: Read>(reader: R) -> Result<MultiSample> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "sample" || &headers[1] != "value" {
        return Err(Error::InvalidData(format!(
            "expected header `sample,value`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::InvalidData(format!("line {}: {e}", i + 2)))?;
        if !row.value.is_finite() {
            return Err(Error::InvalidData(format!("line {}: non-finite value", i + 2)));
        }
        if row.sample >= samples.len() {
            samples.resize(row.sample + 1, Vec::new());
        }
        samples[row.sample].push(row.value);
    }
    if let Some(k) = samples.iter().position(|s| s.is_empty()) {
        return Err(Error::InvalidData(format!(
            "sample indices must be contiguous from 0; sample {k} has no observations"
        )));
    }
    MultiSample::new(samples)
}

pub fn read_samples_path(path: &Path) -> Result<MultiSample> {
    let file = std::fs::File::open(path)?;
    read_samples(std::io::BufReader::new(file))
}
