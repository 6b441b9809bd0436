//! File formats: count CSVs with JSON sidecar metadata, and JSON documents.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hom_sim::{CountRecord, FilterModel};
use crate::polarization::{ProductLabel, TomographicSet};

/// Sidecar metadata stored next to a counts CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMetadata {
    pub rate_scale: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_params: Option<FilterModel>,
}

/// `counts.csv` → `counts.meta.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// CSV text with header `input,analyzer,count`, inputs in record order and
/// analyzers in set order.
pub fn counts_to_csv(record: &CountRecord) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["input", "analyzer", "count"])?;
    for (input, row) in record.inputs.iter().zip(&record.counts) {
        for (analyzer, n) in record.analyzers.iter().zip(row) {
            w.write_record([input.to_string(), analyzer.to_string(), n.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Deserialize)]
struct CsvRow {
    input: String,
    analyzer: String,
    count: u64,
}

/// Parses counts CSV text. Every input that appears must have a count for
/// each of the 16 canonical analyzers.
pub fn counts_from_csv(text: &str, meta: &CountMetadata) -> Result<CountRecord> {
    let set = TomographicSet::canonical();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["input", "analyzer", "count"] {
        return Err(Error::Format(format!("expected header `input,analyzer,count`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut inputs: Vec<ProductLabel> = Vec::new();
    let mut cells: HashMap<(ProductLabel, usize), u64> = HashMap::new();
    for (line, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| Error::Format(format!("row {}: {e}", line + 2)))?;
        let input: ProductLabel = row.input.parse()?;
        let analyzer: ProductLabel = row.analyzer.parse()?;
        let j = set
            .index_of(analyzer)
            .ok_or_else(|| Error::Format(format!("analyzer {analyzer} is not in the tomographic set")))?;
        if !inputs.contains(&input) {
            inputs.push(input);
        }
        if cells.insert((input, j), row.count).is_some() {
            return Err(Error::Format(format!("duplicate cell {input},{analyzer}")));
        }
    }
    if inputs.is_empty() {
        return Err(Error::Underdetermined("counts file has no rows".into()));
    }
    let mut counts = Vec::with_capacity(inputs.len());
    for input in &inputs {
        let mut row = [0u64; 16];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = *cells.get(&(*input, j)).ok_or_else(|| {
                Error::Underdetermined(format!("missing count for input {input}, analyzer {}", set.labels()[j]))
            })?;
        }
        counts.push(row);
    }
    Ok(CountRecord {
        inputs,
        analyzers: set.labels().to_vec(),
        counts,
        rate_scale: meta.rate_scale,
        seed: meta.seed,
        model: meta.model_params,
    })
}

pub fn write_counts(record: &CountRecord, csv_path: &Path) -> Result<()> {
    fs::write(csv_path, counts_to_csv(record)?)?;
    let meta = CountMetadata {
        rate_scale: record.rate_scale,
        seed: record.seed,
        model_params: record.model,
    };
    write_json(&metadata_path(csv_path), &meta)
}

/// Reads a counts CSV and its sidecar. A `rate_scale_override` replaces the
/// sidecar value; without a sidecar it is required.
pub fn read_counts(csv_path: &Path, rate_scale_override: Option<f64>) -> Result<CountRecord> {
    let text = fs::read_to_string(csv_path)?;
    let meta_path = metadata_path(csv_path);
    let mut meta = if meta_path.exists() {
        read_json::<CountMetadata>(&meta_path)?
    } else {
        CountMetadata {
            rate_scale: rate_scale_override.ok_or_else(|| {
                Error::Format(format!("no metadata at {} and no rate scale given", meta_path.display()))
            })?,
            seed: 0,
            model_params: None,
        }
    };
    if let Some(s) = rate_scale_override {
        meta.rate_scale = s;
    }
    counts_from_csv(&text, &meta)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
