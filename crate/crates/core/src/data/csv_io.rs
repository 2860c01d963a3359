use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RawRun;
use crate::error::{Error, Result};

/// Which CSV columns are features and which is the label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub label: String,
}

/// Reads one run from a headed CSV file. The run id is the file stem.
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema, domain: usize) -> Result<RawRun> {
    let path = path.as_ref();
    let parse_err = |line: u64, msg: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let feature_cols = schema.features.iter().map(|f| column(f)).collect::<Result<Vec<_>>>()?;
    let label_col = column(&schema.label)?;

    let mut features = vec![Vec::new(); feature_cols.len()];
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| parse_err(line, format!("column `{name}`: `{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{name}`: non-finite value `{raw}`")));
            }
            Ok(v)
        };
        for ((slot, &col), name) in features.iter_mut().zip(&feature_cols).zip(&schema.features) {
            slot.push(cell(col, name)?);
        }
        labels.push(cell(label_col, &schema.label)?);
    }
    if labels.is_empty() {
        return Err(Error::EmptyRun {
            file: path.to_path_buf(),
        });
    }
    let run = RawRun {
        domain,
        run_id: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        features,
        labels,
        feature_names: schema.features.clone(),
    };
    run.validate()?;
    Ok(run)
}

pub fn ingest_runs<P: AsRef<Path>>(paths: &[P], schema: &CsvSchema, domain: usize) -> Result<Vec<RawRun>> {
    paths.iter().map(|p| ingest_csv(p, schema, domain)).collect()
}

/// Writes a run as CSV with the feature columns followed by `label_name`.
/// Values use Rust's shortest round-trip formatting, so re-ingestion is exact.
pub fn write_csv(run: &RawRun, label_name: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(std::io::Error::from)?;
    let header: Vec<&str> = run
        .feature_names
        .iter()
        .map(String::as_str)
        .chain(std::iter::once(label_name))
        .collect();
    w.write_record(&header).map_err(std::io::Error::from)?;
    for t in 0..run.len() {
        let row: Vec<String> = run
            .features
            .iter()
            .map(|f| f[t].to_string())
            .chain(std::iter::once(run.labels[t].to_string()))
            .collect();
        w.write_record(&row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}
