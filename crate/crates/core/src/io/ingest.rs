//! CSV input and output of annotated samples.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::aggregate_points;
use crate::model::PairedSampleSet;

const PAIRED_HEADER: [&str; 3] = ["sample_id", "aux_value", "primary_value"];
const POINT_HEADER: [&str; 4] = ["sample_id", "point_id", "aux_label", "primary_label"];

/// Samples with their identifiers. `ids[i]` and `original_rows[i]` describe
/// sample `i` of `samples` (primary-annotated samples first).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTable {
    pub samples: PairedSampleSet,
    pub ids: Vec<String>,
    /// Zero-based position of the sample in the input file.
    pub original_rows: Vec<usize>,
}

fn ingest_error(path: &Path, row: usize, reason: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        row,
        reason: reason.into(),
    }
}

fn open(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?.clone();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(ingest_error(path, 1, "file is empty"));
    }
    if !header.iter().eq(expected.iter().copied()) {
        return Err(ingest_error(
            path,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

/// Reads only the header line, to tell paired from point files.
pub fn is_point_csv(path: &Path) -> Result<bool> {
    let mut reader = open(path)?;
    let header = reader.headers()?;
    Ok(header.iter().eq(POINT_HEADER.iter().copied()))
}

fn unit_value(path: &Path, row: usize, column: &str, text: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| ingest_error(path, row, format!("{column} `{text}` is not a number")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(ingest_error(path, row, format!("{column} {v} is outside [0, 1]")));
    }
    Ok(v)
}

fn table_from_rows(rows: Vec<(String, f64, Option<f64>)>) -> Result<PairedTable> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    // stable: keeps file order within the paired and unpaired groups
    order.sort_by_key(|&i| rows[i].2.is_none());
    let records: Vec<(f64, Option<f64>)> = order.iter().map(|&i| (rows[i].1, rows[i].2)).collect();
    Ok(PairedTable {
        samples: PairedSampleSet::from_records(&records)?,
        ids: order.iter().map(|&i| rows[i].0.clone()).collect(),
        original_rows: order,
    })
}

/// Reads `sample_id,aux_value,primary_value` rows. An empty
/// `primary_value` marks a sample without primary annotation. Row numbers
/// in errors count the header as row 1.
pub fn ingest_paired_csv(path: &Path) -> Result<PairedTable> {
    let mut reader = open(path)?;
    check_header(path, &mut reader, &PAIRED_HEADER)?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| ingest_error(path, row, e.to_string()))?;
        if record.len() != 3 {
            return Err(ingest_error(path, row, format!("expected 3 fields, got {}", record.len())));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(ingest_error(path, row, "empty sample_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(ingest_error(path, row, format!("duplicate sample_id `{id}`")));
        }
        let aux = unit_value(path, row, "aux_value", &record[1])?;
        let primary = match &record[2] {
            "" => None,
            text => Some(unit_value(path, row, "primary_value", text)?),
        };
        rows.push((id, aux, primary));
    }
    if rows.is_empty() {
        return Err(ingest_error(path, 1, "no data rows"));
    }
    table_from_rows(rows)
}

fn binary_label(path: &Path, row: usize, column: &str, text: &str) -> Result<u8> {
    match text {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(ingest_error(path, row, format!("{column} `{other}` is not 0 or 1"))),
    }
}

/// Reads `sample_id,point_id,aux_label,primary_label` rows and averages the
/// point labels of each sample. A sample is primary-annotated when every
/// one of its points has a primary label, and unannotated when none has.
pub fn ingest_point_csv(path: &Path) -> Result<PairedTable> {
    struct Sample {
        id: String,
        aux: Vec<u8>,
        primary: Vec<u8>,
        first_row: usize,
        missing_primary_row: Option<usize>,
        primary_row: Option<usize>,
    }
    let mut reader = open(path)?;
    check_header(path, &mut reader, &POINT_HEADER)?;
    let mut samples: Vec<Sample> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut points = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| ingest_error(path, row, e.to_string()))?;
        if record.len() != 4 {
            return Err(ingest_error(path, row, format!("expected 4 fields, got {}", record.len())));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(ingest_error(path, row, "empty sample_id"));
        }
        if !points.insert((id.clone(), record[1].to_string())) {
            return Err(ingest_error(
                path,
                row,
                format!("duplicate point `{}` in sample `{id}`", &record[1]),
            ));
        }
        let aux = binary_label(path, row, "aux_label", &record[2])?;
        let primary = match &record[3] {
            "" => None,
            text => Some(binary_label(path, row, "primary_label", text)?),
        };
        let k = *index.entry(id.clone()).or_insert_with(|| {
            samples.push(Sample {
                id,
                aux: Vec::new(),
                primary: Vec::new(),
                first_row: row,
                missing_primary_row: None,
                primary_row: None,
            });
            samples.len() - 1
        });
        let s = &mut samples[k];
        s.aux.push(aux);
        match primary {
            Some(p) => {
                s.primary.push(p);
                s.primary_row.get_or_insert(row);
            }
            None => {
                s.missing_primary_row.get_or_insert(row);
            }
        }
    }
    if samples.is_empty() {
        return Err(ingest_error(path, 1, "no data rows"));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        if let (Some(with), Some(without)) = (s.primary_row, s.missing_primary_row) {
            return Err(ingest_error(
                path,
                with.max(without),
                format!("sample `{}` has primary labels on only some points", s.id),
            ));
        }
        let aux = aggregate_points(&s.aux).map_err(|e| ingest_error(path, s.first_row, e.to_string()))?;
        let primary = if s.primary.is_empty() {
            None
        } else {
            Some(aggregate_points(&s.primary).map_err(|e| ingest_error(path, s.first_row, e.to_string()))?)
        };
        rows.push((s.id, aux, primary));
    }
    table_from_rows(rows)
}

/// Reads either CSV layout, chosen by the header.
pub fn ingest_any(path: &Path) -> Result<PairedTable> {
    if is_point_csv(path)? {
        ingest_point_csv(path)
    } else {
        ingest_paired_csv(path)
    }
}

/// Writes a paired CSV that [`ingest_paired_csv`] reads back exactly.
pub fn write_paired_csv(path: &Path, table: &PairedTable) -> Result<()> {
    if table.ids.len() != table.samples.n_b() {
        return Err(Error::invalid("ids", "one id per sample required"));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(PAIRED_HEADER)?;
    for (id, (aux, primary)) in table.ids.iter().zip(table.samples.records()) {
        let primary = primary.map(|p| p.to_string()).unwrap_or_default();
        writer.write_record([id.as_str(), &aux.to_string(), &primary])?;
    }
    writer.flush()?;
    Ok(())
}
