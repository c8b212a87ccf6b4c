use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureId, ModelId, ProbeMatrix, ScoreTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses from the file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

struct RawTable {
    columns: Vec<String>,
    models: Vec<ModelId>,
    cells: Vec<Vec<Option<f64>>>,
}

fn parse_csv(text: &str, origin: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::malformed(origin, "empty file")),
        Some(r) => r.map_err(|e| Error::malformed(origin, e))?,
    };
    if header.get(0).map(str::trim) != Some("model") {
        return Err(Error::malformed(origin, "first header cell must be `model`"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(|c| c.trim().to_string()).collect();
    let mut models = Vec::new();
    let mut cells = Vec::new();
    for (line, record) in records.enumerate() {
        let record = record.map_err(|e| Error::malformed(origin, e))?;
        if record.len() > columns.len() + 1 {
            return Err(Error::malformed(origin, format!("row {} has extra cells", line + 2)));
        }
        let model: ModelId = record
            .get(0)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|e| Error::malformed(origin, e))?;
        let mut row = Vec::with_capacity(columns.len());
        for j in 0..columns.len() {
            let cell = record.get(j + 1).map(str::trim).unwrap_or("");
            if cell.is_empty() {
                row.push(None);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::malformed(origin, format!("cannot parse `{cell}` as a number")))?;
                row.push(Some(v));
            }
        }
        models.push(model);
        cells.push(row);
    }
    Ok(RawTable { columns, models, cells })
}

fn write_csv(columns: &[String], models: &[ModelId], values: &crate::linalg::Matrix) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (i, m) in models.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonTable {
    columns: Vec<String>,
    rows: Vec<JsonRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    model: String,
    values: BTreeMap<String, f64>,
}

fn parse_json(text: &str, origin: &Path) -> Result<RawTable> {
    if text.trim().is_empty() {
        return Err(Error::malformed(origin, "empty file"));
    }
    let table: JsonTable = serde_json::from_str(text).map_err(|e| Error::malformed(origin, e))?;
    let mut models = Vec::new();
    let mut cells = Vec::new();
    for row in table.rows {
        if let Some(extra) = row.values.keys().find(|k| !table.columns.contains(k)) {
            return Err(Error::malformed(origin, format!("undeclared column `{extra}`")));
        }
        models.push(row.model.parse().map_err(|e| Error::malformed(origin, e))?);
        cells.push(table.columns.iter().map(|c| row.values.get(c).copied()).collect());
    }
    Ok(RawTable {
        columns: table.columns,
        models,
        cells,
    })
}

fn write_json(columns: &[String], models: &[ModelId], values: &crate::linalg::Matrix) -> String {
    let table = JsonTable {
        columns: columns.to_vec(),
        rows: models
            .iter()
            .enumerate()
            .map(|(i, m)| JsonRow {
                model: m.to_string(),
                values: columns.iter().cloned().zip(values.row(i).iter().copied()).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&table).expect("serialisable");
    s.push('\n');
    s
}

fn probe_from_raw(raw: RawTable, origin: &Path) -> Result<ProbeMatrix> {
    let features = raw
        .columns
        .iter()
        .map(|c| c.parse::<FeatureId>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::malformed(origin, e))?;
    ProbeMatrix::from_cells(raw.models, features, raw.cells)
}

fn scores_from_raw(raw: RawTable) -> Result<ScoreTable> {
    ScoreTable::from_cells(raw.models, raw.columns, raw.cells)
}

fn feature_names(pm: &ProbeMatrix) -> Vec<String> {
    pm.features().iter().map(ToString::to_string).collect()
}

pub fn probe_matrix_from_csv(text: &str) -> Result<ProbeMatrix> {
    let origin = Path::new("<csv>");
    probe_from_raw(parse_csv(text, origin)?, origin)
}

pub fn probe_matrix_from_json(text: &str) -> Result<ProbeMatrix> {
    let origin = Path::new("<json>");
    probe_from_raw(parse_json(text, origin)?, origin)
}

pub fn probe_matrix_to_csv(pm: &ProbeMatrix) -> String {
    write_csv(&feature_names(pm), pm.models(), pm.values())
}

pub fn probe_matrix_to_json(pm: &ProbeMatrix) -> String {
    write_json(&feature_names(pm), pm.models(), pm.values())
}

pub fn score_table_from_csv(text: &str) -> Result<ScoreTable> {
    scores_from_raw(parse_csv(text, Path::new("<csv>"))?)
}

pub fn score_table_from_json(text: &str) -> Result<ScoreTable> {
    scores_from_raw(parse_json(text, Path::new("<json>"))?)
}

pub fn score_table_to_csv(st: &ScoreTable) -> String {
    write_csv(st.tasks(), st.models(), st.values())
}

pub fn score_table_to_json(st: &ScoreTable) -> String {
    write_json(st.tasks(), st.models(), st.values())
}

pub fn load_probe_matrix(path: &Path, format: Format) -> Result<ProbeMatrix> {
    let text = fs::read_to_string(path)?;
    let raw = match format {
        Format::Csv => parse_csv(&text, path)?,
        Format::Json => parse_json(&text, path)?,
    };
    probe_from_raw(raw, path)
}

pub fn load_score_table(path: &Path, format: Format) -> Result<ScoreTable> {
    let text = fs::read_to_string(path)?;
    let raw = match format {
        Format::Csv => parse_csv(&text, path)?,
        Format::Json => parse_json(&text, path)?,
    };
    scores_from_raw(raw)
}

pub fn save_probe_matrix(pm: &ProbeMatrix, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => probe_matrix_to_csv(pm),
        Format::Json => probe_matrix_to_json(pm),
    };
    fs::write(path, text)?;
    Ok(())
}

pub fn save_score_table(st: &ScoreTable, path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => score_table_to_csv(st),
        Format::Json => score_table_to_json(st),
    };
    fs::write(path, text)?;
    Ok(())
}
