use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Response, SurveyDataset, SurveyError, SurveyRecord, SurveySchema, VariableKind};

/// Cell contents treated as a missing response.
const MISSING_TOKENS: [&str; 3] = ["", "NA", "."];

/// What happened to each row of the input file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub kept: usize,
    pub dropped_by_filter: usize,
    pub dropped_by_weight: usize,
    pub warnings: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    MISSING_TOKENS.contains(&cell.trim())
}

/// Reads a comma- or tab-separated survey extract. Files ending in `.tsv`
/// or `.tab` are tab-separated; everything else is comma-separated.
pub fn load_survey(path: &Path, schema: &SurveySchema) -> Result<SurveyDataset, SurveyError> {
    let bytes = std::fs::read(path).map_err(|source| SurveyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let delimiter = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => b'\t',
        _ => b',',
    };
    let mut dataset = parse_survey(bytes.as_slice(), delimiter, schema)?;
    dataset.source_digest = Some(hex::encode(Sha256::digest(&bytes)));
    Ok(dataset)
}

pub fn parse_survey<R: Read>(
    reader: R,
    delimiter: u8,
    schema: &SurveySchema,
) -> Result<SurveyDataset, SurveyError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| SurveyError::MissingColumn(name.to_owned()))
    };
    for col in schema.referenced_columns() {
        position(col)?;
    }
    let weight_idx = position(&schema.weight_column)?;
    let id_idx = schema.id_column.as_deref().map(position).transpose()?;
    let var_idx: Vec<usize> = schema
        .variables
        .iter()
        .map(|v| position(&v.name))
        .collect::<Result<_, _>>()?;
    let clauses: Vec<_> = schema
        .eligibility_filter
        .iter()
        .flat_map(|f| f.clauses.iter())
        .map(|c| position(&c.column).map(|idx| (idx, c)))
        .collect::<Result<_, _>>()?;

    let mut report = LoadReport::default();
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        report.rows_read += 1;

        let eligible = clauses.iter().all(|(idx, clause)| {
            let cell = row.get(*idx).filter(|c| !is_missing(c));
            clause.matches(cell)
        });
        if !eligible {
            report.dropped_by_filter += 1;
            continue;
        }

        let raw_weight = row.get(weight_idx).unwrap_or("");
        let weight = if is_missing(raw_weight) {
            None
        } else {
            let w: f64 = raw_weight
                .trim()
                .parse()
                .map_err(|_| SurveyError::UnparseableValue {
                    row: row_no,
                    column: schema.weight_column.clone(),
                    value: raw_weight.to_owned(),
                })?;
            Some(w)
        };
        let weight = match weight {
            Some(w) if w.is_finite() && w > 0.0 => w,
            other => {
                report.dropped_by_weight += 1;
                report.warnings.push(match other {
                    Some(w) => format!("row {row_no}: weight {w} is not positive and finite; row dropped"),
                    None => format!("row {row_no}: weight is missing; row dropped"),
                });
                continue;
            }
        };

        let id = match id_idx {
            Some(idx) => row.get(idx).unwrap_or("").trim().to_owned(),
            None => row_no.to_string(),
        };

        let mut values = BTreeMap::new();
        for (var, &idx) in schema.variables.iter().zip(&var_idx) {
            let cell = row.get(idx).unwrap_or("");
            let response = if is_missing(cell) {
                Response::Missing
            } else {
                match var.kind {
                    VariableKind::Categorical => Response::Level(cell.to_owned()),
                    VariableKind::Continuous => {
                        let v: f64 =
                            cell.trim()
                                .parse()
                                .map_err(|_| SurveyError::UnparseableValue {
                                    row: row_no,
                                    column: var.name.clone(),
                                    value: cell.to_owned(),
                                })?;
                        Response::Number(v)
                    }
                }
            };
            values.insert(var.name.clone(), response);
        }
        records.push(SurveyRecord { id, weight, values });
    }
    report.kept = records.len();

    Ok(SurveyDataset {
        records,
        schema: schema.clone(),
        report,
        source_digest: None,
    })
}
