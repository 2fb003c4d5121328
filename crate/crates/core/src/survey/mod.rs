//! Survey microdata ingestion and weighted population-share estimation.
//!
//! The flow is: [`load_survey`] reads a delimited extract and applies the
//! eligibility filter, [`estimate`] computes thresholds for continuous
//! moderators and then the weighted share of each category.

mod estimate;
mod load;
mod quantile;
mod schema;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use estimate::{
    estimate, weighted_proportion, CategoryDiagnostics, EstimateOptions, ModeratorEstimate,
    PopulationEstimates, Provenance, LOW_PRECISION_N,
};
pub use load::{load_survey, parse_survey, LoadReport};
pub use quantile::{discretize, weighted_quantile_thresholds, Thresholds};
pub use schema::{
    Comparator, EligibilityFilter, EstimationConfig, FilterClause, Literal, ModeratorKind,
    ModeratorSpec, SurveySchema, SurveyVariable, VariableKind,
};

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("cannot read survey file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed survey file: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` is referenced by the schema but missing from the file header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    UnparseableValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("moderator `{moderator}`: {reason}")]
    InvalidModerator { moderator: String, reason: String },
    #[error("source variable `{0}` is not declared in the survey schema")]
    UnknownVariable(String),
    #[error("moderator `{0}`: every response is missing or unclassifiable")]
    NoResponses(String),
    #[error("moderator `{moderator}`: unknown level `{level}`")]
    UnknownLevel { moderator: String, level: String },
    #[error("moderator `{moderator}`: response is not numeric")]
    NotNumeric { moderator: String },
    #[error("moderator `{0}`: thresholds have not been computed")]
    ThresholdsMissing(String),
    #[error("variable `{variable}`: {records} non-missing records, need at least {needed}")]
    TooFewRecords {
        variable: String,
        records: usize,
        needed: usize,
    },
    #[error(
        "variable `{variable}`: {requested} categories requested but the data supports at most {possible}; try quantile_count = {possible}"
    )]
    TooFewDistinct {
        variable: String,
        requested: usize,
        possible: usize,
    },
    #[error("value {0} is not finite and cannot be classified")]
    NonFinite(f64),
    #[error("no moderators given")]
    NoModerators,
}

/// A single survey answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Number(f64),
    Level(String),
    Missing,
}

impl Response {
    pub fn is_missing(&self) -> bool {
        matches!(self, Response::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Response::Number(v) => Some(*v),
            _ => None,
        }
    }
}

/// One surveyed site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub id: String,
    pub weight: f64,
    pub values: BTreeMap<String, Response>,
}

impl SurveyRecord {
    pub fn value(&self, variable: &str) -> &Response {
        self.values.get(variable).unwrap_or(&Response::Missing)
    }
}

/// Eligible records with a positive, finite weight.
#[derive(Debug, Clone)]
pub struct SurveyDataset {
    pub records: Vec<SurveyRecord>,
    pub schema: SurveySchema,
    pub report: LoadReport,
    /// SHA-256 of the source bytes, when loaded from a file.
    pub source_digest: Option<String>,
}

impl SurveyDataset {
    /// Builds a dataset from in-memory records, dropping any without a
    /// positive finite weight.
    pub fn from_records(schema: SurveySchema, records: Vec<SurveyRecord>) -> Self {
        let total = records.len();
        let records: Vec<_> = records
            .into_iter()
            .filter(|r| r.weight.is_finite() && r.weight > 0.0)
            .collect();
        let report = LoadReport {
            rows_read: total,
            kept: records.len(),
            dropped_by_filter: 0,
            dropped_by_weight: total - records.len(),
            warnings: Vec::new(),
        };
        SurveyDataset {
            records,
            schema,
            report,
            source_digest: None,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.records.iter().map(|r| r.weight).sum()
    }
}
