use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::SurveyError;

/// How a survey column is parsed at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyVariable {
    pub name: String,
    pub kind: VariableKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=", alias = "==")]
    Eq,
    #[serde(rename = "≠", alias = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "≤", alias = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "≥", alias = ">=")]
    Ge,
}

impl Comparator {
    fn holds(self, ord: Ordering) -> bool {
        match self {
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ne => ord != Ordering::Equal,
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Gt => ord == Ordering::Greater,
            Comparator::Ge => ord != Ordering::Less,
        }
    }
}

/// Right-hand side of a filter clause. A numeric literal compares the cell
/// numerically; a string literal compares the raw cell text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterClause {
    pub column: String,
    pub comparator: Comparator,
    pub literal: Literal,
}

impl FilterClause {
    /// Evaluates the clause against one raw cell. Cells that cannot be
    /// compared (missing, or non-numeric against a numeric literal) fail.
    pub fn matches(&self, cell: Option<&str>) -> bool {
        let Some(cell) = cell else { return false };
        match &self.literal {
            Literal::Text(text) => self.comparator.holds(cell.cmp(text.as_str())),
            Literal::Number(rhs) => match cell.trim().parse::<f64>() {
                Ok(lhs) => lhs
                    .partial_cmp(rhs)
                    .is_some_and(|ord| self.comparator.holds(ord)),
                Err(_) => false,
            },
        }
    }
}

/// Conjunction of clauses; an empty list admits every record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EligibilityFilter {
    #[serde(default)]
    pub clauses: Vec<FilterClause>,
}

impl EligibilityFilter {
    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySchema {
    pub weight_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    pub variables: Vec<SurveyVariable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eligibility_filter: Option<EligibilityFilter>,
}

impl SurveySchema {
    pub fn variable(&self, name: &str) -> Option<&SurveyVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Checks the schema on its own terms (column presence is checked
    /// against the file header at load time).
    pub fn validate(&self) -> Result<(), SurveyError> {
        let mut seen = HashSet::new();
        for var in &self.variables {
            if !seen.insert(var.name.as_str()) {
                return Err(SurveyError::InvalidSchema(format!(
                    "variable `{}` is declared more than once",
                    var.name
                )));
            }
        }
        Ok(())
    }

    /// Every column the schema references, in a stable order.
    pub fn referenced_columns(&self) -> Vec<&str> {
        let mut cols = vec![self.weight_column.as_str()];
        cols.extend(self.id_column.as_deref());
        cols.extend(self.variables.iter().map(|v| v.name.as_str()));
        if let Some(filter) = &self.eligibility_filter {
            cols.extend(filter.clauses.iter().map(|c| c.column.as_str()));
        }
        cols
    }
}

/// Category structure of one moderator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeratorKind {
    Categorical {
        levels: Vec<String>,
    },
    Continuous {
        quantile_count: usize,
        #[serde(default)]
        thresholds: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeratorSpec {
    pub name: String,
    pub source: String,
    #[serde(flatten)]
    pub kind: ModeratorKind,
}

impl ModeratorSpec {
    pub fn categorical(name: &str, source: &str, levels: &[&str]) -> Self {
        ModeratorSpec {
            name: name.to_owned(),
            source: source.to_owned(),
            kind: ModeratorKind::Categorical {
                levels: levels.iter().map(|l| (*l).to_owned()).collect(),
            },
        }
    }

    pub fn continuous(name: &str, source: &str, quantile_count: usize) -> Self {
        ModeratorSpec {
            name: name.to_owned(),
            source: source.to_owned(),
            kind: ModeratorKind::Continuous {
                quantile_count,
                thresholds: Vec::new(),
            },
        }
    }

    /// Continuous spec with thresholds already frozen.
    pub fn with_thresholds(name: &str, source: &str, thresholds: Vec<f64>) -> Self {
        ModeratorSpec {
            name: name.to_owned(),
            source: source.to_owned(),
            kind: ModeratorKind::Continuous {
                quantile_count: thresholds.len() + 1,
                thresholds,
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ModeratorKind::Continuous { .. })
    }

    pub fn thresholds_ready(&self) -> bool {
        match &self.kind {
            ModeratorKind::Categorical { .. } => true,
            ModeratorKind::Continuous {
                quantile_count,
                thresholds,
            } => thresholds.len() + 1 == *quantile_count,
        }
    }

    /// Number of categories this moderator contributes.
    pub fn category_count(&self) -> usize {
        match &self.kind {
            ModeratorKind::Categorical { levels } => levels.len(),
            ModeratorKind::Continuous { quantile_count, .. } => *quantile_count,
        }
    }

    /// Category labels in index order. Continuous categories are `Q1..Qk`.
    pub fn labels(&self) -> Vec<String> {
        match &self.kind {
            ModeratorKind::Categorical { levels } => levels.clone(),
            ModeratorKind::Continuous { quantile_count, .. } => {
                (1..=*quantile_count).map(|i| format!("Q{i}")).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let bad = |msg: String| Err(SurveyError::InvalidModerator {
            moderator: self.name.clone(),
            reason: msg,
        });
        match &self.kind {
            ModeratorKind::Categorical { levels } => {
                if levels.len() < 2 {
                    return bad("a categorical moderator needs at least 2 levels".into());
                }
                let mut seen = HashSet::new();
                for level in levels {
                    if !seen.insert(level.as_str()) {
                        return bad(format!("level `{level}` is listed twice"));
                    }
                }
            }
            ModeratorKind::Continuous {
                quantile_count,
                thresholds,
            } => {
                if *quantile_count < 2 {
                    return bad("quantile_count must be at least 2".into());
                }
                if thresholds.iter().any(|t| !t.is_finite()) {
                    return bad("thresholds must be finite".into());
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("thresholds must be strictly ascending".into());
                }
                if !thresholds.is_empty() && thresholds.len() + 1 != *quantile_count {
                    return bad(format!(
                        "expected {} thresholds for {} categories, found {}",
                        quantile_count - 1,
                        quantile_count,
                        thresholds.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The configuration document accepted by `estimate`: a survey schema plus
/// the moderators to estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub schema: SurveySchema,
    pub moderators: Vec<ModeratorSpec>,
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_strict() -> bool {
    true
}
