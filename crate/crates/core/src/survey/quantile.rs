use serde::{Deserialize, Serialize};

use super::{Response, SurveyDataset, SurveyError, VariableKind};

/// Relative slack on the cumulative-weight comparison, so that a quantile
/// landing exactly on a record boundary is found regardless of how the
/// weights were scaled or summed.
pub(crate) const QUANTILE_REL_TOL: f64 = 1e-12;

/// Result of discretizing a continuous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub variable: String,
    pub requested_categories: usize,
    /// Strictly ascending cut points; `values.len() + 1` categories.
    pub values: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Thresholds {
    pub fn category_count(&self) -> usize {
        self.values.len() + 1
    }
}

/// Lower weighted quantiles of `variable` at q/k for q = 1..k-1.
///
/// Each cut point is the smallest observed value whose cumulative weight
/// reaches q/k of the total non-missing weight. Cut points that coincide,
/// or that equal the minimum (leaving the first category empty), are
/// merged and the category count shrinks with a warning.
pub fn weighted_quantile_thresholds(
    dataset: &SurveyDataset,
    variable: &str,
    k: usize,
) -> Result<Thresholds, SurveyError> {
    let var = dataset
        .schema
        .variable(variable)
        .ok_or_else(|| SurveyError::UnknownVariable(variable.to_owned()))?;
    if var.kind != VariableKind::Continuous {
        return Err(SurveyError::NotNumeric {
            moderator: variable.to_owned(),
        });
    }
    if k < 2 {
        return Err(SurveyError::InvalidModerator {
            moderator: variable.to_owned(),
            reason: "quantile_count must be at least 2".into(),
        });
    }

    let mut points: Vec<(f64, f64)> = dataset
        .records
        .iter()
        .filter_map(|r| match r.value(variable) {
            Response::Number(v) if v.is_finite() => Some((*v, r.weight)),
            _ => None,
        })
        .collect();
    if points.len() < k {
        return Err(SurveyError::TooFewRecords {
            variable: variable.to_owned(),
            records: points.len(),
            needed: k,
        });
    }
    let total: f64 = points.iter().map(|(_, w)| w).sum();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Collapse to (distinct value, cumulative weight through that value).
    let mut ecdf: Vec<(f64, f64)> = Vec::new();
    let mut cum = 0.0;
    for (v, w) in points {
        cum += w;
        match ecdf.last_mut() {
            Some(last) if last.0 == v => last.1 = cum,
            _ => ecdf.push((v, cum)),
        }
    }
    if ecdf.len() < k {
        return Err(SurveyError::TooFewDistinct {
            variable: variable.to_owned(),
            requested: k,
            possible: ecdf.len(),
        });
    }

    let raw = cut_points(&ecdf, total, k);
    let usable = usable_cut_points(&raw, ecdf[0].0);
    if usable.is_empty() {
        let possible = (2..k)
            .rev()
            .find(|&smaller| usable_cut_points(&cut_points(&ecdf, total, smaller), ecdf[0].0).len() == smaller - 1)
            .unwrap_or(1);
        return Err(SurveyError::TooFewDistinct {
            variable: variable.to_owned(),
            requested: k,
            possible,
        });
    }

    let mut warnings = Vec::new();
    if usable.len() + 1 < k {
        warnings.push(format!(
            "variable `{variable}`: weighted quantiles collide; using {} categories instead of {k}",
            usable.len() + 1
        ));
    }
    Ok(Thresholds {
        variable: variable.to_owned(),
        requested_categories: k,
        values: usable,
        warnings,
    })
}

fn cut_points(ecdf: &[(f64, f64)], total: f64, k: usize) -> Vec<f64> {
    let slack = QUANTILE_REL_TOL * total;
    (1..k)
        .map(|q| {
            let target = q as f64 / k as f64 * total - slack;
            ecdf.iter()
                .find(|(_, cum)| *cum >= target)
                .map_or(ecdf[ecdf.len() - 1].0, |(v, _)| *v)
        })
        .collect()
}

fn usable_cut_points(raw: &[f64], min: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(raw.len());
    for &t in raw {
        if t > min && out.last().is_none_or(|last| t > *last) {
            out.push(t);
        }
    }
    out
}

/// Maps a value to its 1-based category given ascending cut points. A value
/// equal to a cut point belongs to the higher category.
pub fn discretize(value: f64, thresholds: &[f64]) -> Result<usize, SurveyError> {
    if !value.is_finite() {
        return Err(SurveyError::NonFinite(value));
    }
    Ok(thresholds.partition_point(|t| *t <= value) + 1)
}
