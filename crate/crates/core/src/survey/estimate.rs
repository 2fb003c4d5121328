use serde::{Deserialize, Serialize};

use super::quantile::{discretize, weighted_quantile_thresholds};
use super::{
    EligibilityFilter, LoadReport, ModeratorKind, ModeratorSpec, Response, SurveyDataset,
    SurveyError,
};
use crate::digest::json_digest;

/// Categories with fewer unweighted respondents than this are flagged as
/// low precision. The flag is informational only.
pub const LOW_PRECISION_N: usize = 30;

pub const ESTIMATES_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Fail on categorical responses that match no declared level. When
    /// false they are excluded from the denominator and counted.
    pub strict: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { strict: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDiagnostics {
    pub label: String,
    pub share: f64,
    /// Unweighted respondent count; absent for published shares.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted_mass: Option<f64>,
    #[serde(default)]
    pub low_precision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeratorEstimate {
    pub spec: ModeratorSpec,
    pub categories: Vec<CategoryDiagnostics>,
    #[serde(default)]
    pub classified_n: usize,
    #[serde(default)]
    pub classified_weight: f64,
    #[serde(default)]
    pub missing_n: usize,
    #[serde(default)]
    pub missing_weight: f64,
    #[serde(default)]
    pub unclassified_n: usize,
}

impl ModeratorEstimate {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn shares(&self) -> Vec<f64> {
        self.categories.iter().map(|c| c.share).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<EligibilityFilter>,
    pub generated_at: String,
}

/// Weighted category shares for every moderator, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimates {
    pub schema_version: u32,
    pub moderators: Vec<ModeratorEstimate>,
    /// Total weight W of eligible records.
    pub total_weight: f64,
    /// C, the number of categories summed over moderators.
    pub total_categories: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_report: Option<LoadReport>,
    pub provenance: Provenance,
}

impl PopulationEstimates {
    /// Estimates taken from published tables rather than microdata. Each
    /// entry pairs a moderator with its shares in label order.
    pub fn from_shares(moderators: Vec<(ModeratorSpec, Vec<f64>)>) -> Result<Self, SurveyError> {
        if moderators.is_empty() {
            return Err(SurveyError::NoModerators);
        }
        let mut out = Vec::with_capacity(moderators.len());
        for (spec, shares) in moderators {
            spec.validate()?;
            if !spec.thresholds_ready() {
                return Err(SurveyError::ThresholdsMissing(spec.name.clone()));
            }
            let labels = spec.labels();
            if labels.len() != shares.len() {
                return Err(SurveyError::InvalidModerator {
                    moderator: spec.name.clone(),
                    reason: format!("{} labels but {} shares", labels.len(), shares.len()),
                });
            }
            let categories = labels
                .into_iter()
                .zip(shares)
                .map(|(label, share)| CategoryDiagnostics {
                    label,
                    share,
                    n: None,
                    weighted_mass: None,
                    low_precision: false,
                })
                .collect();
            out.push(ModeratorEstimate {
                spec,
                categories,
                classified_n: 0,
                classified_weight: 0.0,
                missing_n: 0,
                missing_weight: 0.0,
                unclassified_n: 0,
            });
        }
        let estimates = PopulationEstimates {
            schema_version: ESTIMATES_SCHEMA_VERSION,
            total_categories: out.iter().map(|m| m.categories.len()).sum(),
            moderators: out,
            total_weight: 0.0,
            warnings: Vec::new(),
            load_report: None,
            provenance: Provenance {
                input_digest: None,
                filter: None,
                generated_at: chrono::Utc::now().to_rfc3339(),
            },
        };
        estimates.validate()?;
        Ok(estimates)
    }

    /// Checks that each moderator's shares lie in [0, 1] and sum to one.
    pub fn validate(&self) -> Result<(), SurveyError> {
        if self.moderators.is_empty() {
            return Err(SurveyError::NoModerators);
        }
        for m in &self.moderators {
            m.spec.validate()?;
            let bad = |reason: String| SurveyError::InvalidModerator {
                moderator: m.spec.name.clone(),
                reason,
            };
            if m.categories.len() != m.spec.category_count() {
                return Err(bad("category count does not match the moderator spec".into()));
            }
            if let Some(c) = m.categories.iter().find(|c| !(0.0..=1.0).contains(&c.share)) {
                return Err(bad(format!("share {} of `{}` is outside [0, 1]", c.share, c.label)));
            }
            let sum: f64 = m.categories.iter().map(|c| c.share).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(bad(format!("shares sum to {sum}, not 1")));
            }
        }
        Ok(())
    }

    pub fn moderator(&self, name: &str) -> Option<&ModeratorEstimate> {
        self.moderators.iter().find(|m| m.spec.name == name)
    }

    /// Digest of the estimates, ignoring the generation timestamp so that
    /// re-running on the same input yields the same digest.
    pub fn digest(&self) -> String {
        let mut stripped = self.clone();
        stripped.provenance.generated_at.clear();
        json_digest(&stripped)
    }
}

enum Classified {
    Category(usize),
    Missing,
    Unclassified,
}

fn classify_response(
    spec: &ModeratorSpec,
    response: &Response,
    strict: bool,
) -> Result<Classified, SurveyError> {
    match (&spec.kind, response) {
        (_, Response::Missing) => Ok(Classified::Missing),
        (ModeratorKind::Categorical { levels }, resp) => {
            let label = match resp {
                Response::Level(s) => s.clone(),
                Response::Number(v) => v.to_string(),
                Response::Missing => unreachable!(),
            };
            match levels.iter().position(|l| *l == label) {
                Some(i) => Ok(Classified::Category(i)),
                None if strict => Err(SurveyError::UnknownLevel {
                    moderator: spec.name.clone(),
                    level: label,
                }),
                None => Ok(Classified::Unclassified),
            }
        }
        (ModeratorKind::Continuous { thresholds, .. }, Response::Number(v)) => {
            discretize(*v, thresholds).map(|c| Classified::Category(c - 1))
        }
        (ModeratorKind::Continuous { .. }, Response::Level(_)) => {
            if strict {
                Err(SurveyError::NotNumeric {
                    moderator: spec.name.clone(),
                })
            } else {
                Ok(Classified::Unclassified)
            }
        }
    }
}

/// Weighted share of each category: the weight in the category over the
/// weight of all records with a classifiable response.
pub fn weighted_proportion(
    dataset: &SurveyDataset,
    spec: &ModeratorSpec,
    options: EstimateOptions,
) -> Result<ModeratorEstimate, SurveyError> {
    spec.validate()?;
    if dataset.schema.variable(&spec.source).is_none() {
        return Err(SurveyError::UnknownVariable(spec.source.clone()));
    }
    if !spec.thresholds_ready() {
        return Err(SurveyError::ThresholdsMissing(spec.name.clone()));
    }

    let k = spec.category_count();
    let mut mass = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let (mut missing_n, mut missing_weight, mut unclassified_n) = (0, 0.0, 0);
    for record in &dataset.records {
        match classify_response(spec, record.value(&spec.source), options.strict)? {
            Classified::Category(c) => {
                mass[c] += record.weight;
                counts[c] += 1;
            }
            Classified::Missing => {
                missing_n += 1;
                missing_weight += record.weight;
            }
            Classified::Unclassified => unclassified_n += 1,
        }
    }
    let classified_weight: f64 = mass.iter().sum();
    let classified_n: usize = counts.iter().sum();
    if classified_n == 0 {
        return Err(SurveyError::NoResponses(spec.name.clone()));
    }

    let categories = spec
        .labels()
        .into_iter()
        .enumerate()
        .map(|(c, label)| CategoryDiagnostics {
            label,
            share: mass[c] / classified_weight,
            n: Some(counts[c]),
            weighted_mass: Some(mass[c]),
            low_precision: counts[c] < LOW_PRECISION_N,
        })
        .collect();
    Ok(ModeratorEstimate {
        spec: spec.clone(),
        categories,
        classified_n,
        classified_weight,
        missing_n,
        missing_weight,
        unclassified_n,
    })
}

/// Computes thresholds for continuous moderators that lack them, then the
/// weighted shares of every moderator.
pub fn estimate(
    dataset: &SurveyDataset,
    specs: &[ModeratorSpec],
    options: EstimateOptions,
) -> Result<PopulationEstimates, SurveyError> {
    if specs.is_empty() {
        return Err(SurveyError::NoModerators);
    }
    let mut warnings = dataset.report.warnings.clone();
    let mut moderators = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let mut spec = spec.clone();
        if let ModeratorKind::Continuous {
            quantile_count,
            thresholds,
        } = &mut spec.kind
        {
            if thresholds.is_empty() {
                let computed = weighted_quantile_thresholds(dataset, &spec.source, *quantile_count)?;
                *quantile_count = computed.category_count();
                *thresholds = computed.values;
                warnings.extend(computed.warnings);
            }
        }
        let est = weighted_proportion(dataset, &spec, options)?;
        if est.missing_n > 0 {
            warnings.push(format!(
                "moderator `{}`: {} records with a missing response excluded",
                spec.name, est.missing_n
            ));
        }
        if est.unclassified_n > 0 {
            warnings.push(format!(
                "moderator `{}`: {} records with an unrecognised response excluded",
                spec.name, est.unclassified_n
            ));
        }
        for c in est.categories.iter().filter(|c| c.low_precision) {
            warnings.push(format!(
                "moderator `{}`, category `{}`: only {} respondents; estimate may be imprecise",
                spec.name,
                c.label,
                c.n.unwrap_or(0)
            ));
        }
        moderators.push(est);
    }
    Ok(PopulationEstimates {
        schema_version: ESTIMATES_SCHEMA_VERSION,
        total_categories: moderators.iter().map(|m| m.categories.len()).sum(),
        moderators,
        total_weight: dataset.total_weight(),
        warnings,
        load_report: Some(dataset.report.clone()),
        provenance: Provenance {
            input_digest: dataset.source_digest.clone(),
            filter: dataset.schema.eligibility_filter.clone(),
            generated_at: chrono::Utc::now().to_rfc3339(),
        },
    })
}
