use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::plan::{CategoryRef, QuotaPlan};
use crate::survey::{discretize, ModeratorKind, Response};

/// A site offered for admission, with its answers to the moderator
/// questions keyed by moderator name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSite {
    pub site_id: String,
    pub responses: BTreeMap<String, Response>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl CandidateSite {
    pub fn new(site_id: &str) -> Self {
        CandidateSite {
            site_id: site_id.to_owned(),
            responses: BTreeMap::new(),
            metadata: None,
        }
    }

    pub fn level(mut self, moderator: &str, level: &str) -> Self {
        self.responses
            .insert(moderator.to_owned(), Response::Level(level.to_owned()));
        self
    }

    pub fn number(mut self, moderator: &str, value: f64) -> Self {
        self.responses
            .insert(moderator.to_owned(), Response::Number(value));
        self
    }
}

/// The category a site occupies in each moderator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryProfile(pub BTreeMap<String, String>);

impl CategoryProfile {
    pub fn label(&self, moderator: &str) -> Option<&str> {
        self.0.get(moderator).map(String::as_str)
    }

    pub fn categories(&self) -> impl Iterator<Item = CategoryRef> + '_ {
        self.0.iter().map(|(m, l)| CategoryRef::new(m, l))
    }
}

/// Resolves a site's responses to one category per moderator, using the
/// thresholds frozen into the plan. Matching is exact: no trimming or case
/// folding.
pub fn classify_site(site: &CandidateSite, plan: &QuotaPlan) -> Result<CategoryProfile, LedgerError> {
    if site.site_id.is_empty() {
        return Err(LedgerError::EmptySiteId);
    }
    let mut profile = BTreeMap::new();
    for spec in &plan.moderators {
        let response = site
            .responses
            .get(&spec.name)
            .filter(|r| !r.is_missing())
            .ok_or_else(|| LedgerError::MissingResponse(spec.name.clone()))?;
        let label = match (&spec.kind, response) {
            (ModeratorKind::Categorical { levels }, Response::Level(level)) => levels
                .iter()
                .find(|l| *l == level)
                .cloned()
                .ok_or_else(|| LedgerError::UnknownLevel {
                    moderator: spec.name.clone(),
                    level: level.clone(),
                })?,
            (ModeratorKind::Categorical { .. }, _) => {
                return Err(LedgerError::ExpectedLevel(spec.name.clone()))
            }
            (ModeratorKind::Continuous { thresholds, .. }, Response::Number(v)) => {
                let idx = discretize(*v, thresholds).map_err(|_| LedgerError::NonFinite {
                    moderator: spec.name.clone(),
                })?;
                spec.labels()[idx - 1].clone()
            }
            (ModeratorKind::Continuous { .. }, _) => {
                return Err(LedgerError::ExpectedNumber(spec.name.clone()))
            }
        };
        profile.insert(spec.name.clone(), label);
    }
    Ok(CategoryProfile(profile))
}

/// Plan category indices for a profile, one per moderator in plan order.
pub(crate) fn profile_indices(profile: &CategoryProfile, plan: &QuotaPlan) -> Result<Vec<usize>, String> {
    if profile.0.len() != plan.moderators.len() {
        return Err(format!(
            "profile names {} moderators, plan has {}",
            profile.0.len(),
            plan.moderators.len()
        ));
    }
    plan.moderators
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let label = profile
                .label(&spec.name)
                .ok_or_else(|| format!("profile has no category for `{}`", spec.name))?;
            plan.moderator_range(m)
                .find(|&i| plan.categories[i].label == label)
                .ok_or_else(|| format!("`{}` is not a category of `{}`", label, spec.name))
        })
        .collect()
}
