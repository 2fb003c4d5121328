//! Quota plans: per-category targets and integer limits.
//!
//! For a study seeking `J` sites, a category with estimated population share
//! `p` gets the real-valued target `J·p` and the limit `⌊J·(p + δ)⌋`, where
//! `δ` is the tolerated overrepresentation in share terms. A limit is never
//! allowed to fall below `⌈J·p⌉`, which would make the target unreachable.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::json_digest;
use crate::survey::{ModeratorSpec, PopulationEstimates, SurveyError};

pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// Slack used when none is given.
pub const DEFAULT_SLACK: f64 = 0.05;

/// Tolerance for snapping `J·(p + δ)` onto an integer before rounding, so
/// that e.g. `40 × 0.30` floors to 12 whatever the binary representation.
const ROUNDING_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("total target must be at least 1")]
    InvalidTotal,
    #[error("slack for `{scope}` must be finite and non-negative, got {value}")]
    InvalidSlack { scope: String, value: f64 },
    #[error("slack override names unknown moderator `{0}`")]
    UnknownOverride(String),
    #[error(transparent)]
    Estimates(#[from] SurveyError),
    #[error("malformed plan document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("plan schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("plan violates an invariant: {0}")]
    Invariant(String),
    #[error("cannot read plan {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Global slack plus optional per-moderator overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub default: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, f64>,
}

impl Slack {
    pub fn uniform(delta: f64) -> Self {
        Slack {
            default: delta,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, moderator: &str, delta: f64) -> Self {
        self.overrides.insert(moderator.to_owned(), delta);
        self
    }

    pub fn for_moderator(&self, moderator: &str) -> f64 {
        self.overrides.get(moderator).copied().unwrap_or(self.default)
    }
}

impl Default for Slack {
    fn default() -> Self {
        Slack::uniform(DEFAULT_SLACK)
    }
}

/// Names one category of one moderator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryRef {
    pub moderator: String,
    pub label: String,
}

impl CategoryRef {
    pub fn new(moderator: &str, label: &str) -> Self {
        CategoryRef {
            moderator: moderator.to_owned(),
            label: label.to_owned(),
        }
    }
}

impl fmt::Display for CategoryRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.moderator, self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCategory {
    pub moderator: String,
    pub label: String,
    pub share: f64,
    pub target: f64,
    pub limit: u32,
    /// The floor of `J·(p + δ)` fell below the target and was raised.
    #[serde(default)]
    pub clamped: bool,
}

impl PlanCategory {
    pub fn category_ref(&self) -> CategoryRef {
        CategoryRef::new(&self.moderator, &self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProvenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates_digest: Option<String>,
    pub plan_digest: String,
    pub created_at: String,
}

/// Targets and limits for every category, plus the moderator definitions
/// (with frozen thresholds) needed to classify candidate sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaPlan {
    pub schema_version: u32,
    #[serde(rename = "J")]
    pub total_target: u32,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub delta_overrides: BTreeMap<String, f64>,
    pub moderators: Vec<ModeratorSpec>,
    pub categories: Vec<PlanCategory>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub provenance: PlanProvenance,
}

#[derive(Serialize)]
struct PlanContent<'a> {
    total_target: u32,
    delta: f64,
    delta_overrides: &'a BTreeMap<String, f64>,
    moderators: &'a [ModeratorSpec],
    categories: &'a [PlanCategory],
}

fn floor_tol(x: f64) -> f64 {
    (x + ROUNDING_TOL * x.abs().max(1.0)).floor()
}

fn ceil_tol(x: f64) -> f64 {
    (x - ROUNDING_TOL * x.abs().max(1.0)).ceil()
}

/// A nonnegative decimal `mantissa × 10^-scale`.
#[derive(Debug, Clone, Copy)]
struct Decimal {
    mantissa: u128,
    scale: u32,
}

impl Decimal {
    /// The shortest decimal that round-trips to `x`.
    fn from_f64(x: f64) -> Option<Decimal> {
        if !x.is_finite() || x < 0.0 {
            return None;
        }
        let text = format!("{x}");
        let (int, frac) = text.split_once('.').unwrap_or((&text, ""));
        let digits: String = [int, frac].concat();
        Some(Decimal {
            mantissa: digits.parse().ok()?,
            scale: frac.len() as u32,
        })
    }

    fn rescale(self, scale: u32) -> Option<u128> {
        self.mantissa.checked_mul(10u128.checked_pow(scale - self.scale)?)
    }

    fn add(self, other: Decimal) -> Option<Decimal> {
        let scale = self.scale.max(other.scale);
        Some(Decimal {
            mantissa: self.rescale(scale)?.checked_add(other.rescale(scale)?)?,
            scale,
        })
    }

    fn times(self, n: u32) -> Option<Decimal> {
        Some(Decimal {
            mantissa: self.mantissa.checked_mul(u128::from(n))?,
            scale: self.scale,
        })
    }

    /// Correctly rounded conversion.
    fn to_f64(self) -> f64 {
        let digits = self.mantissa.to_string();
        let scale = self.scale as usize;
        let text = if digits.len() > scale {
            format!("{}.{}", &digits[..digits.len() - scale], &digits[digits.len() - scale..])
        } else {
            format!("0.{}{}", "0".repeat(scale - digits.len()), digits)
        };
        text.parse().expect("decimal digits parse as f64")
    }
}

/// `J·p`, computed on the shortest decimal forms of the inputs and rounded
/// once, so that a share written as 0.18 gives 80 × 0.18 = 14.4 exactly.
pub fn category_target(total: u32, share: f64) -> f64 {
    Decimal::from_f64(share)
        .and_then(|p| p.times(total))
        .map_or(f64::from(total) * share, Decimal::to_f64)
}

/// `J·(p + δ)`, computed like [`category_target`].
fn slack_bound(total: u32, share: f64, delta: f64) -> f64 {
    Decimal::from_f64(share)
        .zip(Decimal::from_f64(delta))
        .and_then(|(p, d)| p.add(d)?.times(total))
        .map_or(f64::from(total) * (share + delta), Decimal::to_f64)
}

/// Integer limit for one category and whether the target clamp applied.
pub fn category_limit(total: u32, share: f64, delta: f64) -> (u32, bool) {
    let floored = floor_tol(slack_bound(total, share, delta)).max(0.0);
    let target_ceiling = ceil_tol(category_target(total, share)).max(0.0);
    if target_ceiling > floored {
        (target_ceiling as u32, true)
    } else {
        (floored as u32, false)
    }
}

/// Compiles estimates into a plan for `total` sites.
pub fn build_plan(
    estimates: &PopulationEstimates,
    total: u32,
    slack: &Slack,
) -> Result<QuotaPlan, PlanError> {
    if total == 0 {
        return Err(PlanError::InvalidTotal);
    }
    estimates.validate()?;
    let check = |scope: &str, value: f64| {
        if value.is_finite() && value >= 0.0 {
            Ok(())
        } else {
            Err(PlanError::InvalidSlack {
                scope: scope.to_owned(),
                value,
            })
        }
    };
    check("all moderators", slack.default)?;
    for (name, value) in &slack.overrides {
        if estimates.moderator(name).is_none() {
            return Err(PlanError::UnknownOverride(name.clone()));
        }
        check(name, *value)?;
    }

    let mut categories = Vec::with_capacity(estimates.total_categories);
    let mut warnings = Vec::new();
    for m in &estimates.moderators {
        let delta = slack.for_moderator(m.name());
        for c in &m.categories {
            let target = category_target(total, c.share);
            let (limit, clamped) = category_limit(total, c.share, delta);
            if clamped {
                warnings.push(format!(
                    "{}={}: limit raised from {} to {} so the target {} stays reachable",
                    m.name(),
                    c.label,
                    floor_tol(slack_bound(total, c.share, delta)),
                    limit,
                    target
                ));
            }
            categories.push(PlanCategory {
                moderator: m.name().to_owned(),
                label: c.label.clone(),
                share: c.share,
                target,
                limit,
                clamped,
            });
        }
    }

    let mut plan = QuotaPlan {
        schema_version: PLAN_SCHEMA_VERSION,
        total_target: total,
        delta: slack.default,
        delta_overrides: slack.overrides.clone(),
        moderators: estimates.moderators.iter().map(|m| m.spec.clone()).collect(),
        categories,
        warnings,
        provenance: PlanProvenance {
            estimates_digest: Some(estimates.digest()),
            plan_digest: String::new(),
            created_at: chrono::Utc::now().to_rfc3339(),
        },
    };
    plan.provenance.plan_digest = plan.digest();
    Ok(plan)
}

impl QuotaPlan {
    /// Digest of the plan's substance (everything but provenance and
    /// warnings). Event logs record it to bind themselves to one plan.
    pub fn digest(&self) -> String {
        json_digest(&PlanContent {
            total_target: self.total_target,
            delta: self.delta,
            delta_overrides: &self.delta_overrides,
            moderators: &self.moderators,
            categories: &self.categories,
        })
    }

    pub fn slack(&self) -> Slack {
        Slack {
            default: self.delta,
            overrides: self.delta_overrides.clone(),
        }
    }

    pub fn slack_for(&self, moderator: &str) -> f64 {
        self.delta_overrides
            .get(moderator)
            .copied()
            .unwrap_or(self.delta)
    }

    /// Index range into `categories` belonging to moderator `m`.
    pub fn moderator_range(&self, m: usize) -> Range<usize> {
        let name = &self.moderators[m].name;
        let start = self
            .categories
            .iter()
            .position(|c| &c.moderator == name)
            .unwrap_or(self.categories.len());
        let len = self.categories[start..]
            .iter()
            .take_while(|c| &c.moderator == name)
            .count();
        start..start + len
    }

    pub fn category_index(&self, category: &CategoryRef) -> Option<usize> {
        self.categories
            .iter()
            .position(|c| c.moderator == category.moderator && c.label == category.label)
    }

    pub fn limits(&self) -> Vec<u32> {
        self.categories.iter().map(|c| c.limit).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.categories.iter().map(|c| c.target).collect()
    }

    /// Structural and numeric invariants of a well-formed plan.
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |msg: String| Err(PlanError::Invariant(msg));
        if self.total_target == 0 {
            return Err(PlanError::InvalidTotal);
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(PlanError::InvalidSlack {
                scope: "all moderators".into(),
                value: self.delta,
            });
        }
        for (name, value) in &self.delta_overrides {
            if !self.moderators.iter().any(|m| &m.name == name) {
                return Err(PlanError::UnknownOverride(name.clone()));
            }
            if !(value.is_finite() && *value >= 0.0) {
                return Err(PlanError::InvalidSlack {
                    scope: name.clone(),
                    value: *value,
                });
            }
        }
        if self.moderators.is_empty() {
            return bad("plan has no moderators".into());
        }
        let j = f64::from(self.total_target);
        let mut next = 0;
        for spec in &self.moderators {
            spec.validate()?;
            if !spec.thresholds_ready() {
                return Err(SurveyError::ThresholdsMissing(spec.name.clone()).into());
            }
            let labels = spec.labels();
            let cats = self.categories.get(next..next + labels.len()).unwrap_or(&[]);
            if cats.len() != labels.len()
                || cats.iter().zip(&labels).any(|(c, l)| c.moderator != spec.name || &c.label != l)
            {
                return bad(format!(
                    "categories for moderator `{}` do not match its levels {:?}",
                    spec.name, labels
                ));
            }
            next += labels.len();

            let share_sum: f64 = cats.iter().map(|c| c.share).sum();
            if (share_sum - 1.0).abs() > 1e-9 {
                return bad(format!("shares of `{}` sum to {share_sum}, not 1", spec.name));
            }
            let target_sum: f64 = cats.iter().map(|c| c.target).sum();
            if (target_sum - j).abs() > 1e-6 {
                return bad(format!("targets of `{}` sum to {target_sum}, not {j}", spec.name));
            }
            for c in cats {
                if !(0.0..=1.0).contains(&c.share) {
                    return bad(format!("share of {}={} is outside [0, 1]", c.moderator, c.label));
                }
                if (c.target - j * c.share).abs() > 1e-6 {
                    return bad(format!("target of {}={} is not J × share", c.moderator, c.label));
                }
                if c.share > 0.0 && f64::from(c.limit) < ceil_tol(c.target) {
                    return bad(format!(
                        "limit {} of {}={} is below its target {}",
                        c.limit, c.moderator, c.label, c.target
                    ));
                }
            }
        }
        if next != self.categories.len() {
            return bad("plan lists categories for undeclared moderators".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeratorFeasibility {
    pub moderator: String,
    pub sum_of_limits: u64,
    pub total_target: u32,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub moderators: Vec<ModeratorFeasibility>,
    pub warnings: Vec<String>,
}

/// A plan is feasible when, for every moderator, the limits leave room for
/// `J` sites in total.
pub fn check_feasibility(plan: &QuotaPlan) -> FeasibilityReport {
    let mut warnings = plan.warnings.clone();
    let j = plan.total_target;
    let moderators: Vec<_> = plan
        .moderators
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let sum: u64 = plan.categories[plan.moderator_range(m)]
                .iter()
                .map(|c| u64::from(c.limit))
                .sum();
            let delta = plan.slack_for(&spec.name);
            if f64::from(j) * delta < 1.0 {
                warnings.push(format!(
                    "moderator `{}`: J × δ = {} is below one site, so the slack may round away entirely",
                    spec.name,
                    f64::from(j) * delta
                ));
            }
            ModeratorFeasibility {
                moderator: spec.name.clone(),
                sum_of_limits: sum,
                total_target: j,
                pass: sum >= u64::from(j),
            }
        })
        .collect();
    FeasibilityReport {
        feasible: moderators.iter().all(|m| m.pass),
        moderators,
        warnings,
    }
}

/// Serializes a plan as a pretty-printed JSON document.
pub fn save_plan(plan: &QuotaPlan) -> String {
    serde_json::to_string_pretty(plan).expect("plan serialization cannot fail")
}

/// Parses and validates a plan document. Returns the plan and any load
/// warnings (such as a provenance digest that no longer matches).
pub fn load_plan(document: &str) -> Result<(QuotaPlan, Vec<String>), PlanError> {
    #[derive(Deserialize)]
    struct Version {
        schema_version: u32,
    }
    let version: Version = serde_json::from_str(document)?;
    if version.schema_version != PLAN_SCHEMA_VERSION {
        return Err(PlanError::SchemaVersion {
            found: version.schema_version,
            expected: PLAN_SCHEMA_VERSION,
        });
    }
    let plan: QuotaPlan = serde_json::from_str(document)?;
    plan.validate()?;
    let mut warnings = Vec::new();
    let digest = plan.digest();
    if plan.provenance.plan_digest != digest {
        warnings.push(format!(
            "plan digest {} in provenance does not match contents ({digest}); the document was edited after it was built",
            plan.provenance.plan_digest
        ));
    }
    Ok((plan, warnings))
}

pub fn load_plan_file(path: &std::path::Path) -> Result<(QuotaPlan, Vec<String>), PlanError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_plan(&text)
}
