use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::CategoryProfile;
use crate::plan::CategoryRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Admitted,
    Rejected,
    Withdrawn,
}

/// One line of the append-only event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: EventType,
    pub time: DateTime<Utc>,
    pub site_id: String,
    pub profile: CategoryProfile,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub binding_categories: Vec<CategoryRef>,
    /// Rejected because the study already has `J` sites.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub total_reached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
    pub plan_digest: String,
}
