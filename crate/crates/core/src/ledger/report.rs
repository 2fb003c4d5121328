use serde::{Deserialize, Serialize};

use super::RecruitmentLedger;
use crate::plan::CategoryRef;

/// Share of a limit at which a category is reported as near its limit.
pub const NEAR_LIMIT_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategoryStatus {
    Open,
    NearLimit,
    Saturated,
    /// Still open, but the open categories of this moderator together have
    /// less room than the slots left to fill. Advisory only.
    ShortfallRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryProgress {
    pub moderator: String,
    pub label: String,
    pub tally: u32,
    pub target: f64,
    pub limit: u32,
    pub remaining_capacity: u32,
    /// Sites this category must still contribute for `J` to be reachable,
    /// given the room left in the moderator's other categories.
    pub required_additional: u32,
    pub status: CategoryStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressReport {
    pub plan_digest: String,
    pub total_target: u32,
    pub accepted: u32,
    pub remaining_slots: u32,
    pub complete: bool,
    pub last_seq: u64,
    pub categories: Vec<CategoryProgress>,
    /// Categories furthest below target relative to their target, most
    /// urgent first.
    pub steering: Vec<CategoryRef>,
}

pub(super) fn build(ledger: &RecruitmentLedger) -> ProgressReport {
    let plan = ledger.plan();
    let tallies = ledger.tallies();
    let accepted = ledger.accepted_count() as u32;
    let remaining_slots = plan.total_target.saturating_sub(accepted);

    let mut categories = Vec::with_capacity(plan.categories.len());
    for m in 0..plan.moderators.len() {
        let range = plan.moderator_range(m);
        let capacity: Vec<u32> = range
            .clone()
            .map(|i| plan.categories[i].limit.saturating_sub(tallies[i]))
            .collect();
        let total_capacity: u32 = capacity.iter().sum();
        let first = categories.len();
        for (k, i) in range.enumerate() {
            let cat = &plan.categories[i];
            let status = if capacity[k] == 0 {
                CategoryStatus::Saturated
            } else if f64::from(tallies[i]) >= NEAR_LIMIT_FRACTION * f64::from(cat.limit) {
                CategoryStatus::NearLimit
            } else {
                CategoryStatus::Open
            };
            categories.push(CategoryProgress {
                moderator: cat.moderator.clone(),
                label: cat.label.clone(),
                tally: tallies[i],
                target: cat.target,
                limit: cat.limit,
                remaining_capacity: capacity[k],
                required_additional: remaining_slots.saturating_sub(total_capacity - capacity[k]),
                status,
            });
        }
        let mine = &mut categories[first..];
        let open_capacity: u32 = mine
            .iter()
            .filter(|c| c.status == CategoryStatus::Open)
            .map(|c| c.remaining_capacity)
            .sum();
        if remaining_slots > open_capacity {
            for c in mine.iter_mut().filter(|c| c.status == CategoryStatus::Open) {
                c.status = CategoryStatus::ShortfallRisk;
            }
        }
    }

    let mut candidates: Vec<(usize, f64, f64)> = categories
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            remaining_slots > 0
                && c.status != CategoryStatus::Saturated
                && f64::from(c.tally) < c.target
        })
        .map(|(i, c)| {
            let deficit = c.target - f64::from(c.tally);
            (i, deficit / c.target, deficit)
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(b.2.total_cmp(&a.2))
            .then(a.0.cmp(&b.0))
    });
    let steering = candidates
        .into_iter()
        .map(|(i, _, _)| CategoryRef::new(&categories[i].moderator, &categories[i].label))
        .collect();

    ProgressReport {
        plan_digest: ledger.plan_digest().to_owned(),
        total_target: plan.total_target,
        accepted,
        remaining_slots,
        complete: remaining_slots == 0,
        last_seq: ledger.last_seq(),
        categories,
        steering,
    }
}

impl ProgressReport {
    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "accepted {}/{}{}\n",
            self.accepted,
            self.total_target,
            if self.complete { " (complete)" } else { "" }
        );
        out.push_str(&format!(
            "{:<20} {:<14} {:>6} {:>8} {:>6} {:>6}  {}\n",
            "moderator", "category", "tally", "target", "limit", "room", "status"
        ));
        for c in &self.categories {
            let status = serde_json::to_value(c.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            out.push_str(&format!(
                "{:<20} {:<14} {:>6} {:>8} {:>6} {:>6}  {}\n",
                c.moderator, c.label, c.tally, c.target, c.limit, c.remaining_capacity, status
            ));
        }
        if !self.steering.is_empty() {
            let names: Vec<_> = self.steering.iter().map(ToString::to_string).collect();
            out.push_str(&format!("steer toward: {}\n", names.join(", ")));
        }
        out
    }
}
