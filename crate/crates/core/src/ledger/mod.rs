//! The recruitment ledger: classifies candidate sites, enforces the plan's
//! limits as sites are admitted, and keeps an append-only event log from
//! which all tallies are derived.
//!
//! Every mutation goes through [`RecruitmentLedger::apply`], which is also
//! what [`RecruitmentLedger::replay`] uses, so live state and replayed state
//! cannot diverge. A site is admitted only if, in every moderator, its
//! category's tally stays within the limit, and the study total stays
//! within `J`.

mod classify;
mod event;
mod log;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify_site, CandidateSite, CategoryProfile};
pub use event::{EventType, LedgerEvent};
pub use log::{read_events, parse_events, EventLog, LockMode};
pub use report::{CategoryProgress, CategoryStatus, ProgressReport, NEAR_LIMIT_FRACTION};

use crate::plan::{CategoryRef, QuotaPlan};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("site_id must not be empty")]
    EmptySiteId,
    #[error("missing response: {0}")]
    MissingResponse(String),
    #[error("moderator `{moderator}`: unknown level `{level}`")]
    UnknownLevel { moderator: String, level: String },
    #[error("moderator `{0}`: expected a level label")]
    ExpectedLevel(String),
    #[error("moderator `{0}`: expected a numeric response")]
    ExpectedNumber(String),
    #[error("moderator `{moderator}`: response is not a finite number")]
    NonFinite { moderator: String },
    #[error("site `{0}` has already been accepted")]
    DuplicateSite(String),
    #[error("site `{0}` is not currently accepted")]
    UnknownSite(String),
    #[error("event log is inconsistent at event index {index} (seq {seq}): {reason}")]
    Replay { index: usize, seq: u64, reason: String },
    #[error("event log belongs to plan {found}, not the loaded plan {expected}")]
    PlanMismatch { expected: String, found: String },
    #[error("event log {0} is locked by another process")]
    Locked(String),
    #[error("event log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LedgerError {
    /// True for failures caused by the candidate's responses.
    pub fn is_classification(&self) -> bool {
        matches!(
            self,
            LedgerError::EmptySiteId
                | LedgerError::MissingResponse(_)
                | LedgerError::UnknownLevel { .. }
                | LedgerError::ExpectedLevel(_)
                | LedgerError::ExpectedNumber(_)
                | LedgerError::NonFinite { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyEntry {
    pub moderator: String,
    pub label: String,
    pub tally: u32,
    pub limit: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionDecision {
    pub site_id: String,
    pub verdict: Verdict,
    pub profile: CategoryProfile,
    /// Categories whose limit the site would exceed.
    pub binding_categories: Vec<CategoryRef>,
    /// The study already holds `J` accepted sites.
    pub total_reached: bool,
    pub tallies_after: Vec<TallyEntry>,
    /// Sequence number of the recorded event; absent for what-if checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

/// Exported ledger state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub plan_digest: String,
    pub tallies: Vec<TallyEntry>,
    pub accepted_sites: BTreeMap<String, CategoryProfile>,
    pub last_seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct AcceptedSite {
    profile: CategoryProfile,
    indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecruitmentLedger {
    plan: Arc<QuotaPlan>,
    plan_digest: String,
    events: Vec<LedgerEvent>,
    tallies: Vec<u32>,
    accepted: BTreeMap<String, AcceptedSite>,
    /// Sites accepted at some point and later withdrawn.
    withdrawn: BTreeSet<String>,
}

struct Adjudication {
    profile: CategoryProfile,
    indices: Vec<usize>,
    binding: Vec<CategoryRef>,
    total_reached: bool,
}

impl Adjudication {
    fn accepted(&self) -> bool {
        self.binding.is_empty() && !self.total_reached
    }
}

impl RecruitmentLedger {
    pub fn new(plan: impl Into<Arc<QuotaPlan>>) -> Self {
        let plan = plan.into();
        RecruitmentLedger {
            plan_digest: plan.digest(),
            tallies: vec![0; plan.categories.len()],
            plan,
            events: Vec::new(),
            accepted: BTreeMap::new(),
            withdrawn: BTreeSet::new(),
        }
    }

    /// Rebuilds a ledger from its event log, re-checking every event against
    /// the plan. The first inconsistent event aborts the replay.
    pub fn replay(
        plan: impl Into<Arc<QuotaPlan>>,
        events: impl IntoIterator<Item = LedgerEvent>,
    ) -> Result<Self, LedgerError> {
        let mut ledger = RecruitmentLedger::new(plan);
        for event in events {
            ledger.apply(event)?;
        }
        Ok(ledger)
    }

    pub fn plan(&self) -> &Arc<QuotaPlan> {
        &self.plan
    }

    pub fn plan_digest(&self) -> &str {
        &self.plan_digest
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    /// Events with `seq > since`.
    pub fn events_since(&self, since: u64) -> &[LedgerEvent] {
        let start = usize::try_from(since).unwrap_or(usize::MAX).min(self.events.len());
        &self.events[start..]
    }

    pub fn last_seq(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn tallies(&self) -> &[u32] {
        &self.tallies
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_accepted(&self, site_id: &str) -> bool {
        self.accepted.contains_key(site_id)
    }

    pub fn accepted_sites(&self) -> impl Iterator<Item = (&str, &CategoryProfile)> {
        self.accepted.iter().map(|(id, s)| (id.as_str(), &s.profile))
    }

    fn tally_entries(&self, tallies: &[u32]) -> Vec<TallyEntry> {
        self.plan
            .categories
            .iter()
            .zip(tallies)
            .map(|(c, &tally)| TallyEntry {
                moderator: c.moderator.clone(),
                label: c.label.clone(),
                tally,
                limit: c.limit,
            })
            .collect()
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            plan_digest: self.plan_digest.clone(),
            tallies: self.tally_entries(&self.tallies),
            accepted_sites: self
                .accepted
                .iter()
                .map(|(id, s)| (id.clone(), s.profile.clone()))
                .collect(),
            last_seq: self.last_seq(),
        }
    }

    fn check_not_taken(&self, site_id: &str) -> Result<(), LedgerError> {
        if self.accepted.contains_key(site_id) || self.withdrawn.contains(site_id) {
            Err(LedgerError::DuplicateSite(site_id.to_owned()))
        } else {
            Ok(())
        }
    }

    fn adjudicate_indices(&self, indices: &[usize]) -> (Vec<CategoryRef>, bool) {
        let binding = indices
            .iter()
            .filter(|&&i| self.tallies[i] >= self.plan.categories[i].limit)
            .map(|&i| self.plan.categories[i].category_ref())
            .collect();
        let total_reached = self.accepted.len() as u64 >= u64::from(self.plan.total_target);
        (binding, total_reached)
    }

    fn adjudicate(&self, site: &CandidateSite) -> Result<Adjudication, LedgerError> {
        self.check_not_taken(&site.site_id)?;
        let profile = classify_site(site, &self.plan)?;
        let indices = classify::profile_indices(&profile, &self.plan)
            .expect("classification yields plan categories");
        let (binding, total_reached) = self.adjudicate_indices(&indices);
        Ok(Adjudication {
            profile,
            indices,
            binding,
            total_reached,
        })
    }

    fn decision(&self, site_id: &str, adj: Adjudication, seq: Option<u64>) -> AdmissionDecision {
        let mut after = self.tallies.clone();
        if adj.accepted() {
            for &i in &adj.indices {
                after[i] += 1;
            }
        }
        AdmissionDecision {
            site_id: site_id.to_owned(),
            verdict: if adj.accepted() {
                Verdict::Accepted
            } else {
                Verdict::Rejected
            },
            profile: adj.profile,
            binding_categories: adj.binding,
            total_reached: adj.total_reached,
            tallies_after: self.tally_entries(&after),
            seq,
        }
    }

    /// Adjudicates a site without recording anything.
    pub fn what_if(&self, site: &CandidateSite) -> Result<AdmissionDecision, LedgerError> {
        let adj = self.adjudicate(site)?;
        Ok(self.decision(&site.site_id, adj, None))
    }

    /// Builds the event `admit` would record, without applying it.
    pub fn prepare_admit(
        &self,
        site: &CandidateSite,
        time: DateTime<Utc>,
    ) -> Result<(LedgerEvent, AdmissionDecision), LedgerError> {
        let adj = self.adjudicate(site)?;
        let seq = self.last_seq() + 1;
        let event = LedgerEvent {
            seq,
            kind: if adj.accepted() {
                EventType::Admitted
            } else {
                EventType::Rejected
            },
            time,
            site_id: site.site_id.clone(),
            profile: adj.profile.clone(),
            binding_categories: adj.binding.clone(),
            total_reached: !adj.accepted() && adj.total_reached,
            metadata: site.metadata.clone(),
            plan_digest: self.plan_digest.clone(),
        };
        let decision = self.decision(&site.site_id, adj, Some(seq));
        Ok((event, decision))
    }

    pub fn admit_at(
        &mut self,
        site: &CandidateSite,
        time: DateTime<Utc>,
    ) -> Result<AdmissionDecision, LedgerError> {
        let (event, decision) = self.prepare_admit(site, time)?;
        self.apply(event)?;
        Ok(decision)
    }

    /// Adjudicates a site and records the outcome. A rejection is a normal
    /// result, recorded as a `rejected` event with tallies untouched.
    pub fn admit(&mut self, site: &CandidateSite) -> Result<AdmissionDecision, LedgerError> {
        self.admit_at(site, Utc::now())
    }

    pub fn prepare_withdraw(
        &self,
        site_id: &str,
        time: DateTime<Utc>,
    ) -> Result<LedgerEvent, LedgerError> {
        let site = self
            .accepted
            .get(site_id)
            .ok_or_else(|| LedgerError::UnknownSite(site_id.to_owned()))?;
        Ok(LedgerEvent {
            seq: self.last_seq() + 1,
            kind: EventType::Withdrawn,
            time,
            site_id: site_id.to_owned(),
            profile: site.profile.clone(),
            binding_categories: Vec::new(),
            total_reached: false,
            metadata: None,
            plan_digest: self.plan_digest.clone(),
        })
    }

    pub fn withdraw_at(&mut self, site_id: &str, time: DateTime<Utc>) -> Result<u64, LedgerError> {
        let event = self.prepare_withdraw(site_id, time)?;
        let seq = event.seq;
        self.apply(event)?;
        Ok(seq)
    }

    /// Removes an accepted site, freeing its capacity in every moderator.
    pub fn withdraw(&mut self, site_id: &str) -> Result<u64, LedgerError> {
        self.withdraw_at(site_id, Utc::now())
    }

    /// Applies one event after checking it is consistent with the current
    /// state. This is the only path that mutates a ledger.
    pub fn apply(&mut self, event: LedgerEvent) -> Result<(), LedgerError> {
        let index = self.events.len();
        let fail = |reason: String| LedgerError::Replay {
            index,
            seq: event.seq,
            reason,
        };
        if event.seq != self.last_seq() + 1 {
            return Err(fail(format!("expected seq {}", self.last_seq() + 1)));
        }
        if event.plan_digest != self.plan_digest {
            return Err(LedgerError::PlanMismatch {
                expected: self.plan_digest.clone(),
                found: event.plan_digest,
            });
        }
        let indices = classify::profile_indices(&event.profile, &self.plan).map_err(fail)?;

        match event.kind {
            EventType::Admitted => {
                if self.check_not_taken(&event.site_id).is_err() {
                    return Err(fail(format!("site `{}` admitted twice", event.site_id)));
                }
                let (binding, total_reached) = self.adjudicate_indices(&indices);
                if !binding.is_empty() {
                    let names: Vec<_> = binding.iter().map(ToString::to_string).collect();
                    return Err(fail(format!("admission exceeds the limit of {}", names.join(", "))));
                }
                if total_reached {
                    return Err(fail("admission exceeds the total target".into()));
                }
                for &i in &indices {
                    self.tallies[i] += 1;
                }
                self.accepted.insert(
                    event.site_id.clone(),
                    AcceptedSite {
                        profile: event.profile.clone(),
                        indices,
                    },
                );
            }
            EventType::Rejected => {
                if self.check_not_taken(&event.site_id).is_err() {
                    return Err(fail(format!(
                        "site `{}` was already accepted and cannot be re-proposed",
                        event.site_id
                    )));
                }
                let (binding, total_reached) = self.adjudicate_indices(&indices);
                if binding != event.binding_categories || total_reached != event.total_reached {
                    return Err(fail("recorded rejection does not match the tallies at that point".into()));
                }
            }
            EventType::Withdrawn => {
                let site = self
                    .accepted
                    .get(&event.site_id)
                    .ok_or_else(|| fail(format!("site `{}` is not currently accepted", event.site_id)))?;
                if site.profile != event.profile {
                    return Err(fail("withdrawal profile differs from the admitted profile".into()));
                }
                for &i in &site.indices {
                    self.tallies[i] -= 1;
                }
                self.accepted.remove(&event.site_id);
                self.withdrawn.insert(event.site_id.clone());
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn status(&self) -> ProgressReport {
        report::build(self)
    }
}
