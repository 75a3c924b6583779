//! Persistent queue of Doubtful cases awaiting a human decision.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::journal::{Journal, JournalError, Replay};
use crate::entity_model::{CaseId, MatchCase, RejectReason, ResolutionLabel};
use crate::legal_form::LegalFormVerdict;

/// Source of timestamps for audit entries.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseStatus {
    Pending,
    Resolved,
}

impl std::str::FromStr for CaseStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Self::Pending),
            "resolved" => Ok(Self::Resolved),
            _ => Err(format!("unknown status {s:?} (pending, resolved)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Enqueued,
    Decided,
    Reprocessed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub at: DateTime<Utc>,
    pub action: AuditAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<ResolutionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reviewer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_code: Option<String>,
}

impl AuditEntry {
    fn new(at: DateTime<Utc>, action: AuditAction) -> Self {
        Self {
            at,
            action,
            decision: None,
            reviewer: None,
            reason: None,
            code: None,
            superseded_code: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub case: MatchCase,
    pub status: CaseStatus,
    /// Position in enqueue order.
    pub seq: u64,
    pub enqueued_at: DateTime<Utc>,
    #[serde(default)]
    pub raw_responses: BTreeMap<String, String>,
    #[serde(default)]
    pub legal_form: Option<LegalFormVerdict>,
    pub audit: Vec<AuditEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum QueueEvent {
    Enqueued {
        case: Box<MatchCase>,
        #[serde(default)]
        raw_responses: BTreeMap<String, String>,
        #[serde(default)]
        legal_form: Option<LegalFormVerdict>,
        at: DateTime<Utc>,
    },
    Decided {
        case_id: CaseId,
        decision: ResolutionLabel,
        reviewer: String,
        #[serde(default)]
        reason: Option<RejectReason>,
        #[serde(default)]
        code: Option<String>,
        at: DateTime<Utc>,
    },
    Reprocessed {
        case_id: CaseId,
        reviewer: String,
        #[serde(default)]
        superseded_code: Option<String>,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    entries: BTreeMap<CaseId, QueueEntry>,
    next_seq: u64,
}

impl Replay for QueueState {
    type Event = QueueEvent;

    fn apply(&mut self, event: &QueueEvent) -> Result<(), String> {
        match event {
            QueueEvent::Enqueued {
                case,
                raw_responses,
                legal_form,
                at,
            } => {
                let mut audit = self
                    .entries
                    .remove(&case.case_id)
                    .map(|old| {
                        if old.status == CaseStatus::Pending {
                            Err(format!("case {} is already pending", case.case_id))
                        } else {
                            Ok(old.audit)
                        }
                    })
                    .transpose()?
                    .unwrap_or_default();
                audit.push(AuditEntry::new(*at, AuditAction::Enqueued));
                self.entries.insert(
                    case.case_id.clone(),
                    QueueEntry {
                        case: (**case).clone(),
                        status: CaseStatus::Pending,
                        seq: self.next_seq,
                        enqueued_at: *at,
                        raw_responses: raw_responses.clone(),
                        legal_form: legal_form.clone(),
                        audit,
                    },
                );
                self.next_seq += 1;
            }
            QueueEvent::Decided {
                case_id,
                decision,
                reviewer,
                reason,
                code,
                at,
            } => {
                let e = self.entries.get_mut(case_id).ok_or_else(|| format!("unknown case {case_id}"))?;
                if e.status != CaseStatus::Pending {
                    return Err(format!("case {case_id} is not pending"));
                }
                e.status = CaseStatus::Resolved;
                e.case.resolution = Some(*decision);
                e.case.reject_reasons = reason.iter().cloned().collect();
                e.case.assigned_code = code.clone();
                let mut a = AuditEntry::new(*at, AuditAction::Decided);
                a.decision = Some(*decision);
                a.reviewer = Some(reviewer.clone());
                a.reason = reason.clone();
                a.code = code.clone();
                e.audit.push(a);
            }
            QueueEvent::Reprocessed {
                case_id,
                reviewer,
                superseded_code,
                at,
            } => {
                let e = self.entries.get_mut(case_id).ok_or_else(|| format!("unknown case {case_id}"))?;
                if e.status != CaseStatus::Resolved {
                    return Err(format!("case {case_id} is not resolved"));
                }
                e.status = CaseStatus::Pending;
                e.case.resolution = Some(ResolutionLabel::Doubtful);
                e.case.reject_reasons.clear();
                e.case.assigned_code = None;
                let mut a = AuditEntry::new(*at, AuditAction::Reprocessed);
                a.reviewer = Some(reviewer.clone());
                a.superseded_code = superseded_code.clone();
                e.audit.push(a);
            }
        }
        Ok(())
    }
}

/// Review queue; every mutation is journaled before it is applied, and an
/// event that fails validation leaves both memory and disk untouched.
#[derive(Debug)]
pub struct ReviewQueue {
    state: QueueState,
    journal: Option<Journal<QueueState>>,
    fingerprint: (u64, u64),
}

impl ReviewQueue {
    pub fn in_memory() -> Self {
        Self {
            state: QueueState::default(),
            journal: None,
            fingerprint: (0, 0),
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self, JournalError> {
        let journal = Journal::new(dir, "queue");
        let state = journal.load()?;
        let fingerprint = journal.fingerprint();
        Ok(Self {
            state,
            journal: Some(journal),
            fingerprint,
        })
    }

    /// Reloads from disk if another process changed the files.
    pub fn refresh(&mut self) -> Result<bool, JournalError> {
        let Some(j) = &self.journal else { return Ok(false) };
        let fp = j.fingerprint();
        if fp == self.fingerprint {
            return Ok(false);
        }
        self.state = j.load()?;
        self.fingerprint = fp;
        Ok(true)
    }

    /// Validates, journals and applies an event.
    pub(crate) fn commit(&mut self, event: QueueEvent) -> Result<(), QueueCommitError> {
        let mut next = self.state.clone();
        next.apply(&event).map_err(QueueCommitError::Invalid)?;
        if let Some(j) = &self.journal {
            j.append(&event).map_err(QueueCommitError::Storage)?;
            self.fingerprint = j.fingerprint();
        }
        self.state = next;
        Ok(())
    }

    /// Adds a Doubtful case. A case that is already pending is left alone.
    pub fn enqueue(
        &mut self,
        case: MatchCase,
        raw_responses: BTreeMap<String, String>,
        legal_form: Option<LegalFormVerdict>,
        at: DateTime<Utc>,
    ) -> Result<bool, JournalError> {
        if self.get(&case.case_id).is_some_and(|e| e.status == CaseStatus::Pending) {
            return Ok(false);
        }
        match self.commit(QueueEvent::Enqueued {
            case: Box::new(case),
            raw_responses,
            legal_form,
            at,
        }) {
            Ok(()) => Ok(true),
            Err(QueueCommitError::Storage(e)) => Err(e),
            Err(QueueCommitError::Invalid(m)) => unreachable!("enqueue validated: {m}"),
        }
    }

    pub fn get(&self, case_id: &CaseId) -> Option<&QueueEntry> {
        self.state.entries.get(case_id)
    }

    /// Entries in enqueue order, optionally filtered by status.
    pub fn list(&self, status: Option<CaseStatus>) -> Vec<&QueueEntry> {
        let mut v: Vec<&QueueEntry> = self
            .state
            .entries
            .values()
            .filter(|e| status.is_none_or(|s| e.status == s))
            .collect();
        v.sort_by_key(|e| e.seq);
        v
    }

    pub fn len(&self) -> usize {
        self.state.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.entries.is_empty()
    }

    pub fn compact(&self) -> Result<(), JournalError> {
        match &self.journal {
            Some(j) => j.compact(&self.state),
            None => Ok(()),
        }
    }
}

#[derive(Debug)]
pub(crate) enum QueueCommitError {
    Invalid(String),
    Storage(JournalError),
}
