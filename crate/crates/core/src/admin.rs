//! The security administrator's trusted channel: the alert log, the
//! registry of pending cover disjunctions, resolution of those pendings,
//! and trigger registration.
//!
//! Everything here is exempt from the write rules that bind ordinary
//! transactions; the trust boundary is the caller's, typically an
//! administrator session at the top clearance.

use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::lattice::Level;
use crate::model::{Change, CoverStoryDecl, CoverTarget, Database, ModelError};
use crate::restore::CoverDisjunction;
use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertKind {
    /// A commit passed its transaction-level gate but left the database
    /// insecure at the top level.
    PostCommitInsecure,
    /// Restoration found an inconsistency with no candidate covers at all.
    EmptyDisjunction,
    /// Restoration stopped at its iteration bound.
    IterationCap,
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlertKind::PostCommitInsecure => "post-commit-insecure",
            AlertKind::EmptyDisjunction => "empty-disjunction",
            AlertKind::IterationCap => "iteration-cap",
        })
    }
}

/// One entry of the append-only alert log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alert {
    pub id: u64,
    pub kind: AlertKind,
    pub detail: String,
    pub resolved: bool,
    /// Unix seconds; absent in deterministic mode.
    pub timestamp: Option<u64>,
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ALERT {} {}", self.id, self.kind)?;
        if let Some(ts) = self.timestamp {
            write!(f, " @{ts}")?;
        }
        write!(f, " | {}", self.detail)?;
        if self.resolved {
            write!(f, " (resolved)")?;
        }
        Ok(())
    }
}

/// An open question for the administrator: at least one disjunct of the
/// recorded disjunction is a cover story, and only a trusted decision can
/// say which.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingDisjunction {
    pub id: u64,
    pub disjunction: CoverDisjunction,
    pub open: bool,
}

impl fmt::Display for PendingDisjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PENDING {} {} | {}",
            self.id,
            self.disjunction.level,
            self.disjunction.canonical_text()
        )
    }
}

/// How the administrator settles a pending disjunction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SaChoice {
    /// Insert the disjunct at this index as the cover story.
    Choose(usize),
    /// Apply an arbitrary trusted change list instead.
    ExternalAction(Vec<Change>),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AdminError {
    #[error("no pending disjunction with id {id}")]
    UnknownPending { id: u64 },
    #[error("pending disjunction {id} is already closed")]
    AlreadyClosed { id: u64 },
    #[error("choice {index} is out of range for this disjunction")]
    InvalidChoice { index: usize },
    #[error("no such cover declaration")]
    NotFound,
    #[error("a trigger on a pointer declaration is redundant: pointers already survive updates")]
    RedundantTrigger,
    #[error("trigger only applies to cover declarations for facts")]
    TriggerNotApplicable,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl Store {
    /// Appends an alert and its audit line; returns the alert id. Ids are
    /// strictly increasing and the log is append-only.
    pub(crate) fn raise_alert(&mut self, kind: AlertKind, detail: String) -> u64 {
        let id = self.next_alert_id;
        self.next_alert_id += 1;
        let timestamp = if self.deterministic {
            None
        } else {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs())
        };
        let alert = Alert {
            id,
            kind,
            detail,
            resolved: false,
            timestamp,
        };
        self.audit.push(alert.to_string());
        self.alerts.push(alert);
        id
    }

    /// Marks every alert resolved; called when the database is secure at
    /// the top level again.
    pub(crate) fn resolve_alerts(&mut self) {
        for alert in &mut self.alerts {
            alert.resolved = true;
        }
    }

    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn audit(&self) -> &[String] {
        &self.audit
    }

    /// Takes the buffered audit lines, leaving the buffer empty. Callers
    /// append them to the on-disk log.
    pub fn drain_audit(&mut self) -> Vec<String> {
        std::mem::take(&mut self.audit)
    }

    /// The open pending disjunctions visible at a clearance: exactly those
    /// whose level the clearance dominates.
    pub fn list_pending(&self, clearance: &Level) -> Vec<&PendingDisjunction> {
        let lattice = self.db.lattice();
        self.pendings
            .iter()
            .filter(|p| p.open)
            .filter(|p| {
                lattice
                    .dominates(clearance, &p.disjunction.level)
                    .unwrap_or(false)
            })
            .collect()
    }

    /// Settles one pending disjunction with a trusted decision, then
    /// re-checks and, if needed, re-restores the database. On error the
    /// entry stays open and the database is unchanged.
    pub fn sa_resolve(&mut self, id: u64, choice: SaChoice) -> Result<Database, AdminError> {
        let position = self
            .pendings
            .iter()
            .position(|p| p.id == id)
            .ok_or(AdminError::UnknownPending { id })?;
        if !self.pendings[position].open {
            return Err(AdminError::AlreadyClosed { id });
        }
        let changes = match choice {
            SaChoice::Choose(index) => {
                let option = self.pendings[position]
                    .disjunction
                    .options
                    .get(index)
                    .ok_or(AdminError::InvalidChoice { index })?;
                vec![Change::InsertCover(option.decl.clone())]
            }
            SaChoice::ExternalAction(changes) => changes,
        };
        let mut scratch = self.db.clone();
        for change in &changes {
            scratch = scratch.apply_change(change)?;
        }
        self.db = scratch;
        self.pendings[position].open = false;
        self.restore_now();
        Ok(self.db.clone())
    }

    /// Applies a trusted change list outside any pending entry (the
    /// administrator reversing or correcting earlier repairs), then
    /// re-checks and, if needed, re-restores.
    pub fn sa_apply(&mut self, changes: &[Change]) -> Result<Database, AdminError> {
        let mut scratch = self.db.clone();
        for change in changes {
            scratch = scratch.apply_change(change)?;
        }
        self.db = scratch;
        self.restore_now();
        Ok(self.db.clone())
    }

    /// Sets the trigger flag on an existing cover declaration for a fact,
    /// so later updates of the protected fact carry the declaration along.
    pub fn register_trigger(
        &mut self,
        target: &CoverTarget,
        level: &Level,
    ) -> Result<Database, AdminError> {
        match target {
            CoverTarget::Pointer { .. } => return Err(AdminError::RedundantTrigger),
            CoverTarget::Constraint(_) => return Err(AdminError::TriggerNotApplicable),
            CoverTarget::Fact(_) => {}
        }
        let Some(decl) = self.db.find_cover(target, level).cloned() else {
            return Err(AdminError::NotFound);
        };
        if decl.trigger {
            return Ok(self.db.clone());
        }
        self.db = self.db.apply_unchecked(&Change::DeleteCover(decl.clone()));
        self.db = self
            .db
            .apply_unchecked(&Change::InsertCover(CoverStoryDecl {
                trigger: true,
                ..decl
            }));
        Ok(self.db.clone())
    }
}
