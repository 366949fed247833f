//! The engine facade: a single-writer store that owns the current
//! database, serializes commits, gates them on transaction-level security,
//! and invokes restoration plus the administrator channel when a commit
//! leaves the whole database insecure.

use crate::admin::{Alert, AlertKind, PendingDisjunction};
use crate::guard::{is_secure, SecurityReport};
use crate::lattice::Level;
use crate::model::{Change, CoverStoryDecl, CoverTarget, Database};
use crate::restore::{restore, RestoreConfig, RestoreOutcome, RestoreStatus};
use crate::txn::{Transaction, TxnError};

/// Result of committing a transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommitOutcome {
    Committed {
        /// The installed database, after any restoration.
        database: Database,
        /// Whether the database was secure at the top level right after
        /// installation, before restoration.
        global_secure: bool,
        /// The alert raised when it was not.
        alert_id: Option<u64>,
    },
    Rejected {
        /// The transaction-level security report that refused the commit.
        report: SecurityReport,
    },
}

/// Owns the database and the administrator state. All mutation funnels
/// through this one value; readers clone snapshots and never block it.
#[derive(Debug, Clone)]
pub struct Store {
    pub(crate) db: Database,
    pub(crate) config: RestoreConfig,
    pub(crate) deterministic: bool,
    pub(crate) alerts: Vec<Alert>,
    pub(crate) pendings: Vec<PendingDisjunction>,
    pub(crate) audit: Vec<String>,
    pub(crate) next_alert_id: u64,
    pub(crate) next_pending_id: u64,
}

impl Store {
    pub fn new(db: Database) -> Store {
        Store::with_config(db, RestoreConfig::default(), false)
    }

    pub fn with_config(db: Database, config: RestoreConfig, deterministic: bool) -> Store {
        Store {
            db,
            config,
            deterministic,
            alerts: Vec::new(),
            pendings: Vec::new(),
            audit: Vec::new(),
            next_alert_id: 1,
            next_pending_id: 1,
        }
    }

    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn config(&self) -> &RestoreConfig {
        &self.config
    }

    /// Opens a transaction over the current snapshot.
    pub fn begin(&self, level: &Level, clearance: &Level) -> Result<Transaction, TxnError> {
        crate::txn::begin(&self.db, level, clearance)
    }

    /// Commits a transaction: the candidate database must be secure at the
    /// transaction level, or the store stays untouched. After installation
    /// the whole database is checked at the top level; if the commit
    /// created an inference channel higher up, an alert is raised and the
    /// restoration algorithm runs as a trusted component.
    pub fn commit(&mut self, txn: Transaction) -> Result<CommitOutcome, TxnError> {
        if txn.base() != &self.db {
            return Err(TxnError::Stale);
        }
        let mut candidate = txn.working().clone();
        let gate = is_secure(&candidate, txn.level()).expect("transaction level is validated");
        if !gate.secure {
            return Ok(CommitOutcome::Rejected { report: gate });
        }
        for change in trigger_changes(&candidate, &txn) {
            candidate = candidate.apply_unchecked(&change);
        }
        self.db = candidate;

        let top = self.db.lattice().top().clone();
        let report = is_secure(&self.db, &top).expect("top level always exists");
        if report.secure {
            return Ok(CommitOutcome::Committed {
                database: self.db.clone(),
                global_secure: true,
                alert_id: None,
            });
        }
        let inconsistent: Vec<String> = report
            .per_level
            .iter()
            .filter(|(_, r)| !r.consistent)
            .map(|(l, _)| l.to_string())
            .collect();
        let alert_id = self.raise_alert(
            AlertKind::PostCommitInsecure,
            format!(
                "commit at level {} left inconsistent views at: {}",
                txn.level(),
                inconsistent.join(", ")
            ),
        );
        let (restored, outcome) = restore(&self.db, &self.config);
        self.db = restored;
        self.register_restore(&outcome);
        Ok(CommitOutcome::Committed {
            database: self.db.clone(),
            global_secure: false,
            alert_id: Some(alert_id),
        })
    }

    /// Runs restoration outside the commit path (trusted callers only),
    /// recording its outcome like a post-commit run would.
    pub(crate) fn restore_now(&mut self) -> RestoreStatus {
        let (restored, outcome) = restore(&self.db, &self.config);
        self.db = restored;
        self.register_restore(&outcome);
        outcome.status
    }

    /// Records restoration results: audit lines for every action, the
    /// pending registry reconciled to the surviving disjunctions, and
    /// alerts for empty disjunctions and iteration caps.
    fn register_restore(&mut self, outcome: &RestoreOutcome) {
        for action in &outcome.actions {
            self.audit.push(format!("ACTION {action}"));
        }
        match &outcome.status {
            RestoreStatus::Secured => {
                for pending in &mut self.pendings {
                    pending.open = false;
                }
                self.resolve_alerts();
            }
            RestoreStatus::Pending {
                disjunctions,
                iteration_capped,
            } => {
                for pending in &mut self.pendings {
                    if pending.open && !disjunctions.contains(&pending.disjunction) {
                        pending.open = false;
                    }
                }
                for disjunction in disjunctions {
                    let already_open = self
                        .pendings
                        .iter()
                        .any(|p| p.open && p.disjunction == *disjunction);
                    if already_open {
                        continue;
                    }
                    let id = self.next_pending_id;
                    self.next_pending_id += 1;
                    self.audit.push(format!(
                        "PENDING {id} {} | {}",
                        disjunction.level,
                        disjunction.canonical_text()
                    ));
                    if disjunction.is_empty() {
                        self.raise_alert(
                            AlertKind::EmptyDisjunction,
                            format!(
                                "no candidate cover declarations for the inconsistency at {}",
                                disjunction.level
                            ),
                        );
                    }
                    self.pendings.push(PendingDisjunction {
                        id,
                        disjunction: disjunction.clone(),
                        open: true,
                    });
                }
                if *iteration_capped {
                    self.raise_alert(
                        AlertKind::IterationCap,
                        "restoration stopped at the iteration bound with open disjunctions"
                            .to_string(),
                    );
                }
            }
        }
    }
}

/// The change sequence the update triggers demand: for every update whose
/// old value is protected by a trigger-flagged cover declaration strictly
/// above the transaction level, the declaration follows the value. The
/// committing user's view never contains these declarations, so the hook
/// leaks nothing downward.
fn trigger_changes(candidate: &Database, txn: &Transaction) -> Vec<Change> {
    let lattice = candidate.lattice().clone();
    let mut decls: Vec<CoverStoryDecl> = candidate.covers().cloned().collect();
    let mut changes = Vec::new();
    for change in txn.changes() {
        let Change::UpdateFact { old, new } = change else {
            continue;
        };
        let firing: Vec<CoverStoryDecl> = decls
            .iter()
            .filter(|d| {
                d.trigger
                    && lattice.gt(&d.level, txn.level())
                    && d.target == CoverTarget::Fact(old.atom.clone())
            })
            .cloned()
            .collect();
        for decl in firing {
            let successor = CoverStoryDecl {
                target: CoverTarget::Fact(new.atom.clone()),
                level: decl.level.clone(),
                trigger: true,
            };
            changes.push(Change::DeleteCover(decl.clone()));
            decls.retain(|d| d != &decl);
            // a declaration with the successor's identity may already
            // exist; it is replaced so the flag carries over
            if let Some(existing) = decls
                .iter()
                .find(|d| d.target == successor.target && d.level == successor.level)
                .cloned()
            {
                changes.push(Change::DeleteCover(existing.clone()));
                decls.retain(|d| d != &existing);
            }
            changes.push(Change::InsertCover(successor.clone()));
            decls.push(successor);
        }
    }
    changes
}
