//! Single-level transactions.
//!
//! A user cleared at level `c` opens a transaction at some level `l ≤ c`.
//! Within the transaction, reads see the level-`l` view of the working
//! snapshot and writes must target level `l` exactly, so a session can
//! neither observe higher data nor plant lower data. Validation runs
//! against the view, not the whole database: whether a write is accepted
//! must never depend on entries the user is not cleared to see.

use std::fmt;

use thiserror::Error;

use crate::guard::view_at;
use crate::lattice::Level;
use crate::model::{
    Atom, Change, ClassifiedFact, Constant, CoverStoryDecl, CoverTarget, Database, ModelError,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TxnError {
    #[error("clearance {clearance} does not dominate transaction level {level}")]
    ClearanceTooLow { clearance: Level, level: Level },
    #[error("transaction at level {expected} cannot write at level {found}")]
    WrongLevelWrite { expected: Level, found: Level },
    #[error("the database changed since this transaction began")]
    Stale,
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A fact pattern for transaction reads: `None` arguments are wildcards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadPattern {
    pub predicate: String,
    pub args: Vec<Option<Constant>>,
}

impl ReadPattern {
    fn matches_args(&self, args: &[Constant]) -> bool {
        self.args.len() == args.len()
            && self
                .args
                .iter()
                .zip(args)
                .all(|(pattern, arg)| pattern.as_ref().is_none_or(|c| c == arg))
    }

    fn matches_atom(&self, atom: &Atom) -> bool {
        self.predicate == atom.predicate && self.matches_args(&atom.args)
    }

    /// A pointer declaration matches when the key constants agree and the
    /// pattern leaves the indirect value position open.
    fn matches_pointer(&self, decl: &CoverTarget) -> bool {
        let CoverTarget::Pointer {
            predicate,
            key_args,
            value_position,
            ..
        } = decl
        else {
            return false;
        };
        if self.predicate != *predicate || self.args.len() != key_args.len() + 1 {
            return false;
        }
        if self.args[*value_position].is_some() {
            return false;
        }
        let mut keys = key_args.iter();
        self.args.iter().enumerate().all(|(position, pattern)| {
            if position == *value_position {
                true
            } else {
                let key = keys.next().expect("key count checked above");
                pattern.as_ref().is_none_or(|c| c == key)
            }
        })
    }
}

/// An entry visible to a transaction read.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReadEntry {
    Fact(ClassifiedFact),
    Cover(CoverStoryDecl),
}

impl fmt::Display for ReadEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReadEntry::Fact(x) => x.fmt(f),
            ReadEntry::Cover(x) => x.fmt(f),
        }
    }
}

/// An open transaction over a snapshot. Dropping it is a rollback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    level: Level,
    base: Database,
    working: Database,
    changes: Vec<Change>,
}

/// Opens a transaction at `level` for a user cleared at `clearance`.
pub fn begin(db: &Database, level: &Level, clearance: &Level) -> Result<Transaction, TxnError> {
    if !db.lattice().dominates(clearance, level)? {
        return Err(TxnError::ClearanceTooLow {
            clearance: clearance.clone(),
            level: level.clone(),
        });
    }
    Ok(Transaction {
        level: level.clone(),
        base: db.clone(),
        working: db.clone(),
        changes: Vec::new(),
    })
}

impl Transaction {
    pub fn level(&self) -> &Level {
        &self.level
    }

    pub fn base(&self) -> &Database {
        &self.base
    }

    pub fn working(&self) -> &Database {
        &self.working
    }

    pub fn changes(&self) -> &[Change] {
        &self.changes
    }

    /// All facts and cover declarations in the transaction-level view of
    /// the working snapshot that match the pattern.
    pub fn read(&self, pattern: &ReadPattern) -> Vec<ReadEntry> {
        let view = view_at(&self.working, &self.level).expect("transaction level is validated");
        let mut out: Vec<ReadEntry> = Vec::new();
        for fact in view.facts() {
            if pattern.matches_atom(&fact.atom) {
                out.push(ReadEntry::Fact(fact.clone()));
            }
        }
        for decl in view.covers() {
            let hit = match &decl.target {
                CoverTarget::Fact(atom) => pattern.matches_atom(atom),
                CoverTarget::Pointer { .. } => pattern.matches_pointer(&decl.target),
                CoverTarget::Constraint(_) => false,
            };
            if hit {
                out.push(ReadEntry::Cover(decl.clone()));
            }
        }
        out.sort();
        out
    }

    /// Appends one change. The change must sit exactly at the transaction
    /// level and be valid against the transaction-level view, so failures
    /// reveal nothing about higher levels.
    pub fn write(&mut self, change: Change) -> Result<(), TxnError> {
        for level in change.levels() {
            if *level != self.level {
                return Err(TxnError::WrongLevelWrite {
                    expected: self.level.clone(),
                    found: level.clone(),
                });
            }
        }
        let view = view_at(&self.working, &self.level).expect("transaction level is validated");
        view.validate_change(&change)?;
        self.working = self.working.apply_unchecked(&change);
        self.changes.push(change);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_atom, parse_database};

    fn example_db() -> Database {
        parse_database(
            "\
lattice { levels: U, S; order: U < S; }
constraint [U] forall x, y, y2: Salary(x, y) & Salary(x, y2) -> y = y2;
fact [U] Employee(Dupont);
fact [U] Salary(Dupont, 1500);
fact [S] Salary(Dupont, 2000);
cover fact [S] Salary(Dupont, 1500);
",
        )
        .unwrap()
    }

    fn salary_pattern() -> ReadPattern {
        ReadPattern {
            predicate: "Salary".to_string(),
            args: vec![Some(Constant::Symbol("Dupont".to_string())), None],
        }
    }

    #[test]
    fn begin_requires_dominating_clearance() {
        let db = example_db();
        assert!(begin(&db, &"U".into(), &"S".into()).is_ok());
        assert!(begin(&db, &"U".into(), &"U".into()).is_ok());
        assert_eq!(
            begin(&db, &"S".into(), &"U".into()),
            Err(TxnError::ClearanceTooLow {
                clearance: "U".into(),
                level: "S".into(),
            })
        );
        assert!(matches!(
            begin(&db, &"T".into(), &"T".into()),
            Err(TxnError::Lattice(_))
        ));
    }

    #[test]
    fn low_read_sees_only_the_cover_story() {
        let db = example_db();
        let txn = begin(&db, &"U".into(), &"U".into()).unwrap();
        let entries = txn.read(&salary_pattern());
        assert_eq!(
            entries.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            vec!["fact [U] Salary(Dupont, 1500)"]
        );
    }

    #[test]
    fn high_read_sees_both_salaries_and_the_declaration() {
        let db = example_db();
        let txn = begin(&db, &"S".into(), &"S".into()).unwrap();
        let entries = txn.read(&salary_pattern());
        assert_eq!(
            entries.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            vec![
                "fact [U] Salary(Dupont, 1500)",
                "fact [S] Salary(Dupont, 2000)",
                "cover fact [S] Salary(Dupont, 1500)",
            ]
        );
    }

    #[test]
    fn pointer_declarations_match_open_value_positions() {
        let db = parse_database(
            "\
lattice { levels: U, S; order: U < S; }
fact [U] Salary(Dupont, 1500);
cover pointer [S] Salary(Dupont, @U);
",
        )
        .unwrap();
        let txn = begin(&db, &"S".into(), &"S".into()).unwrap();
        let entries = txn.read(&salary_pattern());
        assert_eq!(
            entries.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            vec![
                "fact [U] Salary(Dupont, 1500)",
                "cover pointer [S] Salary(Dupont, @U)",
            ]
        );
        // a bound value position cannot match the indirection
        let bound = ReadPattern {
            predicate: "Salary".to_string(),
            args: vec![
                Some(Constant::Symbol("Dupont".to_string())),
                Some(Constant::Int(1500)),
            ],
        };
        assert_eq!(
            txn.read(&bound)
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>(),
            vec!["fact [U] Salary(Dupont, 1500)"]
        );
    }

    #[test]
    fn writes_must_target_the_transaction_level() {
        let db = example_db();
        let mut txn = begin(&db, &"U".into(), &"S".into()).unwrap();
        let err = txn
            .write(Change::InsertFact(ClassifiedFact {
                atom: parse_atom("Employee(Durand)").unwrap(),
                level: "S".into(),
            }))
            .unwrap_err();
        assert_eq!(
            err,
            TxnError::WrongLevelWrite {
                expected: "U".into(),
                found: "S".into(),
            }
        );
    }

    #[test]
    fn write_validation_is_scoped_to_the_view() {
        let db = example_db();
        // Salary(Dupont, 2000) exists at S; a U-level insert of the same
        // atom must not be refused, or the refusal would leak S data
        let mut txn = begin(&db, &"U".into(), &"S".into()).unwrap();
        txn.write(Change::InsertFact(ClassifiedFact {
            atom: parse_atom("Salary(Dupont, 2000)").unwrap(),
            level: "U".into(),
        }))
        .unwrap();
        // a duplicate visible in the view is still refused
        let err = txn
            .write(Change::InsertFact(ClassifiedFact {
                atom: parse_atom("Salary(Dupont, 1500)").unwrap(),
                level: "U".into(),
            }))
            .unwrap_err();
        assert!(matches!(
            err,
            TxnError::Model(ModelError::DuplicateEntry { .. })
        ));
        // deleting something only present above the level is "not found"
        let mut high_only = begin(&db, &"U".into(), &"S".into()).unwrap();
        let err = high_only
            .write(Change::DeleteFact(ClassifiedFact {
                atom: parse_atom("Salary(Dupont, 2000)").unwrap(),
                level: "U".into(),
            }))
            .unwrap_err();
        assert!(matches!(err, TxnError::Model(ModelError::NotFound { .. })));
    }

    #[test]
    fn reads_reflect_pending_writes() {
        let db = example_db();
        let mut txn = begin(&db, &"U".into(), &"U".into()).unwrap();
        txn.write(Change::UpdateFact {
            old: ClassifiedFact {
                atom: parse_atom("Salary(Dupont, 1500)").unwrap(),
                level: "U".into(),
            },
            new: ClassifiedFact {
                atom: parse_atom("Salary(Dupont, 1600)").unwrap(),
                level: "U".into(),
            },
        })
        .unwrap();
        let entries = txn.read(&salary_pattern());
        assert_eq!(
            entries.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
            vec!["fact [U] Salary(Dupont, 1600)"]
        );
        assert_eq!(txn.changes().len(), 1);
        // the snapshot it began from is untouched
        assert_eq!(txn.base(), &example_db());
    }
}
