//! Embeddable multilevel-secure datastore with explicit cover story
//! management.
//!
//! Data lives in one database value holding classified facts, classified
//! integrity constraints, and cover-story declarations over a finite
//! security lattice. Instead of letting lies accumulate implicitly as
//! polyinstantiated tuples, the store tracks which entries are cover
//! stories, evaluates each clearance level's view against the real world
//! that remains, and repairs security automatically after updates.
//!
//! Modules, bottom up:
//!
//! - [`lattice`]: finite security lattices with unique joins and meets
//! - [`model`]: atoms, constraint formulas, cover declarations, databases
//! - [`lang`]: the text format (parser and canonical serializer)
//! - [`eval`]: constraint evaluation over a fact set
//! - [`guard`]: level views, real worlds, consistency and security reports
//! - [`restore`]: post-update repair and the cover-rule derivation
//! - [`txn`]: single-level transactions gated by clearance
//! - [`store`]: the engine facade tying commits to restoration
//! - [`admin`]: alerts, pending decisions, security-administrator actions

pub mod admin;
pub mod eval;
pub mod guard;
pub mod lang;
pub mod lattice;
pub mod model;
pub mod restore;
pub mod store;
pub mod txn;

pub use admin::{AdminError, Alert, AlertKind, PendingDisjunction, SaChoice};
#[cfg(feature = "parallel")]
pub use eval::{par_satisfies, par_violations};
pub use eval::{satisfies, violations, EvalError, Violation, ViolationKind};
pub use guard::{
    classification_conflicts, is_consistent, is_secure, real_world, same_level_cover_conflicts,
    stale_cover_decls, view_at, ConsistencyReport, RealWorld, SecurityReport,
};
pub use lang::{parse_atom, parse_database, parse_formula, serialize, LangError, SourceSpan};
pub use lattice::{Lattice, LatticeError, Level};
pub use model::{
    Atom, Change, ClassifiedConstraint, ClassifiedFact, Constant, CoverStoryDecl, CoverTarget,
    Database, Formula, HeadDisjunct, ModelError, PatternAtom, Payload, Term,
};
pub use restore::{
    derive_disjunction, find_mus, restore, ActionReason, ActionRecord, CoverDisjunction,
    CoverOption, MinimalInconsistentSet, RepairAction, Resolution, ResolutionPolicy, RestoreConfig,
    RestoreOutcome, RestoreStatus,
};
pub use store::{CommitOutcome, Store};
pub use txn::{begin, ReadEntry, ReadPattern, Transaction, TxnError};
