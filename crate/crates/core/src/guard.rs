//! Level views, real worlds, and the consistency and security checks.
//!
//! A view at level `l` keeps exactly the entries classified at levels `l`
//! dominates. The real world of a database (usually of a view) drops every
//! payload that a strictly higher cover declaration marks as a lie; what
//! remains is checked for internal coherence:
//!
//! - no fact or constraint classified at two distinct comparable levels,
//! - no cover declaration without the lower-level payload it covers,
//! - every real constraint satisfied by the real facts.
//!
//! A database is secure at `l` when the views at `l` and every level below
//! it are all consistent, so no level can infer covered data from what it
//! sees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::eval::{violations_engine, Violation};
use crate::lattice::{Lattice, LatticeError, Level};
use crate::model::{Atom, CoverStoryDecl, CoverTarget, Database, Formula, Payload};

/// What remains once cover stories are stripped away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealWorld {
    pub real_facts: BTreeSet<Atom>,
    pub real_constraints: BTreeSet<Formula>,
}

/// Consistency findings for one database (typically a view).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyReport {
    /// Payloads classified at two distinct comparable levels, as
    /// `(payload, lower, higher)`.
    pub classification_conflicts: Vec<(Payload, Level, Level)>,
    /// Cover declarations whose covered payload is missing below them.
    pub stale_covers: Vec<CoverStoryDecl>,
    /// Real constraints violated by the real facts.
    pub constraint_violations: Vec<Violation>,
    pub consistent: bool,
}

/// Per-level consistency of every view a clearance can see.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityReport {
    pub level: Level,
    pub per_level: BTreeMap<Level, ConsistencyReport>,
    pub secure: bool,
}

/// The sub-database visible at clearance `l`: entries classified at levels
/// `l` dominates, over the unchanged lattice.
pub fn view_at(db: &Database, l: &Level) -> Result<Database, LatticeError> {
    let lattice = db.lattice();
    if !lattice.contains(l) {
        return Err(LatticeError::UnknownLevel(l.clone()));
    }
    let keep = |level: &Level| lattice.ge(l, level);
    Ok(Database::from_parts(
        lattice.clone(),
        db.facts().filter(|f| keep(&f.level)).cloned().collect(),
        db.constraints()
            .filter(|c| keep(&c.level))
            .cloned()
            .collect(),
        db.cover_facts()
            .filter(|d| keep(&d.level))
            .cloned()
            .collect(),
        db.cover_constraints()
            .filter(|d| keep(&d.level))
            .cloned()
            .collect(),
    ))
}

fn pointer_matches(target: &CoverTarget, atom: &Atom) -> bool {
    let CoverTarget::Pointer {
        predicate,
        key_args,
        value_position,
        ..
    } = target
    else {
        return false;
    };
    if &atom.predicate != predicate || atom.args.len() != key_args.len() + 1 {
        return false;
    }
    let mut keys = key_args.iter();
    atom.args.iter().enumerate().all(|(i, arg)| {
        if i == *value_position {
            true
        } else {
            keys.next() == Some(arg)
        }
    })
}

/// True iff the declaration marks the classification `(atom, level)` as a
/// lie: it must sit strictly above the classification and match it.
fn covers_fact_at(decl: &CoverStoryDecl, lattice: &Lattice, atom: &Atom, level: &Level) -> bool {
    if !lattice.gt(&decl.level, level) {
        return false;
    }
    match &decl.target {
        CoverTarget::Fact(covered) => covered == atom,
        CoverTarget::Pointer { source_level, .. } => {
            source_level == level && pointer_matches(&decl.target, atom)
        }
        CoverTarget::Constraint(_) => false,
    }
}

/// Strips cover stories: a payload is real when at least one of its
/// classifications has no strictly dominating cover declaration for it.
pub fn real_world(db: &Database) -> RealWorld {
    let lattice = db.lattice();
    let mut fact_levels: BTreeMap<&Atom, Vec<&Level>> = BTreeMap::new();
    for f in db.facts() {
        fact_levels.entry(&f.atom).or_default().push(&f.level);
    }
    let cover_facts: Vec<&CoverStoryDecl> = db.cover_facts().collect();
    let real_facts = fact_levels
        .into_iter()
        .filter(|(atom, levels)| {
            levels.iter().any(|level| {
                !cover_facts
                    .iter()
                    .any(|decl| covers_fact_at(decl, lattice, atom, level))
            })
        })
        .map(|(atom, _)| atom.clone())
        .collect();

    let mut constraint_levels: BTreeMap<&Formula, Vec<&Level>> = BTreeMap::new();
    for c in db.constraints() {
        constraint_levels
            .entry(&c.formula)
            .or_default()
            .push(&c.level);
    }
    let cover_constraints: Vec<&CoverStoryDecl> = db.cover_constraints().collect();
    let real_constraints = constraint_levels
        .into_iter()
        .filter(|(formula, levels)| {
            levels.iter().any(|level| {
                !cover_constraints.iter().any(|decl| {
                    lattice.gt(&decl.level, level)
                        && matches!(&decl.target, CoverTarget::Constraint(f) if f == *formula)
                })
            })
        })
        .map(|(formula, _)| formula.clone())
        .collect();

    RealWorld {
        real_facts,
        real_constraints,
    }
}

/// Every payload classified at two distinct comparable levels, reported as
/// `(payload, lower, higher)` and ordered by payload text.
pub fn classification_conflicts(db: &Database) -> Vec<(Payload, Level, Level)> {
    let lattice = db.lattice();
    let mut out: Vec<(Payload, Level, Level)> = Vec::new();
    let mut scan = |groups: BTreeMap<Payload, Vec<&Level>>| {
        for (payload, levels) in groups {
            for (i, a) in levels.iter().enumerate() {
                for b in &levels[i + 1..] {
                    if a != b && lattice.comparable(a, b).unwrap_or(false) {
                        let (lo, hi) = if lattice.ge(b, a) { (a, b) } else { (b, a) };
                        out.push((payload.clone(), (*lo).clone(), (*hi).clone()));
                    }
                }
            }
        }
    };
    let mut facts: BTreeMap<Payload, Vec<&Level>> = BTreeMap::new();
    for f in db.facts() {
        facts
            .entry(Payload::Fact(f.atom.clone()))
            .or_default()
            .push(&f.level);
    }
    scan(facts);
    let mut constraints: BTreeMap<Payload, Vec<&Level>> = BTreeMap::new();
    for c in db.constraints() {
        constraints
            .entry(Payload::Constraint(c.formula.clone()))
            .or_default()
            .push(&c.level);
    }
    scan(constraints);
    out.sort_by_key(|(p, lo, hi)| (p.to_string(), lo.clone(), hi.clone()));
    out
}

/// True iff the declaration has the lower-level payload it claims to cover.
pub(crate) fn cover_is_grounded(db: &Database, decl: &CoverStoryDecl) -> bool {
    let lattice = db.lattice();
    match &decl.target {
        CoverTarget::Fact(atom) => db
            .facts()
            .any(|f| &f.atom == atom && lattice.gt(&decl.level, &f.level)),
        CoverTarget::Constraint(formula) => db
            .constraints()
            .any(|c| &c.formula == formula && lattice.gt(&decl.level, &c.level)),
        CoverTarget::Pointer { source_level, .. } => {
            lattice.gt(&decl.level, source_level)
                && db
                    .facts()
                    .any(|f| &f.level == source_level && pointer_matches(&decl.target, &f.atom))
        }
    }
}

/// Every cover declaration whose covered payload is missing: nothing with a
/// matching payload is classified strictly below the declaration.
pub fn stale_cover_decls(db: &Database) -> Vec<CoverStoryDecl> {
    let mut out: Vec<CoverStoryDecl> = db
        .covers()
        .filter(|decl| !cover_is_grounded(db, decl))
        .cloned()
        .collect();
    out.sort_by_key(|d| (d.target.to_string(), d.level.clone()));
    out
}

/// Payloads that are classified at a level and cover-declared at the very
/// same level. A database passing both structural checks never has any;
/// exposed so that fact can be asserted.
pub fn same_level_cover_conflicts(db: &Database) -> Vec<(Payload, Level)> {
    let mut out = Vec::new();
    for decl in db.covers() {
        match &decl.target {
            CoverTarget::Fact(atom) => {
                if db.facts().any(|f| &f.atom == atom && f.level == decl.level) {
                    out.push((Payload::Fact(atom.clone()), decl.level.clone()));
                }
            }
            CoverTarget::Constraint(formula) => {
                if db
                    .constraints()
                    .any(|c| &c.formula == formula && c.level == decl.level)
                {
                    out.push((Payload::Constraint(formula.clone()), decl.level.clone()));
                }
            }
            CoverTarget::Pointer { source_level, .. } => {
                if source_level == &decl.level
                    && db
                        .facts()
                        .any(|f| &f.level == source_level && pointer_matches(&decl.target, &f.atom))
                {
                    for f in db.facts() {
                        if &f.level == source_level && pointer_matches(&decl.target, &f.atom) {
                            out.push((Payload::Fact(f.atom.clone()), decl.level.clone()));
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(|(p, l)| (p.to_string(), l.clone()));
    out.dedup();
    out
}

/// Consistency of the database as seen from inside: structural checks plus
/// every real constraint evaluated against the real facts.
pub fn is_consistent(db: &Database) -> ConsistencyReport {
    let classification_conflicts = classification_conflicts(db);
    let stale_covers = stale_cover_decls(db);
    let world = real_world(db);
    let mut constraint_violations = Vec::new();
    for formula in &world.real_constraints {
        constraint_violations.extend(violations_engine(&world.real_facts, formula));
    }
    let consistent = classification_conflicts.is_empty()
        && stale_covers.is_empty()
        && constraint_violations.is_empty();
    ConsistencyReport {
        classification_conflicts,
        stale_covers,
        constraint_violations,
        consistent,
    }
}

/// Security at clearance `l`: every view at or below `l` is consistent.
pub fn is_secure(db: &Database, l: &Level) -> Result<SecurityReport, LatticeError> {
    let lattice = db.lattice().clone();
    if !lattice.contains(l) {
        return Err(LatticeError::UnknownLevel(l.clone()));
    }
    let mut per_level = BTreeMap::new();
    for level in lattice.levels() {
        if lattice.ge(l, level) {
            let view = view_at(db, level).expect("level comes from the lattice");
            per_level.insert(level.clone(), is_consistent(&view));
        }
    }
    let secure = per_level.values().all(|r| r.consistent);
    Ok(SecurityReport {
        level: l.clone(),
        per_level,
        secure,
    })
}

impl ConsistencyReport {
    fn detail_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (payload, lo, hi) in &self.classification_conflicts {
            out.push(format!("classification-conflict {payload} [{lo}] [{hi}]"));
        }
        for decl in &self.stale_covers {
            out.push(format!("stale-cover {decl}"));
        }
        for v in &self.constraint_violations {
            out.push(format!(
                "constraint-violation {} | {}",
                v.constraint,
                v.binding_text()
            ));
        }
        out
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.consistent {
            return write!(f, "consistent");
        }
        writeln!(f, "inconsistent:")?;
        for line in self.detail_lines() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl SecurityReport {
    /// One line per finding plus a per-level status line, for scripted
    /// consumption. Stable across runs.
    pub fn machine_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (level, report) in &self.per_level {
            out.push(format!(
                "level {level}: {}",
                if report.consistent {
                    "consistent"
                } else {
                    "inconsistent"
                }
            ));
            for line in report.detail_lines() {
                out.push(format!("level {level}: {line}"));
            }
        }
        out.push(if self.secure {
            "secure".to_string()
        } else {
            "insecure".to_string()
        });
        out
    }
}

impl fmt::Display for SecurityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (level, report) in &self.per_level {
            if report.consistent {
                writeln!(f, "view at {level}: consistent")?;
            } else {
                writeln!(f, "view at {level}: inconsistent")?;
                for line in report.detail_lines() {
                    writeln!(f, "  {line}")?;
                }
            }
        }
        write!(f, "{}", if self.secure { "secure" } else { "insecure" })
    }
}
