//! Core data model: constants, atoms, constraint formulas, classified
//! entries, cover-story declarations, and the immutable database value.
//!
//! A database is four sets over one lattice: classified facts, classified
//! integrity constraints, cover declarations for facts (including pointer
//! declarations), and cover declarations for constraints. Mutation goes
//! through [`Database::apply_change`], which validates and returns a new
//! snapshot; existing snapshots are never modified.
//!
//! Formulas are stored alpha-canonicalized: variables are renamed `x0, x1,
//! ...` in order of first occurrence (body first, then head), so structural
//! equality is equality up to variable renaming.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lattice::{Lattice, Level};

/// A ground constant: an integer or a symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constant {
    Int(i64),
    Symbol(String),
}

impl Ord for Constant {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use Constant::*;
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Symbol(a), Symbol(b)) => a.cmp(b),
            (Int(_), Symbol(_)) => std::cmp::Ordering::Less,
            (Symbol(_), Int(_)) => std::cmp::Ordering::Greater,
        }
    }
}

impl PartialOrd for Constant {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Int(n) => write!(f, "{n}"),
            Constant::Symbol(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Constant {
    fn from(s: &str) -> Self {
        Constant::Symbol(s.to_string())
    }
}

impl From<i64> for Constant {
    fn from(n: i64) -> Self {
        Constant::Int(n)
    }
}

/// A ground atom: predicate applied to constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Constant>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Constant>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A term inside a formula: a variable or a constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(Constant),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// An atom pattern over variables and constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatternAtom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl PatternAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        PatternAtom {
            predicate: predicate.into(),
            args,
        }
    }
}

impl fmt::Display for PatternAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// One disjunct of a constraint head.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HeadDisjunct {
    /// Term equality between variables and constants.
    Equal(Term, Term),
    Atom(PatternAtom),
    /// An existential block: `exists vars: atom & atom & ...`.
    Exists {
        vars: Vec<String>,
        atoms: Vec<PatternAtom>,
    },
}

impl fmt::Display for HeadDisjunct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadDisjunct::Equal(a, b) => write!(f, "{a} = {b}"),
            HeadDisjunct::Atom(p) => write!(f, "{p}"),
            HeadDisjunct::Exists { vars, atoms } => {
                f.write_str("exists ")?;
                for (i, v) in vars.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(v)?;
                }
                f.write_str(": ")?;
                for (i, a) in atoms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    write!(f, "{a}")?;
                }
                Ok(())
            }
        }
    }
}

/// A universally quantified implication constraint:
/// `forall vars: body-conjunction -> head-disjunction`.
///
/// Stored in canonical form; construct via [`Formula::new`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Formula {
    universals: Vec<String>,
    body: Vec<PatternAtom>,
    head: Vec<HeadDisjunct>,
}

impl Formula {
    /// Validates and canonicalizes a formula: body and head non-empty, every
    /// variable bound, binders unshadowed, predicate arities consistent.
    pub fn new(
        universals: Vec<String>,
        body: Vec<PatternAtom>,
        head: Vec<HeadDisjunct>,
    ) -> Result<Self, ModelError> {
        if universals.is_empty() {
            return Err(ModelError::InvalidFormula {
                reason: "no quantified variables".to_string(),
            });
        }
        if body.is_empty() {
            return Err(ModelError::InvalidFormula {
                reason: "empty body".to_string(),
            });
        }
        if head.is_empty() {
            return Err(ModelError::InvalidFormula {
                reason: "empty head".to_string(),
            });
        }
        let mut bound: BTreeSet<&str> = BTreeSet::new();
        for v in &universals {
            if !bound.insert(v) {
                return Err(ModelError::DuplicateBinder {
                    variable: v.clone(),
                });
            }
        }
        let check_vars = |atoms: &[PatternAtom], scope: &BTreeSet<&str>| {
            for p in atoms {
                for t in &p.args {
                    if let Term::Var(v) = t {
                        if !scope.contains(v.as_str()) {
                            return Err(ModelError::UnboundVariable {
                                variable: v.clone(),
                            });
                        }
                    }
                }
            }
            Ok(())
        };
        check_vars(&body, &bound)?;
        for d in &head {
            match d {
                HeadDisjunct::Equal(a, b) => {
                    for t in [a, b] {
                        if let Term::Var(v) = t {
                            if !bound.contains(v.as_str()) {
                                return Err(ModelError::UnboundVariable {
                                    variable: v.clone(),
                                });
                            }
                        }
                    }
                }
                HeadDisjunct::Atom(p) => check_vars(std::slice::from_ref(p), &bound)?,
                HeadDisjunct::Exists { vars, atoms } => {
                    let mut scope = bound.clone();
                    for v in vars {
                        if !scope.insert(v) {
                            return Err(ModelError::DuplicateBinder {
                                variable: v.clone(),
                            });
                        }
                    }
                    check_vars(atoms, &scope)?;
                }
            }
        }
        let mut arities: BTreeMap<String, usize> = BTreeMap::new();
        let mut check_arity = |p: &PatternAtom| -> Result<(), ModelError> {
            match arities.get(&p.predicate) {
                Some(&n) if n != p.args.len() => Err(ModelError::ArityMismatch {
                    predicate: p.predicate.clone(),
                    expected: n,
                    found: p.args.len(),
                }),
                Some(_) => Ok(()),
                None => {
                    arities.insert(p.predicate.clone(), p.args.len());
                    Ok(())
                }
            }
        };
        for p in &body {
            check_arity(p)?;
        }
        for d in &head {
            match d {
                HeadDisjunct::Atom(p) => check_arity(p)?,
                HeadDisjunct::Exists { atoms, .. } => {
                    for p in atoms {
                        check_arity(p)?;
                    }
                }
                HeadDisjunct::Equal(..) => {}
            }
        }
        Ok(Self::canonicalize(universals, body, head))
    }

    /// Renames all variables to `x0, x1, ...` in first-occurrence order
    /// (body atoms left to right, then head disjuncts), existential binders
    /// sharing the counter. The universal list is emitted in assignment
    /// order, so the canonical form is a fixpoint of re-parsing.
    fn canonicalize(
        universals: Vec<String>,
        body: Vec<PatternAtom>,
        head: Vec<HeadDisjunct>,
    ) -> Self {
        let is_universal: BTreeSet<&str> = universals.iter().map(|s| s.as_str()).collect();
        let mut counter = 0usize;
        let mut global: BTreeMap<String, String> = BTreeMap::new();

        let rename_universal =
            |v: &str, global: &mut BTreeMap<String, String>, counter: &mut usize| -> String {
                if let Some(n) = global.get(v) {
                    return n.clone();
                }
                let name = format!("x{counter}");
                *counter += 1;
                global.insert(v.to_string(), name.clone());
                name
            };

        let rename_atoms = |atoms: &[PatternAtom],
                            local: &BTreeMap<String, String>,
                            global: &mut BTreeMap<String, String>,
                            counter: &mut usize|
         -> Vec<PatternAtom> {
            atoms
                .iter()
                .map(|p| PatternAtom {
                    predicate: p.predicate.clone(),
                    args: p
                        .args
                        .iter()
                        .map(|t| match t {
                            Term::Const(c) => Term::Const(c.clone()),
                            Term::Var(v) => {
                                if let Some(n) = local.get(v) {
                                    Term::Var(n.clone())
                                } else if is_universal.contains(v.as_str()) {
                                    Term::Var(rename_universal(v, global, counter))
                                } else {
                                    // bound variables were validated; an
                                    // existential var always hits `local`
                                    Term::Var(v.clone())
                                }
                            }
                        })
                        .collect(),
                })
                .collect()
        };

        let empty = BTreeMap::new();
        let new_body = rename_atoms(&body, &empty, &mut global, &mut counter);
        let mut new_head = Vec::with_capacity(head.len());
        for d in &head {
            match d {
                HeadDisjunct::Equal(a, b) => {
                    let mut ren = |t: &Term| match t {
                        Term::Const(c) => Term::Const(c.clone()),
                        Term::Var(v) => Term::Var(rename_universal(v, &mut global, &mut counter)),
                    };
                    new_head.push(HeadDisjunct::Equal(ren(a), ren(b)));
                }
                HeadDisjunct::Atom(p) => {
                    let mut v =
                        rename_atoms(std::slice::from_ref(p), &empty, &mut global, &mut counter);
                    new_head.push(HeadDisjunct::Atom(v.pop().expect("one atom in, one out")));
                }
                HeadDisjunct::Exists { vars, atoms } => {
                    // binders renamed in first-occurrence order within the
                    // block, unused binders after, in declared order
                    let mut local: BTreeMap<String, String> = BTreeMap::new();
                    let mut order: Vec<String> = Vec::new();
                    let binder_set: BTreeSet<&str> = vars.iter().map(|s| s.as_str()).collect();
                    for p in atoms {
                        for t in &p.args {
                            if let Term::Var(v) = t {
                                if binder_set.contains(v.as_str()) && !local.contains_key(v) {
                                    let name = format!("x{counter}");
                                    counter += 1;
                                    local.insert(v.clone(), name.clone());
                                    order.push(name);
                                }
                            }
                        }
                    }
                    for v in vars {
                        if !local.contains_key(v) {
                            let name = format!("x{counter}");
                            counter += 1;
                            local.insert(v.clone(), name.clone());
                            order.push(name);
                        }
                    }
                    let new_atoms = rename_atoms(atoms, &local, &mut global, &mut counter);
                    new_head.push(HeadDisjunct::Exists {
                        vars: order,
                        atoms: new_atoms,
                    });
                }
            }
        }
        // universals never occurring anywhere get names last, declared order
        let mut new_universals: Vec<(usize, String)> = Vec::new();
        for v in &universals {
            let name = global
                .get(v)
                .cloned()
                .unwrap_or_else(|| rename_universal(v, &mut global, &mut counter));
            let index: usize = name[1..].parse().expect("canonical names are x<N>");
            new_universals.push((index, name));
        }
        new_universals.sort();
        Formula {
            universals: new_universals.into_iter().map(|(_, n)| n).collect(),
            body: new_body,
            head: new_head,
        }
    }

    pub fn universals(&self) -> &[String] {
        &self.universals
    }

    pub fn body(&self) -> &[PatternAtom] {
        &self.body
    }

    pub fn head(&self) -> &[HeadDisjunct] {
        &self.head
    }

    /// All constants appearing anywhere in the formula.
    pub fn constants(&self) -> BTreeSet<Constant> {
        let mut out = BTreeSet::new();
        let scan = |atoms: &[PatternAtom], out: &mut BTreeSet<Constant>| {
            for p in atoms {
                for t in &p.args {
                    if let Term::Const(c) = t {
                        out.insert(c.clone());
                    }
                }
            }
        };
        scan(&self.body, &mut out);
        for d in &self.head {
            match d {
                HeadDisjunct::Equal(a, b) => {
                    for t in [a, b] {
                        if let Term::Const(c) = t {
                            out.insert(c.clone());
                        }
                    }
                }
                HeadDisjunct::Atom(p) => scan(std::slice::from_ref(p), &mut out),
                HeadDisjunct::Exists { atoms, .. } => scan(atoms, &mut out),
            }
        }
        out
    }

    /// Predicate arities used by the formula.
    pub fn arities(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        let scan = |atoms: &[PatternAtom], out: &mut BTreeMap<String, usize>| {
            for p in atoms {
                out.insert(p.predicate.clone(), p.args.len());
            }
        };
        scan(&self.body, &mut out);
        for d in &self.head {
            match d {
                HeadDisjunct::Atom(p) => scan(std::slice::from_ref(p), &mut out),
                HeadDisjunct::Exists { atoms, .. } => scan(atoms, &mut out),
                HeadDisjunct::Equal(..) => {}
            }
        }
        out
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("forall ")?;
        for (i, v) in self.universals.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(v)?;
        }
        f.write_str(": ")?;
        for (i, p) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str(" -> ")?;
        for (i, d) in self.head.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// A fact classified at a level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassifiedFact {
    pub atom: Atom,
    pub level: Level,
}

impl fmt::Display for ClassifiedFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fact [{}] {}", self.level, self.atom)
    }
}

/// An integrity constraint classified at a level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassifiedConstraint {
    pub formula: Formula,
    pub level: Level,
}

impl fmt::Display for ClassifiedConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "constraint [{}] {}", self.level, self.formula)
    }
}

/// What a cover-story declaration covers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoverTarget {
    Fact(Atom),
    Constraint(Formula),
    /// Covers whatever value the predicate holds at `source_level` for the
    /// given key, surviving updates of that value.
    Pointer {
        predicate: String,
        key_args: Vec<Constant>,
        value_position: usize,
        source_level: Level,
    },
}

impl fmt::Display for CoverTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoverTarget::Fact(a) => write!(f, "{a}"),
            CoverTarget::Constraint(c) => write!(f, "{c}"),
            CoverTarget::Pointer {
                predicate,
                key_args,
                value_position,
                source_level,
            } => {
                write!(f, "{predicate}(")?;
                let mut key = key_args.iter();
                let arity = key_args.len() + 1;
                for i in 0..arity {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    if i == *value_position {
                        write!(f, "@{source_level}")?;
                    } else {
                        write!(f, "{}", key.next().expect("key args fill other positions"))?;
                    }
                }
                f.write_str(")")
            }
        }
    }
}

/// Declares its target a cover story at `level`: data below that is not part
/// of the real world seen from `level` upward.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CoverStoryDecl {
    pub target: CoverTarget,
    pub level: Level,
    /// When set on a fact target, a lower-level update of the covered fact
    /// re-declares the new value a cover story automatically.
    pub trigger: bool,
}

impl fmt::Display for CoverStoryDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.target {
            CoverTarget::Fact(_) => "fact",
            CoverTarget::Constraint(_) => "constraint",
            CoverTarget::Pointer { .. } => "pointer",
        };
        write!(f, "cover {kind} [{}] ", self.level)?;
        if self.trigger {
            f.write_str("trigger ")?;
        }
        write!(f, "{}", self.target)
    }
}

/// A fact or constraint payload, for reports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Payload {
    Fact(Atom),
    Constraint(Formula),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Fact(a) => write!(f, "{a}"),
            Payload::Constraint(c) => write!(f, "{c}"),
        }
    }
}

/// A single mutation of one database section.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Change {
    InsertFact(ClassifiedFact),
    DeleteFact(ClassifiedFact),
    /// Atomic replacement of a fact by another at the same level.
    UpdateFact {
        old: ClassifiedFact,
        new: ClassifiedFact,
    },
    InsertConstraint(ClassifiedConstraint),
    DeleteConstraint(ClassifiedConstraint),
    InsertCover(CoverStoryDecl),
    DeleteCover(CoverStoryDecl),
}

impl Change {
    /// Levels the change writes to.
    pub fn levels(&self) -> Vec<&Level> {
        match self {
            Change::InsertFact(f) | Change::DeleteFact(f) => vec![&f.level],
            Change::UpdateFact { old, new } => vec![&old.level, &new.level],
            Change::InsertConstraint(c) | Change::DeleteConstraint(c) => vec![&c.level],
            Change::InsertCover(d) | Change::DeleteCover(d) => vec![&d.level],
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown level {level}")]
    UnknownLevel { level: Level },
    #[error("duplicate entry {entry}")]
    DuplicateEntry { entry: String },
    #[error("entry not found: {entry}")]
    NotFound { entry: String },
    #[error("arity mismatch for {predicate}: expected {expected}, found {found}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("update must stay at one level: {old} vs {new}")]
    LevelMismatch { old: Level, new: Level },
    #[error("unbound variable {variable}")]
    UnboundVariable { variable: String },
    #[error("duplicate binder {variable}")]
    DuplicateBinder { variable: String },
    #[error("invalid formula: {reason}")]
    InvalidFormula { reason: String },
    #[error("invalid pointer target: {reason}")]
    InvalidPointer { reason: String },
}

/// The multilevel database: an immutable value over a shared lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    lattice: Arc<Lattice>,
    facts: BTreeSet<ClassifiedFact>,
    constraints: BTreeSet<ClassifiedConstraint>,
    cover_facts: BTreeSet<CoverStoryDecl>,
    cover_constraints: BTreeSet<CoverStoryDecl>,
}

impl Database {
    pub fn new(lattice: Arc<Lattice>) -> Self {
        Database {
            lattice,
            facts: BTreeSet::new(),
            constraints: BTreeSet::new(),
            cover_facts: BTreeSet::new(),
            cover_constraints: BTreeSet::new(),
        }
    }

    /// Assembles a database from pre-validated parts (used for views).
    pub(crate) fn from_parts(
        lattice: Arc<Lattice>,
        facts: BTreeSet<ClassifiedFact>,
        constraints: BTreeSet<ClassifiedConstraint>,
        cover_facts: BTreeSet<CoverStoryDecl>,
        cover_constraints: BTreeSet<CoverStoryDecl>,
    ) -> Self {
        Database {
            lattice,
            facts,
            constraints,
            cover_facts,
            cover_constraints,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn facts(&self) -> impl Iterator<Item = &ClassifiedFact> {
        self.facts.iter()
    }

    pub fn constraints(&self) -> impl Iterator<Item = &ClassifiedConstraint> {
        self.constraints.iter()
    }

    /// Fact and pointer cover declarations.
    pub fn cover_facts(&self) -> impl Iterator<Item = &CoverStoryDecl> {
        self.cover_facts.iter()
    }

    /// Constraint cover declarations.
    pub fn cover_constraints(&self) -> impl Iterator<Item = &CoverStoryDecl> {
        self.cover_constraints.iter()
    }

    pub fn covers(&self) -> impl Iterator<Item = &CoverStoryDecl> {
        self.cover_facts.iter().chain(self.cover_constraints.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
            && self.constraints.is_empty()
            && self.cover_facts.is_empty()
            && self.cover_constraints.is_empty()
    }

    /// All constants in facts plus constants in constraint formulas.
    pub fn active_domain(&self) -> BTreeSet<Constant> {
        let mut out = BTreeSet::new();
        for f in &self.facts {
            out.extend(f.atom.args.iter().cloned());
        }
        for c in &self.constraints {
            out.extend(c.formula.constants());
        }
        out
    }

    /// Predicate arities in declaration-independent form: every distinct
    /// arity each predicate is used with anywhere in the database.
    pub(crate) fn arity_profile(&self) -> BTreeMap<String, BTreeSet<usize>> {
        let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        let add = |pred: &str, n: usize, out: &mut BTreeMap<String, BTreeSet<usize>>| {
            out.entry(pred.to_string()).or_default().insert(n);
        };
        for f in &self.facts {
            add(&f.atom.predicate, f.atom.args.len(), &mut out);
        }
        for c in &self.constraints {
            for (p, n) in c.formula.arities() {
                add(&p, n, &mut out);
            }
        }
        for d in self.covers() {
            match &d.target {
                CoverTarget::Fact(a) => add(&a.predicate, a.args.len(), &mut out),
                CoverTarget::Constraint(c) => {
                    for (p, n) in c.arities() {
                        add(&p, n, &mut out);
                    }
                }
                CoverTarget::Pointer {
                    predicate,
                    key_args,
                    ..
                } => add(predicate, key_args.len() + 1, &mut out),
            }
        }
        out
    }

    fn check_arity(&self, predicate: &str, found: usize) -> Result<(), ModelError> {
        if let Some(arities) = self.arity_profile().get(predicate) {
            for &expected in arities {
                if expected != found {
                    return Err(ModelError::ArityMismatch {
                        predicate: predicate.to_string(),
                        expected,
                        found,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_level(&self, level: &Level) -> Result<(), ModelError> {
        if self.lattice.contains(level) {
            Ok(())
        } else {
            Err(ModelError::UnknownLevel {
                level: level.clone(),
            })
        }
    }

    fn check_target_arities(&self, target: &CoverTarget) -> Result<(), ModelError> {
        match target {
            CoverTarget::Fact(a) => self.check_arity(&a.predicate, a.args.len()),
            CoverTarget::Constraint(c) => {
                for (p, n) in c.arities() {
                    self.check_arity(&p, n)?;
                }
                Ok(())
            }
            CoverTarget::Pointer {
                predicate,
                key_args,
                value_position,
                source_level,
            } => {
                let arity = key_args.len() + 1;
                if *value_position >= arity {
                    return Err(ModelError::InvalidPointer {
                        reason: format!(
                            "value position {value_position} out of range for arity {arity}"
                        ),
                    });
                }
                self.check_level(source_level)?;
                self.check_arity(predicate, arity)
            }
        }
    }

    /// Finds a cover declaration by identity (target and level); the trigger
    /// flag is an attribute, not part of the identity.
    pub fn find_cover(&self, target: &CoverTarget, level: &Level) -> Option<&CoverStoryDecl> {
        self.covers()
            .find(|d| &d.target == target && &d.level == level)
    }

    fn cover_section(&self, target: &CoverTarget) -> &BTreeSet<CoverStoryDecl> {
        match target {
            CoverTarget::Constraint(_) => &self.cover_constraints,
            _ => &self.cover_facts,
        }
    }

    /// Validates a change against this database (levels, arities, duplicate
    /// and missing entries).
    pub(crate) fn validate_change(&self, change: &Change) -> Result<(), ModelError> {
        match change {
            Change::InsertFact(f) => {
                self.check_level(&f.level)?;
                self.check_arity(&f.atom.predicate, f.atom.args.len())?;
                if self.facts.contains(f) {
                    return Err(ModelError::DuplicateEntry {
                        entry: f.to_string(),
                    });
                }
            }
            Change::DeleteFact(f) => {
                self.check_level(&f.level)?;
                if !self.facts.contains(f) {
                    return Err(ModelError::NotFound {
                        entry: f.to_string(),
                    });
                }
            }
            Change::UpdateFact { old, new } => {
                self.check_level(&old.level)?;
                self.check_level(&new.level)?;
                if old.level != new.level {
                    return Err(ModelError::LevelMismatch {
                        old: old.level.clone(),
                        new: new.level.clone(),
                    });
                }
                self.check_arity(&new.atom.predicate, new.atom.args.len())?;
                if !self.facts.contains(old) {
                    return Err(ModelError::NotFound {
                        entry: old.to_string(),
                    });
                }
                if new != old && self.facts.contains(new) {
                    return Err(ModelError::DuplicateEntry {
                        entry: new.to_string(),
                    });
                }
            }
            Change::InsertConstraint(c) => {
                self.check_level(&c.level)?;
                for (p, n) in c.formula.arities() {
                    self.check_arity(&p, n)?;
                }
                if self.constraints.contains(c) {
                    return Err(ModelError::DuplicateEntry {
                        entry: c.to_string(),
                    });
                }
            }
            Change::DeleteConstraint(c) => {
                self.check_level(&c.level)?;
                if !self.constraints.contains(c) {
                    return Err(ModelError::NotFound {
                        entry: c.to_string(),
                    });
                }
            }
            Change::InsertCover(d) => {
                self.check_level(&d.level)?;
                self.check_target_arities(&d.target)?;
                if self.find_cover(&d.target, &d.level).is_some() {
                    return Err(ModelError::DuplicateEntry {
                        entry: d.to_string(),
                    });
                }
            }
            Change::DeleteCover(d) => {
                self.check_level(&d.level)?;
                if self.find_cover(&d.target, &d.level).is_none() {
                    return Err(ModelError::NotFound {
                        entry: d.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Applies a pre-validated change; see [`Database::apply_change`].
    pub(crate) fn apply_unchecked(&self, change: &Change) -> Database {
        let mut db = self.clone();
        match change {
            Change::InsertFact(f) => {
                db.facts.insert(f.clone());
            }
            Change::DeleteFact(f) => {
                db.facts.remove(f);
            }
            Change::UpdateFact { old, new } => {
                db.facts.remove(old);
                db.facts.insert(new.clone());
            }
            Change::InsertConstraint(c) => {
                db.constraints.insert(c.clone());
            }
            Change::DeleteConstraint(c) => {
                db.constraints.remove(c);
            }
            Change::InsertCover(d) => {
                match d.target {
                    CoverTarget::Constraint(_) => db.cover_constraints.insert(d.clone()),
                    _ => db.cover_facts.insert(d.clone()),
                };
            }
            Change::DeleteCover(d) => {
                let existing = self
                    .cover_section(&d.target)
                    .iter()
                    .find(|e| e.target == d.target && e.level == d.level)
                    .cloned();
                if let Some(e) = existing {
                    match d.target {
                        CoverTarget::Constraint(_) => db.cover_constraints.remove(&e),
                        _ => db.cover_facts.remove(&e),
                    };
                }
            }
        }
        db
    }

    /// Validates the change and returns the new snapshot; `self` is
    /// untouched either way.
    pub fn apply_change(&self, change: &Change) -> Result<Database, ModelError> {
        self.validate_change(change)?;
        Ok(self.apply_unchecked(change))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level() -> Arc<Lattice> {
        Arc::new(
            Lattice::build(
                vec![Level::from("U"), Level::from("S")],
                vec![(Level::from("U"), Level::from("S"))],
            )
            .unwrap(),
        )
    }

    fn atom(pred: &str, args: &[&str]) -> Atom {
        Atom::new(
            pred,
            args.iter()
                .map(|a| match a.parse::<i64>() {
                    Ok(n) => Constant::Int(n),
                    Err(_) => Constant::Symbol(a.to_string()),
                })
                .collect(),
        )
    }

    fn fact(pred: &str, args: &[&str], level: &str) -> ClassifiedFact {
        ClassifiedFact {
            atom: atom(pred, args),
            level: level.into(),
        }
    }

    fn inclusion() -> Formula {
        // forall x, y: Salary(x, y) -> Employee(x)
        Formula::new(
            vec!["x".into(), "y".into()],
            vec![PatternAtom::new(
                "Salary",
                vec![Term::Var("x".into()), Term::Var("y".into())],
            )],
            vec![HeadDisjunct::Atom(PatternAtom::new(
                "Employee",
                vec![Term::Var("x".into())],
            ))],
        )
        .unwrap()
    }

    fn existence() -> Formula {
        // forall x: Employee(x) -> exists y: Salary(x, y)
        Formula::new(
            vec!["x".into()],
            vec![PatternAtom::new("Employee", vec![Term::Var("x".into())])],
            vec![HeadDisjunct::Exists {
                vars: vec!["y".into()],
                atoms: vec![PatternAtom::new(
                    "Salary",
                    vec![Term::Var("x".into()), Term::Var("y".into())],
                )],
            }],
        )
        .unwrap()
    }

    fn base_db() -> Database {
        let mut db = Database::new(two_level());
        for c in [inclusion(), existence()] {
            db = db
                .apply_change(&Change::InsertConstraint(ClassifiedConstraint {
                    formula: c,
                    level: "U".into(),
                }))
                .unwrap();
        }
        for f in [
            fact("Employee", &["Dupont"], "U"),
            fact("Salary", &["Dupont", "1500"], "U"),
            fact("Salary", &["Dupont", "2000"], "S"),
        ] {
            db = db.apply_change(&Change::InsertFact(f)).unwrap();
        }
        db.apply_change(&Change::InsertCover(CoverStoryDecl {
            target: CoverTarget::Fact(atom("Salary", &["Dupont", "1500"])),
            level: "S".into(),
            trigger: false,
        }))
        .unwrap()
    }

    #[test]
    fn formula_is_alpha_canonical() {
        let a = Formula::new(
            vec!["a".into(), "b".into()],
            vec![PatternAtom::new(
                "Salary",
                vec![Term::Var("a".into()), Term::Var("b".into())],
            )],
            vec![HeadDisjunct::Atom(PatternAtom::new(
                "Employee",
                vec![Term::Var("a".into())],
            ))],
        )
        .unwrap();
        assert_eq!(a, inclusion());
        assert_eq!(
            a.to_string(),
            "forall x0, x1: Salary(x0, x1) -> Employee(x0)"
        );
    }

    #[test]
    fn alpha_canonical_ignores_binder_list_order() {
        let swapped = Formula::new(
            vec!["y".into(), "x".into()],
            vec![PatternAtom::new(
                "Salary",
                vec![Term::Var("x".into()), Term::Var("y".into())],
            )],
            vec![HeadDisjunct::Atom(PatternAtom::new(
                "Employee",
                vec![Term::Var("x".into())],
            ))],
        )
        .unwrap();
        assert_eq!(swapped, inclusion());
    }

    #[test]
    fn existential_rendering() {
        assert_eq!(
            existence().to_string(),
            "forall x0: Employee(x0) -> exists x1: Salary(x0, x1)"
        );
    }

    #[test]
    fn unbound_head_variable_rejected() {
        let err = Formula::new(
            vec!["x".into()],
            vec![PatternAtom::new("Employee", vec![Term::Var("x".into())])],
            vec![HeadDisjunct::Atom(PatternAtom::new(
                "Salary",
                vec![Term::Var("x".into()), Term::Var("z".into())],
            ))],
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::UnboundVariable {
                variable: "z".into()
            }
        );
    }

    #[test]
    fn shadowing_binder_rejected() {
        let err = Formula::new(
            vec!["x".into()],
            vec![PatternAtom::new("Employee", vec![Term::Var("x".into())])],
            vec![HeadDisjunct::Exists {
                vars: vec!["x".into()],
                atoms: vec![PatternAtom::new("Tag", vec![Term::Var("x".into())])],
            }],
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::DuplicateBinder {
                variable: "x".into()
            }
        );
    }

    #[test]
    fn formula_arity_conflict_rejected() {
        let err = Formula::new(
            vec!["x".into()],
            vec![PatternAtom::new("P", vec![Term::Var("x".into())])],
            vec![HeadDisjunct::Atom(PatternAtom::new(
                "P",
                vec![Term::Var("x".into()), Term::Var("x".into())],
            ))],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ArityMismatch { .. }));
    }

    #[test]
    fn active_domain_of_base() {
        let db = base_db();
        let domain = db.active_domain();
        let expected: BTreeSet<Constant> = [
            Constant::Symbol("Dupont".into()),
            Constant::Int(1500),
            Constant::Int(2000),
        ]
        .into_iter()
        .collect();
        assert_eq!(domain, expected);
    }

    #[test]
    fn duplicate_fact_rejected() {
        let db = base_db();
        let err = db
            .apply_change(&Change::InsertFact(fact("Employee", &["Dupont"], "U")))
            .unwrap_err();
        assert!(matches!(err, ModelError::DuplicateEntry { .. }));
        // same atom at the other level is a different entry
        db.apply_change(&Change::InsertFact(fact("Employee", &["Dupont"], "S")))
            .unwrap();
    }

    #[test]
    fn unknown_level_rejected() {
        let db = base_db();
        let err = db
            .apply_change(&Change::InsertFact(fact("Employee", &["Durand"], "X")))
            .unwrap_err();
        assert!(matches!(err, ModelError::UnknownLevel { .. }));
    }

    #[test]
    fn arity_enforced_across_database() {
        let db = base_db();
        let err = db
            .apply_change(&Change::InsertFact(fact("Salary", &["Dupont"], "U")))
            .unwrap_err();
        assert_eq!(
            err,
            ModelError::ArityMismatch {
                predicate: "Salary".into(),
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn update_stays_at_one_level() {
        let db = base_db();
        let err = db
            .apply_change(&Change::UpdateFact {
                old: fact("Salary", &["Dupont", "1500"], "U"),
                new: fact("Salary", &["Dupont", "1600"], "S"),
            })
            .unwrap_err();
        assert!(matches!(err, ModelError::LevelMismatch { .. }));
        let db2 = db
            .apply_change(&Change::UpdateFact {
                old: fact("Salary", &["Dupont", "1500"], "U"),
                new: fact("Salary", &["Dupont", "1600"], "U"),
            })
            .unwrap();
        assert!(db2
            .facts()
            .any(|f| f.atom == atom("Salary", &["Dupont", "1600"])));
        assert!(!db2
            .facts()
            .any(|f| f.atom == atom("Salary", &["Dupont", "1500"])));
        // snapshot semantics: the original is untouched
        assert!(db
            .facts()
            .any(|f| f.atom == atom("Salary", &["Dupont", "1500"])));
    }

    #[test]
    fn update_onto_existing_fact_rejected() {
        let db = base_db();
        let err = db
            .apply_change(&Change::UpdateFact {
                old: fact("Salary", &["Dupont", "1500"], "U"),
                new: fact("Salary", &["Dupont", "1500"], "U"),
            })
            .map(|_| ())
            .err();
        // updating a fact to itself is a no-op, not an error
        assert_eq!(err, None);
        let db2 = db
            .apply_change(&Change::InsertFact(fact(
                "Salary",
                &["Dupont", "1600"],
                "U",
            )))
            .unwrap();
        let err = db2
            .apply_change(&Change::UpdateFact {
                old: fact("Salary", &["Dupont", "1500"], "U"),
                new: fact("Salary", &["Dupont", "1600"], "U"),
            })
            .unwrap_err();
        assert!(matches!(err, ModelError::DuplicateEntry { .. }));
    }

    #[test]
    fn cover_identity_ignores_trigger_flag() {
        let db = base_db();
        let err = db
            .apply_change(&Change::InsertCover(CoverStoryDecl {
                target: CoverTarget::Fact(atom("Salary", &["Dupont", "1500"])),
                level: "S".into(),
                trigger: true,
            }))
            .unwrap_err();
        assert!(matches!(err, ModelError::DuplicateEntry { .. }));
    }

    #[test]
    fn delete_cover_by_identity() {
        let db = base_db();
        let db2 = db
            .apply_change(&Change::DeleteCover(CoverStoryDecl {
                target: CoverTarget::Fact(atom("Salary", &["Dupont", "1500"])),
                level: "S".into(),
                trigger: true, // flag differs; identity match still deletes
            }))
            .unwrap();
        assert_eq!(db2.covers().count(), 0);
    }

    #[test]
    fn pointer_value_position_validated() {
        let db = base_db();
        let err = db
            .apply_change(&Change::InsertCover(CoverStoryDecl {
                target: CoverTarget::Pointer {
                    predicate: "Salary".into(),
                    key_args: vec![Constant::from("Dupont")],
                    value_position: 2,
                    source_level: "U".into(),
                },
                level: "S".into(),
                trigger: false,
            }))
            .unwrap_err();
        assert!(matches!(err, ModelError::InvalidPointer { .. }));
    }

    #[test]
    fn pointer_rendering() {
        let target = CoverTarget::Pointer {
            predicate: "Salary".into(),
            key_args: vec![Constant::from("Dupont")],
            value_position: 1,
            source_level: "C1".into(),
        };
        assert_eq!(target.to_string(), "Salary(Dupont, @C1)");
    }

    #[test]
    fn constant_ordering_is_total() {
        let mut v = vec![
            Constant::Symbol("B".into()),
            Constant::Int(10),
            Constant::Symbol("A".into()),
            Constant::Int(9),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                Constant::Int(9),
                Constant::Int(10),
                Constant::Symbol("A".into()),
                Constant::Symbol("B".into()),
            ]
        );
    }
}
