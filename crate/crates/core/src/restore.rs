//! Automatic restoration of security after an update.
//!
//! Runs as a trusted component over the whole database. The loop:
//!
//! 1. downgrade payloads classified at two comparable levels (the higher
//!    copy is the redundant one and is deleted),
//! 2. prune cover declarations left without the payload they cover,
//! 3. sweep the levels bottom up; in each view, find the minimal
//!    inconsistent sets of the classified real world and derive, for each,
//!    the disjunction of candidate cover declarations at the members' least
//!    upper bound,
//! 4. resolve each disjunction: a single candidate is inserted outright,
//!    several candidates go through the configured policy, and anything
//!    undecided is deferred to the security administrator.
//!
//! Every insertion restarts the loop, because a new cover declaration
//! reshapes the real worlds above it. The loop is bounded by
//! `max_iterations`; hitting the bound defers whatever remains.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::violations_engine;
use crate::guard::{is_secure, real_world, view_at};
use crate::lattice::{Lattice, Level};
use crate::model::{
    Atom, Change, ClassifiedConstraint, ClassifiedFact, CoverStoryDecl, CoverTarget, Database,
    Formula,
};

/// A set of classified payloads that cannot all stand: the facts violate
/// the constraint, and no strict subset does.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MinimalInconsistentSet {
    /// Fact members, each with every classification level it holds in the
    /// view under inspection.
    pub facts: BTreeSet<(Atom, BTreeSet<Level>)>,
    /// The violated constraint with its classification levels.
    pub constraint: (Formula, BTreeSet<Level>),
}

/// One candidate resolution of a minimal inconsistent set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CoverOption {
    pub decl: CoverStoryDecl,
    /// Classification levels of the member the declaration would cover.
    pub member_levels: BTreeSet<Level>,
}

/// "At least one of these is a cover story": the candidates derived from
/// one minimal inconsistent set, classified at the members' join.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CoverDisjunction {
    pub level: Level,
    pub options: Vec<CoverOption>,
}

impl CoverDisjunction {
    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    /// Stable one-line rendering; doubles as the hash input for seeded
    /// choice, so its format is part of the determinism contract.
    pub fn canonical_text(&self) -> String {
        if self.options.is_empty() {
            return format!("[{}] <no candidates>", self.level);
        }
        let parts: Vec<String> = self.options.iter().map(|o| o.decl.to_string()).collect();
        parts.join(" OR ")
    }
}

impl fmt::Display for CoverDisjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_text())
    }
}

/// How a disjunction with several candidates gets decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResolutionPolicy {
    /// Defer everything to the security administrator.
    Pending,
    /// Pick pseudo-randomly, reproducibly for a given seed and disjunction.
    NonDeterministic { seed: u64 },
    /// Per-predicate level ranking, best first. The best-ranked level keeps
    /// its data real; the cover story lands on the worst-ranked candidate.
    LevelPriority {
        preference: BTreeMap<String, Vec<Level>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestoreConfig {
    pub policy: ResolutionPolicy,
    /// Bound on restart rounds; at least 1 is always used.
    pub max_iterations: u32,
}

impl Default for RestoreConfig {
    fn default() -> Self {
        RestoreConfig {
            policy: ResolutionPolicy::Pending,
            max_iterations: 16,
        }
    }
}

/// Why a repair action was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionReason {
    /// A payload held two comparable classifications; the higher one went.
    Downgrade,
    /// A cover declaration had nothing left to cover.
    StaleCover,
    /// The sole candidate of a disjunction.
    CoverRule,
    /// A configured policy picked among several candidates.
    Policy,
}

impl fmt::Display for ActionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionReason::Downgrade => "downgrade",
            ActionReason::StaleCover => "stale-cover",
            ActionReason::CoverRule => "cover-rule",
            ActionReason::Policy => "policy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepairAction {
    DeleteFact(ClassifiedFact),
    DeleteConstraint(ClassifiedConstraint),
    DeleteCover(CoverStoryDecl),
    InsertCover(CoverStoryDecl),
}

impl fmt::Display for RepairAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepairAction::DeleteFact(x) => write!(f, "delete {x}"),
            RepairAction::DeleteConstraint(x) => write!(f, "delete {x}"),
            RepairAction::DeleteCover(x) => write!(f, "delete {x}"),
            RepairAction::InsertCover(x) => write!(f, "insert {x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRecord {
    pub reason: ActionReason,
    pub action: RepairAction,
}

impl fmt::Display for ActionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.reason, self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RestoreStatus {
    /// The database is secure at the top level again.
    Secured,
    /// Decisions remain with the security administrator.
    Pending {
        disjunctions: Vec<CoverDisjunction>,
        /// True when the loop stopped at `max_iterations` although a policy
        /// would still have inserted.
        iteration_capped: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestoreOutcome {
    pub actions: Vec<ActionRecord>,
    pub status: RestoreStatus,
}

/// Deletes the higher copy of every payload classified at two comparable
/// levels, keeping the minimal classifications. One pass reaches the
/// fixpoint: the kept copies are pairwise incomparable.
pub fn downgrade_duplicates(db: &Database) -> (Database, Vec<ActionRecord>) {
    let lattice = db.lattice().clone();
    let minimal_only = |levels: &[&Level]| -> BTreeSet<Level> {
        levels
            .iter()
            .filter(|l| !levels.iter().any(|m| lattice.gt(l, m)))
            .map(|l| (*l).clone())
            .collect()
    };

    let mut actions = Vec::new();
    let mut out = db.clone();

    let mut fact_levels: BTreeMap<&Atom, Vec<&Level>> = BTreeMap::new();
    for f in db.facts() {
        fact_levels.entry(&f.atom).or_default().push(&f.level);
    }
    for (atom, levels) in fact_levels {
        let keep = minimal_only(&levels);
        for level in levels {
            if !keep.contains(level) {
                let entry = ClassifiedFact {
                    atom: atom.clone(),
                    level: level.clone(),
                };
                out = out.apply_unchecked(&Change::DeleteFact(entry.clone()));
                actions.push(ActionRecord {
                    reason: ActionReason::Downgrade,
                    action: RepairAction::DeleteFact(entry),
                });
            }
        }
    }

    let mut constraint_levels: BTreeMap<&Formula, Vec<&Level>> = BTreeMap::new();
    for c in db.constraints() {
        constraint_levels
            .entry(&c.formula)
            .or_default()
            .push(&c.level);
    }
    for (formula, levels) in constraint_levels {
        let keep = minimal_only(&levels);
        for level in levels {
            if !keep.contains(level) {
                let entry = ClassifiedConstraint {
                    formula: formula.clone(),
                    level: level.clone(),
                };
                out = out.apply_unchecked(&Change::DeleteConstraint(entry.clone()));
                actions.push(ActionRecord {
                    reason: ActionReason::Downgrade,
                    action: RepairAction::DeleteConstraint(entry),
                });
            }
        }
    }

    (out, actions)
}

/// Deletes every cover declaration whose covered payload is missing below
/// it. Cover deletions cannot unground other covers, so one pass suffices.
pub fn prune_stale_covers(db: &Database) -> (Database, Vec<ActionRecord>) {
    let mut out = db.clone();
    let mut actions = Vec::new();
    for decl in crate::guard::stale_cover_decls(db) {
        out = out.apply_unchecked(&Change::DeleteCover(decl.clone()));
        actions.push(ActionRecord {
            reason: ActionReason::StaleCover,
            action: RepairAction::DeleteCover(decl),
        });
    }
    (out, actions)
}

/// Real facts paired with every level classifying them in the view.
pub type ClassifiedAtoms = Vec<(Atom, BTreeSet<Level>)>;
/// Real constraints paired with every level classifying them in the view.
pub type ClassifiedFormulas = Vec<(Formula, BTreeSet<Level>)>;

/// The real payloads of a view, each carrying every classification level it
/// holds there. This is the input shape for [`find_mus`].
pub fn classified_real_world(view: &Database) -> (ClassifiedAtoms, ClassifiedFormulas) {
    let world = real_world(view);
    let facts = world
        .real_facts
        .into_iter()
        .map(|atom| {
            let levels = view
                .facts()
                .filter(|f| f.atom == atom)
                .map(|f| f.level.clone())
                .collect();
            (atom, levels)
        })
        .collect();
    let constraints = world
        .real_constraints
        .into_iter()
        .map(|formula| {
            let levels = view
                .constraints()
                .filter(|c| c.formula == formula)
                .map(|c| c.level.clone())
                .collect();
            (formula, levels)
        })
        .collect();
    (facts, constraints)
}

/// All minimal inconsistent sets of a classified real world: for each
/// constraint, the inclusion-minimal violation witnesses, evaluated in the
/// context of the full fact set.
pub fn find_mus(
    real_facts: &[(Atom, BTreeSet<Level>)],
    real_constraints: &[(Formula, BTreeSet<Level>)],
) -> Vec<MinimalInconsistentSet> {
    let fact_set: BTreeSet<Atom> = real_facts.iter().map(|(a, _)| a.clone()).collect();
    let levels_of: BTreeMap<&Atom, &BTreeSet<Level>> =
        real_facts.iter().map(|(a, ls)| (a, ls)).collect();
    let mut out = Vec::new();
    for (formula, formula_levels) in real_constraints {
        let witnesses: Vec<BTreeSet<Atom>> = violations_engine(&fact_set, formula)
            .into_iter()
            .map(|v| v.witness_facts)
            .collect();
        for witness in &witnesses {
            let minimal = !witnesses
                .iter()
                .any(|other| other != witness && other.is_subset(witness));
            if !minimal {
                continue;
            }
            let facts = witness
                .iter()
                .map(|atom| {
                    let levels = levels_of
                        .get(atom)
                        .map(|ls| (*ls).clone())
                        .unwrap_or_default();
                    (atom.clone(), levels)
                })
                .collect();
            out.push(MinimalInconsistentSet {
                facts,
                constraint: (formula.clone(), formula_levels.clone()),
            });
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Derives the candidate cover declarations for one minimal inconsistent
/// set: one candidate per member at the members' join, minus candidates
/// already classified at that join (declaring those would conflict), and
/// minus constraint candidates whenever a fact candidate survives, because
/// the constraints are trusted more than the facts.
pub fn derive_disjunction(mus: &MinimalInconsistentSet, lattice: &Lattice) -> CoverDisjunction {
    let mut all_levels: Vec<&Level> = Vec::new();
    for (_, levels) in &mus.facts {
        all_levels.extend(levels.iter());
    }
    all_levels.extend(mus.constraint.1.iter());
    let mut iter = all_levels.into_iter();
    let first = iter
        .next()
        .expect("a minimal inconsistent set names classified members");
    let level = iter.fold(first.clone(), |acc, l| lattice.join(&acc, l));

    let mut fact_options: Vec<CoverOption> = Vec::new();
    for (atom, member_levels) in &mus.facts {
        if member_levels.contains(&level) {
            continue;
        }
        fact_options.push(CoverOption {
            decl: CoverStoryDecl {
                target: CoverTarget::Fact(atom.clone()),
                level: level.clone(),
                trigger: false,
            },
            member_levels: member_levels.clone(),
        });
    }
    let mut options = fact_options;
    if options.is_empty() && !mus.constraint.1.contains(&level) {
        options.push(CoverOption {
            decl: CoverStoryDecl {
                target: CoverTarget::Constraint(mus.constraint.0.clone()),
                level: level.clone(),
                trigger: false,
            },
            member_levels: mus.constraint.1.clone(),
        });
    }
    options.sort_by_key(|o| o.decl.to_string());
    CoverDisjunction { level, options }
}

/// Outcome of resolving one disjunction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Auto {
        decl: CoverStoryDecl,
        reason: ActionReason,
    },
    Defer,
}

fn fnv1a64(text: &str) -> u64 {
    // FNV-1a, inlined so the seeded choice stays stable across platforms
    // and library versions.
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn resolve_by_priority(
    disjunction: &CoverDisjunction,
    preference: &BTreeMap<String, Vec<Level>>,
) -> Resolution {
    // every candidate must cover a fact of one shared predicate
    let mut predicate: Option<&str> = None;
    for option in &disjunction.options {
        let CoverTarget::Fact(atom) = &option.decl.target else {
            return Resolution::Defer;
        };
        match predicate {
            None => predicate = Some(&atom.predicate),
            Some(p) if p == atom.predicate => {}
            Some(_) => return Resolution::Defer,
        }
    }
    let Some(ranking) = predicate.and_then(|p| preference.get(p)) else {
        return Resolution::Defer;
    };
    // each candidate must sit at exactly one ranked level
    let mut ranked: Vec<(usize, &CoverOption)> = Vec::new();
    for option in &disjunction.options {
        if option.member_levels.len() != 1 {
            return Resolution::Defer;
        }
        let level = option.member_levels.iter().next().expect("one level");
        let Some(rank) = ranking.iter().position(|l| l == level) else {
            return Resolution::Defer;
        };
        ranked.push((rank, option));
    }
    // the best-ranked level keeps its data; the cover story goes to the
    // unique worst-ranked candidate
    let worst = ranked.iter().map(|(r, _)| *r).max().expect("non-empty");
    let mut at_worst = ranked.iter().filter(|(r, _)| *r == worst);
    let pick = at_worst.next().expect("max came from this list");
    if at_worst.next().is_some() {
        return Resolution::Defer;
    }
    Resolution::Auto {
        decl: pick.1.decl.clone(),
        reason: ActionReason::Policy,
    }
}

/// Decides one disjunction. A single candidate is taken regardless of
/// policy; an empty disjunction always defers.
pub fn resolve(disjunction: &CoverDisjunction, config: &RestoreConfig) -> Resolution {
    match disjunction.options.len() {
        0 => Resolution::Defer,
        1 => Resolution::Auto {
            decl: disjunction.options[0].decl.clone(),
            reason: ActionReason::CoverRule,
        },
        n => match &config.policy {
            ResolutionPolicy::Pending => Resolution::Defer,
            ResolutionPolicy::NonDeterministic { seed } => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(&disjunction.canonical_text()));
                let index = (rng.next_u64() % n as u64) as usize;
                Resolution::Auto {
                    decl: disjunction.options[index].decl.clone(),
                    reason: ActionReason::Policy,
                }
            }
            ResolutionPolicy::LevelPriority { preference } => {
                resolve_by_priority(disjunction, preference)
            }
        },
    }
}

enum Sweep {
    /// A resolvable disjunction was found; insert and restart.
    Insert(CoverStoryDecl, ActionReason),
    /// No insertions left. Carries the deferred disjunctions and whether
    /// any of them was deferred only because insertion was disallowed.
    Settled {
        pending: Vec<CoverDisjunction>,
        suppressed_insert: bool,
    },
}

fn sweep_levels(db: &Database, config: &RestoreConfig, defer_only: bool) -> Sweep {
    let lattice = db.lattice().clone();
    let mut pending: Vec<CoverDisjunction> = Vec::new();
    let mut suppressed_insert = false;
    for level in lattice.levels_bottom_up() {
        let view = view_at(db, &level).expect("level comes from the lattice");
        let (facts, constraints) = classified_real_world(&view);
        for mus in find_mus(&facts, &constraints) {
            let disjunction = derive_disjunction(&mus, &lattice);
            match resolve(&disjunction, config) {
                Resolution::Auto { decl, reason } if !defer_only => {
                    return Sweep::Insert(decl, reason);
                }
                Resolution::Auto { .. } => {
                    suppressed_insert = true;
                    if !pending.contains(&disjunction) {
                        pending.push(disjunction);
                    }
                }
                Resolution::Defer => {
                    if !pending.contains(&disjunction) {
                        pending.push(disjunction);
                    }
                }
            }
        }
    }
    Sweep::Settled {
        pending,
        suppressed_insert,
    }
}

/// Runs the whole restoration algorithm and returns the repaired database
/// with the log of what was done and what remains open.
pub fn restore(db: &Database, config: &RestoreConfig) -> (Database, RestoreOutcome) {
    let max_iterations = config.max_iterations.max(1);
    let mut db = db.clone();
    let mut actions = Vec::new();
    let mut iteration = 0u32;
    let (pending, iteration_capped) = loop {
        let (after_downgrade, downgrades) = downgrade_duplicates(&db);
        db = after_downgrade;
        actions.extend(downgrades);
        let (after_prune, prunes) = prune_stale_covers(&db);
        db = after_prune;
        actions.extend(prunes);

        let defer_only = iteration >= max_iterations;
        match sweep_levels(&db, config, defer_only) {
            Sweep::Insert(decl, reason) => {
                db = db
                    .apply_change(&Change::InsertCover(decl.clone()))
                    .expect("derived cover declarations are fresh and valid");
                actions.push(ActionRecord {
                    reason,
                    action: RepairAction::InsertCover(decl),
                });
                iteration += 1;
            }
            Sweep::Settled {
                pending,
                suppressed_insert,
            } => break (pending, suppressed_insert),
        }
    };
    let status = if pending.is_empty() {
        debug_assert!(
            is_secure(&db, db.lattice().top())
                .map(|r| r.secure)
                .unwrap_or(false),
            "no pending disjunctions should mean a secure database"
        );
        RestoreStatus::Secured
    } else {
        RestoreStatus::Pending {
            disjunctions: pending,
            iteration_capped,
        }
    };
    (db, RestoreOutcome { actions, status })
}
