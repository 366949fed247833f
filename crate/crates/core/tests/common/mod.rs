//! Shared helpers for the integration suites: a brute-force oracle for
//! constraint evaluation and minimal inconsistent sets, plus random
//! generators for small databases.
//!
//! The oracle deliberately avoids the engine's evaluation strategy: it
//! enumerates total variable assignments and fact subsets directly, so an
//! agreement between the two is meaningful.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;

use coverstore::model::{
    Atom, Change, ClassifiedConstraint, ClassifiedFact, Constant, CoverStoryDecl, CoverTarget,
    Database, Formula, HeadDisjunct, PatternAtom, Term,
};
use coverstore::restore::{self, MinimalInconsistentSet};
use coverstore::{parse_formula, Lattice, Level};

type Binding = BTreeMap<String, Constant>;

fn resolve(term: &Term, binding: &Binding) -> Constant {
    match term {
        Term::Const(c) => c.clone(),
        Term::Var(v) => binding.get(v).cloned().expect("oracle bindings are total"),
    }
}

fn instantiate(pattern: &PatternAtom, binding: &Binding) -> Atom {
    Atom::new(
        pattern.predicate.clone(),
        pattern.args.iter().map(|t| resolve(t, binding)).collect(),
    )
}

fn domain(facts: &BTreeSet<Atom>, formula: &Formula) -> Vec<Constant> {
    let mut constants: BTreeSet<Constant> = formula.constants();
    for atom in facts {
        constants.extend(atom.args.iter().cloned());
    }
    constants.into_iter().collect()
}

/// Every total assignment of `vars` over `constants`.
fn assignments(vars: &[String], constants: &[Constant]) -> Vec<Binding> {
    let mut out = vec![Binding::new()];
    for var in vars {
        let mut next = Vec::new();
        for binding in &out {
            for constant in constants {
                let mut extended = binding.clone();
                extended.insert(var.clone(), constant.clone());
                next.push(extended);
            }
        }
        out = next;
    }
    out
}

fn head_holds(
    formula: &Formula,
    binding: &Binding,
    facts: &BTreeSet<Atom>,
    constants: &[Constant],
) -> bool {
    formula.head().iter().any(|disjunct| match disjunct {
        HeadDisjunct::Equal(a, b) => resolve(a, binding) == resolve(b, binding),
        HeadDisjunct::Atom(atom) => facts.contains(&instantiate(atom, binding)),
        HeadDisjunct::Exists { vars, atoms } => {
            assignments(vars, constants).into_iter().any(|extension| {
                let mut merged = binding.clone();
                merged.extend(extension);
                atoms
                    .iter()
                    .all(|a| facts.contains(&instantiate(a, &merged)))
            })
        }
    })
}

/// Whether the fact set satisfies the formula, by exhaustive assignment
/// enumeration over the active domain.
pub fn brute_satisfies(facts: &BTreeSet<Atom>, formula: &Formula) -> bool {
    let constants = domain(facts, formula);
    let universals: Vec<String> = formula.universals().to_vec();
    for binding in assignments(&universals, &constants) {
        let body_matched = formula
            .body()
            .iter()
            .all(|atom| facts.contains(&instantiate(atom, &binding)));
        if body_matched && !head_holds(formula, &binding, facts, &constants) {
            return false;
        }
    }
    true
}

/// All violation witness sets of a formula against a fact set, found
/// subset-first: a subset is a witness when some total assignment
/// instantiates the body to exactly that subset and fails the head in the
/// context of the full fact set.
pub fn brute_witnesses(facts: &BTreeSet<Atom>, formula: &Formula) -> BTreeSet<BTreeSet<Atom>> {
    let constants = domain(facts, formula);
    let universals: Vec<String> = formula.universals().to_vec();
    let all: Vec<&Atom> = facts.iter().collect();
    let bindings = assignments(&universals, &constants);
    let mut witnesses = BTreeSet::new();
    for mask in 0u32..(1u32 << all.len()) {
        let subset: BTreeSet<Atom> = all
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, a)| (*a).clone())
            .collect();
        let hit = bindings.iter().any(|binding| {
            let body: BTreeSet<Atom> = formula
                .body()
                .iter()
                .map(|a| instantiate(a, binding))
                .collect();
            body == subset && !head_holds(formula, binding, facts, &constants)
        });
        if hit {
            witnesses.insert(subset);
        }
    }
    witnesses
}

/// The reference implementation of minimal inconsistent sets: for each
/// constraint, the inclusion-minimal brute-force witnesses.
pub fn brute_mus(
    real_facts: &[(Atom, BTreeSet<Level>)],
    real_constraints: &[(Formula, BTreeSet<Level>)],
) -> Vec<MinimalInconsistentSet> {
    let fact_set: BTreeSet<Atom> = real_facts.iter().map(|(a, _)| a.clone()).collect();
    let levels_of: BTreeMap<&Atom, &BTreeSet<Level>> =
        real_facts.iter().map(|(a, ls)| (a, ls)).collect();
    let mut out = Vec::new();
    for (formula, formula_levels) in real_constraints {
        let witnesses = brute_witnesses(&fact_set, formula);
        for witness in &witnesses {
            let minimal = !witnesses
                .iter()
                .any(|other| other != witness && other.is_subset(witness));
            if !minimal {
                continue;
            }
            out.push(MinimalInconsistentSet {
                facts: witness
                    .iter()
                    .map(|atom| {
                        let levels = levels_of
                            .get(atom)
                            .map(|ls| (*ls).clone())
                            .unwrap_or_default();
                        (atom.clone(), levels)
                    })
                    .collect(),
                constraint: (formula.clone(), formula_levels.clone()),
            });
        }
    }
    out.sort();
    out.dedup();
    out
}

/// The predicate pool: fixed arity per predicate so random facts never
/// collide on arity.
pub const PREDICATES: [(&str, usize); 4] = [("Emp", 1), ("Sal", 2), ("Tag", 1), ("Rel", 2)];

pub fn constant_pool() -> Vec<Constant> {
    vec![
        Constant::Symbol("A".to_string()),
        Constant::Symbol("B".to_string()),
        Constant::Symbol("C".to_string()),
        Constant::Int(1),
        Constant::Int(2),
        Constant::Int(3),
    ]
}

/// A small pool of constraints over the predicate pool.
pub fn constraint_pool() -> Vec<Formula> {
    [
        "forall x, y, y2: Sal(x, y) & Sal(x, y2) -> y = y2",
        "forall x, y: Sal(x, y) -> Emp(x)",
        "forall x: Emp(x) -> exists y: Sal(x, y)",
        "forall x: Tag(x) -> Emp(x)",
        "forall x, y: Rel(x, y) -> Rel(y, x)",
        "forall x: Emp(x) & Tag(x) -> exists y: Rel(x, y)",
    ]
    .iter()
    .map(|text| parse_formula(text).expect("pool formulas parse"))
    .collect()
}

type LatticeShape = (Vec<&'static str>, Vec<(&'static str, &'static str)>);

/// Canned lattice shapes; arbitrary orders are mostly non-lattices, so
/// shapes are fixed and only the choice among them is random.
pub fn lattice_pool() -> Vec<Lattice> {
    let shapes: Vec<LatticeShape> = vec![
        (vec!["U"], vec![]),
        (vec!["U", "S"], vec![("U", "S")]),
        (vec!["U", "C", "S"], vec![("U", "C"), ("C", "S")]),
        (
            vec!["U", "C1", "C2", "S"],
            vec![("U", "C1"), ("U", "C2"), ("C1", "S"), ("C2", "S")],
        ),
        (
            vec!["U", "C1", "C2", "S", "T"],
            vec![
                ("U", "C1"),
                ("U", "C2"),
                ("C1", "S"),
                ("C2", "S"),
                ("S", "T"),
            ],
        ),
        (
            vec!["B", "U", "C1", "C2", "S"],
            vec![
                ("B", "U"),
                ("U", "C1"),
                ("U", "C2"),
                ("C1", "S"),
                ("C2", "S"),
            ],
        ),
    ];
    shapes
        .into_iter()
        .map(|(levels, pairs)| {
            Lattice::build(
                levels.into_iter().map(Level::from).collect(),
                pairs
                    .into_iter()
                    .map(|(lo, hi)| (Level::from(lo), Level::from(hi)))
                    .collect(),
            )
            .expect("pool shapes are lattices")
        })
        .collect()
}

/// Index-based description of one random atom.
pub fn atom_strategy() -> impl Strategy<Value = Atom> {
    (
        0usize..PREDICATES.len(),
        proptest::collection::vec(0usize..6, 2),
    )
        .prop_map(|(pred, arg_indices)| {
            let (name, arity) = PREDICATES[pred];
            let pool = constant_pool();
            Atom::new(
                name,
                arg_indices[..arity]
                    .iter()
                    .map(|i| pool[*i].clone())
                    .collect(),
            )
        })
}

/// One random database over a pooled lattice: up to 8 facts, up to 3
/// constraints, up to 4 cover declarations. Invalid entries (duplicates,
/// arity clashes) are silently skipped, so the result is always
/// model-valid, though often inconsistent or insecure.
pub fn database_strategy() -> impl Strategy<Value = Database> {
    (0usize..lattice_pool().len()).prop_flat_map(|shape| {
        let lattice = lattice_pool()[shape].clone();
        let level_count = lattice.len();
        let facts = proptest::collection::vec((atom_strategy(), 0..level_count), 0..=8);
        let constraints =
            proptest::collection::vec((0usize..constraint_pool().len(), 0..level_count), 0..=3);
        let covers = proptest::collection::vec(
            (
                prop_oneof![
                    // fact cover
                    atom_strategy().prop_map(CoverTargetSeed::Fact),
                    // constraint cover, drawn from the declared pool
                    (0usize..constraint_pool().len()).prop_map(CoverTargetSeed::Constraint),
                    // pointer cover over a binary predicate
                    (0usize..2, 0usize..6, 0usize..5).prop_map(|(p, k, source)| {
                        CoverTargetSeed::Pointer {
                            predicate: if p == 0 { "Sal" } else { "Rel" },
                            key: k,
                            source,
                        }
                    }),
                ],
                0..level_count,
            ),
            0..=4,
        );
        (Just(lattice), facts, constraints, covers).prop_map(
            |(lattice, facts, constraints, covers)| {
                let levels = lattice.levels_bottom_up();
                let mut db = Database::new(Arc::new(lattice));
                let pool = constraint_pool();
                let mut declared: Vec<Formula> = Vec::new();
                for (index, level) in &constraints {
                    let entry = ClassifiedConstraint {
                        formula: pool[*index].clone(),
                        level: levels[*level].clone(),
                    };
                    if let Ok(next) = db.apply_change(&Change::InsertConstraint(entry.clone())) {
                        declared.push(entry.formula);
                        db = next;
                    }
                }
                for (atom, level) in facts {
                    let change = Change::InsertFact(ClassifiedFact {
                        atom,
                        level: levels[level].clone(),
                    });
                    if let Ok(next) = db.apply_change(&change) {
                        db = next;
                    }
                }
                for (seed, level) in covers {
                    let target = match seed {
                        CoverTargetSeed::Fact(atom) => CoverTarget::Fact(atom),
                        CoverTargetSeed::Constraint(index) => {
                            // keep serialization parseable: constraint
                            // covers must match a declared constraint
                            let formula = pool[index].clone();
                            if !declared.contains(&formula) {
                                continue;
                            }
                            CoverTarget::Constraint(formula)
                        }
                        CoverTargetSeed::Pointer {
                            predicate,
                            key,
                            source,
                        } => CoverTarget::Pointer {
                            predicate: predicate.to_string(),
                            key_args: vec![constant_pool()[key].clone()],
                            value_position: 1,
                            source_level: levels[source % levels.len()].clone(),
                        },
                    };
                    let change = Change::InsertCover(CoverStoryDecl {
                        target,
                        level: levels[level].clone(),
                        trigger: false,
                    });
                    if let Ok(next) = db.apply_change(&change) {
                        db = next;
                    }
                }
                db
            },
        )
    })
}

#[derive(Debug, Clone)]
enum CoverTargetSeed {
    Fact(Atom),
    Constraint(usize),
    Pointer {
        predicate: &'static str,
        key: usize,
        source: usize,
    },
}

/// Random classified inputs for the minimal-inconsistent-set oracle
/// comparison: facts capped low enough that the power-set scan stays fast.
pub fn classified_inputs_strategy(
) -> impl Strategy<Value = (restore::ClassifiedAtoms, restore::ClassifiedFormulas)> {
    let lattice = lattice_pool()[3].clone(); // the diamond
    let levels = lattice.levels_bottom_up();
    let level_count = levels.len();
    let facts = proptest::collection::btree_map(
        atom_strategy(),
        proptest::collection::btree_set(0..level_count, 1..=2),
        0..=6,
    );
    let constraints = proptest::collection::btree_map(
        0usize..constraint_pool().len(),
        proptest::collection::btree_set(0..level_count, 1..=2),
        0..=3,
    );
    (facts, constraints).prop_map(move |(facts, constraints)| {
        let pool = constraint_pool();
        let to_levels = |set: BTreeSet<usize>| -> BTreeSet<Level> {
            set.into_iter().map(|i| levels[i].clone()).collect()
        };
        (
            facts
                .into_iter()
                .map(|(atom, ls)| (atom, to_levels(ls)))
                .collect(),
            constraints
                .into_iter()
                .map(|(index, ls)| (pool[index].clone(), to_levels(ls)))
                .collect(),
        )
    })
}
