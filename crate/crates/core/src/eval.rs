//! Finite model checking for constraint formulas.
//!
//! A fact set satisfies `forall vars: body -> head` when every instantiation
//! of the universals over the active domain that places the whole body in
//! the fact set also makes some head disjunct hold: equalities are checked
//! on the substituted constants, head atoms by membership, and existential
//! blocks by searching the fact set for witnessing constants. The active
//! domain is the set of constants in the checked facts plus those in the
//! formula itself, so the empty fact set satisfies everything vacuously.
//!
//! Violations are reported per instantiation, ordered by the text of their
//! bindings, with symmetric bindings that produce the same witness fact set
//! collapsed into one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;

use thiserror::Error;

use crate::model::{Atom, Constant, Formula, HeadDisjunct, PatternAtom, Term};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("arity mismatch for {predicate}: formula expects {expected}, facts have {found}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
    },
}

/// How an instantiation breaks a constraint. The implication fragment has a
/// single failure shape: the body holds and no head disjunct does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    BodyWithoutHead,
}

/// One violating instantiation of a constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint: Formula,
    pub binding: BTreeMap<String, Constant>,
    /// The instantiated body: the facts that together trip the constraint.
    pub witness_facts: BTreeSet<Atom>,
    pub kind: ViolationKind,
}

impl Violation {
    pub fn binding_text(&self) -> String {
        let parts: Vec<String> = self
            .binding
            .iter()
            .map(|(v, c)| format!("{v}={c}"))
            .collect();
        parts.join(", ")
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated at {}", self.constraint, self.binding_text())
    }
}

type Binding = BTreeMap<String, Constant>;

fn check_arities(facts: &BTreeSet<Atom>, formula: &Formula) -> Result<(), EvalError> {
    let arities = formula.arities();
    for fact in facts {
        if let Some(&expected) = arities.get(&fact.predicate) {
            if expected != fact.args.len() {
                return Err(EvalError::ArityMismatch {
                    predicate: fact.predicate.clone(),
                    expected,
                    found: fact.args.len(),
                });
            }
        }
    }
    Ok(())
}

fn domain_of(facts: &BTreeSet<Atom>, formula: &Formula) -> BTreeSet<Constant> {
    let mut domain = formula.constants();
    for fact in facts {
        domain.extend(fact.args.iter().cloned());
    }
    domain
}

fn extend(pattern: &PatternAtom, binding: &Binding, fact: &Atom) -> Option<Binding> {
    if pattern.predicate != fact.predicate || pattern.args.len() != fact.args.len() {
        return None;
    }
    let mut out = binding.clone();
    for (term, constant) in pattern.args.iter().zip(&fact.args) {
        match term {
            Term::Const(k) => {
                if k != constant {
                    return None;
                }
            }
            Term::Var(v) => match out.get(v) {
                Some(bound) => {
                    if bound != constant {
                        return None;
                    }
                }
                None => {
                    out.insert(v.clone(), constant.clone());
                }
            },
        }
    }
    Some(out)
}

fn instantiate(pattern: &PatternAtom, binding: &Binding) -> Atom {
    Atom {
        predicate: pattern.predicate.clone(),
        args: pattern
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => c.clone(),
                Term::Var(v) => binding[v].clone(),
            })
            .collect(),
    }
}

fn resolve(term: &Term, binding: &Binding) -> Constant {
    match term {
        Term::Const(c) => c.clone(),
        Term::Var(v) => binding[v].clone(),
    }
}

/// True iff some assignment of the block's variables puts every block atom
/// in the fact set. Search runs over matching facts rather than the raw
/// domain; block variables used by no atom need no witness because the
/// domain is nonempty whenever a body instantiation exists.
fn exists_holds(facts: &BTreeSet<Atom>, atoms: &[PatternAtom], binding: &Binding) -> bool {
    fn go(facts: &BTreeSet<Atom>, atoms: &[PatternAtom], binding: &Binding) -> bool {
        match atoms.split_first() {
            None => true,
            Some((first, rest)) => facts.iter().any(|fact| {
                extend(first, binding, fact).is_some_and(|next| go(facts, rest, &next))
            }),
        }
    }
    go(facts, atoms, binding)
}

fn head_holds(facts: &BTreeSet<Atom>, head: &[HeadDisjunct], binding: &Binding) -> bool {
    head.iter().any(|disjunct| match disjunct {
        HeadDisjunct::Equal(a, b) => resolve(a, binding) == resolve(b, binding),
        HeadDisjunct::Atom(pattern) => facts.contains(&instantiate(pattern, binding)),
        HeadDisjunct::Exists { atoms, .. } => exists_holds(facts, atoms, binding),
    })
}

/// Drives `visit` over every violating instantiation reachable from
/// `binding` by matching `body` against the facts and then extending
/// universals the body leaves unbound over the domain.
fn each_violation(
    facts: &BTreeSet<Atom>,
    domain: &BTreeSet<Constant>,
    formula: &Formula,
    body: &[PatternAtom],
    binding: Binding,
    visit: &mut impl FnMut(Binding) -> ControlFlow<()>,
) -> ControlFlow<()> {
    match body.split_first() {
        Some((first, rest)) => {
            for fact in facts {
                if let Some(next) = extend(first, &binding, fact) {
                    each_violation(facts, domain, formula, rest, next, visit)?;
                }
            }
            ControlFlow::Continue(())
        }
        None => {
            let unbound: Vec<&String> = formula
                .universals()
                .iter()
                .filter(|v| !binding.contains_key(*v))
                .collect();
            extend_unbound(facts, domain, formula, &unbound, binding, visit)
        }
    }
}

fn extend_unbound(
    facts: &BTreeSet<Atom>,
    domain: &BTreeSet<Constant>,
    formula: &Formula,
    unbound: &[&String],
    binding: Binding,
    visit: &mut impl FnMut(Binding) -> ControlFlow<()>,
) -> ControlFlow<()> {
    match unbound.split_first() {
        Some((var, rest)) => {
            for constant in domain {
                let mut next = binding.clone();
                next.insert((*var).clone(), constant.clone());
                extend_unbound(facts, domain, formula, rest, next, visit)?;
            }
            ControlFlow::Continue(())
        }
        None => {
            if head_holds(facts, formula.head(), &binding) {
                ControlFlow::Continue(())
            } else {
                visit(binding)
            }
        }
    }
}

fn violation_from(formula: &Formula, binding: Binding) -> Violation {
    let witness_facts = formula
        .body()
        .iter()
        .map(|p| instantiate(p, &binding))
        .collect();
    Violation {
        constraint: formula.clone(),
        binding,
        witness_facts,
        kind: ViolationKind::BodyWithoutHead,
    }
}

fn order_and_dedup(mut raw: Vec<Violation>) -> Vec<Violation> {
    raw.sort_by_key(|v| v.binding_text());
    let mut seen: BTreeSet<BTreeSet<Atom>> = BTreeSet::new();
    raw.retain(|v| seen.insert(v.witness_facts.clone()));
    raw
}

/// Total satisfaction check; mismatched arities simply never match. Use
/// [`satisfies`] at boundaries where mixed input deserves an error.
pub(crate) fn satisfies_total(facts: &BTreeSet<Atom>, formula: &Formula) -> bool {
    let domain = domain_of(facts, formula);
    let outcome = each_violation(
        facts,
        &domain,
        formula,
        formula.body(),
        Binding::new(),
        &mut |_| ControlFlow::Break(()),
    );
    outcome.is_continue()
}

/// Total violation listing; see [`satisfies_total`].
pub(crate) fn violations_total(facts: &BTreeSet<Atom>, formula: &Formula) -> Vec<Violation> {
    let domain = domain_of(facts, formula);
    let mut raw = Vec::new();
    let _ = each_violation(
        facts,
        &domain,
        formula,
        formula.body(),
        Binding::new(),
        &mut |binding| {
            raw.push(violation_from(formula, binding));
            ControlFlow::Continue(())
        },
    );
    order_and_dedup(raw)
}

/// True iff every active-domain instantiation that satisfies the body also
/// satisfies some head disjunct.
pub fn satisfies(facts: &BTreeSet<Atom>, formula: &Formula) -> Result<bool, EvalError> {
    check_arities(facts, formula)?;
    Ok(satisfies_total(facts, formula))
}

/// All violating instantiations, ordered by binding text, one per distinct
/// witness fact set.
pub fn violations(facts: &BTreeSet<Atom>, formula: &Formula) -> Result<Vec<Violation>, EvalError> {
    check_arities(facts, formula)?;
    Ok(violations_total(facts, formula))
}

#[cfg(feature = "parallel")]
mod par {
    use super::*;
    use rayon::prelude::*;

    // Splitting tiny inputs across threads costs more than it saves.
    const MIN_FACTS_FOR_PAR: usize = 32;

    fn seed_bindings(facts: &BTreeSet<Atom>, formula: &Formula) -> Vec<Binding> {
        let first = &formula.body()[0];
        facts
            .iter()
            .filter_map(|fact| extend(first, &Binding::new(), fact))
            .collect()
    }

    /// Parallel [`satisfies`]: partitions work by the candidate matches of
    /// the first body atom.
    pub fn par_satisfies(facts: &BTreeSet<Atom>, formula: &Formula) -> Result<bool, EvalError> {
        check_arities(facts, formula)?;
        if facts.len() < MIN_FACTS_FOR_PAR {
            return Ok(satisfies_total(facts, formula));
        }
        let domain = domain_of(facts, formula);
        let rest = &formula.body()[1..];
        let ok = seed_bindings(facts, formula).into_par_iter().all(|seed| {
            each_violation(facts, &domain, formula, rest, seed, &mut |_| {
                ControlFlow::Break(())
            })
            .is_continue()
        });
        Ok(ok)
    }

    /// Parallel [`violations`]; the result is identical to the sequential
    /// listing, including order.
    pub fn par_violations(
        facts: &BTreeSet<Atom>,
        formula: &Formula,
    ) -> Result<Vec<Violation>, EvalError> {
        check_arities(facts, formula)?;
        if facts.len() < MIN_FACTS_FOR_PAR {
            return Ok(violations_total(facts, formula));
        }
        let domain = domain_of(facts, formula);
        let rest = &formula.body()[1..];
        let raw: Vec<Violation> = seed_bindings(facts, formula)
            .into_par_iter()
            .flat_map_iter(|seed| {
                let mut local = Vec::new();
                let _ = each_violation(facts, &domain, formula, rest, seed, &mut |binding| {
                    local.push(violation_from(formula, binding));
                    ControlFlow::Continue(())
                });
                local
            })
            .collect();
        Ok(order_and_dedup(raw))
    }
}

#[cfg(feature = "parallel")]
pub use par::{par_satisfies, par_violations};

/// Violation listing used by the engine: the parallel lane when built with
/// the `parallel` feature, the sequential one otherwise. Both produce the
/// same list in the same order.
pub(crate) fn violations_engine(facts: &BTreeSet<Atom>, formula: &Formula) -> Vec<Violation> {
    #[cfg(feature = "parallel")]
    {
        par_violations(facts, formula).unwrap_or_else(|_| violations_total(facts, formula))
    }
    #[cfg(not(feature = "parallel"))]
    {
        violations_total(facts, formula)
    }
}
