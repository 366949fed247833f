//! Canonical serializer for database values.
//!
//! The output is deterministic: equal databases serialize to byte-identical
//! text, and parsing the output reproduces the database. Sections appear in
//! a fixed order (lattice, constraints, facts, cover constraints, cover
//! facts) with entries sorted by payload text, then level name.

use std::fmt::Write as _;

use crate::model::{CoverStoryDecl, Database};

fn sorted_by_key<'a, T, I>(entries: I, key: impl Fn(&T) -> (String, String)) -> Vec<&'a T>
where
    I: Iterator<Item = &'a T>,
    T: 'a,
{
    let mut v: Vec<((String, String), &T)> = entries.map(|e| (key(e), e)).collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v.into_iter().map(|(_, e)| e).collect()
}

fn cover_key(d: &CoverStoryDecl) -> (String, String) {
    (d.target.to_string(), d.level.to_string())
}

pub(crate) fn serialize(db: &Database) -> String {
    let mut out = String::new();
    let lattice = db.lattice();
    let levels: Vec<&str> = lattice.levels().map(|l| l.as_str()).collect();
    out.push_str("lattice { levels: ");
    out.push_str(&levels.join(", "));
    out.push_str("; order: ");
    let pairs: Vec<String> = lattice
        .covering_pairs()
        .into_iter()
        .map(|(lo, hi)| format!("{lo} < {hi}"))
        .collect();
    out.push_str(&pairs.join(", "));
    out.push_str("; }\n");

    for c in sorted_by_key(db.constraints(), |c| {
        (c.formula.to_string(), c.level.to_string())
    }) {
        writeln!(out, "{c};").expect("writing to a string");
    }
    for f in sorted_by_key(db.facts(), |f| (f.atom.to_string(), f.level.to_string())) {
        writeln!(out, "{f};").expect("writing to a string");
    }
    for d in sorted_by_key(db.cover_constraints(), cover_key) {
        writeln!(out, "{d};").expect("writing to a string");
    }
    for d in sorted_by_key(db.cover_facts(), cover_key) {
        writeln!(out, "{d};").expect("writing to a string");
    }
    out
}
