//! Benchmarks for constraint evaluation and the full security check.
//!
//! The evaluation benches compare the sequential functions against the
//! data-parallel ones in a single run (requires the default `parallel`
//! feature). The security-check bench exercises whichever lane the build
//! selected; run it twice, with and without `--no-default-features`, to
//! compare end to end.

use std::collections::BTreeSet;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coverstore::{is_secure, parse_database, parse_formula, satisfies, violations, Atom, Formula};

const SIZES: [usize; 3] = [8, 32, 128];

/// A staff database scaled by head count: every employee has a salary,
/// every eighth has a conflicting second one, and a third of the conflicts
/// carry a cover declaration.
fn staff_database(employees: usize) -> coverstore::Database {
    let mut text = String::from(
        "lattice { levels: C, S, U; order: C < S, U < C; }\n\
         constraint [U] forall x0, x1, x2: Salary(x0, x1) & Salary(x0, x2) -> x1 = x2;\n\
         constraint [U] forall x0: Employee(x0) -> exists x1: Salary(x0, x1);\n",
    );
    let levels = ["U", "C", "S"];
    for i in 0..employees {
        let level = levels[i % levels.len()];
        text.push_str(&format!("fact [{level}] Employee(E{i});\n"));
        text.push_str(&format!("fact [{level}] Salary(E{i}, {});\n", 1000 + i));
        if i % 8 == 0 {
            text.push_str(&format!("fact [S] Salary(E{i}, {});\n", 2000 + i));
            if i % 24 == 0 {
                text.push_str(&format!("cover fact [S] Salary(E{i}, {});\n", 1000 + i));
            }
        }
    }
    parse_database(&text).expect("generated database parses")
}

fn fact_set(db: &coverstore::Database) -> BTreeSet<Atom> {
    db.facts().map(|fact| fact.atom.clone()).collect()
}

fn unique_salary_rule() -> Formula {
    parse_formula("forall x, y, z: Salary(x, y) & Salary(x, z) -> y = z").expect("parses")
}

fn bench_violations(c: &mut Criterion) {
    let rule = unique_salary_rule();
    let mut group = c.benchmark_group("violations");
    group.sample_size(20);
    group.warm_up_time(Duration::from_millis(300));
    group.measurement_time(Duration::from_secs(1));
    for employees in SIZES {
        let facts = fact_set(&staff_database(employees));
        #[cfg(feature = "parallel")]
        assert_eq!(
            coverstore::par_violations(&facts, &rule).unwrap(),
            violations(&facts, &rule).unwrap(),
            "both lanes must agree before timing them"
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", employees),
            &facts,
            |b, facts| b.iter(|| violations(facts, &rule).unwrap()),
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(
            BenchmarkId::new("parallel", employees),
            &facts,
            |b, facts| b.iter(|| coverstore::par_violations(facts, &rule).unwrap()),
        );
    }
    group.finish();
}

fn bench_satisfies(c: &mut Criterion) {
    let rule = unique_salary_rule();
    let mut group = c.benchmark_group("satisfies");
    group.sample_size(20);
    group.warm_up_time(Duration::from_millis(300));
    group.measurement_time(Duration::from_secs(1));
    for employees in SIZES {
        let facts = fact_set(&staff_database(employees));
        #[cfg(feature = "parallel")]
        assert_eq!(
            coverstore::par_satisfies(&facts, &rule).unwrap(),
            satisfies(&facts, &rule).unwrap(),
            "both lanes must agree before timing them"
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", employees),
            &facts,
            |b, facts| b.iter(|| satisfies(facts, &rule).unwrap()),
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(
            BenchmarkId::new("parallel", employees),
            &facts,
            |b, facts| b.iter(|| coverstore::par_satisfies(facts, &rule).unwrap()),
        );
    }
    group.finish();
}

fn bench_security_check(c: &mut Criterion) {
    let mut group = c.benchmark_group("security_check");
    group.sample_size(20);
    group.warm_up_time(Duration::from_millis(300));
    group.measurement_time(Duration::from_secs(1));
    for employees in SIZES {
        let db = staff_database(employees);
        let top = db.lattice().top().clone();
        group.bench_with_input(BenchmarkId::from_parameter(employees), &db, |b, db| {
            b.iter(|| is_secure(db, &top).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_violations,
    bench_satisfies,
    bench_security_check
);
criterion_main!(benches);
