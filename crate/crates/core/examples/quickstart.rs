use coverstore::model::{Change, ClassifiedFact};
use coverstore::store::{CommitOutcome, Store};
use coverstore::{is_secure, parse_atom, parse_database, real_world, view_at};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let db = parse_database(
        "lattice { levels: S, U; order: U < S; }\n\
         constraint [U] forall x0, x1: Salary(x0, x1) -> Employee(x0);\n\
         constraint [U] forall x0: Employee(x0) -> exists x1: Salary(x0, x1);\n\
         fact [U] Employee(Dupont);\n\
         fact [U] Salary(Dupont, 1500);\n\
         fact [S] Salary(Dupont, 2000);\n\
         cover fact [S] Salary(Dupont, 1500);\n",
    )?;
    assert!(is_secure(&db, &"S".into())?.secure);

    let low = real_world(&view_at(&db, &"U".into())?);
    assert!(low
        .real_facts
        .contains(&parse_atom("Salary(Dupont, 1500)")?));
    let high = real_world(&view_at(&db, &"S".into())?);
    assert!(!high
        .real_facts
        .contains(&parse_atom("Salary(Dupont, 1500)")?));

    let mut store = Store::new(db);
    let mut txn = store.begin(&"U".into(), &"U".into())?;
    txn.write(Change::UpdateFact {
        old: ClassifiedFact {
            atom: parse_atom("Salary(Dupont, 1500)")?,
            level: "U".into(),
        },
        new: ClassifiedFact {
            atom: parse_atom("Salary(Dupont, 1600)")?,
            level: "U".into(),
        },
    })?;
    if let CommitOutcome::Committed {
        global_secure: false,
        ..
    } = store.commit(txn)?
    {
        assert!(!store.audit().is_empty());
    } else {
        panic!("expected a committed but globally insecure outcome");
    }
    Ok(())
}
