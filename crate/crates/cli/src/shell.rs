//! The interactive session: single-level transactions for ordinary users
//! plus the administrator channel behind `--sa`.
//!
//! Every response goes to standard output so scripted transcripts are
//! stable; the prompt goes to standard error and only when the input is a
//! terminal. A session cleared at level L prints nothing that is not a
//! function of the view at L: commits acknowledge success without
//! mentioning what happened above, and alerts, restoration actions, and
//! resolution are reserved for `--sa` sessions.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use coverstore::{
    parse_database, real_world, serialize, view_at, Atom, Change, ClassifiedConstraint,
    ClassifiedFact, CommitOutcome, CoverStoryDecl, Database, Level, ResolutionPolicy,
    RestoreConfig, SaChoice, Store, Transaction,
};

pub fn run(
    file: &Path,
    level: &str,
    sa: bool,
    seed: u64,
    policy: &str,
    deterministic: bool,
) -> Result<ExitCode> {
    let text =
        fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    let db = parse_database(&text).with_context(|| format!("cannot parse {}", file.display()))?;
    let level = Level::from(level);
    if !db.lattice().levels().any(|l| l == &level) {
        bail!("unknown level: {level}");
    }
    let clearance = if sa {
        db.lattice().top().clone()
    } else {
        level.clone()
    };
    let config = RestoreConfig {
        policy: parse_policy(policy, seed)?,
        ..RestoreConfig::default()
    };
    let mut session = Session {
        store: Store::with_config(db, config, deterministic),
        txn: None,
        level,
        clearance,
        sa,
        path: file.to_path_buf(),
        printed: 0,
    };
    session.repl()
}

fn parse_policy(text: &str, seed: u64) -> Result<ResolutionPolicy> {
    if text == "pending" {
        return Ok(ResolutionPolicy::Pending);
    }
    if text == "nondet" {
        return Ok(ResolutionPolicy::NonDeterministic { seed });
    }
    if let Some(spec) = text.strip_prefix("priority:") {
        let mut preference = BTreeMap::new();
        for group in spec.split(';').filter(|g| !g.is_empty()) {
            let (predicate, levels) = group
                .split_once('=')
                .with_context(|| format!("priority group `{group}` is not <Pred>=<L>,.."))?;
            let ranked: Vec<Level> = levels
                .split(',')
                .filter(|l| !l.is_empty())
                .map(Level::from)
                .collect();
            if predicate.is_empty() || ranked.is_empty() {
                bail!("priority group `{group}` is not <Pred>=<L>,..");
            }
            preference.insert(predicate.to_string(), ranked);
        }
        if preference.is_empty() {
            bail!("empty priority specification");
        }
        return Ok(ResolutionPolicy::LevelPriority { preference });
    }
    bail!("unknown policy: {text} (expected pending, nondet, or priority:<spec>)")
}

struct Session {
    store: Store,
    txn: Option<Transaction>,
    level: Level,
    clearance: Level,
    sa: bool,
    path: PathBuf,
    printed: usize,
}

impl Session {
    fn repl(&mut self) -> Result<ExitCode> {
        let interactive = io::stdin().is_terminal();
        let stdin = io::stdin();
        for line in stdin.lock().lines() {
            if interactive {
                eprint!("[{}]> ", self.level);
                io::stderr().flush().ok();
            }
            let line = line.context("reading standard input")?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let (command, rest) = match text.split_once(char::is_whitespace) {
                Some((command, rest)) => (command, rest.trim()),
                None => (text, ""),
            };
            match command {
                "quit" => break,
                "begin" => self.cmd_begin(rest),
                "insert" => self.cmd_write(rest, false),
                "delete" => self.cmd_write(rest, true),
                "update" => self.cmd_update(rest),
                "query" => self.cmd_query(rest),
                "covers" => self.cmd_covers(),
                "commit" => self.cmd_commit(),
                "rollback" => self.cmd_rollback(),
                "alerts" => self.cmd_alerts(),
                "pending" => self.cmd_pending(),
                "resolve" => self.cmd_resolve(rest),
                "save" => self.cmd_save(),
                other => println!(
                    "error: unknown command `{other}` (commands: begin insert update delete \
                     query covers commit rollback alerts pending resolve save quit)"
                ),
            }
        }
        Ok(ExitCode::SUCCESS)
    }

    /// The database the session currently sees: the working copy while a
    /// transaction is open, the committed store otherwise.
    fn current(&self) -> &Database {
        match &self.txn {
            Some(txn) => txn.working(),
            None => self.store.database(),
        }
    }

    fn cmd_begin(&mut self, rest: &str) {
        if self.txn.is_some() {
            println!("error: a transaction is already open");
            return;
        }
        let level = if rest.is_empty() {
            self.level.clone()
        } else {
            Level::from(rest)
        };
        match self.store.begin(&level, &self.clearance) {
            Ok(txn) => {
                println!("begun at {level}");
                self.txn = Some(txn);
            }
            Err(err) => println!("error: {err}"),
        }
    }

    fn cmd_write(&mut self, rest: &str, deleting: bool) {
        let entry = match parse_entry(self.store.database(), rest) {
            Ok(entry) => entry,
            Err(message) => {
                println!("error: {message}");
                return;
            }
        };
        let change = match (entry, deleting) {
            (Entry::Fact(fact), false) => Change::InsertFact(fact),
            (Entry::Fact(fact), true) => Change::DeleteFact(fact),
            (Entry::Constraint(c), false) => Change::InsertConstraint(c),
            (Entry::Constraint(c), true) => Change::DeleteConstraint(c),
            (Entry::Cover(decl), false) => Change::InsertCover(decl),
            (Entry::Cover(decl), true) => Change::DeleteCover(decl),
        };
        self.stage(change);
    }

    fn cmd_update(&mut self, rest: &str) {
        let Some((old_text, new_text)) = rest.split_once("=>") else {
            println!("error: update takes `fact [L] Old(..) => fact [L] New(..)`");
            return;
        };
        let old = parse_entry(self.store.database(), old_text);
        let new = parse_entry(self.store.database(), new_text);
        match (old, new) {
            (Ok(Entry::Fact(old)), Ok(Entry::Fact(new))) => {
                self.stage(Change::UpdateFact { old, new });
            }
            (Err(message), _) | (_, Err(message)) => println!("error: {message}"),
            _ => println!("error: update takes two facts"),
        }
    }

    fn stage(&mut self, change: Change) {
        let Some(txn) = self.txn.as_mut() else {
            println!("error: no open transaction (use begin)");
            return;
        };
        match txn.write(change) {
            Ok(()) => println!("staged"),
            Err(err) => println!("error: {err}"),
        }
    }

    fn cmd_query(&self, rest: &str) {
        let Some((predicate, args)) = parse_pattern(rest) else {
            println!("error: query takes a pattern like Salary(Dupont, ?)");
            return;
        };
        let view = match view_at(self.current(), &self.level) {
            Ok(view) => view,
            Err(err) => {
                println!("error: {err}");
                return;
            }
        };
        for atom in &real_world(&view).real_facts {
            if atom_matches(atom, &predicate, &args) {
                println!("{atom}");
            }
        }
    }

    fn cmd_covers(&self) {
        match view_at(self.current(), &self.level) {
            Ok(view) => {
                for decl in view.covers() {
                    println!("{decl}");
                }
            }
            Err(err) => println!("error: {err}"),
        }
    }

    fn cmd_commit(&mut self) {
        let Some(txn) = self.txn.take() else {
            println!("error: no open transaction");
            return;
        };
        match self.store.commit(txn) {
            Ok(CommitOutcome::Committed { .. }) => {
                println!("committed");
                self.print_new_audit();
            }
            Ok(CommitOutcome::Rejected { report }) => {
                println!("rejected");
                println!("{report}");
            }
            Err(err) => println!("error: {err}"),
        }
    }

    fn cmd_rollback(&mut self) {
        match self.txn.take() {
            Some(_) => println!("rolled back"),
            None => println!("error: no open transaction"),
        }
    }

    fn cmd_alerts(&self) {
        if !self.sa {
            println!("error: alerts requires --sa");
            return;
        }
        for alert in self.store.alerts() {
            println!("{alert}");
        }
    }

    fn cmd_pending(&self) {
        for entry in self.store.list_pending(&self.clearance) {
            println!("{entry}");
        }
    }

    fn cmd_resolve(&mut self, rest: &str) {
        if !self.sa {
            println!("error: resolve requires --sa");
            return;
        }
        let parts: Vec<&str> = rest.split_whitespace().collect();
        let (id, option) = match parts.as_slice() {
            [id, "choose", option] => match (id.parse::<u64>(), option.parse::<usize>()) {
                (Ok(id), Ok(option)) if option >= 1 => (id, option),
                _ => {
                    println!("error: resolve takes `<id> choose <option>` with numbers");
                    return;
                }
            },
            _ => {
                println!("error: resolve takes `<id> choose <option>`");
                return;
            }
        };
        match self.store.sa_resolve(id, SaChoice::Choose(option - 1)) {
            Ok(_) => {
                self.print_new_audit();
                println!("resolved {id}");
            }
            Err(err) => println!("error: {err}"),
        }
    }

    fn cmd_save(&mut self) {
        if let Err(err) = fs::write(&self.path, serialize(self.store.database())) {
            println!("error: {err}");
            return;
        }
        let drained = self.store.drain_audit();
        self.printed = 0;
        if !drained.is_empty() {
            let mut audit_path = self.path.clone().into_os_string();
            audit_path.push(".audit");
            let appended = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&audit_path)
                .and_then(|mut file| {
                    for line in &drained {
                        writeln!(file, "{line}")?;
                    }
                    Ok(())
                });
            if let Err(err) = appended {
                println!("error: {err}");
                return;
            }
        }
        println!("saved {}", self.path.display());
    }

    /// Prints audit lines appended since the last call, administrator
    /// sessions only; ordinary sessions just advance past them.
    fn print_new_audit(&mut self) {
        let audit = self.store.audit();
        if self.sa {
            for line in &audit[self.printed..] {
                println!("{line}");
            }
        }
        self.printed = audit.len();
    }
}

enum Entry {
    Fact(ClassifiedFact),
    Constraint(ClassifiedConstraint),
    Cover(CoverStoryDecl),
}

/// Parses one database entry in the file syntax (the trailing semicolon is
/// optional) against the session's lattice.
fn parse_entry(db: &Database, text: &str) -> Result<Entry, String> {
    let text = text.trim().trim_end_matches(';').trim();
    if text.is_empty() {
        return Err("empty entry".to_string());
    }
    let serialized = serialize(db);
    let lattice_line = serialized.lines().next().unwrap_or_default();
    let program = format!("{lattice_line}\n{text};\n");
    let parsed = parse_database(&program).map_err(|err| err.to_string())?;
    if let Some(fact) = parsed.facts().next() {
        return Ok(Entry::Fact(fact.clone()));
    }
    if let Some(constraint) = parsed.constraints().next() {
        return Ok(Entry::Constraint(constraint.clone()));
    }
    if let Some(decl) = parsed.covers().next() {
        return Ok(Entry::Cover(decl.clone()));
    }
    Err("entry must be a fact, a constraint, or a cover declaration".to_string())
}

fn parse_pattern(text: &str) -> Option<(String, Vec<Option<String>>)> {
    let text = text.trim();
    let open = text.find('(')?;
    let name = text[..open].trim();
    if name.is_empty() || !text.ends_with(')') {
        return None;
    }
    let inner = &text[open + 1..text.len() - 1];
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|arg| {
                let arg = arg.trim();
                (arg != "?").then(|| arg.to_string())
            })
            .collect()
    };
    Some((name.to_string(), args))
}

fn atom_matches(atom: &Atom, predicate: &str, args: &[Option<String>]) -> bool {
    atom.predicate == predicate
        && atom.args.len() == args.len()
        && atom
            .args
            .iter()
            .zip(args)
            .all(|(value, pattern)| match pattern {
                Some(text) => value.to_string() == *text,
                None => true,
            })
}
