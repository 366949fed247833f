//! Text format for databases and constraint formulas.
//!
//! A database file opens with a lattice block and continues with one
//! declaration per statement, each terminated by `;`:
//!
//! ```text
//! lattice { levels: U, S; order: U < S; }
//! constraint [U] forall x, y: Salary(x, y) -> Employee(x);
//! constraint [U] forall x: Employee(x) -> exists y: Salary(x, y);
//! fact [U] Employee(Dupont);
//! fact [U] Salary(Dupont, 1500);
//! fact [S] Salary(Dupont, 2000);
//! cover fact [S] Salary(Dupont, 1500);
//! ```
//!
//! `#` starts a comment running to the end of the line. In formulas,
//! identifiers bound by `forall` or `exists` are variables; an unbound
//! identifier starting with an uppercase letter is a constant, and an
//! unbound lowercase identifier is an error. Fact arguments are always
//! constants. Cover declarations for facts may carry `trigger` after the
//! level; pointer payloads mark the tracked value slot with `@level`, as in
//! `cover pointer [S] Salary(Dupont, @C1);`.

mod lexer;
mod parser;
mod printer;

use std::fmt;

use thiserror::Error;

use crate::model::{Atom, Database, Formula};

/// Position of a parse error in the input, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LangError {
    #[error("syntax error at {span}: {message}")]
    Syntax { span: SourceSpan, message: String },
    #[error("error at {span}: {message}")]
    Semantic { span: SourceSpan, message: String },
    #[error("unbound variable `{variable}` at {span}")]
    UnboundVariable { span: SourceSpan, variable: String },
}

impl LangError {
    pub fn span(&self) -> SourceSpan {
        match self {
            LangError::Syntax { span, .. }
            | LangError::Semantic { span, .. }
            | LangError::UnboundVariable { span, .. } => *span,
        }
    }
}

/// Parses a complete database file.
pub fn parse_database(text: &str) -> Result<Database, LangError> {
    parser::Parser::new(text)?.database()
}

/// Parses one constraint formula, e.g. from CLI input.
pub fn parse_formula(text: &str) -> Result<Formula, LangError> {
    parser::Parser::new(text)?.formula_only()
}

/// Parses one ground atom, e.g. from CLI input.
pub fn parse_atom(text: &str) -> Result<Atom, LangError> {
    parser::Parser::new(text)?.ground_atom_only()
}

/// Serializes a database to its canonical text form.
pub fn serialize(db: &Database) -> String {
    printer::serialize(db)
}
