//! Recursive-descent parser for database files and formulas.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::lexer::{lex, Tok, Token};
use super::{LangError, SourceSpan};
use crate::lattice::{Lattice, LatticeError, Level};
use crate::model::{
    Atom, Change, ClassifiedConstraint, ClassifiedFact, Constant, CoverStoryDecl, CoverTarget,
    Database, Formula, HeadDisjunct, PatternAtom, Term,
};

pub(crate) struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub(crate) fn new(text: &str) -> Result<Self, LangError> {
        Ok(Parser {
            tokens: lex(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, LangError> {
        if self.peek() == &tok {
            Ok(self.advance())
        } else {
            Err(LangError::Syntax {
                span: self.span(),
                message: format!(
                    "expected {}, found {}",
                    tok.describe(),
                    self.peek().describe()
                ),
            })
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, SourceSpan), LangError> {
        match self.peek() {
            Tok::Ident(_) => {
                let t = self.advance();
                let Tok::Ident(name) = t.tok else {
                    unreachable!()
                };
                Ok((name, t.span))
            }
            other => Err(LangError::Syntax {
                span: self.span(),
                message: format!("expected {what}, found {}", other.describe()),
            }),
        }
    }

    // lattice { levels: A, B; order: A < B; }
    fn lattice_block(&mut self) -> Result<Lattice, LangError> {
        let block_span = self.span();
        self.expect(Tok::Lattice)?;
        self.expect(Tok::LBrace)?;
        self.expect(Tok::Levels)?;
        self.expect(Tok::Colon)?;
        let mut levels: Vec<Level> = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        loop {
            let (name, span) = self.ident("a level name")?;
            if !seen.insert(name.clone()) {
                return Err(LangError::Semantic {
                    span,
                    message: format!("duplicate level {name}"),
                });
            }
            levels.push(Level::new(name));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::Semi)?;
        self.expect(Tok::Order)?;
        self.expect(Tok::Colon)?;
        let mut pairs: Vec<(Level, Level)> = Vec::new();
        let mut pair_spans: Vec<(SourceSpan, SourceSpan)> = Vec::new();
        if self.peek() != &Tok::Semi {
            loop {
                let (lo, lo_span) = self.ident("a level name")?;
                self.expect(Tok::Less)?;
                let (hi, hi_span) = self.ident("a level name")?;
                pairs.push((Level::new(lo), Level::new(hi)));
                pair_spans.push((lo_span, hi_span));
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::Semi)?;
        self.expect(Tok::RBrace)?;
        Lattice::build(levels, pairs.clone()).map_err(|e| {
            let span = match &e {
                LatticeError::UnknownLevelInOrder(l) => pairs
                    .iter()
                    .zip(&pair_spans)
                    .find_map(|((lo, hi), (lo_span, hi_span))| {
                        if lo == l {
                            Some(*lo_span)
                        } else if hi == l {
                            Some(*hi_span)
                        } else {
                            None
                        }
                    })
                    .unwrap_or(block_span),
                _ => block_span,
            };
            LangError::Semantic {
                span,
                message: e.to_string(),
            }
        })
    }

    fn level_bracket(&mut self, lattice: &Lattice) -> Result<Level, LangError> {
        self.expect(Tok::LBracket)?;
        let (name, span) = self.ident("a level name")?;
        self.expect(Tok::RBracket)?;
        let level = Level::new(name);
        if !lattice.contains(&level) {
            return Err(LangError::Semantic {
                span,
                message: format!("unknown level {level}"),
            });
        }
        Ok(level)
    }

    fn constant(&mut self) -> Result<Constant, LangError> {
        match self.peek() {
            Tok::Int(_) => {
                let t = self.advance();
                let Tok::Int(n) = t.tok else { unreachable!() };
                Ok(Constant::Int(n))
            }
            Tok::Ident(_) => {
                let (name, _) = self.ident("a constant")?;
                Ok(Constant::Symbol(name))
            }
            other => Err(LangError::Syntax {
                span: self.span(),
                message: format!("expected a constant, found {}", other.describe()),
            }),
        }
    }

    // Pred(c1, ..., cn) with constant arguments
    fn ground_atom(&mut self) -> Result<Atom, LangError> {
        let (predicate, _) = self.ident("a predicate name")?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                args.push(self.constant()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(Atom::new(predicate, args))
    }

    // Pred(c1, ..., @L, ..., cn) with exactly one @level slot
    fn pointer_target(&mut self) -> Result<CoverTarget, LangError> {
        let (predicate, _) = self.ident("a predicate name")?;
        let open_span = self.span();
        self.expect(Tok::LParen)?;
        let mut key_args = Vec::new();
        let mut value_position = None;
        let mut position = 0usize;
        if self.peek() != &Tok::RParen {
            loop {
                if self.eat(&Tok::At) {
                    let (name, span) = self.ident("a level name")?;
                    if value_position.is_some() {
                        return Err(LangError::Syntax {
                            span,
                            message: "pointer payload needs exactly one `@level` slot".to_string(),
                        });
                    }
                    value_position = Some((position, Level::new(name)));
                } else {
                    key_args.push(self.constant()?);
                }
                position += 1;
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        match value_position {
            Some((value_position, source_level)) => Ok(CoverTarget::Pointer {
                predicate,
                key_args,
                value_position,
                source_level,
            }),
            None => Err(LangError::Syntax {
                span: open_span,
                message: "pointer payload needs exactly one `@level` slot".to_string(),
            }),
        }
    }

    fn term(&mut self, scope: &BTreeSet<String>) -> Result<Term, LangError> {
        match self.peek() {
            Tok::Int(_) => {
                let t = self.advance();
                let Tok::Int(n) = t.tok else { unreachable!() };
                Ok(Term::Const(Constant::Int(n)))
            }
            Tok::Ident(_) => {
                let (name, span) = self.ident("a term")?;
                if scope.contains(&name) {
                    Ok(Term::Var(name))
                } else if name.starts_with(|c: char| c.is_ascii_uppercase()) {
                    Ok(Term::Const(Constant::Symbol(name)))
                } else {
                    Err(LangError::UnboundVariable {
                        span,
                        variable: name,
                    })
                }
            }
            other => Err(LangError::Syntax {
                span: self.span(),
                message: format!("expected a term, found {}", other.describe()),
            }),
        }
    }

    fn pattern_atom(&mut self, scope: &BTreeSet<String>) -> Result<PatternAtom, LangError> {
        let (predicate, _) = self.ident("a predicate name")?;
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                args.push(self.term(scope)?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(PatternAtom::new(predicate, args))
    }

    fn binder_list(
        &mut self,
        outer: &BTreeSet<String>,
    ) -> Result<(Vec<String>, BTreeSet<String>), LangError> {
        let mut names = Vec::new();
        let mut scope = outer.clone();
        loop {
            let (name, span) = self.ident("a variable name")?;
            if !scope.insert(name.clone()) {
                return Err(LangError::Semantic {
                    span,
                    message: format!("duplicate binder {name}"),
                });
            }
            names.push(name);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok((names, scope))
    }

    fn head_disjunct(&mut self, scope: &BTreeSet<String>) -> Result<HeadDisjunct, LangError> {
        if self.peek() == &Tok::Forall {
            return Err(LangError::Syntax {
                span: self.span(),
                message: "nested `forall` is not supported".to_string(),
            });
        }
        if self.eat(&Tok::Exists) {
            let (vars, inner) = self.binder_list(scope)?;
            self.expect(Tok::Colon)?;
            let mut atoms = vec![self.pattern_atom(&inner)?];
            while self.eat(&Tok::Amp) {
                atoms.push(self.pattern_atom(&inner)?);
            }
            return Ok(HeadDisjunct::Exists { vars, atoms });
        }
        // an identifier followed by `(` opens an atom; anything else is the
        // left side of an equality
        if matches!(self.peek(), Tok::Ident(_)) && self.peek2() == &Tok::LParen {
            return Ok(HeadDisjunct::Atom(self.pattern_atom(scope)?));
        }
        let left = self.term(scope)?;
        self.expect(Tok::Eq)?;
        let right = self.term(scope)?;
        Ok(HeadDisjunct::Equal(left, right))
    }

    // forall vars: atom & ... -> disjunct | ...
    fn formula(&mut self) -> Result<Formula, LangError> {
        let start = self.span();
        self.expect(Tok::Forall)?;
        let (universals, scope) = self.binder_list(&BTreeSet::new())?;
        self.expect(Tok::Colon)?;
        let mut body = vec![self.pattern_atom(&scope)?];
        while self.eat(&Tok::Amp) {
            body.push(self.pattern_atom(&scope)?);
        }
        self.expect(Tok::Arrow)?;
        let mut head = vec![self.head_disjunct(&scope)?];
        while self.eat(&Tok::Pipe) {
            head.push(self.head_disjunct(&scope)?);
        }
        Formula::new(universals, body, head).map_err(|e| LangError::Semantic {
            span: start,
            message: e.to_string(),
        })
    }

    fn apply(&self, db: Database, change: Change, span: SourceSpan) -> Result<Database, LangError> {
        db.apply_change(&change).map_err(|e| LangError::Semantic {
            span,
            message: e.to_string(),
        })
    }

    fn reject_trigger(&mut self) -> Result<(), LangError> {
        if self.peek() == &Tok::Trigger {
            return Err(LangError::Semantic {
                span: self.span(),
                message: "trigger only applies to cover declarations for facts".to_string(),
            });
        }
        Ok(())
    }

    pub(crate) fn database(&mut self) -> Result<Database, LangError> {
        let lattice = Arc::new(self.lattice_block()?);
        let mut db = Database::new(lattice.clone());
        // spans of cover-constraint declarations, for the post-pass check
        // that each one names a declared constraint
        let mut cover_constraints: Vec<(Formula, SourceSpan)> = Vec::new();
        loop {
            let decl_span = self.span();
            match self.peek() {
                Tok::Eof => break,
                Tok::Lattice => {
                    return Err(LangError::Semantic {
                        span: decl_span,
                        message: "duplicate lattice declaration".to_string(),
                    });
                }
                Tok::Fact => {
                    self.advance();
                    let level = self.level_bracket(&lattice)?;
                    self.reject_trigger()?;
                    let atom = self.ground_atom()?;
                    self.expect(Tok::Semi)?;
                    let change = Change::InsertFact(ClassifiedFact { atom, level });
                    db = self.apply(db, change, decl_span)?;
                }
                Tok::Constraint => {
                    self.advance();
                    let level = self.level_bracket(&lattice)?;
                    self.reject_trigger()?;
                    let formula = self.formula()?;
                    self.expect(Tok::Semi)?;
                    let change = Change::InsertConstraint(ClassifiedConstraint { formula, level });
                    db = self.apply(db, change, decl_span)?;
                }
                Tok::Cover => {
                    self.advance();
                    let decl = match self.peek() {
                        Tok::Fact => {
                            self.advance();
                            let level = self.level_bracket(&lattice)?;
                            let trigger = self.eat(&Tok::Trigger);
                            let atom = self.ground_atom()?;
                            CoverStoryDecl {
                                target: CoverTarget::Fact(atom),
                                level,
                                trigger,
                            }
                        }
                        Tok::Constraint => {
                            self.advance();
                            let level = self.level_bracket(&lattice)?;
                            self.reject_trigger()?;
                            let span = self.span();
                            let formula = self.formula()?;
                            cover_constraints.push((formula.clone(), span));
                            CoverStoryDecl {
                                target: CoverTarget::Constraint(formula),
                                level,
                                trigger: false,
                            }
                        }
                        Tok::Pointer => {
                            self.advance();
                            let level = self.level_bracket(&lattice)?;
                            if self.peek() == &Tok::Trigger {
                                return Err(LangError::Semantic {
                                    span: self.span(),
                                    message: "trigger is redundant on pointer declarations"
                                        .to_string(),
                                });
                            }
                            let target = self.pointer_target()?;
                            CoverStoryDecl {
                                target,
                                level,
                                trigger: false,
                            }
                        }
                        other => {
                            return Err(LangError::Syntax {
                                span: self.span(),
                                message: format!(
                                    "expected `fact`, `constraint`, or `pointer` after `cover`, found {}",
                                    other.describe()
                                ),
                            });
                        }
                    };
                    self.expect(Tok::Semi)?;
                    db = self.apply(db, Change::InsertCover(decl), decl_span)?;
                }
                other => {
                    return Err(LangError::Syntax {
                        span: decl_span,
                        message: format!("expected a declaration, found {}", other.describe()),
                    });
                }
            }
        }
        // a cover-constraint declaration must name a declared constraint, up
        // to variable renaming; declaration order in the file does not matter
        for (formula, span) in cover_constraints {
            if !db.constraints().any(|c| c.formula == formula) {
                return Err(LangError::Semantic {
                    span,
                    message: "cover constraint does not match any declared constraint".to_string(),
                });
            }
        }
        Ok(db)
    }

    pub(crate) fn formula_only(&mut self) -> Result<Formula, LangError> {
        let formula = self.formula()?;
        if self.peek() != &Tok::Eof {
            return Err(LangError::Syntax {
                span: self.span(),
                message: format!("expected end of input, found {}", self.peek().describe()),
            });
        }
        Ok(formula)
    }

    pub(crate) fn ground_atom_only(&mut self) -> Result<Atom, LangError> {
        let atom = self.ground_atom()?;
        if self.peek() != &Tok::Eof {
            return Err(LangError::Syntax {
                span: self.span(),
                message: format!("expected end of input, found {}", self.peek().describe()),
            });
        }
        Ok(atom)
    }
}
