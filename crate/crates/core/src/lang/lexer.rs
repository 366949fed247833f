//! Tokenizer for the database file format and formula syntax.

use super::{LangError, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Lattice,
    Levels,
    Order,
    Fact,
    Constraint,
    Cover,
    Pointer,
    Trigger,
    Forall,
    Exists,
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Semi,
    Comma,
    Less,
    At,
    Amp,
    Pipe,
    Eq,
    Arrow,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Lattice => "keyword `lattice`".into(),
            Tok::Levels => "keyword `levels`".into(),
            Tok::Order => "keyword `order`".into(),
            Tok::Fact => "keyword `fact`".into(),
            Tok::Constraint => "keyword `constraint`".into(),
            Tok::Cover => "keyword `cover`".into(),
            Tok::Pointer => "keyword `pointer`".into(),
            Tok::Trigger => "keyword `trigger`".into(),
            Tok::Forall => "keyword `forall`".into(),
            Tok::Exists => "keyword `exists`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Less => "`<`".into(),
            Tok::At => "`@`".into(),
            Tok::Amp => "`&`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

pub(crate) fn lex(text: &str) -> Result<Vec<Token>, LangError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut column = 1usize;
    let mut chars = text.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }

    loop {
        let span = SourceSpan { line, column };
        let c = match chars.peek() {
            None => {
                out.push(Token {
                    tok: Tok::Eof,
                    span,
                });
                return Ok(out);
            }
            Some(&c) => c,
        };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump!();
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(c);
                    bump!();
                } else {
                    break;
                }
            }
            match word.as_str() {
                "lattice" => Tok::Lattice,
                "levels" => Tok::Levels,
                "order" => Tok::Order,
                "fact" => Tok::Fact,
                "constraint" => Tok::Constraint,
                "cover" => Tok::Cover,
                "pointer" => Tok::Pointer,
                "trigger" => Tok::Trigger,
                "forall" => Tok::Forall,
                "exists" => Tok::Exists,
                _ => Tok::Ident(word),
            }
        } else if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_digit() {
                    digits.push(c);
                    bump!();
                } else {
                    break;
                }
            }
            match digits.parse::<i64>() {
                Ok(n) => Tok::Int(n),
                Err(_) => {
                    return Err(LangError::Syntax {
                        span,
                        message: format!("integer literal `{digits}` out of range"),
                    })
                }
            }
        } else {
            bump!();
            match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ':' => Tok::Colon,
                ';' => Tok::Semi,
                ',' => Tok::Comma,
                '<' => Tok::Less,
                '@' => Tok::At,
                '&' => Tok::Amp,
                '|' => Tok::Pipe,
                '=' => Tok::Eq,
                '-' => {
                    if chars.peek() == Some(&'>') {
                        bump!();
                        Tok::Arrow
                    } else {
                        return Err(LangError::Syntax {
                            span,
                            message: "expected `->`".to_string(),
                        });
                    }
                }
                other => {
                    return Err(LangError::Syntax {
                        span,
                        message: format!("unexpected character `{other}`"),
                    })
                }
            }
        };
        out.push(Token { tok, span });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<Tok> {
        lex(text).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn keywords_and_idents() {
        assert_eq!(
            toks("fact Employee covers"),
            vec![
                Tok::Fact,
                Tok::Ident("Employee".into()),
                Tok::Ident("covers".into()),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn punctuation_and_arrow() {
        assert_eq!(
            toks("(x, y) -> z = 3"),
            vec![
                Tok::LParen,
                Tok::Ident("x".into()),
                Tok::Comma,
                Tok::Ident("y".into()),
                Tok::RParen,
                Tok::Arrow,
                Tok::Ident("z".into()),
                Tok::Eq,
                Tok::Int(3),
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(
            toks("fact # rest of line\nconstraint"),
            vec![Tok::Fact, Tok::Constraint, Tok::Eof]
        );
    }

    #[test]
    fn spans_track_lines_and_columns() {
        let tokens = lex("fact\n  cover").unwrap();
        assert_eq!(tokens[0].span, SourceSpan { line: 1, column: 1 });
        assert_eq!(tokens[1].span, SourceSpan { line: 2, column: 3 });
    }

    #[test]
    fn bare_dash_rejected() {
        let err = lex("a - b").unwrap_err();
        assert!(matches!(err, LangError::Syntax { .. }));
        assert!(err.to_string().contains("->"));
    }

    #[test]
    fn huge_integer_rejected() {
        let err = lex("99999999999999999999").unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }
}
