//! Recursive-descent parser for the expression grammar over `u1..ud`.
//!
//! Precedence, tightest first: power, unary minus, `* /`, `+ -`. The
//! exponent of `^` is a numeric literal with an optional leading minus.
//! Fractional exponents are only accepted on `abs(...)` or other provably
//! nonnegative subexpressions, keeping parsed functions real-valued on all
//! of ℝᵈ. See `docs/grammar.md` at the workspace root.

use super::{Expr, Node};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("variable index {index} exceeds dimension {dim} (at byte {pos})")]
    VarIndexOutOfRange { pos: usize, index: usize, dim: usize },
    #[error("fractional power of a possibly negative base at byte {pos}; wrap the base in abs(...)")]
    FractionalPowerOfSignedBase { pos: usize },
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Var(usize),
    Abs,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek_pos(&mut self) -> usize {
        self.skip_ws();
        self.pos
    }

    fn next_tok(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let simple = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = simple {
            self.pos += 1;
            return Ok((t, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return Ok((Tok::Number(self.scan_number()?), start));
        }
        if c.is_ascii_alphabetic() {
            let mut end = self.pos;
            while end < self.src.len()
                && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
            {
                end += 1;
            }
            let word = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
            self.pos = end;
            if word == "abs" {
                return Ok((Tok::Abs, start));
            }
            if let Some(rest) = word.strip_prefix('u') {
                if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                    let idx: usize = rest.parse().map_err(|_| ParseError::Syntax {
                        pos: start,
                        msg: format!("bad variable index in `{word}`"),
                    })?;
                    if idx == 0 {
                        return Err(ParseError::Syntax {
                            pos: start,
                            msg: "variable indices start at u1".into(),
                        });
                    }
                    return Ok((Tok::Var(idx), start));
                }
            }
            return Err(ParseError::UnknownIdentifier {
                pos: start,
                name: word.to_string(),
            });
        }
        Err(ParseError::Syntax {
            pos: start,
            msg: format!("unexpected character `{}`", c as char),
        })
    }

    fn scan_number(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mut j = self.pos + 1;
            if j < self.src.len() && (self.src[j] == b'+' || self.src[j] == b'-') {
                j += 1;
            }
            if j < self.src.len() && self.src[j].is_ascii_digit() {
                self.pos = j;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse().map_err(|_| ParseError::Syntax {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })
    }
}

pub(super) struct Parser<'a> {
    lexer: Lexer<'a>,
    look: (Tok, usize),
    dim: usize,
}

impl<'a> Parser<'a> {
    pub(super) fn parse(src: &'a str, dim: usize) -> Result<Expr, ParseError> {
        let mut lexer = Lexer::new(src);
        let look = lexer.next_tok()?;
        let mut p = Parser { lexer, look, dim };
        let root = p.expr()?;
        if p.look.0 != Tok::End {
            return Err(ParseError::Syntax {
                pos: p.look.1,
                msg: "trailing input after expression".into(),
            });
        }
        Ok(Expr { root, dim })
    }

    fn bump(&mut self) -> Result<(Tok, usize), ParseError> {
        let next = self.lexer.next_tok()?;
        Ok(std::mem::replace(&mut self.look, next))
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.look.0 {
                Tok::Plus => {
                    self.bump()?;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump()?;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.look.0 {
                Tok::Star => {
                    self.bump()?;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump()?;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.look.0 == Tok::Minus {
            self.bump()?;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.look.0 != Tok::Caret {
            return Ok(base);
        }
        let caret_pos = self.bump()?.1;
        let mut sign = 1.0;
        if self.look.0 == Tok::Minus {
            self.bump()?;
            sign = -1.0;
        }
        let k = match self.bump()? {
            (Tok::Number(k), _) => sign * k,
            (_, pos) => {
                return Err(ParseError::Syntax {
                    pos,
                    msg: "exponent must be a numeric literal".into(),
                })
            }
        };
        if k.fract() != 0.0 && !base.provably_nonneg() {
            return Err(ParseError::FractionalPowerOfSignedBase { pos: caret_pos });
        }
        Ok(Node::Pow(Box::new(base), k))
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.bump()? {
            (Tok::Number(v), _) => Ok(Node::Const(v)),
            (Tok::Var(idx), pos) => {
                if idx > self.dim {
                    return Err(ParseError::VarIndexOutOfRange {
                        pos,
                        index: idx,
                        dim: self.dim,
                    });
                }
                Ok(Node::Var(idx - 1))
            }
            (Tok::Abs, _) => {
                let pos = self.look.1;
                if self.bump()?.0 != Tok::LParen {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: "expected `(` after abs".into(),
                    });
                }
                let inner = self.expr()?;
                let pos = self.look.1;
                if self.bump()?.0 != Tok::RParen {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: "expected `)` closing abs".into(),
                    });
                }
                Ok(Node::Abs(Box::new(inner)))
            }
            (Tok::LParen, _) => {
                let inner = self.expr()?;
                let pos = self.look.1;
                if self.bump()?.0 != Tok::RParen {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: "expected `)`".into(),
                    });
                }
                Ok(inner)
            }
            (tok, pos) => Err(ParseError::Syntax {
                pos,
                msg: format!("expected an operand, found {tok:?}"),
            }),
        }
    }

    #[allow(dead_code)]
    fn peek_pos(&mut self) -> usize {
        self.lexer.peek_pos()
    }
}
