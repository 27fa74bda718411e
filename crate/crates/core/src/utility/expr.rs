//! Arithmetic expression utilities: tokenizer, recursive-descent parser,
//! canonical printer and a generic evaluator.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr     := term (("+"|"-") term)* ;
//! term     := factor (("*"|"/") factor)* ;
//! factor   := base ("^" number)? ;
//! base     := number | variable | "(" expr ")" | func "(" expr ")" ;
//! func     := "log" | "exp" | "sqrt" ;
//! variable := "x" integer (1-based) ;
//! ```

use std::fmt;

use super::dual::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Log,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Log => "log",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree. Variables are stored 0-based; `x1` is `Var(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprAst {
    Num(f64),
    Var(usize),
    Add(Box<ExprAst>, Box<ExprAst>),
    Sub(Box<ExprAst>, Box<ExprAst>),
    Mul(Box<ExprAst>, Box<ExprAst>),
    Div(Box<ExprAst>, Box<ExprAst>),
    Pow(Box<ExprAst>, f64),
    Call(Func, Box<ExprAst>),
}

impl ExprAst {
    pub fn eval<S: Scalar>(&self, vars: &[S]) -> S {
        match self {
            ExprAst::Num(v) => S::constant(*v),
            ExprAst::Var(i) => vars[*i],
            ExprAst::Add(a, b) => a.eval(vars) + b.eval(vars),
            ExprAst::Sub(a, b) => a.eval(vars) - b.eval(vars),
            ExprAst::Mul(a, b) => a.eval(vars) * b.eval(vars),
            ExprAst::Div(a, b) => a.eval(vars) / b.eval(vars),
            ExprAst::Pow(a, e) => a.eval(vars).powf(*e),
            ExprAst::Call(f, a) => {
                let v = a.eval(vars);
                match f {
                    Func::Log => v.ln(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Largest 0-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            ExprAst::Num(_) => None,
            ExprAst::Var(i) => Some(*i),
            ExprAst::Add(a, b) | ExprAst::Sub(a, b) | ExprAst::Mul(a, b) | ExprAst::Div(a, b) => {
                a.max_var().max(b.max_var())
            }
            ExprAst::Pow(a, _) | ExprAst::Call(_, a) => a.max_var(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ExprAst::Add(..) | ExprAst::Sub(..) => 1,
            ExprAst::Mul(..) | ExprAst::Div(..) => 2,
            ExprAst::Pow(..) => 3,
            _ => 4,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &ExprAst, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prec = self.precedence();
        match self {
            ExprAst::Num(v) => write!(f, "{v}"),
            ExprAst::Var(i) => write!(f, "x{}", i + 1),
            ExprAst::Add(a, b) | ExprAst::Sub(a, b) | ExprAst::Mul(a, b) | ExprAst::Div(a, b) => {
                let op = match self {
                    ExprAst::Add(..) => " + ",
                    ExprAst::Sub(..) => " - ",
                    ExprAst::Mul(..) => " * ",
                    _ => " / ",
                };
                // left-associative: a right child of equal precedence needs parens
                write_child(f, a, a.precedence() < prec)?;
                f.write_str(op)?;
                write_child(f, b, b.precedence() <= prec)
            }
            ExprAst::Pow(a, e) => {
                write_child(f, a, a.precedence() < 4)?;
                write!(f, "^{e}")
            }
            ExprAst::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Var(usize),
    Func(Func),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos - start
    }

    /// Returns the token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize)> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start));
        }
        if c.is_ascii_digit() {
            self.digits();
            if self.src.get(self.pos) == Some(&b'.') {
                self.pos += 1;
                self.digits();
            }
            if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
                let save = self.pos;
                self.pos += 1;
                if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
                if self.digits() == 0 {
                    return Err(Error::Syntax {
                        pos: save,
                        msg: "malformed exponent in numeric literal".into(),
                    });
                }
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                pos: start,
                msg: format!("invalid number '{text}'"),
            })?;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
            return match word {
                "log" => Ok((Tok::Func(Func::Log), start)),
                "exp" => Ok((Tok::Func(Func::Exp), start)),
                "sqrt" => Ok((Tok::Func(Func::Sqrt), start)),
                "x" => {
                    let dstart = self.pos;
                    if self.digits() == 0 {
                        return Err(Error::Syntax {
                            pos: start,
                            msg: "variable name must be 'x' followed by an index".into(),
                        });
                    }
                    let text = std::str::from_utf8(&self.src[dstart..self.pos]).expect("ascii");
                    let idx: usize = text.parse().map_err(|_| Error::Syntax {
                        pos: dstart,
                        msg: format!("invalid variable index '{text}'"),
                    })?;
                    if idx == 0 {
                        return Err(Error::Syntax {
                            pos: start,
                            msg: "variable indices are 1-based".into(),
                        });
                    }
                    Ok((Tok::Var(idx), start))
                }
                _ => Err(Error::Syntax {
                    pos: start,
                    msg: format!("unknown identifier '{word}'"),
                }),
            };
        }
        Err(Error::Syntax {
            pos: start,
            msg: format!("unexpected character '{}'", c as char),
        })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    tok_pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<()> {
        let (t, p) = self.lex.next()?;
        self.tok = t;
        self.tok_pos = p;
        Ok(())
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.tok != want {
            return Err(Error::Syntax {
                pos: self.tok_pos,
                msg: format!("expected {what}"),
            });
        }
        self.advance()
    }

    fn expr(&mut self) -> Result<ExprAst> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.advance()?;
                    lhs = ExprAst::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.advance()?;
                    lhs = ExprAst::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ExprAst> {
        let mut lhs = self.factor()?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.advance()?;
                    lhs = ExprAst::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.advance()?;
                    lhs = ExprAst::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ExprAst> {
        let base = self.base()?;
        if self.tok != Tok::Caret {
            return Ok(base);
        }
        self.advance()?;
        match self.tok {
            Tok::Num(e) => {
                self.advance()?;
                Ok(ExprAst::Pow(Box::new(base), e))
            }
            Tok::Var(_) | Tok::Func(_) | Tok::LParen => {
                Err(Error::NonConstantExponent { pos: self.tok_pos })
            }
            _ => Err(Error::Syntax {
                pos: self.tok_pos,
                msg: "expected numeric exponent after '^'".into(),
            }),
        }
    }

    fn base(&mut self) -> Result<ExprAst> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(ExprAst::Num(v))
            }
            Tok::Var(idx) => {
                if idx > self.dim {
                    return Err(Error::VariableOutOfRange {
                        index: idx,
                        dim: self.dim,
                    });
                }
                self.advance()?;
                Ok(ExprAst::Var(idx - 1))
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Func(f) => {
                self.advance()?;
                self.expect(Tok::LParen, "'(' after function name")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(ExprAst::Call(f, Box::new(e)))
            }
            Tok::End => Err(Error::Syntax {
                pos: self.tok_pos,
                msg: "unexpected end of input".into(),
            }),
            _ => Err(Error::Syntax {
                pos: self.tok_pos,
                msg: "expected number, variable, function or '('".into(),
            }),
        }
    }
}

/// Parses `text` as a utility over `dim` goods.
pub fn parse_utility(text: &str, dim: usize) -> Result<ExprAst> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let mut p = Parser {
        lex: Lexer {
            src: text.as_bytes(),
            pos: 0,
        },
        tok: Tok::End,
        tok_pos: 0,
        dim,
    };
    p.advance()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(Error::Syntax {
            pos: p.tok_pos,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(i: usize) -> Box<ExprAst> {
        Box::new(ExprAst::Var(i))
    }
    fn num(v: f64) -> Box<ExprAst> {
        Box::new(ExprAst::Num(v))
    }

    #[test]
    fn linear_form() {
        let e = parse_utility("x1 + 2*x2", 2).unwrap();
        assert_eq!(e, ExprAst::Add(var(0), Box::new(ExprAst::Mul(num(2.0), var(1)))));
    }

    #[test]
    fn cobb_douglas_form() {
        let e = parse_utility("x1^0.5 * x2^0.5", 2).unwrap();
        assert_eq!(
            e,
            ExprAst::Mul(
                Box::new(ExprAst::Pow(var(0), 0.5)),
                Box::new(ExprAst::Pow(var(1), 0.5))
            )
        );
        assert_eq!(e.eval(&[4.0, 1.0]), 2.0);
    }

    #[test]
    fn out_of_range_variable() {
        assert_eq!(
            parse_utility("x1 + x3", 2),
            Err(Error::VariableOutOfRange { index: 3, dim: 2 })
        );
    }

    #[test]
    fn non_constant_exponent() {
        assert_eq!(
            parse_utility("x1^x2", 2),
            Err(Error::NonConstantExponent { pos: 3 })
        );
        assert!(matches!(
            parse_utility("x1^(2)", 1),
            Err(Error::NonConstantExponent { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_utility("x1 + * x2", 2) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        match parse_utility("log(x1", 1) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_utility("-x1", 1), Err(Error::Syntax { pos: 0, .. })));
        assert!(matches!(parse_utility("x0", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_utility("min(x1)", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_utility("", 1), Err(Error::Syntax { .. })));
    }

    #[test]
    fn numbers_with_exponents() {
        let e = parse_utility("1.5e-1 * x1 + 2E2", 1).unwrap();
        assert!((e.eval(&[2.0]) - 200.3).abs() < 1e-12);
    }

    #[test]
    fn left_associative_printing() {
        for src in ["x1 - (x2 - x1)", "x1 - x2 - x1", "x1 / (x2 * x1)", "(x1 + x2)^2", "sqrt(x1 * x2)^0.5"] {
            let e = parse_utility(src, 2).unwrap();
            let again = parse_utility(&e.to_string(), 2).unwrap();
            assert_eq!(e, again, "{src} -> {e}");
        }
        let e = parse_utility("x1 - (x2 - x1)", 2).unwrap();
        assert_eq!(e.to_string(), "x1 - (x2 - x1)");
    }
}
