//! Arithmetic expressions over a single `{#Name}` placeholder.
//!
//! Grammar (recursive descent):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '×' | '/' | '÷') unary)*
//! unary   := '-' unary | primary
//! primary := number | '{#' name '}' | '(' expr ')'
//! number  := digits ([.,] digits)?
//! ```
//!
//! Evaluation uses 96-bit decimals; results are rounded half away from
//! zero to [`OUTPUT_SCALE`] fractional digits.

use std::fmt;
use std::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use thiserror::Error;

pub const OUTPUT_SCALE: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("expression syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Decimal),
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Expr,
    variable: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(Decimal),
    Var(String),
    Op(BinOp),
    LParen,
    RParen,
}

fn syntax<T>(offset: usize, message: impl Into<String>) -> Result<T, ExprError> {
    Err(ExprError::Syntax {
        offset,
        message: message.into(),
    })
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (offset, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' => {
                let mut lit = String::new();
                let mut seen_sep = false;
                while i < chars.len() {
                    let ch = chars[i].1;
                    if ch.is_ascii_digit() {
                        lit.push(ch);
                    } else if (ch == '.' || ch == ',')
                        && !seen_sep
                        && chars.get(i + 1).is_some_and(|n| n.1.is_ascii_digit())
                    {
                        seen_sep = true;
                        lit.push('.');
                    } else {
                        break;
                    }
                    i += 1;
                }
                let value =
                    Decimal::from_str(&lit).or_else(|_| syntax(offset, "number out of range"))?;
                tokens.push((offset, Token::Num(value)));
            }
            '{' => {
                if chars.get(i + 1).map(|c| c.1) != Some('#') {
                    return syntax(offset, "expected `{#` placeholder");
                }
                let mut name = String::new();
                i += 2;
                loop {
                    match chars.get(i) {
                        Some((_, '}')) => break,
                        Some((_, ch)) => name.push(*ch),
                        None => return syntax(offset, "unterminated placeholder"),
                    }
                    i += 1;
                }
                i += 1;
                let name = name.trim().to_string();
                if name.is_empty() {
                    return syntax(offset, "empty placeholder name");
                }
                tokens.push((offset, Token::Var(name)));
            }
            '+' => {
                tokens.push((offset, Token::Op(BinOp::Add)));
                i += 1;
            }
            '-' | '−' => {
                tokens.push((offset, Token::Op(BinOp::Sub)));
                i += 1;
            }
            '*' | '×' => {
                tokens.push((offset, Token::Op(BinOp::Mul)));
                i += 1;
            }
            '/' | '÷' => {
                tokens.push((offset, Token::Op(BinOp::Div)));
                i += 1;
            }
            '(' => {
                tokens.push((offset, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((offset, Token::RParen));
                i += 1;
            }
            other => return syntax(offset, format!("unexpected character `{other}`")),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
    variable: Option<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.1)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ (BinOp::Add | BinOp::Sub))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ (BinOp::Mul | BinOp::Div))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Token::Op(BinOp::Sub)) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let offset = self.offset();
        match self.tokens.get(self.pos).map(|t| t.1.clone()) {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Token::Var(name)) => {
                self.pos += 1;
                match &self.variable {
                    Some(existing) if *existing != name => syntax(
                        offset,
                        format!("second placeholder `{name}` (already using `{existing}`)"),
                    ),
                    _ => {
                        self.variable = Some(name);
                        Ok(Expr::Var)
                    }
                }
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => syntax(self.offset(), "expected `)`"),
                }
            }
            Some(_) => syntax(offset, "expected a number, placeholder or `(`"),
            None => syntax(offset, "unexpected end of expression"),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expression, ExprError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
        variable: None,
    };
    let root = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return syntax(parser.offset(), "trailing input");
    }
    Ok(Expression {
        root,
        variable: parser.variable,
    })
}

impl FromStr for Expression {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expression(s)
    }
}

/// Rounds half away from zero to the output scale and drops trailing zeros.
pub fn round_output(value: Decimal) -> Decimal {
    value
        .round_dp_with_strategy(OUTPUT_SCALE, RoundingStrategy::MidpointAwayFromZero)
        .normalize()
}

/// Parses a message value as a decimal; `,` is accepted as separator.
pub fn parse_decimal(text: &str) -> Option<Decimal> {
    let t = text.trim().replace(',', ".");
    Decimal::from_str(&t)
        .or_else(|_| Decimal::from_scientific(&t))
        .ok()
}

fn eval(e: &Expr, x: Decimal) -> Result<Decimal, ExprError> {
    Ok(match e {
        Expr::Num(v) => *v,
        Expr::Var => x,
        Expr::Neg(inner) => -eval(inner, x)?,
        Expr::Bin(op, l, r) => {
            let (l, r) = (eval(l, x)?, eval(r, x)?);
            match op {
                BinOp::Add => l.checked_add(r).ok_or(ExprError::Overflow)?,
                BinOp::Sub => l.checked_sub(r).ok_or(ExprError::Overflow)?,
                BinOp::Mul => l.checked_mul(r).ok_or(ExprError::Overflow)?,
                BinOp::Div => {
                    if r.is_zero() {
                        return Err(ExprError::DivisionByZero);
                    }
                    l.checked_div(r).ok_or(ExprError::Overflow)?
                }
            }
        }
    })
}

/// Polynomial degree in the placeholder, or `None` when not polynomial.
fn degree(e: &Expr) -> Option<u32> {
    match e {
        Expr::Num(_) => Some(0),
        Expr::Var => Some(1),
        Expr::Neg(inner) => degree(inner),
        Expr::Bin(BinOp::Add | BinOp::Sub, l, r) => Some(degree(l)?.max(degree(r)?)),
        Expr::Bin(BinOp::Mul, l, r) => Some(degree(l)? + degree(r)?),
        Expr::Bin(BinOp::Div, l, r) => match degree(r)? {
            0 => degree(l),
            _ => None,
        },
    }
}

impl Expression {
    pub fn variable(&self) -> Option<&str> {
        self.variable.as_deref()
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    /// Unrounded evaluation.
    pub fn evaluate_exact(&self, value: Decimal) -> Result<Decimal, ExprError> {
        eval(&self.root, value)
    }

    /// Evaluation rounded to the output scale.
    pub fn evaluate(&self, value: Decimal) -> Result<Decimal, ExprError> {
        self.evaluate_exact(value).map(round_output)
    }

    /// `(a, b)` with `f(x) = a·x + b`, when the expression is affine.
    pub fn linear_coefficients(&self) -> Option<(Decimal, Decimal)> {
        if degree(&self.root)? > 1 {
            return None;
        }
        let b = self.evaluate_exact(Decimal::ZERO).ok()?;
        let a = self.evaluate_exact(Decimal::ONE).ok()?.checked_sub(b)?;
        Some((a, b))
    }

    /// Algebraic inverse `(y - b) / a` of an affine expression with `a != 0`,
    /// using `variable` as the new placeholder name.
    pub fn inverse(&self, variable: &str) -> Option<Expression> {
        let (a, b) = self.linear_coefficients()?;
        if a.is_zero() {
            return None;
        }
        let shifted = if b.is_zero() {
            Expr::Var
        } else if b.is_sign_negative() {
            Expr::Bin(BinOp::Add, Box::new(Expr::Var), Box::new(Expr::Num(-b)))
        } else {
            Expr::Bin(BinOp::Sub, Box::new(Expr::Var), Box::new(Expr::Num(b)))
        };
        let root = if a == Decimal::ONE {
            shifted
        } else {
            Expr::Bin(BinOp::Div, Box::new(shifted), Box::new(Expr::Num(a)))
        };
        Some(Expression {
            root,
            variable: Some(variable.to_string()),
        })
    }

    /// Renders with minimal parentheses; `var` replaces the placeholder.
    pub fn render(&self, var: &str, div: &str) -> String {
        render(&self.root, var, div)
    }

    /// XPath 1.0 arithmetic over the given operand expression.
    pub fn to_xpath(&self, operand: &str) -> String {
        self.render(operand, "div")
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Num(v) if v.is_sign_negative() => 3,
        Expr::Num(_) | Expr::Var => 4,
    }
}

fn render(e: &Expr, var: &str, div: &str) -> String {
    let wrap = |child: &Expr, parens: bool| {
        let s = render(child, var, div);
        if parens {
            format!("({s})")
        } else {
            s
        }
    };
    match e {
        Expr::Num(v) => v.normalize().to_string(),
        Expr::Var => var.to_string(),
        Expr::Neg(inner) => format!("-{}", wrap(inner, precedence(inner) < 3)),
        Expr::Bin(op, l, r) => {
            let p = precedence(e);
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => div,
            };
            let right_parens =
                precedence(r) < p || (precedence(r) == p && matches!(op, BinOp::Sub | BinOp::Div));
            format!(
                "{} {sym} {}",
                wrap(l, precedence(l) < p),
                wrap(r, right_parens)
            )
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let var = format!("{{#{}}}", self.variable.as_deref().unwrap_or("x"));
        f.write_str(&self.render(&var, "/"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn celsius_to_fahrenheit() {
        let e = parse_expression("({#C} × 1,8) + 32").unwrap();
        assert_eq!(e.variable(), Some("C"));
        assert_eq!(e.evaluate(d("100")).unwrap().to_string(), "212");
        assert_eq!(e.evaluate(d("-40")).unwrap().to_string(), "-40");
    }

    #[test]
    fn identity_and_constants() {
        assert_eq!(
            parse_expression("{#x}").unwrap().evaluate(d("5")).unwrap(),
            d("5")
        );
        let c = parse_expression("2 * (3 + 4)").unwrap();
        assert_eq!(c.variable(), None);
        assert_eq!(c.evaluate(Decimal::ZERO).unwrap(), d("14"));
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "(1 +",
            "",
            "1 2",
            "{#a} + {#b}",
            "{x}",
            "{#}",
            "3 $ 4",
            "(1))",
        ] {
            assert!(
                matches!(parse_expression(bad), Err(ExprError::Syntax { .. })),
                "{bad:?} should fail"
            );
        }
        // same placeholder twice is fine
        assert!(parse_expression("{#a} * {#a}").is_ok());
    }

    #[test]
    fn division_by_zero() {
        let e = parse_expression("1 / ({#x} - 2)").unwrap();
        assert_eq!(e.evaluate(d("2")), Err(ExprError::DivisionByZero));
        assert_eq!(e.evaluate(d("3")).unwrap(), d("1"));
    }

    #[test]
    fn comma_and_dot_agree() {
        let a = parse_expression("{#x} * 1,8").unwrap();
        let b = parse_expression("{#x} * 1.8").unwrap();
        assert_eq!(a.evaluate(d("3.3")).unwrap(), b.evaluate(d("3.3")).unwrap());
    }

    #[test]
    fn rounding_half_up_six_digits() {
        let e = parse_expression("{#x} / 3").unwrap();
        assert_eq!(e.evaluate(d("2")).unwrap().to_string(), "0.666667");
        let e = parse_expression("{#x} + 0").unwrap();
        assert_eq!(e.evaluate(d("0.0000005")).unwrap().to_string(), "0.000001");
        assert_eq!(
            e.evaluate(d("-0.0000005")).unwrap().to_string(),
            "-0.000001"
        );
    }

    #[test]
    fn linear_inverse() {
        let e = parse_expression("({#C} × 1,8) + 32").unwrap();
        assert_eq!(e.linear_coefficients(), Some((d("1.8"), d("32"))));
        let inv = e.inverse("F").unwrap();
        assert_eq!(inv.to_string(), "({#F} - 32) / 1.8");
        assert_eq!(inv.evaluate(d("212")).unwrap(), d("100"));
        assert!(parse_expression("{#x} * {#x}")
            .unwrap()
            .inverse("y")
            .is_none());
        assert!(parse_expression("1 / {#x}").unwrap().inverse("y").is_none());
        assert!(parse_expression("{#x} * 0 + 3")
            .unwrap()
            .inverse("y")
            .is_none());
    }

    #[test]
    fn rendering_keeps_meaning() {
        let e = parse_expression("({#C} × 1,8) + 32").unwrap();
        assert_eq!(e.to_xpath("$v"), "$v * 1.8 + 32");
        let e = parse_expression("10 - ({#x} - 3) / (2 * -{#x})").unwrap();
        let again = parse_expression(&e.to_string()).unwrap();
        for x in ["1", "2.5", "-7"] {
            assert_eq!(e.evaluate(d(x)).unwrap(), again.evaluate(d(x)).unwrap());
        }
        assert_eq!(e.to_xpath("$v"), "10 - ($v - 3) div (2 * -$v)");
    }
}
