//! A small arithmetic expression language for structural assignments and
//! utility mechanisms.
//!
//! Grammar (lowest precedence first):
//!
//! ```text
//! expr    := sum (cmp sum)?
//! cmp     := "<" | "<=" | ">" | ">=" | "=" | "==" | "!=" | "≤" | "≥" | "≠"
//! sum     := product (("+" | "-") product)*
//! product := unary (("*" | "/") unary)*
//! unary   := "-" unary | primary
//! primary := number | ident | ident "(" expr ")" | "(" expr ")"
//! ```
//!
//! Known functions are `indicator`, `abs` and `sqrt`. Comparisons evaluate to
//! `1.0` or `0.0`; `indicator(x)` is `1.0` when `x` is non-zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Indicator,
    Abs,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Indicator => "indicator",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Indicator => indicator(x != 0.0),
            Func::Abs => x.abs(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

pub fn parse_expression(text: &str) -> Result<Expr> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, len: text.len() };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(Error::Parse { position: t.pos, message: format!("unexpected `{}`", t.kind) });
    }
    Ok(e)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(BinOp),
    Cmp(CmpOp),
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(x) => write!(f, "{x}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Op(op) => f.write_str(match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            }),
            Tok::Cmp(c) => f.write_str(c.symbol()),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
        }
    }
}

struct Token {
    kind: Tok,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let kind = match c {
            c if c.is_whitespace() => {
                chars.next();
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut end = pos;
                let mut prev = ' ';
                while let Some(&(i, d)) = chars.peek() {
                    let exp_sign = (d == '+' || d == '-') && (prev == 'e' || prev == 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        end = i + d.len_utf8();
                        prev = d;
                        chars.next();
                    } else {
                        break;
                    }
                }
                let lit = &text[pos..end];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| Error::Parse { position: pos, message: format!("invalid number `{lit}`") })?;
                Tok::Num(v)
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut end = pos;
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        end = i + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                Tok::Ident(text[pos..end].to_string())
            }
            _ => {
                chars.next();
                let next = chars.peek().map(|&(_, d)| d);
                let mut two = |k: Tok| {
                    chars.next();
                    k
                };
                match (c, next) {
                    ('<', Some('=')) => two(Tok::Cmp(CmpOp::Le)),
                    ('>', Some('=')) => two(Tok::Cmp(CmpOp::Ge)),
                    ('=', Some('=')) => two(Tok::Cmp(CmpOp::Eq)),
                    ('!', Some('=')) => two(Tok::Cmp(CmpOp::Ne)),
                    ('<', _) => Tok::Cmp(CmpOp::Lt),
                    ('>', _) => Tok::Cmp(CmpOp::Gt),
                    ('=', _) => Tok::Cmp(CmpOp::Eq),
                    ('≤', _) => Tok::Cmp(CmpOp::Le),
                    ('≥', _) => Tok::Cmp(CmpOp::Ge),
                    ('≠', _) => Tok::Cmp(CmpOp::Ne),
                    ('+', _) => Tok::Op(BinOp::Add),
                    ('-', _) | ('−', _) => Tok::Op(BinOp::Sub),
                    ('*', _) | ('·', _) => Tok::Op(BinOp::Mul),
                    ('/', _) => Tok::Op(BinOp::Div),
                    ('(', _) => Tok::LParen,
                    (')', _) => Tok::RParen,
                    _ => return Err(Error::Parse { position: pos, message: format!("unexpected character `{c}`") }),
                }
            }
        };
        out.push(Token { kind, pos });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.len, |t| t.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|t| t.kind.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        let at = self.here();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(Error::Parse { position: at, message: format!("expected `{want}`, found `{t}`") }),
            None => Err(Error::Parse { position: at, message: format!("expected `{want}`, found end of input") }),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let lhs = self.sum()?;
        if let Some(Token { kind: Tok::Cmp(op), .. }) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.sum()?;
            if let Some(Token { kind: Tok::Cmp(_), pos }) = self.peek() {
                return Err(Error::Parse { position: *pos, message: "comparisons do not chain".into() });
            }
            return Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        while let Some(Token { kind: Tok::Op(op @ (BinOp::Add | BinOp::Sub)), .. }) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token { kind: Tok::Op(op @ (BinOp::Mul | BinOp::Div)), .. }) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token { kind: Tok::Op(BinOp::Sub), .. }) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Ident(name)) => {
                if let Some(Token { kind: Tok::LParen, .. }) = self.peek() {
                    let func = match name.as_str() {
                        "indicator" => Func::Indicator,
                        "abs" => Func::Abs,
                        "sqrt" => Func::Sqrt,
                        _ => return Err(Error::UnknownFunction { name, position: at }),
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(t) => Err(Error::Parse { position: at, message: format!("unexpected `{t}`") }),
            None => Err(Error::Parse { position: at, message: "unexpected end of input".into() }),
        }
    }
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Identifiers appearing in the expression.
    pub fn free_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_symbols(out),
            Expr::Bin(_, a, b) | Expr::Cmp(_, a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
        }
    }

    /// Replaces every variable found in `values` by its number.
    pub fn bind(&self, values: &BTreeMap<String, f64>) -> Expr {
        self.map_vars(&|v| values.get(v).map(|x| Expr::Num(*x)))
    }

    /// Replaces variables for which `f` returns a replacement.
    pub fn map_vars(&self, f: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Num(x) => Expr::Num(*x),
            Expr::Var(v) => f(v).unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map_vars(f))),
            Expr::Call(g, a) => Expr::Call(*g, Box::new(a.map_vars(f))),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
            Expr::Cmp(op, a, b) => Expr::Cmp(*op, Box::new(a.map_vars(f)), Box::new(b.map_vars(f))),
        }
    }

    /// Constant folding plus the identities `0·x = 0`, `1·x = x`, `x + 0 = x`.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => match a.simplify() {
                Expr::Num(x) => Expr::Num(-x),
                e => Expr::Neg(Box::new(e)),
            },
            Expr::Call(g, a) => match a.simplify() {
                Expr::Num(x) => Expr::Num(g.apply(x)),
                e => Expr::Call(*g, Box::new(e)),
            },
            Expr::Cmp(op, a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Num(x), Expr::Num(y)) => Expr::Num(indicator(op.apply(x, y))),
                (x, y) => Expr::Cmp(*op, Box::new(x), Box::new(y)),
            },
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.simplify(), b.simplify());
                match (op, &a, &b) {
                    (_, Expr::Num(x), Expr::Num(y)) => Expr::Num(apply_bin(*op, *x, *y)),
                    (BinOp::Mul, Expr::Num(z), _) | (BinOp::Mul, _, Expr::Num(z)) if *z == 0.0 => Expr::Num(0.0),
                    (BinOp::Div, Expr::Num(z), _) if *z == 0.0 => Expr::Num(0.0),
                    (BinOp::Mul, Expr::Num(o), e) | (BinOp::Mul, e, Expr::Num(o)) if *o == 1.0 => e.clone(),
                    (BinOp::Div, e, Expr::Num(o)) if *o == 1.0 => e.clone(),
                    (BinOp::Add, Expr::Num(z), e) | (BinOp::Add, e, Expr::Num(z)) if *z == 0.0 => e.clone(),
                    (BinOp::Sub, e, Expr::Num(z)) if *z == 0.0 => e.clone(),
                    (BinOp::Sub, Expr::Num(z), e) if *z == 0.0 => Expr::Neg(Box::new(e.clone())),
                    _ => Expr::Bin(*op, Box::new(a), Box::new(b)),
                }
            }
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Expr::Num(x) => Some(*x),
            _ => None,
        }
    }

    /// Evaluates with a name lookup. Unknown names are an error.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64> {
        Ok(match self {
            Expr::Num(x) => *x,
            Expr::Var(v) => lookup(v).ok_or_else(|| Error::Validation(format!("unbound symbol `{v}`")))?,
            Expr::Neg(a) => -a.eval(lookup)?,
            Expr::Call(g, a) => g.apply(a.eval(lookup)?),
            Expr::Bin(op, a, b) => apply_bin(*op, a.eval(lookup)?, b.eval(lookup)?),
            Expr::Cmp(op, a, b) => indicator(op.apply(a.eval(lookup)?, b.eval(lookup)?)),
        })
    }

    /// Compiles to a stack program reading variables from slots.
    pub fn compile(&self, slot_of: &dyn Fn(&str) -> Option<usize>) -> Result<Compiled> {
        let mut ops = Vec::new();
        self.emit(slot_of, &mut ops)?;
        Ok(Compiled { ops })
    }

    fn emit(&self, slot_of: &dyn Fn(&str) -> Option<usize>, ops: &mut Vec<Op>) -> Result<()> {
        match self {
            Expr::Num(x) => ops.push(Op::Push(*x)),
            Expr::Var(v) => {
                let s = slot_of(v).ok_or_else(|| Error::Validation(format!("unbound symbol `{v}`")))?;
                ops.push(Op::Load(s));
            }
            Expr::Neg(a) => {
                a.emit(slot_of, ops)?;
                ops.push(Op::Neg);
            }
            Expr::Call(g, a) => {
                a.emit(slot_of, ops)?;
                ops.push(Op::Call(*g));
            }
            Expr::Bin(op, a, b) => {
                a.emit(slot_of, ops)?;
                b.emit(slot_of, ops)?;
                ops.push(Op::Bin(*op));
            }
            Expr::Cmp(op, a, b) => {
                a.emit(slot_of, ops)?;
                b.emit(slot_of, ops)?;
                ops.push(Op::Cmp(*op));
            }
        }
        Ok(())
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Cmp(..) => 0,
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Num(x) if *x < 0.0 => 3,
            _ => 4,
        }
    }
}

pub(crate) fn apply_bin(op: BinOp, a: f64, b: f64) -> f64 {
    match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a / b,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, 3)
            }
            Expr::Call(g, a) => write!(f, "{}({a})", g.name()),
            Expr::Cmp(op, a, b) => {
                wrap(f, a, 1)?;
                write!(f, " {} ", op.symbol())?;
                wrap(f, b, 1)
            }
            Expr::Bin(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => (" + ", 1),
                    BinOp::Sub => (" - ", 1),
                    BinOp::Mul => (" * ", 2),
                    BinOp::Div => (" / ", 2),
                };
                wrap(f, a, p)?;
                f.write_str(sym)?;
                // right operand of a non-commutative or same-level op needs
                // parentheses to keep the tree shape
                wrap(f, b, p + 1)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Push(f64),
    Load(usize),
    Neg,
    Call(Func),
    Bin(BinOp),
    Cmp(CmpOp),
}

/// A compiled expression evaluated over a slice of slot values.
#[derive(Clone, Debug)]
pub struct Compiled {
    ops: Vec<Op>,
}

impl Compiled {
    pub fn eval(&self, slots: &[f64]) -> f64 {
        let mut stack = Vec::with_capacity(8);
        self.eval_with(slots, &mut stack)
    }

    pub fn eval_with(&self, slots: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        for op in &self.ops {
            match *op {
                Op::Push(x) => stack.push(x),
                Op::Load(s) => stack.push(slots[s]),
                Op::Neg => {
                    let a = stack.pop().unwrap_or(f64::NAN);
                    stack.push(-a);
                }
                Op::Call(g) => {
                    let a = stack.pop().unwrap_or(f64::NAN);
                    stack.push(g.apply(a));
                }
                Op::Bin(b) => {
                    let y = stack.pop().unwrap_or(f64::NAN);
                    let x = stack.pop().unwrap_or(f64::NAN);
                    stack.push(apply_bin(b, x, y));
                }
                Op::Cmp(c) => {
                    let y = stack.pop().unwrap_or(f64::NAN);
                    let x = stack.pop().unwrap_or(f64::NAN);
                    stack.push(indicator(c.apply(x, y)));
                }
            }
        }
        stack.pop().unwrap_or(f64::NAN)
    }
}
