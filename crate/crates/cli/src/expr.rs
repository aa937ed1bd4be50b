//! A small expression language for user-supplied objectives.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'd' | 'k' | 'x' '[' expr ']' | '(' expr ')'
//!         | ('sin' | 'cos' | 'exp' | 'sqrt' | 'ln') '(' expr ')'
//!         | 'pow' '(' expr ',' expr ')' | 'sum' '(' expr ')'
//! ```
//!
//! `sum(e)` adds `e` over k = 0, …, d−1, and `x[i]` is zero-based, so
//! `sum(x[k]^2)` is the squared norm. Gradients are computed in forward mode
//! with dense dual numbers.

use std::fmt;

use lpgrad::bench::TestProblem;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("expression error at byte {pos}: {msg}")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Dim,
    Index,
    X(Box<Node>),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Sum(Box<Node>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v = text
                .parse()
                .map_err(|_| ExprError { pos: start, msg: format!("bad number '{text}'") })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^()[],".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(ExprError { pos: i, msg: format!("unexpected character '{c}'") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    sum_depth: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError { pos: self.pos(), msg: msg.into() })
    }

    fn peek_sym(&self, c: char) -> bool {
        matches!(self.toks.get(self.at), Some((_, Tok::Sym(s))) if *s == c)
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.peek_sym(c) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.peek_sym('+') {
                self.at += 1;
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.peek_sym('-') {
                self.at += 1;
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.peek_sym('*') {
                self.at += 1;
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.peek_sym('/') {
                self.at += 1;
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek_sym('-') {
            self.at += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.peek_sym('^') {
            self.at += 1;
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let Some((_, tok)) = self.toks.get(self.at).cloned() else {
            return self.err("unexpected end of expression");
        };
        self.at += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "d" => Ok(Node::Dim),
                "k" if self.sum_depth > 0 => Ok(Node::Index),
                "k" => {
                    self.at -= 1;
                    self.err("'k' is only defined inside sum(...)")
                }
                "x" => {
                    self.expect('[')?;
                    let idx = self.expr()?;
                    self.expect(']')?;
                    Ok(Node::X(Box::new(idx)))
                }
                "pow" => {
                    self.expect('(')?;
                    let a = self.expr()?;
                    self.expect(',')?;
                    let b = self.expr()?;
                    self.expect(')')?;
                    Ok(Node::Pow(Box::new(a), Box::new(b)))
                }
                "sum" => {
                    self.expect('(')?;
                    self.sum_depth += 1;
                    let body = self.expr()?;
                    self.sum_depth -= 1;
                    self.expect(')')?;
                    Ok(Node::Sum(Box::new(body)))
                }
                "sin" | "cos" | "exp" | "sqrt" | "ln" => {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "sqrt" => Func::Sqrt,
                        _ => Func::Ln,
                    };
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(Node::Call(f, Box::new(arg)))
                }
                other => {
                    self.at -= 1;
                    self.err(format!("unknown name '{other}'"))
                }
            },
            Tok::Sym(c) => {
                self.at -= 1;
                self.err(format!("unexpected '{c}'"))
            }
        }
    }
}

/// Forward-mode value with a dense gradient.
#[derive(Clone)]
struct Dual {
    v: f64,
    g: Vec<f64>,
}

impl Dual {
    fn constant(v: f64, d: usize) -> Self {
        Dual { v, g: vec![0.0; d] }
    }

    fn map(mut self, v: f64, dv: f64) -> Self {
        self.v = v;
        self.g.iter_mut().for_each(|g| *g *= dv);
        self
    }

    fn combine(mut self, other: &Dual, v: f64, da: f64, db: f64) -> Self {
        self.v = v;
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a = da * *a + db * b;
        }
        self
    }
}

/// A parsed objective over ℝ^d.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    src: String,
    root: Node,
    dim: usize,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

fn index(v: f64, d: usize) -> Result<usize, String> {
    let r = v.round();
    if (v - r).abs() > 1e-9 || r < 0.0 || r >= d as f64 {
        return Err(format!("index {v} is outside 0..{d}"));
    }
    Ok(r as usize)
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Self, ExprError> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, at: 0, end: src.len(), sum_depth: 0 };
        let root = p.expr()?;
        if p.at != p.toks.len() {
            return p.err("trailing input");
        }
        let e = Expr { src: src.to_string(), root, dim };
        // Surface constant out-of-range indices at parse time.
        e.eval(&vec![0.0; dim]).map_err(|msg| ExprError { pos: 0, msg })?;
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, String> {
        self.value(&self.root, x, None)
    }

    fn value(&self, n: &Node, x: &[f64], k: Option<usize>) -> Result<f64, String> {
        let d = self.dim;
        Ok(match n {
            Node::Num(v) => *v,
            Node::Dim => d as f64,
            Node::Index => k.expect("parser rejects k outside sum") as f64,
            Node::X(i) => x[index(self.value(i, x, k)?, d)?],
            Node::Neg(a) => -self.value(a, x, k)?,
            Node::Add(a, b) => self.value(a, x, k)? + self.value(b, x, k)?,
            Node::Sub(a, b) => self.value(a, x, k)? - self.value(b, x, k)?,
            Node::Mul(a, b) => self.value(a, x, k)? * self.value(b, x, k)?,
            Node::Div(a, b) => self.value(a, x, k)? / self.value(b, x, k)?,
            Node::Pow(a, b) => pow(self.value(a, x, k)?, self.value(b, x, k)?),
            Node::Call(f, a) => {
                let v = self.value(a, x, k)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Sqrt => v.sqrt(),
                    Func::Ln => v.ln(),
                }
            }
            Node::Sum(body) => {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += self.value(body, x, Some(j))?;
                }
                acc
            }
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, String> {
        Ok(self.dual(&self.root, x, None)?.g)
    }

    fn dual(&self, n: &Node, x: &[f64], k: Option<usize>) -> Result<Dual, String> {
        let d = self.dim;
        Ok(match n {
            Node::Num(_) | Node::Dim | Node::Index => Dual::constant(self.value(n, x, k)?, d),
            Node::X(i) => {
                let j = index(self.value(i, x, k)?, d)?;
                let mut out = Dual::constant(x[j], d);
                out.g[j] = 1.0;
                out
            }
            Node::Neg(a) => {
                let a = self.dual(a, x, k)?;
                let v = -a.v;
                a.map(v, -1.0)
            }
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                let a = self.dual(a, x, k)?;
                let b = self.dual(b, x, k)?;
                let (u, w) = (a.v, b.v);
                match n {
                    Node::Add(..) => a.combine(&b, u + w, 1.0, 1.0),
                    Node::Sub(..) => a.combine(&b, u - w, 1.0, -1.0),
                    Node::Mul(..) => a.combine(&b, u * w, w, u),
                    Node::Div(..) => a.combine(&b, u / w, 1.0 / w, -u / (w * w)),
                    _ => {
                        let v = pow(u, w);
                        let da = if w == 0.0 { 0.0 } else { w * pow(u, w - 1.0) };
                        let db = if b.g.iter().all(|g| *g == 0.0) { 0.0 } else { v * u.ln() };
                        a.combine(&b, v, da, db)
                    }
                }
            }
            Node::Call(f, a) => {
                let a = self.dual(a, x, k)?;
                let u = a.v;
                match f {
                    Func::Sin => a.map(u.sin(), u.cos()),
                    Func::Cos => a.map(u.cos(), -u.sin()),
                    Func::Exp => a.map(u.exp(), u.exp()),
                    Func::Sqrt => a.map(u.sqrt(), 0.5 / u.sqrt()),
                    Func::Ln => a.map(u.ln(), 1.0 / u),
                }
            }
            Node::Sum(body) => {
                let mut acc = Dual::constant(0.0, d);
                for j in 0..d {
                    let t = self.dual(body, x, Some(j))?;
                    acc.v += t.v;
                    acc.g.iter_mut().zip(&t.g).for_each(|(a, b)| *a += b);
                }
                acc
            }
        })
    }
}

/// Integer exponents go through `powi` so negative bases stay real.
fn pow(u: f64, w: f64) -> f64 {
    if w.fract() == 0.0 && w.abs() <= i32::MAX as f64 {
        u.powi(w as i32)
    } else {
        u.powf(w)
    }
}

impl TestProblem for Expr {
    fn name(&self) -> String {
        "custom".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        Expr::gradient(self, x).unwrap_or_else(|_| vec![f64::NAN; self.dim])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2 * 3 ^ 2 - 8 / 4 / 2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 1.0 + 18.0 - 1.0);
        let e = Expr::parse("2 ^ 3 ^ 2", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 512.0);
        let e = Expr::parse("-x[0]^2", 1).unwrap();
        assert_eq!(e.eval(&[3.0]).unwrap(), -9.0);
        let e = Expr::parse("1.5e-1 * d", 4).unwrap();
        assert!(close(e.eval(&[0.0; 4]).unwrap(), 0.6));
    }

    #[test]
    fn sums_and_indices() {
        let e = Expr::parse("sum(x[k]^2) + x[d-1]", 3).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0, 3.0]).unwrap(), 14.0 + 3.0);
        let e = Expr::parse("sum(k * x[k])", 3).unwrap();
        assert_eq!(e.eval(&[1.0, 1.0, 1.0]).unwrap(), 3.0);
    }

    #[test]
    fn gradient_matches_closed_form() {
        let e = Expr::parse("sum(sin(x[k]) * exp(x[k] / 2)) + pow(x[0], 3) - x[1] / x[2]", 3).unwrap();
        let x = [0.4, -1.1, 2.0];
        let g = e.gradient(&x).unwrap();
        let term = |v: f64| v.cos() * (v / 2.0).exp() + 0.5 * v.sin() * (v / 2.0).exp();
        let want = [term(x[0]) + 3.0 * x[0] * x[0], term(x[1]) - 1.0 / x[2], term(x[2]) + x[1] / (x[2] * x[2])];
        for (a, b) in g.iter().zip(want) {
            assert!(close(*a, b), "{a} vs {b}");
        }
    }

    #[test]
    fn rosenbrock_as_expression() {
        let src = "sum((1 - x[k])^2 + 100 * (x[k+1] - x[k]^2)^2) - (1 - x[d-1])^2 - 100 * (0 - x[d-1]^2)^2";
        // The sum overruns at k = d−1, so use the explicit pairwise form instead.
        assert!(Expr::parse(src, 4).is_err());
        let e = Expr::parse("(1-x[0])^2 + 100*(x[1]-x[0]^2)^2 + (1-x[1])^2 + 100*(x[2]-x[1]^2)^2", 3).unwrap();
        let r = lpgrad::bench::rosenbrock(3).unwrap();
        let x = [0.3, -0.7, 1.2];
        assert!(close(e.eval(&x).unwrap(), r.value(&x)));
        for (a, b) in e.gradient(&x).unwrap().iter().zip(r.gradient(&x)) {
            assert!(close(*a, b));
        }
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "1 +", "x[0", "foo(1)", "k", "sin 1", "1 2", "x[5]", "3 $ 4"] {
            assert!(Expr::parse(bad, 3).is_err(), "accepted '{bad}'");
        }
    }

    #[test]
    fn negative_base_integer_power() {
        let e = Expr::parse("x[0]^3", 1).unwrap();
        assert_eq!(e.eval(&[-2.0]).unwrap(), -8.0);
        assert_eq!(e.gradient(&[-2.0]).unwrap(), vec![12.0]);
    }
}
