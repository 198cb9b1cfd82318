//! A tiny arithmetic-expression language for user-supplied system and
//! envelope functions.
//!
//! Grammar: `+ - * / ^`, parentheses, numeric literals, the constant `pi`,
//! the functions `sin cos sqrt abs exp ln` and a caller-supplied variable
//! table. `^` is right-associative and binds tighter than unary minus, so
//! `-x^2` is `-(x^2)`. Expressions compile to a tree that evaluates over any
//! [`Real`] scalar, which lets the same expression run on plain `f64` in the
//! plant and on jets inside the adaptive controller.

use thiserror::Error;

use crate::jet::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character `{ch}` at column {col} in `{src}`")]
    UnexpectedChar { ch: char, col: usize, src: String },
    #[error("unexpected {found} at column {col} in `{src}`")]
    UnexpectedToken { found: String, col: usize, src: String },
    #[error("unknown variable `{name}` in `{src}`")]
    UnknownVariable { name: String, src: String },
    #[error("unknown function `{name}` in `{src}`")]
    UnknownFunction { name: String, src: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Abs,
    Exp,
    Ln,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power with a constant exponent.
    Powi(Box<Expr>, i32),
    /// Real power with a constant exponent.
    Powf(Box<Expr>, f64),
    /// Power with a non-constant exponent, evaluated as `exp(e * ln b)`.
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses `src` with variables named by `vars` (position = index).
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            src,
            vars,
        };
        let e = p.expr()?;
        if let Some(tok) = p.tokens.get(p.pos) {
            return Err(p.unexpected(tok));
        }
        Ok(e.fold())
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Every variable index referenced by the expression.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => out.push(*i),
            Expr::Neg(a) | Expr::Powi(a, _) | Expr::Powf(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluates with `vars[i]` bound to variable `i`. `vars` must be non-empty
    /// when `R` needs a template to create constants (jets do).
    pub fn eval<R: Real>(&self, vars: &[R]) -> R {
        match self {
            Expr::Const(v) => vars[0].lift(*v),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Powi(a, n) => a.eval(vars).powi(*n),
            Expr::Powf(a, c) => a.eval(vars).powf(*c),
            Expr::Pow(a, b) => (b.eval(vars) * a.eval(vars).ln()).exp(),
            Expr::Call(f, a) => {
                let x = a.eval(vars);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Exp => x.exp(),
                    Func::Ln => x.ln(),
                }
            }
        }
    }

    /// `f64` evaluation that does not need a template value.
    pub fn eval_f64(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval_f64(vars),
            Expr::Add(a, b) => a.eval_f64(vars) + b.eval_f64(vars),
            Expr::Sub(a, b) => a.eval_f64(vars) - b.eval_f64(vars),
            Expr::Mul(a, b) => a.eval_f64(vars) * b.eval_f64(vars),
            Expr::Div(a, b) => a.eval_f64(vars) / b.eval_f64(vars),
            Expr::Powi(a, n) => a.eval_f64(vars).powi(*n),
            Expr::Powf(a, c) => a.eval_f64(vars).powf(*c),
            Expr::Pow(a, b) => a.eval_f64(vars).powf(b.eval_f64(vars)),
            Expr::Call(f, a) => {
                let x = a.eval_f64(vars);
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Exp => x.exp(),
                    Func::Ln => x.ln(),
                }
            }
        }
    }

    fn fold(self) -> Expr {
        use Expr::*;
        let bin = |a: Expr, b: Expr, f: fn(f64, f64) -> f64, mk: fn(Box<Expr>, Box<Expr>) -> Expr| {
            let (a, b) = (a.fold(), b.fold());
            match (a.as_const(), b.as_const()) {
                (Some(x), Some(y)) => Const(f(x, y)),
                _ => mk(Box::new(a), Box::new(b)),
            }
        };
        match self {
            Const(_) | Var(_) => self,
            Neg(a) => match a.fold() {
                Const(v) => Const(-v),
                a => Neg(Box::new(a)),
            },
            Add(a, b) => bin(*a, *b, |x, y| x + y, Add),
            Sub(a, b) => bin(*a, *b, |x, y| x - y, Sub),
            Mul(a, b) => bin(*a, *b, |x, y| x * y, Mul),
            Div(a, b) => bin(*a, *b, |x, y| x / y, Div),
            Powi(a, n) => match a.fold() {
                Const(v) => Const(v.powi(n)),
                a => Powi(Box::new(a), n),
            },
            Powf(a, c) => match a.fold() {
                Const(v) => Const(v.powf(c)),
                a => Powf(Box::new(a), c),
            },
            Pow(a, b) => {
                let (a, b) = (a.fold(), b.fold());
                match (a.as_const(), b.as_const()) {
                    (Some(x), Some(y)) => Const(x.powf(y)),
                    (_, Some(y)) if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 => Powi(Box::new(a), y as i32),
                    (_, Some(y)) => Powf(Box::new(a), y),
                    _ => Pow(Box::new(a), Box::new(b)),
                }
            }
            Call(f, a) => {
                let a = a.fold();
                match a.as_const() {
                    Some(v) => Const(Call(f, Box::new(Const(v))).eval_f64(&[])),
                    None => Call(f, Box::new(a)),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| ExprError::UnexpectedChar {
                ch: chars[start],
                col: start + 1,
                src: src.to_string(),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            return Err(ExprError::UnexpectedChar {
                ch: c,
                col: i + 1,
                src: src.to_string(),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    src: &'a str,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some((Tok::Op(c), _)) => Some(*c),
            _ => None,
        }
    }

    fn unexpected(&self, tok: &(Tok, usize)) -> ExprError {
        let found = match &tok.0 {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
        };
        ExprError::UnexpectedToken {
            found,
            col: tok.1 + 1,
            src: self.src.to_string(),
        }
    }

    fn eof(&self) -> ExprError {
        ExprError::UnexpectedToken {
            found: "end of input".into(),
            col: self.src.chars().count() + 1,
            src: self.src.to_string(),
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        match self.tokens.get(self.pos) {
            Some((Tok::Op(c), _)) if *c == op => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(self.unexpected(tok)),
            None => Err(self.eof()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op() {
            if op != '+' && op != '-' {
                break;
            }
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_op() {
            if op != '*' && op != '/' {
                break;
            }
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return Err(self.eof());
        };
        self.pos += 1;
        match tok.0 {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let func = Func::from_name(&name).ok_or_else(|| ExprError::UnknownFunction {
                        name: name.clone(),
                        src: self.src.to_string(),
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(i));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                Err(ExprError::UnknownVariable {
                    name,
                    src: self.src.to_string(),
                })
            }
            Tok::Op(_) => Err(self.unexpected(&tok)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::JetBasis;

    fn eval(src: &str, vars: &[&str], vals: &[f64]) -> f64 {
        Expr::parse(src, vars).unwrap().eval_f64(vals)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &[], &[]), 512.0);
        assert_eq!(eval("-x^2", &["x"], &[3.0]), -9.0);
        assert_eq!(eval("(1 - x) / 4", &["x"], &[3.0]), -0.5);
        assert_eq!(eval("8 / 2 / 2", &[], &[]), 2.0);
    }

    #[test]
    fn functions_and_literals() {
        let v = eval("sqrt(abs(x)) + cos(0) + 1.5e-1", &["x"], &[-4.0]);
        assert!((v - 3.15).abs() < 1e-15);
        assert!((eval("sin(pi/2)", &[], &[]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_exponent_folds_to_powi() {
        let e = Expr::parse("x^3", &["x"]).unwrap();
        assert!(matches!(e, Expr::Powi(_, 3)));
        assert_eq!(e.eval_f64(&[-2.0]), -8.0);
    }

    #[test]
    fn generic_eval_on_jets_matches_f64() {
        let e = Expr::parse("x1 * cos(xd2) + x1^2", &["t", "x1", "x2", "xd1", "xd2"]).unwrap();
        let basis = JetBasis::new(1, 1);
        let vals = [0.0, 0.7, 0.0, 0.0, 1.1];
        let jets: Vec<_> = vals.iter().map(|&v| basis.constant(v)).collect();
        assert!((e.eval(&jets).value() - e.eval_f64(&vals)).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_problem() {
        assert!(matches!(
            Expr::parse("x + y", &["x"]),
            Err(ExprError::UnknownVariable { name, .. }) if name == "y"
        ));
        assert!(matches!(
            Expr::parse("tan(x)", &["x"]),
            Err(ExprError::UnknownFunction { .. })
        ));
        assert!(Expr::parse("1 +", &[]).is_err());
        assert!(Expr::parse("(1", &[]).is_err());
        assert!(Expr::parse("1 $ 2", &[]).is_err());
        assert!(Expr::parse("1 2", &[]).is_err());
    }

    #[test]
    fn variables_are_reported() {
        let e = Expr::parse("x2 + 3 * xd1", &["t", "x1", "x2", "xd1"]).unwrap();
        assert_eq!(e.variables(), vec![2, 3]);
    }
}
