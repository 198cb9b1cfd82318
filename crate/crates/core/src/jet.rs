//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] carries the value of an expression together with all of its
//! partial derivatives up to a fixed total order, with respect to a fixed set
//! of independent variables. Order-one jets are ordinary dual numbers; higher
//! orders are what the adaptive backstepping recursion needs, because each
//! stabilizing function is built from partial derivatives of the previous one.
//!
//! Coefficients are stored as Taylor coefficients in graded monomial order, so
//! a jet of order `d` only stores the prefix of monomials with degree `<= d`.
//! Binary operations truncate to the smaller order of their operands; taking a
//! partial derivative lowers the order by one. Constants carry the full order
//! of the basis.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use smallvec::SmallVec;

/// Scalar operations shared by `f64` and [`Jet`], so that envelope and
/// controller formulas can be written once and evaluated in either space.
pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// A constant living in the same space as `self`.
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn powi(&self, n: i32) -> Self;
    fn powf(&self, c: f64) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
}

impl Real for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn powf(&self, c: f64) -> Self {
        f64::powf(*self, c)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
}

/// Monomial layout and multiplication tables for jets in `nvars` variables up
/// to total degree `degree`.
#[derive(Debug, Clone)]
pub struct JetBasis {
    nvars: usize,
    degree: usize,
    /// `counts[d]` = number of monomials of degree `<= d`.
    counts: Vec<usize>,
    /// `(i, j, k)`: monomial `i` times monomial `j` is monomial `k`, sorted by
    /// the degree of `k`.
    mul: Vec<(u16, u16, u16)>,
    /// `mul_end[d]` = number of `mul` entries whose product has degree `<= d`.
    mul_end: Vec<usize>,
    /// `deriv[v][b]` = (index of `b + e_v`, exponent of `v` in `b` plus one),
    /// for every monomial `b` of degree `< degree`.
    deriv: Vec<Vec<(u16, f64)>>,
}

impl JetBasis {
    pub fn new(nvars: usize, degree: usize) -> Self {
        assert!(nvars >= 1, "jet basis needs at least one variable");
        let mut exps: Vec<Vec<u8>> = Vec::new();
        let mut counts = Vec::with_capacity(degree + 1);
        for d in 0..=degree {
            let mut current = vec![0u8; nvars];
            push_monomials(&mut exps, &mut current, 0, d);
            counts.push(exps.len());
        }
        assert!(exps.len() < u16::MAX as usize, "jet basis too large");
        let index: HashMap<Vec<u8>, usize> = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let deg = |e: &[u8]| e.iter().map(|&x| x as usize).sum::<usize>();

        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if deg(a) + deg(b) > degree {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u16, j as u16, index[&sum] as u16));
            }
        }
        mul.sort_by_key(|&(_, _, k)| (deg(&exps[k as usize]), k));
        let mul_end = (0..=degree)
            .map(|d| mul.iter().take_while(|&&(_, _, k)| deg(&exps[k as usize]) <= d).count())
            .collect();

        let lower = if degree == 0 { 0 } else { counts[degree - 1] };
        let deriv = (0..nvars)
            .map(|v| {
                exps[..lower]
                    .iter()
                    .map(|b| {
                        let mut up = b.clone();
                        up[v] += 1;
                        (index[&up] as u16, f64::from(up[v]))
                    })
                    .collect()
            })
            .collect();

        JetBasis {
            nvars,
            degree,
            counts,
            mul,
            mul_end,
            deriv,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn count(&self, order: usize) -> usize {
        self.counts[order]
    }

    pub fn constant(&self, value: f64) -> Jet<'_> {
        let mut c = SmallVec::from_elem(0.0, self.count(self.degree));
        c[0] = value;
        Jet {
            basis: self,
            order: self.degree,
            c,
        }
    }

    /// The independent variable `var` evaluated at `value`.
    pub fn variable(&self, var: usize, value: f64) -> Jet<'_> {
        assert!(var < self.nvars);
        let mut jet = self.constant(value);
        if self.degree >= 1 {
            // degree-one monomials follow the constant term in variable order
            jet.c[1 + var] = 1.0;
        }
        jet
    }
}

fn push_monomials(out: &mut Vec<Vec<u8>>, current: &mut [u8], var: usize, remaining: usize) {
    if var + 1 == current.len() {
        current[var] = remaining as u8;
        out.push(current.to_vec());
        current[var] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[var] = k as u8;
        push_monomials(out, current, var + 1, remaining - k);
    }
    current[var] = 0;
}

#[derive(Clone)]
pub struct Jet<'b> {
    basis: &'b JetBasis,
    order: usize,
    c: SmallVec<[f64; 8]>,
}

impl fmt::Debug for Jet<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("order", &self.order)
            .field("coefficients", &self.c.as_slice())
            .finish()
    }
}

impl<'b> Jet<'b> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> &'b JetBasis {
        self.basis
    }

    /// First partial derivative with respect to `var`, evaluated at the
    /// expansion point. `NaN` when the jet has order zero.
    pub fn first_partial(&self, var: usize) -> f64 {
        if self.order == 0 {
            return f64::NAN;
        }
        self.c[1 + var]
    }

    /// The partial derivative with respect to `var` as a jet of one order lower.
    ///
    /// Panics on an order-zero jet: its derivative carries no information.
    pub fn partial(&self, var: usize) -> Jet<'b> {
        assert!(self.order >= 1, "partial derivative of an order-zero jet");
        let order = self.order - 1;
        let table = &self.basis.deriv[var];
        let c = (0..self.basis.count(order))
            .map(|b| {
                let (up, factor) = table[b];
                factor * self.c[up as usize]
            })
            .collect();
        Jet {
            basis: self.basis,
            order,
            c,
        }
    }

    /// Truncates to a lower order (no-op if `order >= self.order`).
    fn is_constant(&self) -> bool {
        self.c[1..].iter().all(|v| *v == 0.0)
    }

    pub fn truncate(mut self, order: usize) -> Jet<'b> {
        if order < self.order {
            self.c.truncate(self.basis.count(order));
            self.order = order;
        }
        self
    }

    /// `f(self)` for a univariate `f` given its derivatives `f^(k)(value)`,
    /// `k = 0..=order`.
    fn compose(&self, derivs: &[f64]) -> Jet<'b> {
        let order = self.order;
        debug_assert!(derivs.len() > order);
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let mut fact = 1.0;
        for k in 1..=order {
            fact *= k as f64;
        }
        let mut acc = self.basis.constant(derivs[order] / fact).truncate(order);
        for k in (0..order).rev() {
            fact /= (k + 1) as f64;
            acc = mul_jets(&acc, &delta);
            acc.c[0] += derivs[k] / fact;
        }
        acc
    }

    fn recip(&self) -> Jet<'b> {
        let x = self.c[0];
        let mut derivs = Vec::with_capacity(self.order + 1);
        let mut d = 1.0 / x;
        for k in 0..=self.order {
            derivs.push(d);
            d *= -((k + 1) as f64) / x;
        }
        self.compose(&derivs)
    }
}

fn same_basis(a: &Jet<'_>, b: &Jet<'_>) {
    debug_assert!(std::ptr::eq(a.basis, b.basis), "jets from different bases combined");
}

fn add_jets<'b>(a: &Jet<'b>, b: &Jet<'b>, sign: f64) -> Jet<'b> {
    same_basis(a, b);
    let order = a.order.min(b.order);
    let n = a.basis.count(order);
    let c = a.c[..n].iter().zip(&b.c[..n]).map(|(x, y)| x + sign * y).collect();
    Jet {
        basis: a.basis,
        order,
        c,
    }
}

fn mul_jets<'b>(a: &Jet<'b>, b: &Jet<'b>) -> Jet<'b> {
    same_basis(a, b);
    let order = a.order.min(b.order);
    let basis = a.basis;
    if a.is_constant() || b.is_constant() {
        let (k, other) = if a.is_constant() { (a.c[0], b) } else { (b.c[0], a) };
        let n = basis.count(order);
        return Jet {
            basis,
            order,
            c: other.c[..n].iter().map(|v| k * v).collect(),
        };
    }
    let mut c: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, basis.count(order));
    for &(i, j, k) in &basis.mul[..basis.mul_end[order]] {
        c[k as usize] += a.c[i as usize] * b.c[j as usize];
    }
    Jet { basis, order, c }
}

impl<'b> Add for Jet<'b> {
    type Output = Jet<'b>;
    fn add(self, rhs: Jet<'b>) -> Jet<'b> {
        add_jets(&self, &rhs, 1.0)
    }
}

impl<'b> Sub for Jet<'b> {
    type Output = Jet<'b>;
    fn sub(self, rhs: Jet<'b>) -> Jet<'b> {
        add_jets(&self, &rhs, -1.0)
    }
}

impl<'b> Mul for Jet<'b> {
    type Output = Jet<'b>;
    fn mul(self, rhs: Jet<'b>) -> Jet<'b> {
        mul_jets(&self, &rhs)
    }
}

impl<'b> Div for Jet<'b> {
    type Output = Jet<'b>;
    fn div(self, rhs: Jet<'b>) -> Jet<'b> {
        mul_jets(&self, &rhs.recip())
    }
}

impl<'b> Neg for Jet<'b> {
    type Output = Jet<'b>;
    fn neg(mut self) -> Jet<'b> {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl<'b> Add<f64> for Jet<'b> {
    type Output = Jet<'b>;
    fn add(mut self, rhs: f64) -> Jet<'b> {
        self.c[0] += rhs;
        self
    }
}

impl<'b> Sub<f64> for Jet<'b> {
    type Output = Jet<'b>;
    fn sub(mut self, rhs: f64) -> Jet<'b> {
        self.c[0] -= rhs;
        self
    }
}

impl<'b> Mul<f64> for Jet<'b> {
    type Output = Jet<'b>;
    fn mul(mut self, rhs: f64) -> Jet<'b> {
        for v in self.c.iter_mut() {
            *v *= rhs;
        }
        self
    }
}

impl<'b> Real for Jet<'b> {
    fn lift(&self, c: f64) -> Self {
        self.basis.constant(c)
    }

    fn value(&self) -> f64 {
        self.c[0]
    }

    fn powi(&self, n: i32) -> Self {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let x = self.c[0];
        if self.is_constant() {
            return self.lift(x.powi(n));
        }
        // d^k/dx^k x^n = n (n-1) ... (n-k+1) x^(n-k)
        let mut derivs = Vec::with_capacity(self.order + 1);
        let mut falling = 1.0;
        for k in 0..=self.order as i32 {
            derivs.push(if k > n { 0.0 } else { falling * x.powi(n - k) });
            falling *= (n - k) as f64;
        }
        self.compose(&derivs)
    }

    fn powf(&self, c: f64) -> Self {
        let x = self.c[0];
        let mut derivs = Vec::with_capacity(self.order + 1);
        let mut coef = 1.0;
        for k in 0..=self.order {
            derivs.push(coef * x.powf(c - k as f64));
            coef *= c - k as f64;
        }
        self.compose(&derivs)
    }

    fn sin(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        let cycle = [s, c, -s, -c];
        let derivs: Vec<f64> = (0..=self.order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }

    fn cos(&self) -> Self {
        let (s, c) = self.c[0].sin_cos();
        let cycle = [c, -s, -c, s];
        let derivs: Vec<f64> = (0..=self.order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }

    fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    fn abs(&self) -> Self {
        if self.c[0] < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&vec![e; self.order + 1])
    }

    fn ln(&self) -> Self {
        let x = self.c[0];
        let mut derivs = Vec::with_capacity(self.order + 1);
        derivs.push(x.ln());
        let mut d = 1.0 / x;
        for k in 1..=self.order {
            derivs.push(d);
            d *= -(k as f64) / x;
        }
        self.compose(&derivs)
    }
}
