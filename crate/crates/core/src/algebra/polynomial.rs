use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{MomentKey, MomentTable};

pub type Rational = num_rational::BigRational;

pub(crate) fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64()
        .unwrap_or_else(|| r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN))
}

pub(crate) fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exponents `(x, y, R, G, B)` of one point in a kernel monomial.
pub type PointExponents = [u8; 5];

/// Per-point exponent vectors of a kernel monomial; point `i` sits at
/// index `i - 1`. Trailing all-zero points are trimmed so every monomial
/// has exactly one representation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PointMonomial(Vec<PointExponents>);

impl PointMonomial {
    pub fn new(mut exps: Vec<PointExponents>) -> Self {
        while exps.last() == Some(&[0; 5]) {
            exps.pop();
        }
        PointMonomial(exps)
    }

    /// A single variable of one point: `var` is 0..5 for x, y, R, G, B.
    pub fn variable(point: usize, var: usize) -> Self {
        let mut exps = vec![[0u8; 5]; point];
        exps[point - 1][var] = 1;
        PointMonomial(exps)
    }

    pub fn exponents(&self) -> &[PointExponents] {
        &self.0
    }

    pub fn mul(&self, other: &PointMonomial) -> PointMonomial {
        let (long, short) = if self.0.len() >= other.0.len() {
            (&self.0, &other.0)
        } else {
            (&other.0, &self.0)
        };
        let mut out = long.clone();
        for (a, b) in out.iter_mut().zip(short) {
            for k in 0..5 {
                a[k] += b[k];
            }
        }
        PointMonomial(out)
    }
}

/// Polynomial in the per-point variables `x_i, y_i, R_i, G_i, B_i` with
/// exact rational coefficients. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PointPolynomial {
    terms: BTreeMap<PointMonomial, Rational>,
}

impl PointPolynomial {
    pub fn zero() -> Self {
        PointPolynomial::default()
    }

    pub fn one() -> Self {
        PointPolynomial::from_terms([(PointMonomial::default(), Rational::one())])
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (PointMonomial, Rational)>) -> Self {
        let mut p = PointPolynomial::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    fn add_term(&mut self, m: PointMonomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PointMonomial, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest point index referenced by any term.
    pub fn max_point(&self) -> usize {
        self.terms.keys().map(|m| m.0.len()).max().unwrap_or(0)
    }

    pub fn add(&self, other: &PointPolynomial) -> PointPolynomial {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> PointPolynomial {
        PointPolynomial {
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn mul(&self, other: &PointPolynomial) -> PointPolynomial {
        let mut out = PointPolynomial::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, n: usize) -> PointPolynomial {
        let mut out = PointPolynomial::one();
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Evaluates with `points[i - 1] = (x, y, R, G, B)` of point `i`.
    pub fn evaluate(&self, points: &[[f64; 5]]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = rational_to_f64(c);
                for (e, pt) in m.0.iter().zip(points) {
                    for k in 0..5 {
                        v *= pt[k].powi(e[k] as i32);
                    }
                }
                v
            })
            .sum()
    }

    /// Exact evaluation at rational point coordinates.
    pub fn evaluate_exact(&self, points: &[[Rational; 5]]) -> Rational {
        let mut total = Rational::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (e, pt) in m.0.iter().zip(points) {
                for k in 0..5 {
                    for _ in 0..e[k] {
                        v *= &pt[k];
                    }
                }
            }
            total += v;
        }
        total
    }
}

/// Shape primitive `x_i y_j - x_j y_i`.
pub fn shape_primitive(i: usize, j: usize) -> Result<PointPolynomial> {
    if i == j || i == 0 || j == 0 {
        return Err(Error::domain(format!(
            "shape primitive needs distinct positive points, got ({i},{j})"
        )));
    }
    let xy = |a: usize, b: usize| PointMonomial::variable(a, 0).mul(&PointMonomial::variable(b, 1));
    Ok(PointPolynomial::from_terms([(xy(i, j), int(1)), (xy(j, i), int(-1))]))
}

/// Color primitive: determinant of the matrix whose columns are the RGB
/// values of points `i`, `j`, `k`.
pub fn color_primitive(i: usize, j: usize, k: usize) -> Result<PointPolynomial> {
    if i == j || j == k || i == k || i == 0 || j == 0 || k == 0 {
        return Err(Error::domain(format!(
            "color primitive needs distinct positive points, got ({i},{j},{k})"
        )));
    }
    let pts = [i, j, k];
    // det = Σ_σ sgn(σ) R_{σ0} G_{σ1} B_{σ2} over permutations of the columns.
    const PERMS: [([usize; 3], i64); 6] = [
        ([0, 1, 2], 1),
        ([1, 2, 0], 1),
        ([2, 0, 1], 1),
        ([0, 2, 1], -1),
        ([2, 1, 0], -1),
        ([1, 0, 2], -1),
    ];
    Ok(PointPolynomial::from_terms(PERMS.iter().map(|&(s, sign)| {
        let m = PointMonomial::variable(pts[s[0]], 2)
            .mul(&PointMonomial::variable(pts[s[1]], 3))
            .mul(&PointMonomial::variable(pts[s[2]], 4));
        (m, int(sign))
    })))
}

/// Canonical polynomial in central moments: each term is a rational
/// coefficient times a product of moments, stored as the sorted list of
/// their keys.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MomentPolynomial {
    terms: BTreeMap<Vec<MomentKey>, Rational>,
}

impl MomentPolynomial {
    pub fn zero() -> Self {
        MomentPolynomial::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Vec<MomentKey>, Rational)>) -> Self {
        let mut p = MomentPolynomial::zero();
        for (mut keys, c) in terms {
            keys.sort_unstable();
            p.add_term(keys, c);
        }
        p
    }

    fn add_term(&mut self, keys: Vec<MomentKey>, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(keys) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<MomentKey>, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, keys: &[MomentKey]) -> Option<&Rational> {
        let mut k = keys.to_vec();
        k.sort_unstable();
        self.terms.get(&k)
    }

    /// Distinct keys appearing in any term.
    pub fn keys(&self) -> BTreeSet<MomentKey> {
        self.terms.keys().flatten().copied().collect()
    }

    pub fn scale(&self, factor: &Rational) -> MomentPolynomial {
        MomentPolynomial::from_terms(self.terms.iter().map(|(k, c)| (k.clone(), c * factor)))
    }

    pub fn add(&self, other: &MomentPolynomial) -> MomentPolynomial {
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    /// Drops every term that contains a first-order moment. On central
    /// moment tables those factors vanish, so the value is unchanged.
    pub fn without_first_order(&self) -> MomentPolynomial {
        MomentPolynomial {
            terms: self
                .terms
                .iter()
                .filter(|(keys, _)| !keys.iter().any(|k| k.is_first_order()))
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    /// Symbolic partial derivative with respect to one moment.
    pub fn derivative(&self, var: MomentKey) -> MomentPolynomial {
        let mut out = MomentPolynomial::zero();
        for (keys, c) in &self.terms {
            let n = keys.iter().filter(|&&k| k == var).count();
            if n == 0 {
                continue;
            }
            let pos = keys.iter().position(|&k| k == var).expect("counted above");
            let mut rest = keys.clone();
            rest.remove(pos);
            out.add_term(rest, c * int(n as i64));
        }
        out
    }

    /// Evaluates with moment values supplied by `lookup`.
    pub fn evaluate_with(&self, mut lookup: impl FnMut(MomentKey) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        let mut comp = 0.0;
        for (keys, c) in &self.terms {
            let mut v = rational_to_f64(c);
            for &k in keys {
                v *= lookup(k)?;
            }
            // Neumaier summation: numerators cancel heavily.
            let t = total + v;
            if f64::abs(total) >= v.abs() {
                comp += (total - t) + v;
            } else {
                comp += (v - t) + total;
            }
            total = t;
        }
        Ok(total + comp)
    }

    pub fn evaluate(&self, table: &MomentTable) -> Result<f64> {
        self.evaluate_with(|k| table.get(k))
    }

    /// Exact evaluation with rational moment values.
    pub fn evaluate_exact(&self, lookup: impl Fn(MomentKey) -> Rational) -> Rational {
        let mut total = Rational::zero();
        for (keys, c) in &self.terms {
            let mut v = c.clone();
            for &k in keys {
                v *= lookup(k);
            }
            total += v;
        }
        total
    }

    /// Serializable term list: `{coeff: "num/den", keys: ["p,q,a,b,g", ...]}`.
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(keys, c)| TermRecord {
                coeff: format_rational(c),
                keys: keys.iter().map(|k| k.to_string()).collect(),
            })
            .collect()
    }

    pub fn from_records(records: &[TermRecord]) -> Result<Self> {
        let mut terms = Vec::with_capacity(records.len());
        for r in records {
            let c = parse_rational(&r.coeff)?;
            let keys = r.keys.iter().map(|k| k.parse()).collect::<Result<Vec<MomentKey>>>()?;
            terms.push((keys, c));
        }
        Ok(MomentPolynomial::from_terms(terms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub coeff: String,
    pub keys: Vec<String>,
}

pub fn format_rational(c: &Rational) -> String {
    format!("{}/{}", c.numer(), c.denom())
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::Parse {
        pos: 0,
        message: format!("bad rational `{s}`"),
    };
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(n, d))
}

impl fmt::Display for MomentPolynomial {
    /// Compact rendering, e.g. `2·scU00002·scU02020·scU20200 - 4·...`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (keys, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mag = c.abs();
            let mut factors = Vec::new();
            if !mag.is_one() || keys.is_empty() {
                factors.push(mag.to_string());
            }
            let mut j = 0;
            while j < keys.len() {
                let mut n = 1;
                while j + n < keys.len() && keys[j + n] == keys[j] {
                    n += 1;
                }
                factors.push(if n == 1 {
                    keys[j].label()
                } else {
                    format!("{}^{}", keys[j].label(), n)
                });
                j += n;
            }
            write!(f, "{}", factors.join("·"))?;
        }
        Ok(())
    }
}
