//! Sparse multivariate polynomials over a real scalar.

mod basis;
mod exponent;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

pub use basis::{basis_size, binomial, MonomialBasis};
pub(crate) use basis::check_indices;
pub use exponent::Exponent;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparse polynomial in `dim` variables.
///
/// Terms are kept in graded lex order; a coefficient that becomes exactly
/// zero is dropped, nothing else is pruned implicitly.
#[derive(Clone, PartialEq)]
pub struct Poly<T: Scalar> {
    dim: usize,
    terms: BTreeMap<Exponent, T>,
}

impl<T: Scalar> Poly<T> {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self::monomial(Exponent::zero(dim), c)
    }

    /// The coordinate polynomial `x_index`.
    pub fn var(dim: usize, index: usize) -> Self {
        Self::monomial(Exponent::unit(dim, index), T::one())
    }

    pub fn monomial(exp: Exponent, c: T) -> Self {
        let mut p = Poly::zero(exp.dim());
        p.add_term(exp, c);
        p
    }

    /// Builds a polynomial from `(coefficient, exponents)` pairs; repeated
    /// exponents are summed.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (T, Vec<u32>)>,
    {
        let mut p = Poly::zero(dim);
        for (c, e) in terms {
            if e.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.len(),
                });
            }
            p.add_term(Exponent::new(e), c);
        }
        Ok(p)
    }

    /// Adds `c·x^exp` in place.
    pub fn add_term(&mut self, exp: Exponent, c: T) {
        debug_assert_eq!(exp.dim(), self.dim);
        if c == T::zero() {
            return;
        }
        match self.terms.entry(exp) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == T::zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of stored terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    pub fn coeff(&self, exp: &Exponent) -> T {
        self.terms.get(exp).copied().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, T)> + '_ {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn max_abs_coeff(&self) -> T {
        self.terms
            .values()
            .fold(T::zero(), |acc, c| acc.max(c.abs()))
    }

    /// Indices of variables that occur in some term.
    pub fn variables(&self) -> Vec<usize> {
        let mut used = vec![false; self.dim];
        for e in self.terms.keys() {
            for i in e.support() {
                used[i] = true;
            }
        }
        (0..self.dim).filter(|&i| used[i]).collect()
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e.clone(), c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e.clone(), -c);
        }
        Ok(out)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = Poly::zero(self.dim);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                out.add_term(a.add(b), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = Poly::zero(self.dim);
        for (e, c) in self.terms() {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Poly::constant(self.dim, T::one());
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Evaluates at `point`, which must have length `dim`.
    pub fn eval(&self, point: &[T]) -> Result<T> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.len(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    /// Evaluation without the length check; panics on short input.
    pub fn eval_unchecked(&self, point: &[T]) -> T {
        let mut acc = T::zero();
        for (e, c) in self.terms() {
            let mut m = c;
            for (&a, &x) in e.as_slice().iter().zip(point) {
                if a > 0 {
                    m *= x.powi(a as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// Views `self` as a polynomial in `target_dim` variables, sending
    /// variable `i` to variable `source_dims[i]`.
    pub fn embed(&self, source_dims: &[usize], target_dim: usize) -> Result<Self> {
        if source_dims.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: source_dims.len(),
            });
        }
        basis::check_indices(source_dims, target_dim)?;
        let mut out = Poly::zero(target_dim);
        for (e, c) in self.terms() {
            let mut t = vec![0u32; target_dim];
            for (i, &a) in e.as_slice().iter().enumerate() {
                t[source_dims[i]] = a;
            }
            out.add_term(Exponent::new(t), c);
        }
        Ok(out)
    }

    /// Drops coefficients with `|c| <= threshold`.
    pub fn cleanup(&self, threshold: T) -> Self {
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() > threshold)
                .map(|(e, &c)| (e.clone(), c))
                .collect(),
        }
    }

    /// Partial derivative with respect to `x_index`.
    pub fn derivative(&self, index: usize) -> Self {
        let mut out = Poly::zero(self.dim);
        for (e, c) in self.terms() {
            let a = e.as_slice()[index];
            if a == 0 {
                continue;
            }
            let mut d = e.as_slice().to_vec();
            d[index] -= 1;
            out.add_term(Exponent::new(d), c * T::from_u32(a).unwrap());
        }
        out
    }

    /// Substitutes `x_i = shift_i + scale_i · x_i`.
    pub fn compose_affine(&self, shift: &[T], scale: &[T]) -> Result<Self> {
        for v in [shift, scale] {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: v.len(),
                });
            }
        }
        let linear: Vec<Poly<T>> = (0..self.dim)
            .map(|i| {
                let mut l = Poly::var(self.dim, i).scale(scale[i]);
                l.add_term(Exponent::zero(self.dim), shift[i]);
                l
            })
            .collect();
        let max_deg = self.degree() as usize;
        let powers: Vec<Vec<Poly<T>>> = linear
            .iter()
            .map(|l| {
                let mut ps = vec![Poly::constant(self.dim, T::one())];
                for k in 1..=max_deg {
                    let next = &ps[k - 1] * l;
                    ps.push(next);
                }
                ps
            })
            .collect();
        let mut out = Poly::zero(self.dim);
        for (e, c) in self.terms() {
            let mut term = Poly::constant(self.dim, c);
            for (i, &a) in e.as_slice().iter().enumerate() {
                if a > 0 {
                    term = &term * &powers[i][a as usize];
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Converts coefficients to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Poly<U> {
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, &c)| (e.clone(), U::from_f64_lossy(c.to_f64_lossy())))
                .filter(|(_, c)| *c != U::zero())
                .collect(),
        }
    }

    /// Terms as `(coefficient, exponents)` pairs in graded lex order.
    pub fn to_term_list(&self) -> Vec<(T, Vec<u32>)> {
        self.terms()
            .map(|(e, c)| (c, e.as_slice().to_vec()))
            .collect()
    }
}

impl<'a, T: Scalar> Add<&'a Poly<T>> for &'a Poly<T> {
    type Output = Poly<T>;

    fn add(self, rhs: &'a Poly<T>) -> Poly<T> {
        self.try_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl<'a, T: Scalar> Sub<&'a Poly<T>> for &'a Poly<T> {
    type Output = Poly<T>;

    fn sub(self, rhs: &'a Poly<T>) -> Poly<T> {
        self.try_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl<'a, T: Scalar> Mul<&'a Poly<T>> for &'a Poly<T> {
    type Output = Poly<T>;

    fn mul(self, rhs: &'a Poly<T>) -> Poly<T> {
        self.try_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl<T: Scalar> Neg for &Poly<T> {
    type Output = Poly<T>;

    fn neg(self) -> Poly<T> {
        self.scale(-T::one())
    }
}

impl<T: Scalar> fmt::Debug for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly[{}](", self.dim)?;
        fmt::Display::fmt(self, f)?;
        write!(f, ")")
    }
}

impl<T: Scalar> fmt::Display for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().rev().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if e.is_zero() {
                write!(f, "{c}")?;
            } else {
                write!(f, "{c}*{e}")?;
            }
        }
        Ok(())
    }
}

// Text form: a list of `[c, [α_1, …, α_n]]` terms in graded lex order.
impl<T: Scalar + Serialize> Serialize for Poly<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // the zero polynomial keeps one explicit term so its dimension survives
        if self.is_zero() {
            let zero = vec![0u32; self.dim];
            let mut seq = serializer.serialize_seq(Some(1))?;
            seq.serialize_element(&(T::zero(), zero.as_slice()))?;
            return seq.end();
        }
        let mut seq = serializer.serialize_seq(Some(self.terms.len()))?;
        for (e, c) in self.terms() {
            seq.serialize_element(&(c, e.as_slice()))?;
        }
        seq.end()
    }
}

/// Polynomial text form without a known dimension; the dimension is
/// supplied when converting with [`TermList::into_poly`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermList(pub Vec<(f64, Vec<u32>)>);

impl TermList {
    pub fn into_poly<T: Scalar>(self, dim: usize) -> Result<Poly<T>> {
        Poly::from_terms(
            dim,
            self.0.into_iter().map(|(c, e)| (T::from_f64_lossy(c), e)),
        )
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Poly<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let terms = TermList::deserialize(deserializer)?;
        let dim = terms.0.first().map(|(_, e)| e.len()).ok_or_else(|| {
            serde::de::Error::custom("cannot infer dimension of an empty term list")
        })?;
        terms.into_poly(dim).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type P = Poly<f64>;

    fn x(i: usize) -> P {
        P::var(2, i)
    }

    #[test]
    fn evaluation() {
        let p = &(&x(0) * &x(0)) + &(&x(1) * &x(1));
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(p.eval(&[1.0, 1.0]).unwrap(), 2.0);
        assert!(p.eval(&[1.0]).is_err());
    }

    #[test]
    fn bicorn_vanishes_at_top_point() {
        // x2²(1−x1²) − (x1²+2x2−1)²
        let one = P::constant(2, 1.0);
        let x1s = &x(0) * &x(0);
        let left = &(&x(1) * &x(1)) * &(&one - &x1s);
        let inner = &(&x1s + &x(1).scale(2.0)) - &one;
        let g = &left - &(&inner * &inner);
        assert_eq!(g.eval(&[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(g.degree(), 4);
    }

    #[test]
    fn arithmetic() {
        assert_eq!(&x(0) * &x(0), P::monomial(Exponent::new(vec![2, 0]), 1.0));
        let p = &x(0) + &x(1).scale(3.0);
        assert!((&p + &p.scale(-1.0)).is_zero());
        let diff = &(&x(0) + &x(1)) * &(&x(0) - &x(1));
        let expected = P::from_terms(2, vec![(1.0, vec![2, 0]), (-1.0, vec![0, 2])]).unwrap();
        assert_eq!(diff, expected);
        assert!(P::zero(2).try_add(&Poly::zero(3)).is_err());
        assert_eq!(P::zero(2).degree(), 0);
    }

    #[test]
    fn embedding() {
        let g = &P::constant(2, 1.0) - &(&(&x(0) * &x(0)) + &(&x(1) * &x(1)));
        let lifted = g.embed(&[2, 3], 5).unwrap();
        assert_eq!(lifted.dim(), 5);
        assert_eq!(
            lifted.eval(&[9.0, 9.0, 0.5, 0.5, 9.0]).unwrap(),
            g.eval(&[0.5, 0.5]).unwrap()
        );
        let c = P::constant(1, 3.0).embed(&[4], 5).unwrap();
        assert_eq!(c, P::constant(5, 3.0));
        let z2 = (&Poly::<f64>::var(1, 0) * &Poly::var(1, 0)).embed(&[4], 5).unwrap();
        assert_eq!(z2, P::monomial(Exponent::new(vec![0, 0, 0, 0, 2]), 1.0));
        assert!(g.embed(&[3, 2], 5).is_err());
        assert!(g.embed(&[2, 5], 5).is_err());
    }

    #[test]
    fn affine_composition() {
        let p = P::from_terms(2, vec![(1.0, vec![2, 1]), (-2.0, vec![0, 1]), (0.5, vec![0, 0])]).unwrap();
        let q = p.compose_affine(&[1.0, -0.5], &[2.0, 0.25]).unwrap();
        assert_eq!(q.degree(), p.degree());
        for pt in [[0.3, -0.7], [1.0, 1.0], [-0.2, 0.9]] {
            let mapped = [1.0 + 2.0 * pt[0], -0.5 + 0.25 * pt[1]];
            assert!((q.eval(&pt).unwrap() - p.eval(&mapped).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn cleanup_and_derivative() {
        let p = P::from_terms(2, vec![(1e-13, vec![1, 0]), (2.0, vec![2, 1])]).unwrap();
        assert_eq!(p.cleanup(1e-12).len(), 1);
        let d = p.derivative(0);
        assert_eq!(d.coeff(&Exponent::new(vec![1, 1])), 4.0);
        assert_eq!(d.coeff(&Exponent::new(vec![0, 0])), 1e-13);
    }

    #[test]
    fn text_form_round_trip() {
        let p = P::from_terms(2, vec![(1.5, vec![2, 0]), (-1.0, vec![0, 1])]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[-1.0,[0,1]],[1.5,[2,0]]]");
        let back: P = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn single_precision() {
        let p = Poly::<f32>::var(1, 0).pow(3);
        assert_eq!(p.eval(&[2.0f32]).unwrap(), 8.0);
        let q: Poly<f64> = p.cast();
        assert_eq!(q.eval(&[2.0]).unwrap(), 8.0);
    }

    fn arb_poly(dim: usize) -> impl Strategy<Value = P> {
        prop::collection::vec(
            (-3.0f64..3.0, prop::collection::vec(0u32..4, dim)),
            0..6,
        )
        .prop_map(move |terms| P::from_terms(dim, terms).unwrap())
    }

    proptest! {
        #[test]
        fn product_evaluates_to_product(p in arb_poly(3), q in arb_poly(3),
                                        u in prop::collection::vec(-1.5f64..1.5, 3)) {
            let lhs = (&p * &q).eval(&u).unwrap();
            let rhs = p.eval(&u).unwrap() * q.eval(&u).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn product_degree_adds(p in arb_poly(2), q in arb_poly(2)) {
            if !p.is_zero() && !q.is_zero() {
                prop_assert_eq!((&p * &q).degree(), p.degree() + q.degree());
            }
        }

        #[test]
        fn embedding_preserves_values(p in arb_poly(2), u in prop::collection::vec(-1.0f64..1.0, 4)) {
            let lifted = p.embed(&[1, 3], 4).unwrap();
            let a = lifted.eval(&u).unwrap();
            let b = p.eval(&[u[1], u[3]]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
