//! Finite-support non-negative functions over states.
//!
//! A [`ContinuationFunction`] assigns a rate (or a probability) to finitely many
//! states; every other state implicitly maps to zero. These are the third
//! component of a rate transition `(source, label, continuation)` and the
//! algebra below (point masses, pointwise sum, pairing, scaling) is what the
//! operational rules are written in.

use std::fmt;
use std::hash::Hash;

use indexmap::IndexMap;

use crate::error::FutsError;

/// Entries with absolute value below this are dropped during canonicalization.
pub const ZERO_THRESHOLD: f64 = 1e-15;

/// Tolerance used by [`ContinuationFunction::as_distribution`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// A finite-support function `X -> R>=0`.
///
/// Iteration order is the insertion order of the support, which keeps every
/// consumer (state numbering, sampling) deterministic.
#[derive(Clone)]
pub struct ContinuationFunction<X: Eq + Hash> {
    entries: IndexMap<X, f64>,
}

impl<X: Eq + Hash> Default for ContinuationFunction<X> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<X: Eq + Hash> ContinuationFunction<X> {
    /// The constant zero function `[ ]`.
    pub fn zero() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    /// `[d -> gamma]`. Fails on a negative or non-finite weight.
    pub fn point(d: X, gamma: f64) -> Result<Self, FutsError> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(FutsError::InvalidWeight(gamma));
        }
        let mut f = Self::zero();
        f.accumulate(d, gamma);
        Ok(f)
    }

    /// The characteristic function `[d -> 1]`.
    pub fn char(d: X) -> Self {
        let mut f = Self::zero();
        f.entries.insert(d, 1.0);
        f
    }

    /// Builds a function from `(state, weight)` pairs, summing repeated states.
    pub fn from_pairs<I: IntoIterator<Item = (X, f64)>>(pairs: I) -> Result<Self, FutsError> {
        let mut f = Self::zero();
        for (d, w) in pairs {
            if !w.is_finite() || w < 0.0 {
                return Err(FutsError::InvalidWeight(w));
            }
            f.accumulate(d, w);
        }
        Ok(f)
    }

    /// Adds `w` to the value at `d`. Non-positive or tiny weights are ignored.
    pub(crate) fn accumulate(&mut self, d: X, w: f64) {
        if w.abs() < ZERO_THRESHOLD || w <= 0.0 {
            return;
        }
        *self.entries.entry(d).or_insert(0.0) += w;
    }

    pub fn get(&self, d: &X) -> f64 {
        self.entries.get(d).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&X, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn support(&self) -> impl Iterator<Item = &X> {
        self.entries.keys()
    }

    pub fn into_pairs(self) -> impl Iterator<Item = (X, f64)> {
        self.entries.into_iter()
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Self) -> Self
    where
        X: Clone,
    {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &Self)
    where
        X: Clone,
    {
        for (d, w) in other.iter() {
            self.accumulate(d.clone(), w);
        }
    }

    /// Pointwise multiplication by a non-negative scalar.
    pub fn scale(&self, gamma: f64) -> Self
    where
        X: Clone,
    {
        debug_assert!(gamma >= 0.0, "negative scale factor {gamma}");
        let mut out = Self::zero();
        for (d, w) in self.iter() {
            out.accumulate(d.clone(), w * gamma);
        }
        out
    }

    /// Generalised pairing: `(f (+) g)(combine(a, b)) = f(a) * g(b)`.
    ///
    /// `combine` must be injective on `support(f) x support(g)`; syntactic
    /// constructors such as parallel composition satisfy this trivially.
    pub fn pair_with<Y, Z, F>(&self, other: &ContinuationFunction<Y>, combine: F) -> ContinuationFunction<Z>
    where
        Y: Eq + Hash,
        Z: Eq + Hash,
        F: Fn(&X, &Y) -> Z,
    {
        let mut out = ContinuationFunction::zero();
        for (a, wa) in self.iter() {
            for (b, wb) in other.iter() {
                out.accumulate(combine(a, b), wa * wb);
            }
        }
        out
    }

    /// Pairing over a single carrier with an injective binary operator.
    pub fn pair<F>(&self, other: &Self, op: F) -> Self
    where
        F: Fn(&X, &X) -> X,
    {
        self.pair_with(other, op)
    }

    /// Pushes the function forward along `f`, summing colliding images.
    pub fn map<Y: Eq + Hash, F: Fn(&X) -> Y>(&self, f: F) -> ContinuationFunction<Y> {
        let mut out = ContinuationFunction::zero();
        for (d, w) in self.iter() {
            out.accumulate(f(d), w);
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().fold(0.0, |acc, w| acc + w)
    }

    /// Asserts the function is a probability distribution.
    pub fn as_distribution(self) -> Result<Distribution<X>, FutsError> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(FutsError::NotADistribution(mass));
        }
        Ok(Distribution(self))
    }

    /// Semantic equality up to a relative tolerance on the values.
    pub fn approx_eq(&self, other: &Self, rel_tol: f64) -> bool {
        self.len() == other.len()
            && self.iter().all(|(d, w)| {
                let v = other.get(d);
                v != 0.0 && (w - v).abs() <= rel_tol * w.abs().max(v.abs())
            })
    }
}

impl<X: Eq + Hash> PartialEq for ContinuationFunction<X> {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.iter().all(|(d, w)| other.get(d) == w)
    }
}

impl<X: Eq + Hash + fmt::Debug> fmt::Debug for ContinuationFunction<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (d, w)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d:?} -> {w}")?;
        }
        f.write_str("]")
    }
}

/// A continuation function whose total mass is one.
#[derive(Clone, PartialEq)]
pub struct Distribution<X: Eq + Hash>(ContinuationFunction<X>);

impl<X: Eq + Hash> Distribution<X> {
    pub fn dirac(d: X) -> Self {
        Distribution(ContinuationFunction::char(d))
    }

    /// Builds a distribution from weights that must sum to one.
    pub fn from_pairs<I: IntoIterator<Item = (X, f64)>>(pairs: I) -> Result<Self, FutsError> {
        ContinuationFunction::from_pairs(pairs)?.as_distribution()
    }

    /// Normalizes non-negative weights with a positive sum.
    pub fn normalized<I: IntoIterator<Item = (X, f64)>>(pairs: I) -> Result<Self, FutsError> {
        let f = ContinuationFunction::from_pairs(pairs)?;
        let mass = f.total_mass();
        if mass <= 0.0 {
            return Err(FutsError::NotADistribution(mass));
        }
        let mut out = ContinuationFunction::zero();
        for (d, w) in f.into_pairs() {
            out.accumulate(d, w / mass);
        }
        Ok(Distribution(out))
    }

    pub fn prob(&self, d: &X) -> f64 {
        self.0.get(d)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&X, f64)> {
        self.0.iter()
    }

    pub fn as_function(&self) -> &ContinuationFunction<X> {
        &self.0
    }

    pub fn into_function(self) -> ContinuationFunction<X> {
        self.0
    }

    pub fn map<Y: Eq + Hash, F: Fn(&X) -> Y>(&self, f: F) -> Distribution<Y> {
        Distribution(self.0.map(f))
    }
}

impl<X: Eq + Hash + fmt::Debug> fmt::Debug for Distribution<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dist{:?}", self.0)
    }
}

/// A labelled rate transition `(source, label, continuation)`.
#[derive(Clone, Debug)]
pub struct RateTransition<X: Eq + Hash, L> {
    pub source: X,
    pub label: L,
    pub continuation: ContinuationFunction<X>,
}

#[cfg(test)]
mod tests {
    use super::*;

    type Cf = ContinuationFunction<&'static str>;

    fn cf(pairs: &[(&'static str, f64)]) -> Cf {
        Cf::from_pairs(pairs.iter().copied()).unwrap()
    }

    fn par(a: &&'static str, b: &&'static str) -> String {
        format!("{a}|{b}")
    }

    #[test]
    fn point_and_char() {
        let p = Cf::point("P", 2.5).unwrap();
        assert_eq!(p.get(&"P"), 2.5);
        assert_eq!(p.get(&"Q"), 0.0);
        assert!(Cf::point("P", 0.0).unwrap().is_zero());
        assert!(Cf::point("P", -1.0).is_err());
        assert_eq!(Cf::char("P").get(&"P"), 1.0);
        assert_eq!(Cf::char("P").get(&"Q"), 0.0);
        assert_eq!(Cf::char("P").add(&Cf::char("P")).get(&"P"), 2.0);
    }

    #[test]
    fn add_is_pointwise() {
        assert_eq!(cf(&[("P", 1.0)]).add(&cf(&[("P", 2.0)])).get(&"P"), 3.0);
        let f = cf(&[("P", 1.0), ("Q", 0.5)]);
        assert_eq!(f.add(&Cf::zero()), f);
        let u = cf(&[("P", 1.0)]).add(&cf(&[("Q", 2.0)]));
        let mut support: Vec<_> = u.support().copied().collect();
        support.sort();
        assert_eq!(support, vec!["P", "Q"]);
    }

    #[test]
    fn pairing_multiplies() {
        let f = cf(&[("P", 2.0)]);
        let g = cf(&[("Q", 3.0)]);
        let h = f.pair_with(&g, par);
        assert_eq!(h.get(&"P|Q".to_string()), 6.0);
        assert!(f.pair_with(&Cf::zero(), par).is_zero());
        let chars = Cf::char("P").pair_with(&Cf::char("Q"), par);
        assert_eq!(chars, ContinuationFunction::char("P|Q".to_string()));
    }

    #[test]
    fn scaling() {
        assert_eq!(cf(&[("P", 2.0)]).scale(0.5).get(&"P"), 1.0);
        let f = cf(&[("P", 2.0), ("Q", 1.0)]);
        assert_eq!(f.scale(1.0), f);
        assert!(Cf::zero().scale(7.0).is_zero());
        assert!(f.scale(0.0).is_zero());
    }

    #[test]
    fn mass_and_distributions() {
        assert_eq!(cf(&[("P", 1.0), ("Q", 2.0)]).total_mass(), 3.0);
        assert!(cf(&[("P", 0.25), ("Q", 0.75)]).as_distribution().is_ok());
        assert!(matches!(
            cf(&[("P", 0.6), ("Q", 0.6)]).as_distribution(),
            Err(FutsError::NotADistribution(_))
        ));
    }

    #[test]
    fn no_stored_zeros() {
        let f = cf(&[("P", 0.0), ("Q", 1e-17), ("R", 1.0)]);
        assert_eq!(f.len(), 1);
    }
}
