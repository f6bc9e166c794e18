//! Formal *-algebra of words in time-indexed self-adjoint letters.
//!
//! A letter `X^g_t` stands for the modular translate `σ_t(X_g)`; its `Y`
//! sibling `Y^g_t` is the matching free semicircular copy. Every letter is
//! self-adjoint, so the adjoint of a word is its reversal.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact modular time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeTag(Ratio<i64>);

impl TimeTag {
    pub const ZERO: TimeTag = TimeTag(Ratio::new_raw(0, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        TimeTag(Ratio::new(numer, denom))
    }

    pub fn int(t: i64) -> Self {
        TimeTag(Ratio::from_integer(t))
    }

    pub fn ratio(&self) -> Ratio<i64> {
        self.0
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl From<i64> for TimeTag {
    fn from(t: i64) -> Self {
        TimeTag::int(t)
    }
}

impl Add for TimeTag {
    type Output = TimeTag;
    fn add(self, rhs: TimeTag) -> TimeTag {
        TimeTag(self.0 + rhs.0)
    }
}

impl Sub for TimeTag {
    type Output = TimeTag;
    fn sub(self, rhs: TimeTag) -> TimeTag {
        TimeTag(self.0 - rhs.0)
    }
}

impl Neg for TimeTag {
    type Output = TimeTag;
    fn neg(self) -> TimeTag {
        TimeTag(-self.0)
    }
}

impl fmt::Display for TimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

/// Accepts `p`, `p/q` and terminating decimals such as `-0.25`.
impl FromStr for TimeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("invalid time tag `{s}`"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(TimeTag::new(n, d));
        }
        if let Some((int_part, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let negative = int_part.starts_with('-');
            let int_digits = int_part.trim_start_matches(['-', '+']);
            let whole: i64 = if int_digits.is_empty() {
                0
            } else {
                int_digits.parse().map_err(|_| bad())?
            };
            let denom = 10i64.pow(frac.len() as u32);
            let frac_val: i64 = frac.parse().map_err(|_| bad())?;
            let numer = whole
                .checked_mul(denom)
                .and_then(|v| v.checked_add(frac_val))
                .ok_or_else(bad)?;
            return Ok(TimeTag::new(if negative { -numer } else { numer }, denom));
        }
        s.parse::<i64>().map(TimeTag::int).map_err(|_| bad())
    }
}

impl Serialize for TimeTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    X,
    Y,
}

/// Index of a generator inside a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub family: Family,
    pub gen: GenId,
    pub time: TimeTag,
}

impl Letter {
    pub fn x(gen: GenId, time: TimeTag) -> Self {
        Letter {
            family: Family::X,
            gen,
            time,
        }
    }

    pub fn y(gen: GenId, time: TimeTag) -> Self {
        Letter {
            family: Family::Y,
            gen,
            time,
        }
    }

    pub fn shifted(self, s: TimeTag) -> Self {
        Letter {
            time: self.time + s,
            ..self
        }
    }

    /// The same generator and time in the other family.
    pub fn partner(self) -> Self {
        let family = match self.family {
            Family::X => Family::Y,
            Family::Y => Family::X,
        };
        Letter { family, ..self }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fam = match self.family {
            Family::X => 'X',
            Family::Y => 'Y',
        };
        write!(f, "{fam}{}:{}", self.gen.0, self.time)
    }
}

/// A finite product of letters; the empty word is the identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(pub Vec<Letter>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn from_letters(letters: impl IntoIterator<Item = Letter>) -> Self {
        Word(letters.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn adjoint(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.0);
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn shift(&self, s: TimeTag) -> Word {
        Word(self.0.iter().map(|l| l.shifted(s)).collect())
    }

    pub fn has_family(&self, family: Family) -> bool {
        self.0.iter().any(|l| l.family == family)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Finite complex linear combination of words, stored without zero terms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NcPoly {
    terms: BTreeMap<Word, Complex64>,
}

impl NcPoly {
    pub fn zero() -> Self {
        NcPoly::default()
    }

    pub fn one() -> Self {
        NcPoly::from_word(Word::empty())
    }

    pub fn from_word(w: Word) -> Self {
        NcPoly::term(Complex64::new(1.0, 0.0), w)
    }

    pub fn letter(l: Letter) -> Self {
        NcPoly::from_word(Word(vec![l]))
    }

    pub fn term(c: Complex64, w: Word) -> Self {
        let mut p = NcPoly::zero();
        p.add_term(c, w);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Complex64, Word)>) -> Self {
        let mut p = NcPoly::zero();
        for (c, w) in terms {
            p.add_term(c, w);
        }
        p
    }

    pub fn add_term(&mut self, c: Complex64, w: Word) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(w) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, w: &Word) -> Complex64 {
        self.terms.get(w).copied().unwrap_or_default()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::len).max().unwrap_or(0)
    }

    pub fn scale(&self, c: Complex64) -> NcPoly {
        NcPoly::from_terms(self.terms.iter().map(|(w, v)| (v * c, w.clone())))
    }

    pub fn adjoint(&self) -> NcPoly {
        NcPoly::from_terms(self.terms.iter().map(|(w, c)| (c.conj(), w.adjoint())))
    }

    /// Applies the modular shift `σ_s` to every letter.
    pub fn modular_shift(&self, s: TimeTag) -> NcPoly {
        NcPoly::from_terms(self.terms.iter().map(|(w, c)| (*c, w.shift(s))))
    }

    /// Replaces every letter through `f`, re-canonicalizing coincident words.
    pub fn map_letters(&self, f: impl Fn(Letter) -> Letter) -> NcPoly {
        NcPoly::from_terms(
            self.terms
                .iter()
                .map(|(w, c)| (*c, Word(w.0.iter().map(|&l| f(l)).collect()))),
        )
    }

    pub fn has_family(&self, family: Family) -> bool {
        self.terms.keys().any(|w| w.has_family(family))
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.terms
            .iter()
            .all(|(w, c)| self.coefficient(&w.adjoint()) == c.conj())
    }

    /// Largest coefficient modulus, a cheap norm for comparing exact results.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl fmt::Display for NcPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})·{w}")?;
        }
        Ok(())
    }
}

impl AddAssign<&NcPoly> for NcPoly {
    fn add_assign(&mut self, rhs: &NcPoly) {
        for (w, c) in &rhs.terms {
            self.add_term(*c, w.clone());
        }
    }
}

impl Add<&NcPoly> for &NcPoly {
    type Output = NcPoly;
    fn add(self, rhs: &NcPoly) -> NcPoly {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&NcPoly> for &NcPoly {
    type Output = NcPoly;
    fn sub(self, rhs: &NcPoly) -> NcPoly {
        let mut out = self.clone();
        for (w, c) in &rhs.terms {
            out.add_term(-c, w.clone());
        }
        out
    }
}

impl Neg for &NcPoly {
    type Output = NcPoly;
    fn neg(self) -> NcPoly {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul<&NcPoly> for &NcPoly {
    type Output = NcPoly;
    fn mul(self, rhs: &NcPoly) -> NcPoly {
        let mut out = NcPoly::zero();
        for (wa, ca) in &self.terms {
            for (wb, cb) in &rhs.terms {
                out.add_term(ca * cb, wa.concat(wb));
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<NcPoly> for NcPoly {
            type Output = NcPoly;
            fn $m(self, rhs: NcPoly) -> NcPoly {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&NcPoly> for NcPoly {
            type Output = NcPoly;
            fn $m(self, rhs: &NcPoly) -> NcPoly {
                (&self).$m(rhs)
            }
        }
    };
}

forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

pub fn multiply(p: &NcPoly, q: &NcPoly) -> NcPoly {
    p * q
}

pub fn adjoint(p: &NcPoly) -> NcPoly {
    p.adjoint()
}

pub fn modular_shift(p: &NcPoly, s: TimeTag) -> NcPoly {
    p.modular_shift(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(t: i64) -> NcPoly {
        NcPoly::letter(Letter::x(GenId(0), TimeTag::int(t)))
    }

    fn xl(t: TimeTag) -> Letter {
        Letter::x(GenId(0), t)
    }

    #[test]
    fn identity_times_identity() {
        assert_eq!(&NcPoly::one() * &NcPoly::one(), NcPoly::one());
    }

    #[test]
    fn product_of_two_letters() {
        let p = &x(0) * &x(1);
        let w = Word(vec![xl(TimeTag::int(0)), xl(TimeTag::int(1))]);
        assert_eq!(p.len(), 1);
        assert_eq!(p.coefficient(&w), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn difference_of_squares_expansion() {
        let p = &(&x(0) + &x(1)) * &(&x(0) - &x(1));
        let expected =
            &(&(&x(0) * &x(0)) - &(&x(0) * &x(1))) + &(&(&x(1) * &x(0)) - &(&x(1) * &x(1)));
        assert_eq!(p, expected);
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn cancellation_drops_terms() {
        let p = &x(3) - &x(3);
        assert!(p.is_zero());
    }

    #[test]
    fn adjoint_reverses_and_conjugates() {
        let p = &x(0) * &x(1);
        assert_eq!(p.adjoint(), &x(1) * &x(0));
        let q = x(0).scale(Complex64::i());
        assert_eq!(q.adjoint(), x(0).scale(-Complex64::i()));
    }

    #[test]
    fn shift_examples() {
        assert_eq!(x(0).modular_shift(TimeTag::int(1)), x(1));
        let half = TimeTag::new(1, 2);
        let p = &x(0) * &NcPoly::letter(xl(half));
        let shifted = p.modular_shift(-half);
        let expected = &NcPoly::letter(xl(-half)) * &x(0);
        assert_eq!(shifted, expected);
    }

    #[test]
    fn time_tag_parsing() {
        assert_eq!("3/2".parse::<TimeTag>().unwrap(), TimeTag::new(3, 2));
        assert_eq!("-1".parse::<TimeTag>().unwrap(), TimeTag::int(-1));
        assert_eq!("-0.25".parse::<TimeTag>().unwrap(), TimeTag::new(-1, 4));
        assert_eq!("0.5".parse::<TimeTag>().unwrap(), TimeTag::new(1, 2));
        assert!("1/0".parse::<TimeTag>().is_err());
        assert!("abc".parse::<TimeTag>().is_err());
        assert_eq!(TimeTag::new(-6, 4).to_string(), "-3/2");
    }

    #[test]
    fn self_adjoint_detection() {
        let p = &(&x(0) * &x(1)) + &(&x(1) * &x(0));
        assert!(p.is_self_adjoint());
        assert!(!(&x(0) * &x(1)).is_self_adjoint());
    }
}
