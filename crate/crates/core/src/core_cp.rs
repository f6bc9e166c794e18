//! Finitely generated elements of the core `M ⋊_σ ℝ`.
//!
//! Elements are kept in the normal form `Σ c·P·U_r` using `U_s X_t = X_{t+s} U_s`.
//! The group algebra `L(ℝ)` is represented by finitely supported
//! trigonometric polynomials `Σ a_t U_t`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;

use crate::algebra::{Family, GenId, Letter, NcPoly, TimeTag, Word};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::moments::evaluate_state;

fn add_into<K: Ord>(map: &mut BTreeMap<K, Complex64>, k: K, c: Complex64) {
    if c.is_zero() {
        return;
    }
    match map.entry(k) {
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

/// `Σ a_t U_t ∈ L(ℝ)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrigPoly {
    terms: BTreeMap<TimeTag, Complex64>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        TrigPoly::default()
    }

    pub fn one() -> Self {
        TrigPoly::unitary(TimeTag::ZERO)
    }

    pub fn unitary(t: TimeTag) -> Self {
        TrigPoly::term(Complex64::new(1.0, 0.0), t)
    }

    pub fn term(c: Complex64, t: TimeTag) -> Self {
        let mut p = TrigPoly::zero();
        p.add_term(c, t);
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Complex64, TimeTag)>) -> Self {
        let mut p = TrigPoly::zero();
        for (c, t) in terms {
            p.add_term(c, t);
        }
        p
    }

    pub fn add_term(&mut self, c: Complex64, t: TimeTag) {
        add_into(&mut self.terms, t, c);
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TimeTag, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, t: TimeTag) -> Complex64 {
        self.terms.get(&t).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(*c, *t);
        }
        out
    }

    pub fn sub(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(-c, *t);
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> TrigPoly {
        TrigPoly::from_terms(self.terms.iter().map(|(t, a)| (a * c, *t)))
    }

    /// `U_s U_t = U_{s+t}`.
    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = TrigPoly::zero();
        for (s, a) in &self.terms {
            for (t, b) in &other.terms {
                out.add_term(a * b, *s + *t);
            }
        }
        out
    }

    /// `U_t* = U_{−t}`.
    pub fn adjoint(&self) -> TrigPoly {
        TrigPoly::from_terms(self.terms.iter().map(|(t, a)| (a.conj(), -*t)))
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// The character `U_t ↦ e^{2πiωt}`, a *-homomorphism `L(ℝ) → ℂ`.
    pub fn character(&self, omega: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(t, a)| a * Complex64::new(0.0, 2.0 * PI * omega * t.to_f64()).exp())
            .sum()
    }

    /// The canonical trace, the coefficient of `U₀`.
    pub fn trace(&self) -> Complex64 {
        self.coefficient(TimeTag::ZERO)
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (t, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})·U[{t}]")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoreLetter {
    X(Letter),
    U(TimeTag),
}

/// A coefficient times an arbitrary product of `X` letters and unitaries `U_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoreWord {
    pub coefficient: Complex64,
    pub letters: Vec<CoreLetter>,
}

impl CoreWord {
    pub fn new(coefficient: Complex64, letters: Vec<CoreLetter>) -> Result<Self> {
        for l in &letters {
            if let CoreLetter::X(x) = l {
                if x.family != Family::X {
                    return Err(Error::Family(*x));
                }
            }
        }
        Ok(CoreWord {
            coefficient,
            letters,
        })
    }

    pub fn unit(letters: Vec<CoreLetter>) -> Result<Self> {
        CoreWord::new(Complex64::new(1.0, 0.0), letters)
    }

    pub fn x_degree(&self) -> usize {
        self.letters
            .iter()
            .filter(|l| matches!(l, CoreLetter::X(_)))
            .count()
    }
}

/// Rewrites a product as `P·U_r` by pushing every unitary to the right.
pub fn normal_form_letters(letters: &[CoreLetter]) -> (Word, TimeTag) {
    let mut r = TimeTag::ZERO;
    let mut out = Vec::new();
    for l in letters {
        match *l {
            CoreLetter::U(s) => r = r + s,
            CoreLetter::X(x) => out.push(x.shifted(r)),
        }
    }
    (Word(out), r)
}

pub fn normal_form(cw: &CoreWord) -> (Word, TimeTag) {
    normal_form_letters(&cw.letters)
}

/// `Σ c·P·U_r` in normal form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoreElem {
    terms: BTreeMap<(Word, TimeTag), Complex64>,
}

impl CoreElem {
    pub fn zero() -> Self {
        CoreElem::default()
    }

    pub fn one() -> Self {
        CoreElem::mono(Complex64::new(1.0, 0.0), Word::empty(), TimeTag::ZERO)
    }

    pub fn mono(c: Complex64, w: Word, r: TimeTag) -> Self {
        let mut e = CoreElem::zero();
        e.add_term(c, w, r);
        e
    }

    pub fn unitary(r: TimeTag) -> Self {
        CoreElem::mono(Complex64::new(1.0, 0.0), Word::empty(), r)
    }

    pub fn add_term(&mut self, c: Complex64, w: Word, r: TimeTag) {
        add_into(&mut self.terms, (w, r), c);
    }

    pub fn from_core_word(cw: &CoreWord) -> Self {
        let (w, r) = normal_form(cw);
        CoreElem::mono(cw.coefficient, w, r)
    }

    pub fn from_poly(p: &NcPoly) -> Self {
        let mut e = CoreElem::zero();
        for (w, c) in p.terms() {
            e.add_term(*c, w.clone(), TimeTag::ZERO);
        }
        e
    }

    pub fn from_trig(p: &TrigPoly) -> Self {
        let mut e = CoreElem::zero();
        for (t, c) in p.terms() {
            e.add_term(*c, Word::empty(), *t);
        }
        e
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(Word, TimeTag), &Complex64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &CoreElem) -> CoreElem {
        let mut out = self.clone();
        for ((w, r), c) in &other.terms {
            out.add_term(*c, w.clone(), *r);
        }
        out
    }

    pub fn scale(&self, c: Complex64) -> CoreElem {
        let mut out = CoreElem::zero();
        for ((w, r), a) in &self.terms {
            out.add_term(a * c, w.clone(), *r);
        }
        out
    }

    /// `(P U_r)(Q U_s) = P σ_r(Q) U_{r+s}`.
    pub fn mul(&self, other: &CoreElem) -> CoreElem {
        let mut out = CoreElem::zero();
        for ((p, r), a) in &self.terms {
            for ((q, s), b) in &other.terms {
                out.add_term(a * b, p.concat(&q.shift(*r)), *r + *s);
            }
        }
        out
    }

    /// `(c P U_r)* = c̄ U_{−r} P* = c̄ σ_{−r}(P*) U_{−r}`.
    pub fn adjoint(&self) -> CoreElem {
        let mut out = CoreElem::zero();
        for ((p, r), a) in &self.terms {
            out.add_term(a.conj(), p.adjoint().shift(-*r), -*r);
        }
        out
    }
}

/// `E^φ(P U_r) = φ(P) U_r`.
pub fn expectation(m: &ModelSpec, a: &CoreElem) -> TrigPoly {
    let mut out = TrigPoly::zero();
    for ((w, r), c) in a.terms() {
        out.add_term(c * evaluate_state(m, w), *r);
    }
    out
}

pub fn expectation_e(m: &ModelSpec, cw: &CoreWord) -> TrigPoly {
    expectation(m, &CoreElem::from_core_word(cw))
}

/// `η_X(U_t) = E^φ(X U_t X) = η(t)·U_t`.
pub fn eta_map(m: &ModelSpec, gen: GenId, p: &TrigPoly) -> TrigPoly {
    TrigPoly::from_terms(
        p.terms()
            .map(|(t, a)| (a * m.eta_real(gen, t.to_f64()), *t)),
    )
}

/// Finite sum of simple tensors `a ⊗_η b`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EtaBimoduleElem {
    pub terms: Vec<(CoreElem, CoreElem)>,
}

impl EtaBimoduleElem {
    pub fn zero() -> Self {
        EtaBimoduleElem::default()
    }

    /// The vector `1 ⊗_η 1`.
    pub fn one_tensor_one() -> Self {
        EtaBimoduleElem {
            terms: vec![(CoreElem::one(), CoreElem::one())],
        }
    }

    pub fn simple(a: CoreElem, b: CoreElem) -> Self {
        EtaBimoduleElem {
            terms: vec![(a, b)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `x·(a ⊗ b)·y = (xa) ⊗ (by)`.
    pub fn act(&self, x: &CoreElem, y: &CoreElem) -> EtaBimoduleElem {
        EtaBimoduleElem {
            terms: self
                .terms
                .iter()
                .map(|(a, b)| (x.mul(a), b.mul(y)))
                .collect(),
        }
    }
}

/// `⟨a⊗b, a′⊗b′⟩_η = E(b* · η_X(E(a* a′)) · b′)`, conjugate-linear in `u`.
pub fn eta_inner(m: &ModelSpec, gen: GenId, u: &EtaBimoduleElem, v: &EtaBimoduleElem) -> TrigPoly {
    let mut out = TrigPoly::zero();
    for (a, b) in &u.terms {
        let a_adj = a.adjoint();
        let b_adj = b.adjoint();
        for (a2, b2) in &v.terms {
            let inner = eta_map(m, gen, &expectation(m, &a_adj.mul(a2)));
            let outer = b_adj.mul(&CoreElem::from_trig(&inner)).mul(b2);
            out = out.add(&expectation(m, &outer));
        }
    }
    out
}

/// `δ_X` by the Leibniz rule, with `δ_X(X_t) = U_t ⊗ U_{−t}` and `δ_X(U_s) = δ_X(b) = 0`.
pub fn delta_x(gen: GenId, cw: &CoreWord) -> EtaBimoduleElem {
    let mut terms = Vec::new();
    for (k, l) in cw.letters.iter().enumerate() {
        let CoreLetter::X(x) = *l else { continue };
        if x.gen != gen {
            continue;
        }
        let mut left = cw.letters[..k].to_vec();
        left.push(CoreLetter::U(x.time));
        let mut right = vec![CoreLetter::U(-x.time)];
        right.extend_from_slice(&cw.letters[k + 1..]);
        let (lw, lr) = normal_form_letters(&left);
        let (rw, rr) = normal_form_letters(&right);
        terms.push((
            CoreElem::mono(cw.coefficient, lw, lr),
            CoreElem::mono(Complex64::new(1.0, 0.0), rw, rr),
        ));
    }
    EtaBimoduleElem { terms }
}

/// Max coefficient deviation between `E(ζ* Q)` and `⟨1⊗_η1, δ_X(Q)⟩_η`.
pub fn verify_core_theorem(m: &ModelSpec, gen: GenId, q: &CoreWord, zeta: &NcPoly) -> Result<f64> {
    if let Some(l) = zeta
        .terms()
        .flat_map(|(w, _)| w.letters().iter().copied())
        .find(|l| l.family != Family::X)
    {
        return Err(Error::Family(l));
    }
    let lhs = expectation(
        m,
        &CoreElem::from_poly(zeta)
            .adjoint()
            .mul(&CoreElem::from_core_word(q)),
    );
    let rhs = eta_inner(m, gen, &EtaBimoduleElem::one_tensor_one(), &delta_x(gen, q));
    Ok(lhs.sub(&rhs).max_abs())
}

/// `[χ_ω(η_X(p_i* p_j))]`, positive semi-definite because `η_X` is completely positive.
pub fn eta_positivity_matrix(
    m: &ModelSpec,
    gen: GenId,
    ps: &[TrigPoly],
    omega: f64,
) -> DMatrix<Complex64> {
    let n = ps.len();
    DMatrix::from_fn(n, n, |i, j| {
        eta_map(m, gen, &ps[i].adjoint().mul(&ps[j])).character(omega)
    })
}

/// Lower bound `4α²(1−α)²/δ²` on `Φ*_φ(X:B)` when `‖[X,p]‖₂ < δ` for a projection of trace `α`.
pub fn factoriality_bound(alpha: f64, delta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!(
            "delta must be positive and finite, got {delta}"
        )));
    }
    // α and fl(1−α) share `hi`, so the symmetry holds bit for bit
    let hi = if alpha > 0.5 { alpha } else { 1.0 - alpha };
    let lo = 1.0 - hi;
    let root = 2.0 * lo * hi / delta;
    Ok(root * root)
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: GenId = GenId(0);

    fn t(n: i64, d: i64) -> TimeTag {
        TimeTag::new(n, d)
    }

    fn xl(time: TimeTag) -> CoreLetter {
        CoreLetter::X(Letter::x(G, time))
    }

    fn u(time: TimeTag) -> CoreLetter {
        CoreLetter::U(time)
    }

    #[test]
    fn normal_form_examples() {
        let s = t(1, 3);
        let cw = CoreWord::unit(vec![u(s), xl(t(1, 2)), u(-s)]).unwrap();
        assert_eq!(
            normal_form(&cw),
            (Word(vec![Letter::x(G, t(1, 2) + s)]), TimeTag::ZERO)
        );
        let cw = CoreWord::unit(vec![
            xl(TimeTag::ZERO),
            u(t(1, 1)),
            xl(TimeTag::ZERO),
            u(t(-1, 1)),
        ])
        .unwrap();
        assert_eq!(
            normal_form(&cw),
            (
                Word(vec![
                    Letter::x(G, TimeTag::ZERO),
                    Letter::x(G, TimeTag::int(1))
                ]),
                TimeTag::ZERO
            )
        );
        let cw = CoreWord::unit(vec![u(t(1, 2)), u(t(1, 2))]).unwrap();
        assert_eq!(normal_form(&cw), (Word::empty(), TimeTag::int(1)));
    }

    #[test]
    fn expectation_examples() {
        let m = ModelSpec::two_atom();
        let tt = t(3, 4);
        assert_eq!(
            expectation_e(&m, &CoreWord::unit(vec![u(tt)]).unwrap()),
            TrigPoly::unitary(tt)
        );
        let e = expectation_e(
            &m,
            &CoreWord::unit(vec![xl(TimeTag::ZERO), u(tt), xl(TimeTag::ZERO)]).unwrap(),
        );
        assert_eq!(e, TrigPoly::term(m.eta_real(G, 0.75), tt));
        assert!(
            expectation_e(&m, &CoreWord::unit(vec![xl(TimeTag::ZERO), u(tt)]).unwrap()).is_zero()
        );
    }

    #[test]
    fn eta_map_examples() {
        let m = ModelSpec::two_atom();
        assert_eq!(
            eta_map(&m, G, &TrigPoly::one()),
            TrigPoly::term(m.eta_real(G, 0.0), TimeTag::ZERO)
        );
        let tt = t(-1, 2);
        assert_eq!(
            eta_map(&m, G, &TrigPoly::unitary(tt)),
            TrigPoly::term(m.eta_real(G, -0.5), tt)
        );
    }

    #[test]
    fn eta_inner_examples() {
        let m = ModelSpec::two_atom();
        let one = EtaBimoduleElem::one_tensor_one();
        let v = eta_inner(&m, G, &one, &one);
        assert_eq!(v, TrigPoly::term(m.eta_real(G, 0.0), TimeTag::ZERO));
        let (tt, s) = (t(1, 2), t(2, 3));
        let v2 = EtaBimoduleElem::simple(
            CoreElem::unitary(tt),
            CoreElem::unitary(-tt).mul(&CoreElem::unitary(s)),
        );
        let got = eta_inner(&m, G, &one, &v2);
        let expected = TrigPoly::term(m.eta_real(G, 0.5), s);
        assert!(got.sub(&expected).max_abs() < 1e-15);
    }

    #[test]
    fn delta_examples() {
        let d = delta_x(G, &CoreWord::unit(vec![xl(TimeTag::ZERO)]).unwrap());
        assert_eq!(d, EtaBimoduleElem::one_tensor_one());
        let tt = t(5, 2);
        let d = delta_x(G, &CoreWord::unit(vec![xl(tt)]).unwrap());
        assert_eq!(
            d,
            EtaBimoduleElem::simple(CoreElem::unitary(tt), CoreElem::unitary(-tt))
        );
        assert!(delta_x(G, &CoreWord::unit(vec![u(tt)]).unwrap()).is_empty());
    }

    #[test]
    fn core_theorem_examples() {
        let m = ModelSpec::two_atom();
        let zeta = NcPoly::letter(Letter::x(G, TimeTag::ZERO));
        let q = CoreWord::unit(vec![xl(t(1, 3)), u(t(-1, 2))]).unwrap();
        assert!(verify_core_theorem(&m, G, &q, &zeta).unwrap() < 1e-15);
        let q = CoreWord::unit(vec![u(t(1, 2))]).unwrap();
        assert_eq!(verify_core_theorem(&m, G, &q, &zeta).unwrap(), 0.0);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(factoriality_bound(0.5, 0.1).unwrap(), 25.0);
        assert_eq!(
            factoriality_bound(0.25, 0.3).unwrap(),
            factoriality_bound(0.75, 0.3).unwrap()
        );
        for a in [0.1, 0.3, 0.7, 1e-3, 0.999] {
            assert_eq!(
                factoriality_bound(a, 0.2).unwrap(),
                factoriality_bound(1.0 - a, 0.2).unwrap()
            );
        }
        let mut prev = f64::INFINITY;
        for d in [0.1, 1.0, 10.0, 1e3, 1e6] {
            let b = factoriality_bound(0.3, d).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 1e-12);
        assert!(factoriality_bound(0.0, 1.0).is_err());
        assert!(factoriality_bound(1.0, 1.0).is_err());
        assert!(factoriality_bound(0.5, 0.0).is_err());
        assert!(factoriality_bound(0.5, f64::NAN).is_err());
    }

    #[test]
    fn trig_poly_algebra() {
        let a = TrigPoly::from_terms([
            (Complex64::new(1.0, 2.0), t(1, 2)),
            (Complex64::new(-1.0, 0.0), t(0, 1)),
        ]);
        let b = TrigPoly::unitary(t(-1, 2));
        assert_eq!(
            a.mul(&b).coefficient(TimeTag::ZERO),
            Complex64::new(1.0, 2.0)
        );
        assert_eq!(a.adjoint().adjoint(), a);
        assert_eq!(
            TrigPoly::unitary(t(1, 3)).mul(&TrigPoly::unitary(t(1, 3)).adjoint()),
            TrigPoly::one()
        );
    }
}
