//! The covariant *-derivation `∂_X : B[X] → B[X]·Y·B[X]`.
//!
//! `∂_X(X_t) = Y_t` and letters of the other generators are constants. A value
//! of `∂_X` is stored as a linear combination of simple tensors
//! `c·(P · Y_t · Q)`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use num_complex::Complex64;
use num_traits::Zero;

use crate::algebra::{Family, GenId, Letter, NcPoly, TimeTag, Word};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::moments::state_of_poly;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TensorTerm {
    pub left: Word,
    pub gen: GenId,
    pub mid_time: TimeTag,
    pub right: Word,
}

impl TensorTerm {
    pub fn mid_letter(&self) -> Letter {
        Letter::y(self.gen, self.mid_time)
    }

    /// The mixed word `left · Y_mid · right`.
    pub fn to_word(&self) -> Word {
        let mut v = self.left.0.clone();
        v.push(self.mid_letter());
        v.extend_from_slice(&self.right.0);
        Word(v)
    }
}

/// Element of `B[X]·Y·B[X]` in canonical form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorElem {
    terms: BTreeMap<TensorTerm, Complex64>,
}

impl TensorElem {
    pub fn zero() -> Self {
        TensorElem::default()
    }

    pub fn add_term(&mut self, c: Complex64, t: TensorTerm) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(t) {
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

    pub fn terms(&self) -> impl Iterator<Item = (&TensorTerm, &Complex64)> {
        self.terms.iter()
    }

    pub fn add(&self, other: &TensorElem) -> TensorElem {
        let mut out = self.clone();
        for (t, c) in &other.terms {
            out.add_term(*c, t.clone());
        }
        out
    }

    /// `p · self`.
    pub fn left_mul(&self, p: &NcPoly) -> TensorElem {
        let mut out = TensorElem::zero();
        for (wp, cp) in p.terms() {
            for (t, c) in &self.terms {
                out.add_term(
                    cp * c,
                    TensorTerm {
                        left: wp.concat(&t.left),
                        ..t.clone()
                    },
                );
            }
        }
        out
    }

    /// `self · q`.
    pub fn right_mul(&self, q: &NcPoly) -> TensorElem {
        let mut out = TensorElem::zero();
        for (t, c) in &self.terms {
            for (wq, cq) in q.terms() {
                out.add_term(
                    c * cq,
                    TensorTerm {
                        right: t.right.concat(wq),
                        ..t.clone()
                    },
                );
            }
        }
        out
    }

    /// `(c, P, t, Q) ↦ (c̄, Q*, t, P*)`.
    pub fn adjoint(&self) -> TensorElem {
        let mut out = TensorElem::zero();
        for (t, c) in &self.terms {
            out.add_term(
                c.conj(),
                TensorTerm {
                    left: t.right.adjoint(),
                    gen: t.gen,
                    mid_time: t.mid_time,
                    right: t.left.adjoint(),
                },
            );
        }
        out
    }

    /// Shifts both outer slots and the middle letter by `s`.
    pub fn modular_shift(&self, s: TimeTag) -> TensorElem {
        let mut out = TensorElem::zero();
        for (t, c) in &self.terms {
            out.add_term(
                *c,
                TensorTerm {
                    left: t.left.shift(s),
                    gen: t.gen,
                    mid_time: t.mid_time + s,
                    right: t.right.shift(s),
                },
            );
        }
        out
    }

    /// The element as a polynomial in mixed X/Y words.
    pub fn to_poly(&self) -> NcPoly {
        NcPoly::from_terms(self.terms.iter().map(|(t, c)| (*c, t.to_word())))
    }
}

/// `∂_{gen}(p)` by the Leibniz rule.
pub fn partial(gen: GenId, p: &NcPoly) -> Result<TensorElem> {
    let mut out = TensorElem::zero();
    for (w, c) in p.terms() {
        let letters = w.letters();
        for (k, &l) in letters.iter().enumerate() {
            if l.family != Family::X {
                return Err(Error::Family(l));
            }
            if l.gen != gen {
                continue;
            }
            out.add_term(
                *c,
                TensorTerm {
                    left: Word(letters[..k].to_vec()),
                    gen,
                    mid_time: l.time,
                    right: Word(letters[k + 1..].to_vec()),
                },
            );
        }
    }
    Ok(out)
}

/// `⟨Y_s, e⟩ = Σ c·φ̂(Y_s · left · Y_mid · right)` where `Y_s` is the `Y` letter of each term's generator.
pub fn pair_with_y_at(m: &ModelSpec, e: &TensorElem, s: TimeTag) -> Complex64 {
    e.terms()
        .map(|(t, c)| {
            let mut v = Vec::with_capacity(t.left.len() + t.right.len() + 2);
            v.push(Letter::y(t.gen, s));
            v.extend_from_slice(&t.to_word().0);
            c * crate::moments::evaluate_state(m, &Word(v))
        })
        .sum()
}

/// The right-hand side `⟨Y, ∂_X(P)⟩` of the defining relation, with `Y = Y₀`.
pub fn pair_with_y(m: &ModelSpec, e: &TensorElem) -> Complex64 {
    pair_with_y_at(m, e, TimeTag::ZERO)
}

/// `|φ(P ξ Q) − φ̂(P·Y·∂Q) − φ̂(∂P·Y·Q)|` with the middle `Y = Y₀` of `gen`.
pub fn verify_xileftright(
    m: &ModelSpec,
    gen: GenId,
    p: &NcPoly,
    q: &NcPoly,
    xi: &NcPoly,
) -> Result<f64> {
    for poly in [p, q, xi] {
        if let Some(l) = poly
            .terms()
            .flat_map(|(w, _)| w.letters().iter().copied())
            .find(|l| l.family != Family::X)
        {
            return Err(Error::Family(l));
        }
    }
    let p = m.collapse_tracial(p);
    let q = m.collapse_tracial(q);
    let xi = m.collapse_tracial(xi);
    let y0 = NcPoly::letter(Letter::y(gen, TimeTag::ZERO));
    let lhs = state_of_poly(m, &(&(&p * &xi) * &q));
    let dq = partial(gen, &q)?.to_poly();
    let dp = partial(gen, &p)?.to_poly();
    let right = state_of_poly(m, &(&(&p * &y0) * &dq));
    let left = state_of_poly(m, &(&(&dp * &y0) * &q));
    Ok((lhs - right - left).norm())
}
