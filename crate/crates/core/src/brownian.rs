//! ε-expansion of `φ̂(P(X_t + √ε·Y_t, …))`.
//!
//! Replacing a set `S` of letter positions by their `Y` partners contributes
//! at order `ε^{|S|/2}`. The expansion is exact (a finite polynomial in `√ε`).

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{Family, GenId, NcPoly, TimeTag, Word};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::moments::{evaluate_state, state_of_poly};

/// Longest word whose position subsets are enumerated.
pub const MAX_EXPANSION_LEN: usize = 24;

/// Coefficients keyed by the number of half powers: key `k` is `ε^{k/2}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpsExpansion {
    pub coefficients: BTreeMap<u32, Complex64>,
}

impl EpsExpansion {
    pub fn half_power(&self, k: u32) -> Complex64 {
        self.coefficients.get(&k).copied().unwrap_or_default()
    }

    /// Coefficient of `ε^p`.
    pub fn power(&self, p: u32) -> Complex64 {
        self.half_power(2 * p)
    }

    pub fn max_half_power(&self) -> u32 {
        self.coefficients.keys().copied().max().unwrap_or(0)
    }

    pub fn evaluate(&self, eps: f64) -> Complex64 {
        self.coefficients
            .iter()
            .map(|(&k, c)| c * eps.powf(k as f64 / 2.0))
            .sum()
    }
}

pub fn expand_state(m: &ModelSpec, w: &Word, max_order: u32) -> Result<EpsExpansion> {
    if let Some(&l) = w.letters().iter().find(|l| l.family != Family::X) {
        return Err(Error::Family(l));
    }
    let n = w.len();
    if n > MAX_EXPANSION_LEN {
        return Err(Error::SizeLimit {
            len: n,
            limit: MAX_EXPANSION_LEN,
        });
    }
    let max_half = (2 * max_order).min(n as u32);
    let masks: Vec<u32> = (0u32..(1u32 << n))
        .filter(|mask| mask.count_ones() <= max_half)
        .collect();
    let values: Vec<Complex64> = masks
        .par_iter()
        .map(|&mask| {
            let replaced = Word(
                w.letters()
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| if mask >> i & 1 == 1 { l.partner() } else { l })
                    .collect(),
            );
            evaluate_state(m, &replaced)
        })
        .collect();
    let mut coefficients: BTreeMap<u32, Complex64> =
        (0..=max_half).map(|k| (k, Complex64::default())).collect();
    // sequential accumulation keeps totals independent of the thread count
    for (mask, v) in masks.iter().zip(values) {
        *coefficients
            .get_mut(&mask.count_ones())
            .expect("order present") += v;
    }
    Ok(EpsExpansion { coefficients })
}

/// `|c₁ − ½ Σ_k φ(w with its k-th letter X_{t_k} replaced by σ_{t_k}(ξ))|`.
///
/// `conjugates` maps each generator in `w` to its conjugate variable at time 0.
pub fn verify_gradient_expansion(
    m: &ModelSpec,
    w: &Word,
    conjugates: &BTreeMap<GenId, NcPoly>,
) -> Result<f64> {
    let c1 = expand_state(m, w, 1)?.power(1);
    let letters = w.letters();
    let mut rhs = Complex64::default();
    for (k, l) in letters.iter().enumerate() {
        let xi = conjugates.get(&l.gen).ok_or_else(|| {
            Error::Domain(format!("no conjugate variable for generator {}", l.gen.0))
        })?;
        let left = NcPoly::from_word(Word(letters[..k].to_vec()));
        let right = NcPoly::from_word(Word(letters[k + 1..].to_vec()));
        let p = &(&left * &xi.modular_shift(l.time)) * &right;
        rhs += state_of_poly(m, &m.collapse_tracial(&p));
    }
    Ok((c1 - 0.5 * rhs).norm())
}

/// Expansion of `φ̂(X_ε σ_t(X_ε))` together with `φ(X σ_t(X))`.
pub fn two_point_expansion(
    m: &ModelSpec,
    gen: GenId,
    t: TimeTag,
) -> Result<(EpsExpansion, Complex64)> {
    let w = Word(vec![
        crate::algebra::Letter::x(gen, TimeTag::ZERO),
        crate::algebra::Letter::x(gen, t),
    ]);
    Ok((expand_state(m, &w, 1)?, evaluate_state(m, &w)))
}

/// Whether `φ̂(X_ε σ_t(X_ε)) = φ(X σ_t(X))·(1+ε)` holds coefficient by coefficient, exactly.
pub fn two_point_display_holds(m: &ModelSpec, gen: GenId, t: TimeTag) -> Result<bool> {
    let (exp, base) = two_point_expansion(m, gen, t)?;
    let zero = Complex64::default();
    Ok(exp.half_power(0) == base
        && exp.half_power(1) == zero
        && exp.half_power(2) == base
        && exp.max_half_power() == 2)
}
