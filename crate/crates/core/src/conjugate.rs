//! Galerkin solver for the conjugate variable and the quantities built from it.
//!
//! The conjugate variable `ξ = J_φ(X:B)` is the vector with
//! `⟨ξ, P⟩ = ⟨Y, ∂_X(P)⟩` for every `P ∈ B[X]`. Restricting both trial and test
//! vectors to a finite word basis turns this into the Hermitian system
//! `G c = b̄`, whose solution is the orthogonal projection of `ξ` onto the
//! span of the basis.
//!
//! Translate words are highly redundant in `L²` (an atomic measure with `k`
//! atoms gives a `k`-dimensional one-particle space), so the basis is first
//! reduced to a linearly independent subset in canonical order and the
//! spectral pseudo-inverse is applied to that subset only. This fixes a
//! unique coefficient vector for the projected `ξ`.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{GenId, Letter, NcPoly, TimeTag, Word};
use crate::derivation::{pair_with_y_at, partial};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_pinv_solve, independent_columns, PINV_CUTOFF};
use crate::model::ModelSpec;
use crate::moments::{gram_of_words, inner_product, l2_norm};

/// Absolute tolerance for the Cramér–Rao equality in normalized models.
pub const CRAMER_RAO_TOL: f64 = 1e-7;

/// Finite truncation of `B[X]`: all words of length ≤ `max_degree` in the
/// letters `X^g_t`, `g ∈ generators`, `t ∈ time_grid`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasisSpec {
    pub time_grid: Vec<TimeTag>,
    pub max_degree: usize,
    pub generators: Vec<GenId>,
    pub include_identity: bool,
}

impl BasisSpec {
    pub fn new(time_grid: Vec<TimeTag>, max_degree: usize, generators: Vec<GenId>) -> Self {
        BasisSpec {
            time_grid,
            max_degree,
            generators,
            include_identity: true,
        }
    }

    /// Grid `{-1, -1/2, 0, 1/2, 1}`.
    pub fn half_step_grid() -> Vec<TimeTag> {
        [-2, -1, 0, 1, 2]
            .iter()
            .map(|&k| TimeTag::new(k, 2))
            .collect()
    }

    pub fn shifted(&self, s: TimeTag) -> BasisSpec {
        BasisSpec {
            time_grid: self.time_grid.iter().map(|&t| t + s).collect(),
            ..self.clone()
        }
    }

    fn validate(&self, m: &ModelSpec, target: GenId, target_time: TimeTag) -> Result<()> {
        if self.max_degree == 0 {
            return Err(Error::Basis("max_degree must be at least 1".into()));
        }
        if self.time_grid.is_empty() {
            return Err(Error::Basis("time grid is empty".into()));
        }
        for &g in &self.generators {
            if g.0 as usize >= m.generators.len() {
                return Err(Error::Basis(format!("unknown generator index {}", g.0)));
            }
        }
        if !self.generators.contains(&target) {
            return Err(Error::Basis(
                "basis generators must include the target".into(),
            ));
        }
        if !m.gen(target).is_tracial() && !self.time_grid.contains(&target_time) {
            return Err(Error::Basis(format!(
                "time grid must contain the target time {target_time}"
            )));
        }
        Ok(())
    }

    /// Basis words in canonical order: identity, then by degree; letters of
    /// the target come first, and times closest to `center` come first.
    pub fn words(&self, m: &ModelSpec, target: GenId, center: TimeTag) -> Vec<Word> {
        let mut gens: Vec<GenId> = vec![target];
        for &g in &self.generators {
            if !gens.contains(&g) {
                gens.push(g);
            }
        }
        let mut times: Vec<TimeTag> = self.time_grid.clone();
        times.sort_by(|a, b| time_order(*a, *b, center));
        times.dedup();
        let letters: Vec<Letter> = gens
            .iter()
            .flat_map(|&g| times.iter().map(move |&t| Letter::x(g, t)))
            .collect();

        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        let mut push = |w: Word, out: &mut Vec<Word>| {
            let collapsed = collapse_word(m, &w);
            if seen.insert(collapsed.clone()) {
                out.push(collapsed);
            }
        };
        if self.include_identity {
            push(Word::empty(), &mut out);
        }
        let mut layer: Vec<Word> = vec![Word::empty()];
        for _ in 0..self.max_degree {
            let mut next = Vec::with_capacity(layer.len() * letters.len());
            for w in &layer {
                for &l in &letters {
                    let mut v = w.0.clone();
                    v.push(l);
                    next.push(Word(v));
                }
            }
            for w in &next {
                push(w.clone(), &mut out);
            }
            layer = next;
        }
        out
    }
}

fn time_order(a: TimeTag, b: TimeTag, center: TimeTag) -> Ordering {
    let da = (a - center).ratio();
    let db = (b - center).ratio();
    let (aa, ab) = (
        if da < 0.into() { -da } else { da },
        if db < 0.into() { -db } else { db },
    );
    aa.cmp(&ab).then(a.cmp(&b))
}

fn collapse_word(m: &ModelSpec, w: &Word) -> Word {
    Word(
        w.letters()
            .iter()
            .map(|&l| {
                if m.letter_is_tracial(l) {
                    Letter {
                        time: TimeTag::ZERO,
                        ..l
                    }
                } else {
                    l
                }
            })
            .collect(),
    )
}

/// Galerkin coefficients for `ξ ≈ J_φ(X:B)` with diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct ConjugateSolution {
    pub target: GenId,
    pub target_time: TimeTag,
    #[serde(skip)]
    pub basis: Vec<Word>,
    pub coefficients: Vec<Complex64>,
    /// Indices of the basis words retained by the independence reduction.
    pub independent: Vec<usize>,
    pub residual: f64,
    pub xi_norm_sq: f64,
    pub phi_star: f64,
    pub gram_condition: f64,
}

impl ConjugateSolution {
    pub fn xi(&self) -> NcPoly {
        NcPoly::from_terms(
            self.basis
                .iter()
                .zip(&self.coefficients)
                .map(|(w, c)| (*c, w.clone())),
        )
    }

    pub fn coefficient_of(&self, w: &Word) -> Complex64 {
        self.basis
            .iter()
            .position(|b| b == w)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coefficients[i])
    }
}

/// Galerkin projection over an explicit list of words.
///
/// The pairing vector is `Y^{target}_{target_time}`, so with `target_time = s`
/// this solves for `J_φ(σ_s(X):B)`.
pub fn project_conjugate(
    m: &ModelSpec,
    target: GenId,
    target_time: TimeTag,
    words: Vec<Word>,
) -> Result<ConjugateSolution> {
    if words.is_empty() {
        return Err(Error::Basis("empty basis".into()));
    }
    for w in &words {
        if let Some(&l) = w
            .letters()
            .iter()
            .find(|l| l.family != crate::algebra::Family::X)
        {
            return Err(Error::Family(l));
        }
    }
    let pairing: Vec<Complex64> = words
        .par_iter()
        .map(|w| {
            let d = partial(target, &NcPoly::from_word(w.clone()))?;
            Ok(pair_with_y_at(m, &d, target_time))
        })
        .collect::<Result<_>>()?;
    let rhs = DVector::from_iterator(words.len(), pairing.iter().map(|b| b.conj()));
    let g = gram_of_words(m, &words);

    let independent = independent_columns(&g, PINV_CUTOFF);
    if independent.is_empty() {
        return Err(Error::DegenerateGram);
    }
    let k = independent.len();
    let g_red = DMatrix::from_fn(k, k, |i, j| g[(independent[i], independent[j])]);
    let rhs_red = DVector::from_iterator(k, independent.iter().map(|&i| rhs[i]));
    let solved = hermitian_pinv_solve(&g_red, &rhs_red, PINV_CUTOFF)?;

    let mut coeffs = DVector::<Complex64>::zeros(words.len());
    for (slot, &i) in independent.iter().enumerate() {
        coeffs[i] = solved.solution[slot];
    }
    let gc = &g * &coeffs;
    let residual = (&gc - &rhs).norm();
    let xi_norm_sq = coeffs.dotc(&gc).re.max(0.0);
    let phi_star = xi_norm_sq / m.variance(target);

    Ok(ConjugateSolution {
        target,
        target_time,
        basis: words,
        coefficients: coeffs.iter().copied().collect(),
        independent,
        residual,
        xi_norm_sq,
        phi_star,
        gram_condition: solved.condition,
    })
}

/// `J_φ(X_target : B)` where `B` is generated by the other basis generators.
pub fn solve_conjugate(
    m: &ModelSpec,
    target: GenId,
    basis: &BasisSpec,
) -> Result<ConjugateSolution> {
    solve_conjugate_at(m, target, TimeTag::ZERO, basis)
}

/// `J_φ(σ_s(X_target) : B)`, paired against `Y_s`.
pub fn solve_conjugate_at(
    m: &ModelSpec,
    target: GenId,
    target_time: TimeTag,
    basis: &BasisSpec,
) -> Result<ConjugateSolution> {
    basis.validate(m, target, target_time)?;
    project_conjugate(m, target, target_time, basis.words(m, target, target_time))
}

/// `‖ξ − ξ*‖₂`.
pub fn self_adjoint_defect(m: &ModelSpec, sol: &ConjugateSolution) -> f64 {
    let xi = sol.xi();
    l2_norm(m, &(&xi - &xi.adjoint()))
}

/// `‖σ_s(ξ) − ξ′‖₂` where `ξ′` solves for the target letter `X_s` over the shifted grid.
pub fn modular_covariance_check(
    m: &ModelSpec,
    gen: GenId,
    s: TimeTag,
    basis: &BasisSpec,
) -> Result<f64> {
    let xi = solve_conjugate(m, gen, basis)?.xi();
    let xi_s = solve_conjugate_at(m, gen, s, &basis.shifted(s))?.xi();
    let diff = &m.collapse_tracial(&xi.modular_shift(s)) - &xi_s;
    Ok(l2_norm(m, &diff))
}

/// `Φ*_φ(X_1,…,X_n) = Σ_i Φ*_φ(X_i : others)` on a shared grid and degree.
pub fn fisher_multi(
    m: &ModelSpec,
    gens: &[GenId],
    time_grid: &[TimeTag],
    max_degree: usize,
) -> Result<f64> {
    if gens.is_empty() {
        return Err(Error::Basis("at least one generator is required".into()));
    }
    let basis = BasisSpec::new(time_grid.to_vec(), max_degree, gens.to_vec());
    let mut total = 0.0;
    for &g in gens {
        total += solve_conjugate(m, g, &basis)?.phi_star;
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct CramerRaoReport {
    pub n: usize,
    pub fisher: f64,
    pub second_moment: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub normalized: bool,
    /// `Some` only for normalized models, where the equality is asserted.
    pub passed: Option<bool>,
    pub note: String,
}

/// Compares `Φ*_φ · φ(Σ X_i²)²` against `n²`.
pub fn cramer_rao_audit(
    m: &ModelSpec,
    gens: &[GenId],
    time_grid: &[TimeTag],
    max_degree: usize,
) -> Result<CramerRaoReport> {
    let fisher = fisher_multi(m, gens, time_grid, max_degree)?;
    let n = gens.len();
    let second_moment: f64 = gens.iter().map(|&g| m.variance(g)).sum();
    let lhs = fisher * second_moment * second_moment;
    let rhs = (n * n) as f64;
    let normalized = gens
        .iter()
        .all(|&g| (m.variance(g) - 1.0).abs() <= m.tolerance);
    let passed = normalized.then(|| (lhs - rhs).abs() <= CRAMER_RAO_TOL);
    let note = if normalized {
        "equality asserted for unit-variance generators".to_string()
    } else {
        "normalization audit: variance differs from 1, reported without assertion".to_string()
    };
    Ok(CramerRaoReport {
        n,
        fisher,
        second_moment,
        lhs,
        rhs,
        ratio: lhs / rhs,
        normalized,
        passed,
        note,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiStarReport {
    pub n: usize,
    pub value: f64,
    pub quadrature: f64,
    pub tail: f64,
    /// Richardson estimate `|Q_h − Q_{2h}| / 3` when the grid allows it.
    pub error_estimate: Option<f64>,
    pub integrand: Vec<(f64, f64)>,
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// `½ ∫₀^∞ (n/(1+t) − Φ*_φ(X_1^t,…,X_n^t)) dt` by trapezoid quadrature.
///
/// `X_i^t = X_i + √t·Y_i` has two-point function `(1+t)·η_i`, so it is
/// evaluated as the same generator in the model scaled by `1+t`. Grid points
/// beyond `tail_cutoff` are ignored. The tail beyond the last retained point
/// `T` assumes the integrand decays like `C/(1+t)²`, which gives
/// `g(T)·(1+T)`.
pub fn chi_star(
    m: &ModelSpec,
    gens: &[GenId],
    eps_grid: &[f64],
    tail_cutoff: f64,
    time_grid: &[TimeTag],
    max_degree: usize,
) -> Result<ChiStarReport> {
    if eps_grid.first() != Some(&0.0) {
        return Err(Error::Grid("grid must start at 0".into()));
    }
    if eps_grid.windows(2).any(|w| !(w[1] > w[0])) || eps_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Grid(
            "grid must be strictly increasing and finite".into(),
        ));
    }
    if !(tail_cutoff >= 0.0) {
        return Err(Error::Grid("tail cutoff must be non-negative".into()));
    }
    let n = gens.len();
    if n == 0 {
        return Ok(ChiStarReport {
            n,
            value: 0.0,
            quadrature: 0.0,
            tail: 0.0,
            error_estimate: Some(0.0),
            integrand: Vec::new(),
        });
    }
    let kept: Vec<f64> = eps_grid
        .iter()
        .copied()
        .filter(|&t| t <= tail_cutoff)
        .collect();
    let integrand: Vec<(f64, f64)> = kept
        .iter()
        .map(|&t| {
            let scaled = m.scaled(1.0 + t)?;
            let fisher = fisher_multi(&scaled, gens, time_grid, max_degree)?;
            Ok((t, 0.5 * (n as f64 / (1.0 + t) - fisher)))
        })
        .collect::<Result<_>>()?;
    let quadrature = trapezoid(&integrand);
    let &(t_last, g_last) = integrand.last().expect("grid starts at 0");
    let tail = g_last * (1.0 + t_last);
    let error_estimate = (integrand.len() >= 3 && integrand.len() % 2 == 1).then(|| {
        let coarse: Vec<(f64, f64)> = integrand.iter().copied().step_by(2).collect();
        (quadrature - trapezoid(&coarse)).abs() / 3.0
    });
    Ok(ChiStarReport {
        n,
        value: quadrature + tail,
        quadrature,
        tail,
        error_estimate,
        integrand,
    })
}

/// `‖p − q‖₂` in the model.
pub fn l2_distance(m: &ModelSpec, p: &NcPoly, q: &NcPoly) -> f64 {
    l2_norm(m, &(p - q))
}

/// `⟨ξ, P⟩` against the defining pairing for one test word, for diagnostics.
pub fn defining_defect(m: &ModelSpec, sol: &ConjugateSolution, p: &Word) -> Result<f64> {
    let pw = NcPoly::from_word(p.clone());
    let lhs = inner_product(m, &sol.xi(), &pw);
    let rhs = pair_with_y_at(m, &partial(sol.target, &pw)?, sol.target_time);
    Ok((lhs - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{two_atom_generator, GeneratorSpec, SpectralAtom};

    const G: GenId = GenId(0);

    fn grid3() -> Vec<TimeTag> {
        vec![TimeTag::int(-1), TimeTag::ZERO, TimeTag::int(1)]
    }

    fn x0() -> Word {
        Word(vec![Letter::x(G, TimeTag::ZERO)])
    }

    fn assert_indicator(sol: &ConjugateSolution, tol: f64) {
        for (w, c) in sol.basis.iter().zip(&sol.coefficients) {
            let expected = if *w == x0() { 1.0 } else { 0.0 };
            assert!(
                (c - Complex64::new(expected, 0.0)).norm() < tol,
                "word {w}: {c}"
            );
        }
    }

    #[test]
    fn basis_word_counts() {
        let m = ModelSpec::two_atom();
        let b = BasisSpec::new(grid3(), 3, vec![G]);
        let words = b.words(&m, G, TimeTag::ZERO);
        assert_eq!(words.len(), 1 + 3 + 9 + 27);
        assert_eq!(words[0], Word::empty());
        assert_eq!(words[1], x0());
        let tr = ModelSpec::tracial(1.0);
        assert_eq!(b.words(&tr, G, TimeTag::ZERO).len(), 4);
    }

    #[test]
    fn basis_validation() {
        let m = ModelSpec::two_atom();
        let no_zero = BasisSpec::new(vec![TimeTag::int(1)], 2, vec![G]);
        assert!(solve_conjugate(&m, G, &no_zero).is_err());
        let deg0 = BasisSpec::new(grid3(), 0, vec![G]);
        assert!(solve_conjugate(&m, G, &deg0).is_err());
        let no_target = BasisSpec::new(grid3(), 1, vec![]);
        assert!(solve_conjugate(&m, G, &no_target).is_err());
    }

    #[test]
    fn two_atom_solution_is_x0() {
        let m = ModelSpec::two_atom();
        let sol = solve_conjugate(&m, G, &BasisSpec::new(grid3(), 3, vec![G])).unwrap();
        assert_indicator(&sol, 1e-8);
        assert!(sol.residual < 1e-8);
        assert!((sol.phi_star - 1.0).abs() < 1e-9);
        assert!((sol.xi_norm_sq - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tracial_solution_is_x0() {
        let m = ModelSpec::tracial(1.0);
        let sol = solve_conjugate(&m, G, &BasisSpec::new(grid3(), 3, vec![G])).unwrap();
        assert_indicator(&sol, 1e-10);
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn scaled_generator_keeps_unit_phi_star() {
        let lambda_sq = 2.25;
        let m = ModelSpec::new(vec![two_atom_generator("X", lambda_sq)]).unwrap();
        let sol = solve_conjugate(&m, G, &BasisSpec::new(grid3(), 2, vec![G])).unwrap();
        assert_indicator(&sol, 1e-8);
        assert!((sol.xi_norm_sq - lambda_sq).abs() < 1e-9);
        assert!((sol.phi_star - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_basis() {
        let m = ModelSpec::two_atom();
        // X₀X₀X₀ alone is fine, but an empty list is rejected
        assert!(project_conjugate(&m, G, TimeTag::ZERO, vec![]).is_err());
    }

    #[test]
    fn fisher_one_and_two_generators() {
        let m = ModelSpec::new(vec![
            two_atom_generator("X1", 1.0),
            two_atom_generator("X2", 1.0),
        ])
        .unwrap();
        let f1 = fisher_multi(&m, &[G], &grid3(), 2).unwrap();
        assert!((f1 - 1.0).abs() < 1e-9);
        let f2 = fisher_multi(&m, &[G, GenId(1)], &grid3(), 2).unwrap();
        assert!((f2 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn cramer_rao_single_and_scaled() {
        let m = ModelSpec::two_atom();
        let r = cramer_rao_audit(&m, &[G], &grid3(), 2).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-9 && r.rhs == 1.0);
        assert_eq!(r.passed, Some(true));
        let m4 = ModelSpec::new(vec![GeneratorSpec::new(
            "X",
            vec![SpectralAtom { x: 0.0, w: 4.0 }],
        )])
        .unwrap();
        let r = cramer_rao_audit(&m4, &[G], &grid3(), 2).unwrap();
        assert!((r.ratio - 16.0).abs() < 1e-9);
        assert!(!r.normalized);
        assert_eq!(r.passed, None);
    }

    #[test]
    fn covariance_zero_and_half_shift() {
        let m = ModelSpec::two_atom();
        let b = BasisSpec::new(grid3(), 2, vec![G]);
        assert!(modular_covariance_check(&m, G, TimeTag::ZERO, &b).unwrap() < 1e-12);
        assert!(modular_covariance_check(&m, G, TimeTag::new(1, 2), &b).unwrap() < 1e-8);
    }

    #[test]
    fn chi_star_grid_errors_and_empty_family() {
        let m = ModelSpec::two_atom();
        let tg = vec![TimeTag::ZERO];
        assert!(matches!(
            chi_star(&m, &[G], &[0.5, 1.0], 2.0, &tg, 1),
            Err(Error::Grid(_))
        ));
        assert!(matches!(
            chi_star(&m, &[G], &[0.0, 1.0, 0.5], 2.0, &tg, 1),
            Err(Error::Grid(_))
        ));
        let r = chi_star(&m, &[], &[0.0, 1.0], 1.0, &tg, 1).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn chi_star_integrand_uses_scale_invariant_fisher() {
        let m = ModelSpec::two_atom();
        let grid: Vec<f64> = (0..=4).map(|k| k as f64 * 0.5).collect();
        let r = chi_star(&m, &[G], &grid, 2.0, &[TimeTag::ZERO], 1).unwrap();
        for &(t, g) in &r.integrand {
            assert!((g - 0.5 * (1.0 / (1.0 + t) - 1.0)).abs() < 1e-9);
        }
        assert!(r.error_estimate.is_some());
    }

    #[test]
    fn chi_star_refinement_halves_error_estimate() {
        let m = ModelSpec::two_atom();
        let tg = vec![TimeTag::ZERO];
        let grid = |h: f64| {
            (0..=(2.0 / h) as usize)
                .map(|k| k as f64 * h)
                .collect::<Vec<_>>()
        };
        let coarse = chi_star(&m, &[G], &grid(0.5), 2.0, &tg, 1)
            .unwrap()
            .error_estimate
            .unwrap();
        let fine = chi_star(&m, &[G], &grid(0.25), 2.0, &tg, 1)
            .unwrap()
            .error_estimate
            .unwrap();
        assert!(coarse > 0.0);
        assert!(fine <= 0.5 * coarse, "fine {fine:e} vs coarse {coarse:e}");
    }

    #[test]
    fn self_adjointness_of_solution() {
        let m = ModelSpec::two_atom();
        let sol = solve_conjugate(
            &m,
            G,
            &BasisSpec::new(BasisSpec::half_step_grid(), 2, vec![G]),
        )
        .unwrap();
        assert!(self_adjoint_defect(&m, &sol) < 1e-8);
    }
}
