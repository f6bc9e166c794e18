//! States on words via the non-crossing pair-partition (free Wick) formula.
//!
//! `φ(ℓ₁⋯ℓₙ) = Σ_{π ∈ NC₂(n)} Π_{(i<j)∈π} K(ℓᵢ, ℓⱼ)` where the covariance kernel
//! pairs letters of the same family and generator with `η(t_j − t_i)`. The
//! X–Y cross kernel vanishes, which realizes freeness of the `Y` copy.
//!
//! Evaluation uses the first-letter recursion over contiguous intervals, so a
//! word of length `n` costs `O(n³)` kernel products.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{Letter, NcPoly, Word};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Largest word the brute-force oracle accepts.
pub const ORACLE_MAX_LEN: usize = 12;

/// Value of a state on a word, with the number of contributing partitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StateValue {
    pub value: Complex64,
    pub partition_count: u64,
}

fn kernel_entry(m: &ModelSpec, a: Letter, b: Letter, offset: Complex64) -> Complex64 {
    if a.family != b.family || a.gen != b.gen {
        return Complex64::zero();
    }
    let dt = (b.time - a.time).to_f64();
    m.eta(a.gen, Complex64::new(dt, 0.0) + offset)
}

/// Dense kernel; `offsets[i]` is an extra complex time added to letter `i`.
fn kernel_matrix(
    m: &ModelSpec,
    letters: &[Letter],
    offsets: Option<&[Complex64]>,
) -> Vec<Complex64> {
    let n = letters.len();
    let mut k = vec![Complex64::zero(); n * n];
    for i in 0..n {
        for j in (i + 1..n).step_by(2) {
            let off = offsets.map_or(Complex64::zero(), |o| o[j] - o[i]);
            k[i * n + j] = kernel_entry(m, letters[i], letters[j], off);
        }
    }
    k
}

/// Interval recursion `φ[i,j) = Σ_k K(i,k)·φ[i+1,k)·φ[k+1,j)`.
fn wick_interval_sum<T>(n: usize, entry: impl Fn(usize, usize) -> T) -> T
where
    T: Copy + Zero + One + std::ops::Mul<Output = T> + std::ops::AddAssign,
{
    if n % 2 == 1 {
        return T::zero();
    }
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut dp = vec![T::zero(); (n + 1) * (n + 1)];
    for i in 0..=n {
        dp[idx(i, i)] = T::one();
    }
    for len in (2..=n).step_by(2) {
        for i in 0..=n - len {
            let j = i + len;
            let mut acc = T::zero();
            for k in (i + 1..j).step_by(2) {
                let inner = dp[idx(i + 1, k)];
                let outer = dp[idx(k + 1, j)];
                acc += entry(i, k) * inner * outer;
            }
            dp[idx(i, j)] = acc;
        }
    }
    dp[idx(0, n)]
}

fn check_letters(m: &ModelSpec, w: &Word) {
    debug_assert!(w.letters().iter().all(|&l| m.check_letter(l).is_ok()));
}

pub fn evaluate_state(m: &ModelSpec, w: &Word) -> Complex64 {
    check_letters(m, w);
    let n = w.len();
    if n % 2 == 1 {
        return Complex64::zero();
    }
    let k = kernel_matrix(m, w.letters(), None);
    wick_interval_sum(n, |i, j| k[i * n + j])
}

pub fn state_value(m: &ModelSpec, w: &Word) -> StateValue {
    let letters = w.letters();
    let n = letters.len();
    let partition_count = wick_interval_sum(n, |i, j| {
        u64::from(letters[i].family == letters[j].family && letters[i].gen == letters[j].gen)
    });
    StateValue {
        value: evaluate_state(m, w),
        partition_count,
    }
}

/// `φ(a·σ_z(b))` where `b` is the block of `w` at `block_positions`.
///
/// The block must be a contiguous prefix or suffix. For real `z` this equals
/// [`evaluate_state`] on the shifted word; for `z = t + i` it is the KMS
/// boundary value.
pub fn evaluate_state_shifted(
    m: &ModelSpec,
    w: &Word,
    block_positions: &[usize],
    z: Complex64,
) -> Result<Complex64> {
    check_letters(m, w);
    let n = w.len();
    let mut positions = block_positions.to_vec();
    positions.sort_unstable();
    positions.dedup();
    if positions.iter().any(|&p| p >= n) {
        return Err(Error::Block);
    }
    if let (Some(&first), Some(&last)) = (positions.first(), positions.last()) {
        let contiguous = last - first + 1 == positions.len();
        if !contiguous || (first != 0 && last != n - 1) {
            return Err(Error::Block);
        }
    }
    if n % 2 == 1 {
        return Ok(Complex64::zero());
    }
    let mut offsets = vec![Complex64::zero(); n];
    for &p in &positions {
        offsets[p] = z;
    }
    let k = kernel_matrix(m, w.letters(), Some(&offsets));
    Ok(wick_interval_sum(n, |i, j| k[i * n + j]))
}

/// `⟨p, q⟩ = φ(p* q)`.
pub fn inner_product(m: &ModelSpec, p: &NcPoly, q: &NcPoly) -> Complex64 {
    let mut acc = Complex64::zero();
    for (wp, cp) in p.terms() {
        let wp_adj = wp.adjoint();
        for (wq, cq) in q.terms() {
            acc += cp.conj() * cq * evaluate_state(m, &wp_adj.concat(wq));
        }
    }
    acc
}

pub fn state_of_poly(m: &ModelSpec, p: &NcPoly) -> Complex64 {
    p.terms().map(|(w, c)| c * evaluate_state(m, w)).sum()
}

/// `‖p‖₂ = φ(p*p)^{1/2}`.
pub fn l2_norm(m: &ModelSpec, p: &NcPoly) -> f64 {
    inner_product(m, p, p).re.max(0.0).sqrt()
}

/// Gram matrix of words, `G[i][j] = φ(w_i* w_j)`, assembled in parallel.
pub fn gram_of_words(m: &ModelSpec, words: &[Word]) -> DMatrix<Complex64> {
    let n = words.len();
    let adjoints: Vec<Word> = words.iter().map(Word::adjoint).collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|j| evaluate_state(m, &adjoints[i].concat(&words[j])))
                .collect()
        })
        .collect();
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            if i == j {
                g[(i, i)] = Complex64::new(v.re, 0.0);
            } else {
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
    }
    g
}

pub fn gram_matrix(m: &ModelSpec, basis: &[NcPoly]) -> DMatrix<Complex64> {
    let n = basis.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = inner_product(m, &basis[i], &basis[j]);
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
        g[(i, i)].im = 0.0;
    }
    g
}

// ---------------------------------------------------------------------------
// Brute-force oracle

/// All perfect matchings of `{0..n}`, each as a list of pairs `(i, j)` with `i < j`.
pub fn all_pair_partitions(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        free: &mut Vec<usize>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if free.is_empty() {
            out.push(cur.clone());
            return;
        }
        let first = free.remove(0);
        for idx in 0..free.len() {
            let partner = free.remove(idx);
            cur.push((first, partner));
            rec(free, cur, out);
            cur.pop();
            free.insert(idx, partner);
        }
        free.insert(0, first);
    }
    let mut out = Vec::new();
    if n % 2 == 0 {
        rec(&mut (0..n).collect(), &mut Vec::new(), &mut out);
    }
    out
}

/// Two chords cross iff their endpoints interleave: `a < c < b < d`.
pub fn chords_cross((a, b): (usize, usize), (c, d): (usize, usize)) -> bool {
    (a < c && c < b && b < d) || (c < a && a < d && d < b)
}

pub fn is_noncrossing(partition: &[(usize, usize)]) -> bool {
    partition
        .iter()
        .enumerate()
        .all(|(i, &p)| partition[i + 1..].iter().all(|&q| !chords_cross(p, q)))
}

/// Explicit enumeration of every pair partition, filtered by the crossing predicate.
pub fn brute_force_oracle(m: &ModelSpec, w: &Word) -> Result<Complex64> {
    let n = w.len();
    if n > ORACLE_MAX_LEN {
        return Err(Error::SizeLimit {
            len: n,
            limit: ORACLE_MAX_LEN,
        });
    }
    let letters = w.letters();
    let mut total = Complex64::zero();
    for partition in all_pair_partitions(n) {
        if !is_noncrossing(&partition) {
            continue;
        }
        let mut prod = Complex64::one();
        for &(i, j) in &partition {
            let (a, b) = (letters[i], letters[j]);
            if a.family != b.family || a.gen != b.gen {
                prod = Complex64::zero();
                break;
            }
            prod *= m.eta_real(a.gen, (b.time - a.time).to_f64());
        }
        total += prod;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{GenId, TimeTag};

    fn x(t: i64) -> Letter {
        Letter::x(GenId(0), TimeTag::int(t))
    }

    fn y(t: i64) -> Letter {
        Letter::y(GenId(0), TimeTag::int(t))
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn empty_word_is_one() {
        assert_eq!(
            evaluate_state(&ModelSpec::two_atom(), &Word::empty()),
            Complex64::one()
        );
    }

    #[test]
    fn alternating_four_letter_word() {
        let m = ModelSpec::two_atom();
        let e1 = m.eta_real(GenId(0), 1.0);
        let w = Word(vec![x(0), x(1), x(0), x(1)]);
        let expected = e1 * e1 + e1.norm_sqr();
        assert!(close(evaluate_state(&m, &w), expected, 1e-14));
        assert!(close(brute_force_oracle(&m, &w).unwrap(), expected, 1e-14));
    }

    #[test]
    fn mixed_family_word() {
        let m = ModelSpec::two_atom();
        let w = Word(vec![y(0), x(0), x(0), y(1)]);
        let expected = m.eta_real(GenId(0), 1.0) * m.eta_real(GenId(0), 0.0);
        assert!(close(evaluate_state(&m, &w), expected, 1e-14));
        assert_eq!(state_value(&m, &w).partition_count, 1);
    }

    #[test]
    fn catalan_moments_tracial() {
        let m = ModelSpec::tracial(1.0);
        let catalan = [1.0, 1.0, 2.0, 5.0, 14.0, 42.0];
        for (k, c) in catalan.iter().enumerate() {
            let w = Word(vec![x(0); 2 * k]);
            assert_eq!(evaluate_state(&m, &w), Complex64::new(*c, 0.0));
        }
        let w8 = Word(vec![x(0); 8]);
        assert_eq!(
            brute_force_oracle(&m, &w8).unwrap(),
            Complex64::new(14.0, 0.0)
        );
    }

    #[test]
    fn noncrossing_count_n4() {
        let nc = all_pair_partitions(4)
            .into_iter()
            .filter(|p| is_noncrossing(p))
            .count();
        assert_eq!(nc, 2);
        assert_eq!(all_pair_partitions(4).len(), 3);
        assert_eq!(all_pair_partitions(6).len(), 15);
    }

    #[test]
    fn oracle_size_limit() {
        let m = ModelSpec::tracial(1.0);
        let w = Word(vec![x(0); 14]);
        assert!(matches!(
            brute_force_oracle(&m, &w),
            Err(Error::SizeLimit { .. })
        ));
    }

    #[test]
    fn odd_words_vanish() {
        let m = ModelSpec::two_atom();
        assert_eq!(
            evaluate_state(&m, &Word(vec![x(0), x(1), x(2)])),
            Complex64::zero()
        );
    }

    #[test]
    fn shifted_two_letter_is_eta() {
        let m = ModelSpec::two_atom();
        let w = Word(vec![x(0), x(0)]);
        for t in [-1.0, 0.25, 2.0] {
            let v = evaluate_state_shifted(&m, &w, &[1], Complex64::new(t, 0.0)).unwrap();
            assert!(close(v, m.eta_real(GenId(0), t), 1e-14));
        }
        let zero = evaluate_state_shifted(&m, &w, &[1], Complex64::zero()).unwrap();
        assert_eq!(zero, evaluate_state(&m, &w));
    }

    #[test]
    fn shifted_kms_two_letter() {
        let m = ModelSpec::two_atom();
        let w = Word(vec![x(0), x(0)]);
        for k in 0..20 {
            let t = -2.0 + 0.2 * k as f64;
            let f = evaluate_state_shifted(&m, &w, &[1], Complex64::new(t, 1.0)).unwrap();
            // φ(σ_t(X₀) X₀) = η(−t)
            assert!(close(f, m.eta_real(GenId(0), -t), 1e-9));
        }
    }

    #[test]
    fn shifted_rejects_interior_block() {
        let m = ModelSpec::two_atom();
        let w = Word(vec![x(0), x(1), x(2), x(3)]);
        assert!(evaluate_state_shifted(&m, &w, &[1, 2], Complex64::zero()).is_err());
        assert!(evaluate_state_shifted(&m, &w, &[0, 2], Complex64::zero()).is_err());
        assert!(evaluate_state_shifted(&m, &w, &[0, 1], Complex64::zero()).is_ok());
    }

    #[test]
    fn inner_product_examples() {
        let m = ModelSpec::two_atom();
        let p0 = NcPoly::letter(x(0));
        let p1 = NcPoly::letter(x(1));
        assert!(close(
            inner_product(&m, &p0, &p0),
            m.eta_real(GenId(0), 0.0),
            1e-15
        ));
        assert!(close(
            inner_product(&m, &p0, &p1),
            m.eta_real(GenId(0), 1.0),
            1e-15
        ));
        let g = gram_matrix(&m, &[p0.clone(), p1.clone(), &p0 * &p1]);
        assert!(close(g[(0, 1)], m.eta_real(GenId(0), 1.0), 1e-15));
        assert_eq!(g[(1, 0)], g[(0, 1)].conj());
        let gw = gram_of_words(
            &m,
            &[Word(vec![x(0)]), Word(vec![x(1)]), Word(vec![x(0), x(1)])],
        );
        assert!((&g - &gw).norm() < 1e-14);
    }
}
