//! Small dense Hermitian solvers used by the Galerkin step.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative spectral cutoff for the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Greedy column selection in the given order: index `i` is kept when its
/// squared distance to the span of the columns kept so far exceeds
/// `rel_tol · G[i][i]`. Returns indices into `g`.
pub fn independent_columns(g: &DMatrix<Complex64>, rel_tol: f64) -> Vec<usize> {
    let n = g.nrows();
    let mut kept: Vec<usize> = Vec::new();
    // rows of the Cholesky factor of G[kept, kept], row-major lower-triangular
    let mut chol: Vec<Vec<Complex64>> = Vec::new();
    for i in 0..n {
        let diag = g[(i, i)].re;
        if diag <= 0.0 {
            continue;
        }
        let mut row = Vec::with_capacity(kept.len() + 1);
        for (a, &ka) in kept.iter().enumerate() {
            let mut s = g[(ka, i)];
            for b in 0..a {
                s -= chol[a][b] * row[b];
            }
            row.push(s / chol[a][a]);
        }
        let resid = diag - row.iter().map(|v: &Complex64| v.norm_sqr()).sum::<f64>();
        if resid > rel_tol * diag {
            // row holds conj(L[i][..]); store L[i][..] itself
            let mut lrow: Vec<Complex64> = row.iter().map(|v| v.conj()).collect();
            lrow.push(Complex64::new(resid.sqrt(), 0.0));
            chol.push(lrow);
            kept.push(i);
        }
    }
    kept
}

#[derive(Clone, Debug)]
pub struct PinvSolve {
    pub solution: DVector<Complex64>,
    pub kept: usize,
    pub condition: f64,
}

/// Minimum-norm least-squares solution of `G x = b` for Hermitian `G`,
/// dropping eigenvalues below `cutoff · max |λ|`.
pub fn hermitian_pinv_solve(
    g: &DMatrix<Complex64>,
    b: &DVector<Complex64>,
    cutoff: f64,
) -> Result<PinvSolve> {
    if g.nrows() == 0 {
        return Err(Error::DegenerateGram);
    }
    let eig = g.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if !(max > 0.0) {
        return Err(Error::DegenerateGram);
    }
    let mut x = DVector::zeros(g.nrows());
    let mut kept = 0;
    let mut min_kept = f64::INFINITY;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() < cutoff * max {
            continue;
        }
        kept += 1;
        min_kept = min_kept.min(lambda.abs());
        let v = eig.eigenvectors.column(k);
        let coeff = v.dotc(b) / Complex64::new(lambda, 0.0);
        x += v * coeff;
    }
    if kept == 0 {
        return Err(Error::DegenerateGram);
    }
    Ok(PinvSolve {
        solution: x,
        kept,
        condition: max / min_kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn selects_independent_prefix() {
        // columns: e1, 2·e1, e2, e1+e2
        let vecs = [
            [c(1.0), c(0.0)],
            [c(2.0), c(0.0)],
            [c(0.0), c(1.0)],
            [c(1.0), c(1.0)],
        ];
        let g = DMatrix::from_fn(4, 4, |i, j| {
            vecs[i][0].conj() * vecs[j][0] + vecs[i][1].conj() * vecs[j][1]
        });
        assert_eq!(independent_columns(&g, 1e-10), vec![0, 2]);
    }

    #[test]
    fn complex_gram_selection() {
        let i = Complex64::i();
        let vecs = [[c(1.0), i], [i, c(1.0)], [c(1.0) + i, c(1.0) + i]];
        let g = DMatrix::from_fn(3, 3, |a, b| {
            vecs[a][0].conj() * vecs[b][0] + vecs[a][1].conj() * vecs[b][1]
        });
        assert_eq!(independent_columns(&g, 1e-10), vec![0, 1]);
    }

    #[test]
    fn pinv_recovers_solution() {
        let g = DMatrix::from_row_slice(
            2,
            2,
            &[
                c(2.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(0.0, -1.0),
                c(2.0),
            ],
        );
        let x = DVector::from_vec(vec![c(1.0), Complex64::new(0.5, -0.25)]);
        let b = &g * &x;
        let s = hermitian_pinv_solve(&g, &b, PINV_CUTOFF).unwrap();
        assert!((s.solution - x).norm() < 1e-14);
        assert_eq!(s.kept, 2);
        assert!((s.condition - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pinv_drops_null_space() {
        let g = DMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(1.0), c(1.0)]);
        let b = DVector::from_vec(vec![c(2.0), c(2.0)]);
        let s = hermitian_pinv_solve(&g, &b, PINV_CUTOFF).unwrap();
        assert_eq!(s.kept, 1);
        assert!((s.solution[0] - c(1.0)).norm() < 1e-14);
        assert!((s.solution[1] - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let g = DMatrix::<Complex64>::zeros(3, 3);
        let b = DVector::zeros(3);
        assert!(matches!(
            hermitian_pinv_solve(&g, &b, PINV_CUTOFF),
            Err(Error::DegenerateGram)
        ));
    }
}
