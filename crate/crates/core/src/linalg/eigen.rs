use nalgebra::{Schur, SymmetricEigen};

use crate::{Error, Matrix, Result};

/// A matrix counts as Hurwitz only if its spectral abscissa is below `-STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

const SYM_TOL: f64 = 1e-10;

fn max_sweeps(n: usize) -> usize {
    200 * n.max(4)
}

/// Largest real part over the eigenvalues of `a`.
///
/// Falls back to a diagonally balanced copy when the Schur iteration stalls.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteValue("matrix entry"));
    }
    if a.nrows() == 1 {
        return Ok(a[(0, 0)]);
    }
    abscissa_schur(a.clone()).or_else(|_| abscissa_schur(balance(a)))
}

fn abscissa_schur(a: Matrix) -> Result<f64> {
    let n = a.nrows();
    let schur = Schur::try_new(a, f64::EPSILON, max_sweeps(n)).ok_or(Error::EigenFailure)?;
    let eig = schur.complex_eigenvalues();
    eig.iter().map(|z| z.re).reduce(f64::max).filter(|v| v.is_finite()).ok_or(Error::EigenFailure)
}

/// Similarity transform `D⁻¹ A D` with power-of-two diagonal `D` equalizing
/// row and column norms (Parlett–Reinsch). Eigenvalues are unchanged.
pub fn balance(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut b = a.clone();
    let radix = 2.0_f64;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut c2, mut r2) = (c, r);
            while c2 < r2 / radix {
                c2 *= radix;
                r2 /= radix;
                f *= radix;
            }
            while c2 >= r2 * radix {
                c2 /= radix;
                r2 *= radix;
                f /= radix;
            }
            if (c2 + r2) < 0.95 * s {
                converged = false;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    b
}

/// Full eigendecomposition of a symmetric matrix: eigenvalues ascending and
/// the matching orthonormal eigenvectors as columns.
pub fn dense_sym_eig(h: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = h.nrows();
    if n != h.ncols() || n == 0 {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", h.nrows(), h.ncols())));
    }
    if !h.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteValue("matrix entry"));
    }
    let asym = (h - h.transpose()).norm();
    if asym > SYM_TOL * (1.0 + h.norm()) {
        return Err(Error::InvalidProblem(format!("matrix is not symmetric (asymmetry {asym:e})")));
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, max_sweeps(n)).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eig(h: &Matrix) -> Result<f64> {
    Ok(dense_sym_eig(h)?.0[0])
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_max_eig(h: &Matrix) -> Result<f64> {
    let (vals, _) = dense_sym_eig(h)?;
    Ok(vals[vals.len() - 1])
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}
