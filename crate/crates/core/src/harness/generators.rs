use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{spectral_abscissa, STABILITY_MARGIN};
use crate::{Error, LqrProblem, Matrix, Result};

/// Jitter added to `Q₁Q₁ᵀ` and `R₁R₁ᵀ` to make them strictly positive definite.
pub const WEIGHT_JITTER: f64 = 1e-9;
pub const MAX_GENERATION_ATTEMPTS: usize = 100;

/// Uniform draw on `[0, 1)` from the top 53 bits of a 64-bit output.
pub fn uniform01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn uniform_matrix(rng: &mut impl RngCore, rows: usize, cols: usize) -> Matrix {
    // row-major fill so the draw order does not depend on the storage layout
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = uniform01(rng);
        }
    }
    m
}

fn shift_matrix(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

fn last_basis(n: usize) -> Matrix {
    Matrix::from_fn(n, 1, |i, _| if i + 1 == n { 1.0 } else { 0.0 })
}

/// n-fold integrator `ẋ_i = x_{i+1}`, `ẋ_n = u` with `Q = Σ = I`, `R = 1`, `C = I`.
pub fn gen_integrator_chain(n: usize) -> Result<LqrProblem> {
    if n == 0 {
        return Err(Error::Dimension("chain length must be positive".into()));
    }
    Ok(LqrProblem::state_feedback(shift_matrix(n), last_basis(n), Matrix::identity(n, n), Matrix::identity(1, 1), Matrix::identity(n, n))?
        .with_meta("generator", "integrator_chain")
        .with_meta("n", n))
}

/// Integrator chain shifted by `−I` and observed through its first state only.
pub fn gen_olqr_chain(n: usize) -> Result<LqrProblem> {
    if n == 0 {
        return Err(Error::Dimension("chain length must be positive".into()));
    }
    let a = shift_matrix(n) - Matrix::identity(n, n);
    let c = Matrix::from_fn(1, n, |_, j| if j == 0 { 1.0 } else { 0.0 });
    Ok(LqrProblem::new(a, last_basis(n), c, Matrix::identity(n, n), Matrix::identity(1, 1), Matrix::identity(n, n))?
        .with_meta("generator", "olqr_chain")
        .with_meta("n", n))
}

/// `A = U/n − I`, `B = 1 + U′/2`, `Q = Q₁Q₁ᵀ`, `R = R₁R₁ᵀ` (plus jitter), `Σ = I`, `C = I`.
///
/// Draws come from `ChaCha8Rng::seed_from_u64(seed + attempt)` in the order
/// `U, U′, Q₁, R₁`, each matrix row by row. A non-Hurwitz `A` triggers a new
/// attempt.
pub fn gen_random_medium(n: usize, m: usize, seed: u64) -> Result<LqrProblem> {
    if n == 0 || m == 0 {
        return Err(Error::Dimension("n and m must be positive".into()));
    }
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let a = uniform_matrix(&mut rng, n, n) / n as f64 - Matrix::identity(n, n);
        let b = Matrix::from_element(n, m, 1.0) + uniform_matrix(&mut rng, n, m) * 0.5;
        let q1 = uniform_matrix(&mut rng, n, n);
        let r1 = uniform_matrix(&mut rng, m, m);
        if !matches!(spectral_abscissa(&a), Ok(s) if s < -STABILITY_MARGIN) {
            continue;
        }
        let q = &q1 * q1.transpose() + Matrix::identity(n, n) * WEIGHT_JITTER;
        let r = &r1 * r1.transpose() + Matrix::identity(m, m) * WEIGHT_JITTER;
        let q = (&q + q.transpose()) * 0.5;
        let r = (&r + r.transpose()) * 0.5;
        match LqrProblem::state_feedback(a, b, q, r, Matrix::identity(n, n)) {
            Ok(p) => {
                return Ok(p
                    .with_meta("generator", "random_medium")
                    .with_meta("n", n)
                    .with_meta("m", m)
                    .with_meta("seed", seed)
                    .with_meta("attempts", attempt + 1)
                    .with_meta("jitter", WEIGHT_JITTER))
            }
            Err(Error::InvalidProblem(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_GENERATION_ATTEMPTS })
}

/// Random instance with Hurwitz `A` (so `K = 0` stabilizes), well-conditioned
/// weights and, when `outputs` is `None`, `C = I`.
pub fn gen_random_stable(n: usize, m: usize, outputs: Option<usize>, seed: u64) -> Result<LqrProblem> {
    if n == 0 || m == 0 || outputs == Some(0) {
        return Err(Error::Dimension("dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sym = |rng: &mut ChaCha8Rng, k: usize| {
        let g = uniform_matrix(rng, k, k) - Matrix::from_element(k, k, 0.5);
        let s = &g * g.transpose() + Matrix::identity(k, k) * 0.5;
        (&s + s.transpose()) * 0.5
    };
    let g = (uniform_matrix(&mut rng, n, n) - Matrix::from_element(n, n, 0.5)) * 2.0;
    let shift = spectral_abscissa(&g)?.max(0.0) + 0.5 + uniform01(&mut rng);
    let a = g - Matrix::identity(n, n) * shift;
    let b = (uniform_matrix(&mut rng, n, m) - Matrix::from_element(n, m, 0.5)) * 2.0;
    let c = match outputs {
        None => Matrix::identity(n, n),
        Some(r) => (uniform_matrix(&mut rng, r, n) - Matrix::from_element(r, n, 0.5)) * 2.0,
    };
    let q = sym(&mut rng, n);
    let r = sym(&mut rng, m);
    let s = sym(&mut rng, n);
    Ok(LqrProblem::new(a, b, c, q, r, s)?.with_meta("generator", "random_stable").with_meta("seed", seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::{cost, is_stabilizing};
    use crate::Gain;

    #[test]
    fn chain_structure() {
        let p = gen_integrator_chain(3).unwrap();
        let a = p.a();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[(i, j)], if j == i + 1 { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(p.b().column(0).as_slice(), &[0.0, 0.0, 1.0]);
        let p1 = gen_integrator_chain(1).unwrap();
        assert_eq!(p1.a()[(0, 0)], 0.0);
        assert_eq!(p1.b()[(0, 0)], 1.0);
    }

    #[test]
    fn chain_stabilizing_gain() {
        let p = gen_integrator_chain(3).unwrap();
        let k = Gain::row(&[5.0, 100.0, 15.0]).unwrap();
        assert!(is_stabilizing(&p, &k));
        assert!(k[(0, 0)] > 0.0 && k[(0, 1)] * k[(0, 2)] > k[(0, 0)]);
        assert!(!is_stabilizing(&p, &p.zero_gain()));
    }

    #[test]
    fn olqr_chain_structure() {
        let p = gen_olqr_chain(3).unwrap();
        assert_eq!(p.c().shape(), (1, 3));
        assert_eq!(p.c().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        assert!((spectral_abscissa(p.a()).unwrap() + 1.0).abs() < 1e-12);
        let f = cost(&p, &p.zero_gain()).unwrap();
        assert!(f.is_finite() && f > 0.0);
    }

    #[test]
    fn random_medium_is_reproducible() {
        let a = gen_random_medium(10, 3, 42).unwrap();
        let b = gen_random_medium(10, 3, 42).unwrap();
        assert_eq!(a, b);
        assert!(is_stabilizing(&a, &a.zero_gain()));
        assert!(crate::linalg::sym_min_eig(a.q()).unwrap() > 0.0);
        assert_ne!(a, gen_random_medium(10, 3, 43).unwrap());
    }

    #[test]
    fn uniform_draw_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let u = uniform01(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
