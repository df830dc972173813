//! Dense linear-algebra helpers shared by the diffusion and mixing analyses.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    /// `false` when the iteration budget ran out; `value` is then the last iterate.
    pub converged: bool,
}

/// Dominant eigenvalue magnitude of `|A|` by power iteration.
///
/// The iteration runs on `|A| + I`, whose Perron root is `rho(|A|) + 1`; the
/// unit shift removes the oscillation that periodic (e.g. bipartite) patterns
/// cause in the plain iteration.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<SpectralEstimate> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension { expected: a.nrows(), actual: a.ncols() });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(SpectralEstimate { value: 0.0, iterations: 0, converged: true });
    }
    let mut shifted = a.abs();
    for i in 0..n {
        shifted[(i, i)] += 1.0;
    }
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = f64::NAN;
    for it in 1..=POWER_MAX_ITER {
        let y = &shifted * &x;
        let norm = y.iter().sum::<f64>();
        if norm <= 0.0 || !norm.is_finite() {
            return Ok(SpectralEstimate { value: 0.0, iterations: it, converged: true });
        }
        // x has unit 1-norm and is nonnegative, so the 1-norm of y is the ratio.
        let next = norm;
        x = y / norm;
        if (next - estimate).abs() <= POWER_TOL * next {
            return Ok(SpectralEstimate { value: (next - 1.0).max(0.0), iterations: it, converged: true });
        }
        estimate = next;
    }
    log::warn!("power iteration did not converge within {POWER_MAX_ITER} iterations");
    Ok(SpectralEstimate { value: (estimate - 1.0).max(0.0), iterations: POWER_MAX_ITER, converged: false })
}

/// Solves `m x = b` by LU with partial pivoting.
pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() != m.ncols() || m.nrows() != b.len() {
        return Err(Error::Dimension { expected: m.nrows(), actual: b.len() });
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Input("singular linear system".into()))
}

/// Spectral (operator 2-) norm; zero for empty blocks.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn is_row_stochastic(m: &DMatrix<f64>, tol: f64) -> bool {
    m.row_iter().all(|r| (r.sum() - 1.0).abs() <= tol) && m.iter().all(|&v| v >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_scaled_identity() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!((spectral_radius(&i).unwrap().value - 1.0).abs() < 1e-9);
        let h = i * 0.5;
        assert!((spectral_radius(&h).unwrap().value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn periodic_matrix_converges() {
        // Bipartite swap: eigenvalues +-1.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let est = spectral_radius(&a).unwrap();
        assert!(est.converged);
        assert!((est.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_eigen_decomposition_on_symmetric() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.0, 0.3, 0.1, 0.4, 0.0, 0.4, 0.3]);
        let eig = a.clone().symmetric_eigen();
        let expected = eig.eigenvalues.iter().map(|v: &f64| v.abs()).fold(0.0, f64::max);
        assert!((spectral_radius(&a).unwrap().value - expected).abs() < 1e-8);
    }

    #[test]
    fn solve_small_system() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![3.0, 5.0]);
        let x = solve(&m, &b).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(spectral_radius(&DMatrix::<f64>::zeros(2, 3)).is_err());
    }
}
