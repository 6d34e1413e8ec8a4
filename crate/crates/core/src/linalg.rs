//! Dense least-squares machinery.
//!
//! Everything here goes through a thin singular value decomposition so that
//! rank-deficient regressors (redundant lifting functions, zero inputs) still
//! yield the minimum-norm solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix. Columns of snapshot matrices are time samples.
pub type Matrix = DMatrix<f64>;

/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Result of the stacked `[A, B]` regression.
#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    /// `[A, B]`, with `A` occupying the first `N_l` columns.
    pub coefficients: Matrix,
    /// Frobenius norm of `Y_lift - A X_lift - B U`.
    pub residual_norm: f64,
    /// Number of singular values of the stacked regressor kept.
    pub effective_rank: usize,
}

impl LeastSquaresSolution {
    /// Splits the coefficient block into `(A, B)` given the lifted dimension.
    pub fn split(&self, lifted_dim: usize) -> (Matrix, Matrix) {
        let c = &self.coefficients;
        let a = c.columns(0, lifted_dim).into_owned();
        let b = c.columns(lifted_dim, c.ncols() - lifted_dim).into_owned();
        (a, b)
    }
}

pub(crate) fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (idx % m.nrows(), idx / m.nrows());
        return Err(Error::InvalidInput(format!(
            "{what} has a non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

/// Default cutoff `max(rows, cols) * eps * sigma_max`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

struct ThinSvd {
    u: Matrix,
    singular_values: Vector,
    v_t: Matrix,
}

impl ThinSvd {
    fn new(m: &Matrix) -> Result<Self> {
        let (rows, cols) = m.shape();
        let svd = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)])
            .thin_svd()
            .map_err(|e| Error::InvalidInput(format!("singular value decomposition failed: {e:?}")))?;
        let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
        let k = s.nrows();
        Ok(ThinSvd {
            u: Matrix::from_fn(rows, k, |i, j| u[(i, j)]),
            singular_values: Vector::from_fn(k, |i, _| s[i]),
            v_t: Matrix::from_fn(k, cols, |i, j| v[(j, i)]),
        })
    }

    fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    fn cutoff(&self, rows: usize, cols: usize, rank_tolerance: f64) -> f64 {
        if rank_tolerance > 0.0 {
            rank_tolerance
        } else {
            default_rank_tolerance(rows, cols, self.sigma_max())
        }
    }

    /// Inverse-filter factors: `1/s` (or `s/(s^2 + ridge)`) above the cutoff, 0 below.
    fn filtered_inverse(&self, cutoff: f64, ridge: f64) -> (Vector, usize) {
        let mut rank = 0;
        let inv = self.singular_values.map(|s| {
            if s > cutoff && s > 0.0 {
                rank += 1;
                if ridge > 0.0 {
                    s / (s * s + ridge)
                } else {
                    1.0 / s
                }
            } else {
                0.0
            }
        });
        (inv, rank)
    }
}

fn check_tolerance(rank_tolerance: f64) -> Result<()> {
    if !(rank_tolerance >= 0.0) || !rank_tolerance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "rank tolerance must be a finite nonnegative number, got {rank_tolerance}"
        )));
    }
    Ok(())
}

/// Moore-Penrose pseudoinverse via SVD.
///
/// Singular values at or below `rank_tolerance` are treated as zero; a
/// tolerance of `0` selects [`default_rank_tolerance`].
pub fn pseudoinverse(m: &Matrix, rank_tolerance: f64) -> Result<Matrix> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Shape("pseudoinverse of an empty matrix".into()));
    }
    check_tolerance(rank_tolerance)?;
    ensure_finite(m, "matrix")?;

    let svd = ThinSvd::new(m)?;
    let cutoff = svd.cutoff(m.nrows(), m.ncols(), rank_tolerance);
    let (inv, _) = svd.filtered_inverse(cutoff, 0.0);

    // V * diag(inv) * U^T
    let mut v = svd.v_t.transpose();
    for (j, mut col) in v.column_iter_mut().enumerate() {
        col *= inv[j];
    }
    Ok(v * svd.u.transpose())
}

/// Solves `min ||Y_lift - A X_lift - B U||_F` as `Y_lift [X_lift; U]^+`.
///
/// Equivalent to [`solve_stacked_regression_ridge`] with zero ridge.
pub fn solve_stacked_regression(
    y_lift: &Matrix,
    x_lift: &Matrix,
    u: &Matrix,
    rank_tolerance: f64,
) -> Result<LeastSquaresSolution> {
    solve_stacked_regression_ridge(y_lift, x_lift, u, rank_tolerance, 0.0)
}

/// Stacked regression with optional Tikhonov damping of the singular values.
///
/// With `ridge = λ > 0` each retained singular value `s` is inverted as
/// `s / (s² + λ)`.
pub fn solve_stacked_regression_ridge(
    y_lift: &Matrix,
    x_lift: &Matrix,
    u: &Matrix,
    rank_tolerance: f64,
    ridge: f64,
) -> Result<LeastSquaresSolution> {
    let n = x_lift.ncols();
    if y_lift.ncols() != n || u.ncols() != n {
        return Err(Error::Shape(format!(
            "sample counts differ: Y_lift has {}, X_lift has {}, U has {}",
            y_lift.ncols(),
            n,
            u.ncols()
        )));
    }
    if y_lift.nrows() != x_lift.nrows() {
        return Err(Error::Shape(format!(
            "Y_lift has {} rows but X_lift has {}",
            y_lift.nrows(),
            x_lift.nrows()
        )));
    }
    if n == 0 {
        return Err(Error::Shape("regression needs at least one sample".into()));
    }
    check_tolerance(rank_tolerance)?;
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidInput(format!(
            "ridge must be a finite nonnegative number, got {ridge}"
        )));
    }
    ensure_finite(y_lift, "Y_lift")?;
    ensure_finite(x_lift, "X_lift")?;
    ensure_finite(u, "U")?;

    let lifted = x_lift.nrows();
    let m = u.nrows();
    let mut z = Matrix::zeros(lifted + m, n);
    z.rows_mut(0, lifted).copy_from(x_lift);
    z.rows_mut(lifted, m).copy_from(u);

    let svd = ThinSvd::new(&z)?;
    let cutoff = svd.cutoff(z.nrows(), z.ncols(), rank_tolerance);
    let (inv, effective_rank) = svd.filtered_inverse(cutoff, ridge);

    // Y V diag(inv) U^T, never forming the N x (N_l + m) pseudoinverse.
    let mut yv = y_lift * svd.v_t.transpose();
    for (j, mut col) in yv.column_iter_mut().enumerate() {
        col *= inv[j];
    }
    let coefficients = yv * svd.u.transpose();

    let residual = y_lift - &coefficients * &z;
    Ok(LeastSquaresSolution {
        residual_norm: residual.norm(),
        coefficients,
        effective_rank,
    })
}

/// Frobenius norm of `Y - A X - B U` for externally supplied coefficients.
pub fn stacked_residual(y: &Matrix, x: &Matrix, u: &Matrix, a: &Matrix, b: &Matrix) -> f64 {
    (y - a * x - b * u).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn identity_pseudoinverse() {
        let i = Matrix::identity(3, 3);
        let p = pseudoinverse(&i, 0.0).unwrap();
        assert!(max_abs_diff(&p, &i) < 1e-15);
    }

    #[test]
    fn rank_deficient_diagonal() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let p = pseudoinverse(&d, 1e-12).unwrap();
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert!(max_abs_diff(&p, &expected) < 1e-15);
    }

    #[test]
    fn penrose_conditions_full_rank_5x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 5, 3);
        let p = pseudoinverse(&m, 0.0).unwrap();
        assert_eq!(p.shape(), (3, 5));
        assert!(max_abs_diff(&(&m * &p * &m), &m) < 1e-10);
        assert!(max_abs_diff(&(&p * &m * &p), &p) < 1e-10);
        let mp = &m * &p;
        let pm = &p * &m;
        assert!(max_abs_diff(&mp, &mp.transpose()) < 1e-10);
        assert!(max_abs_diff(&pm, &pm.transpose()) < 1e-10);
    }

    #[test]
    fn penrose_conditions_wide_and_tall_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // rank 3 through a 3-dimensional bottleneck
        let wide = random_matrix(&mut rng, 6, 3) * random_matrix(&mut rng, 3, 40);
        for m in [wide.clone(), wide.transpose()] {
            let p = pseudoinverse(&m, 0.0).unwrap();
            assert!(max_abs_diff(&(&m * &p * &m), &m) < 1e-9);
            assert!(max_abs_diff(&(&p * &m * &p), &p) < 1e-9);
            let mp = &m * &p;
            let pm = &p * &m;
            assert!(max_abs_diff(&mp, &mp.transpose()) < 1e-9);
            assert!(max_abs_diff(&pm, &pm.transpose()) < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::identity(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(matches!(pseudoinverse(&m, 0.0), Err(Error::InvalidInput(_))));
        let ok = Matrix::identity(2, 2);
        assert!(matches!(
            solve_stacked_regression(&m, &ok, &ok, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rejects_column_mismatch() {
        let y = Matrix::zeros(2, 5);
        let x = Matrix::zeros(2, 5);
        let u = Matrix::zeros(1, 4);
        assert!(matches!(
            solve_stacked_regression(&y, &x, &u, 0.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_regressors_give_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = random_matrix(&mut rng, 3, 10);
        let x = Matrix::zeros(3, 10);
        let u = Matrix::zeros(2, 10);
        let sol = solve_stacked_regression(&y, &x, &u, 0.0).unwrap();
        assert_eq!(sol.coefficients.shape(), (3, 5));
        assert_eq!(sol.coefficients.amax(), 0.0);
        assert_eq!(sol.effective_rank, 0);
        assert!((sol.residual_norm - y.norm()).abs() < 1e-14);
    }

    #[test]
    fn shifted_ramp_with_zero_input() {
        // Minimum-norm fit of y = a x with x = [1,2,3], y = [2,3,4]; the zero
        // input row receives a zero coefficient.
        let x = Matrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let y = Matrix::from_row_slice(1, 3, &[2.0, 3.0, 4.0]);
        let u = Matrix::zeros(1, 3);
        let sol = solve_stacked_regression(&y, &x, &u, 0.0).unwrap();
        // normal-equations oracle on the nonzero regressor: sum(xy)/sum(xx)
        let a = (2.0 + 6.0 + 12.0) / (1.0 + 4.0 + 9.0);
        assert!((sol.coefficients[(0, 0)] - a).abs() < 1e-12);
        assert_eq!(sol.coefficients[(0, 1)], 0.0);
        assert_eq!(sol.effective_rank, 1);
    }

    #[test]
    fn exact_linear_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a0 = random_matrix(&mut rng, 4, 4);
        let b0 = random_matrix(&mut rng, 4, 2);
        let x = random_matrix(&mut rng, 4, 200);
        let u = random_matrix(&mut rng, 2, 200);
        let y = &a0 * &x + &b0 * &u;
        let sol = solve_stacked_regression(&y, &x, &u, 0.0).unwrap();
        let (a, b) = sol.split(4);
        assert!(max_abs_diff(&a, &a0) < 1e-8);
        assert!(max_abs_diff(&b, &b0) < 1e-8);
        assert!(sol.residual_norm < 1e-10);
    }

    #[test]
    fn ridge_shrinks_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 3, 40);
        let u = random_matrix(&mut rng, 1, 40);
        let y = random_matrix(&mut rng, 3, 40);
        let plain = solve_stacked_regression(&y, &x, &u, 0.0).unwrap();
        let damped = solve_stacked_regression_ridge(&y, &x, &u, 0.0, 10.0).unwrap();
        assert!(damped.coefficients.norm() < plain.coefficients.norm());
        assert!(damped.residual_norm >= plain.residual_norm);
    }
}
