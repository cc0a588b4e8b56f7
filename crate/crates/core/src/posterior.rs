//! Closed-form posterior summaries for the regression weights γ, the
//! covariate effects b, and the noise variance ψ of one family under the
//! covariate-adjusted model.
//!
//! The b posterior uses J* = I − X(τI + XᵀX)⁻¹Xᵀ (built from τ and the
//! parents) while the γ posterior uses J built from υ and the covariates;
//! the asymmetry is part of the model and must not be "fixed".

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{CovariateMatrix, Hyperparams};

/// Posterior summaries for one family.
///
/// `gamma_scale` is (τI + XᵀJX)⁻¹ and `b_scale` is (υI + QᵀJ*Q)⁻¹; the full
/// conditional covariances are ψ·gamma_scale and ψ·b_scale. ψ itself is
/// inverse gamma with the given shape and rate (density ∝ ψ^(−shape−1)
/// e^(−rate/ψ)).
#[derive(Debug, Clone)]
pub struct FamilyPosterior {
    pub gamma_mean: DVector<f64>,
    pub gamma_scale: DMatrix<f64>,
    pub b_mean: DVector<f64>,
    pub b_scale: DMatrix<f64>,
    pub psi_shape: f64,
    pub psi_rate: f64,
}

impl FamilyPosterior {
    /// Posterior mean of ψ, defined when shape > 1.
    pub fn psi_mean(&self) -> Option<f64> {
        (self.psi_shape > 1.0).then(|| self.psi_rate / (self.psi_shape - 1.0))
    }
}

fn check_j(j: &DMatrix<f64>, n: usize) -> Result<()> {
    if j.nrows() != n || j.ncols() != n {
        return Err(Error::Dimension(format!(
            "J is {}×{}, expected {n}×{n}",
            j.nrows(),
            j.ncols()
        )));
    }
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("J entries".into()));
    }
    Ok(())
}

fn check_x(x: &DMatrix<f64>, n: usize) -> Result<()> {
    if x.ncols() > 0 && x.nrows() != n {
        return Err(Error::Dimension(format!(
            "parent matrix has {} rows for {} samples",
            x.nrows(),
            n
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parent matrix".into()));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite(name.into()));
    }
    if v <= 0.0 {
        return Err(Error::InvalidParam(format!("{name} must be positive")));
    }
    Ok(())
}

/// Posterior of the regression weights given ψ:
/// mean (τI + XᵀJX)⁻¹XᵀJy and scale (τI + XᵀJX)⁻¹.
///
/// k = 0 returns empty summaries so callers can iterate uniformly over nodes.
pub fn posterior_gamma(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    j: &DMatrix<f64>,
    tau: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_positive("tau", tau)?;
    let n = y.nrows();
    check_x(x, n)?;
    check_j(j, n)?;
    let k = x.ncols();
    if k == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let jx = j * x;
    let mut a = x.transpose() * &jx;
    for i in 0..k {
        a[(i, i)] += tau;
    }
    let chol = linalg::cholesky(a, "τI + XᵀJX")?;
    let mean = chol.solve(&(jx.transpose() * y));
    let mut scale = chol.inverse();
    linalg::symmetrize(&mut scale);
    Ok((mean, scale))
}

/// Posterior of the covariate effects given ψ:
/// mean (υI + QᵀJ*Q)⁻¹QᵀJ*y and scale (υI + QᵀJ*Q)⁻¹ with
/// J* = I − X(τI + XᵀX)⁻¹Xᵀ computed here from X and τ.
pub fn posterior_b(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    q: &CovariateMatrix,
    tau: f64,
    upsilon: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_positive("tau", tau)?;
    check_positive("upsilon", upsilon)?;
    let n = y.nrows();
    check_x(x, n)?;
    if q.n() != n {
        return Err(Error::Dimension(format!(
            "covariates have {} rows for {} samples",
            q.n(),
            n
        )));
    }
    let k = x.ncols();
    let m = q.m();

    // J*Q and J*y without forming the n×n projector.
    let (jstar_q, jstar_y) = if k == 0 {
        (q.values().clone(), y.clone())
    } else {
        let mut a = x.transpose() * x;
        for i in 0..k {
            a[(i, i)] += tau;
        }
        let chol = linalg::cholesky(a, "τI + XᵀX")?;
        let xq = x.transpose() * q.values();
        let xy = x.transpose() * y;
        (
            q.values() - x * chol.solve(&xq),
            y - x * chol.solve(&xy),
        )
    };

    let mut a = q.values().transpose() * &jstar_q;
    for i in 0..m {
        a[(i, i)] += upsilon;
    }
    let chol = linalg::cholesky(a, "υI + QᵀJ*Q")?;
    let mean = chol.solve(&(q.values().transpose() * jstar_y));
    let mut scale = chol.inverse();
    linalg::symmetrize(&mut scale);
    Ok((mean, scale))
}

/// Posterior of the noise variance: shape (n + k + δ)/2 and rate
/// τ/2 + ½·yᵀ{J − JX(τI + XᵀJX)⁻¹XᵀJ}y. The quadratic form is nonnegative,
/// so the rate never falls below τ/2.
pub fn posterior_psi(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    j: &DMatrix<f64>,
    tau: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    check_positive("tau", tau)?;
    check_positive("delta", delta)?;
    let n = y.nrows();
    check_x(x, n)?;
    check_j(j, n)?;
    let k = x.ncols();

    let jy = j * y;
    let quad = if k == 0 {
        y.dot(&jy)
    } else {
        let jx = j * x;
        let mut a = x.transpose() * &jx;
        for i in 0..k {
            a[(i, i)] += tau;
        }
        let chol = linalg::cholesky(a, "τI + XᵀJX")?;
        let w = jx.transpose() * y;
        y.dot(&jy) - w.dot(&chol.solve(&w))
    };
    let shape = (n as f64 + k as f64 + delta) / 2.0;
    let rate = tau / 2.0 + 0.5 * quad.max(0.0);
    Ok((shape, rate))
}

/// All three posterior summaries for one family, with J built from the
/// covariates and υ.
pub fn family_posterior(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    q: &CovariateMatrix,
    hp: &Hyperparams,
) -> Result<FamilyPosterior> {
    hp.validate()?;
    let transform = crate::metrics::build_bgecm_transform(q, hp.upsilon)?;
    let (gamma_mean, gamma_scale) = posterior_gamma(y, x, &transform.j, hp.tau)?;
    let (b_mean, b_scale) = posterior_b(y, x, q, hp.tau, hp.upsilon)?;
    let (psi_shape, psi_rate) = posterior_psi(y, x, &transform.j, hp.tau, hp.delta)?;
    Ok(FamilyPosterior {
        gamma_mean,
        gamma_scale,
        b_mean,
        b_scale,
        psi_shape,
        psi_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn gamma_mean_is_ridge_shrunk() {
        // J = I, X = y = [1, 1]ᵀ, τ = 1: mean = (1 + 2)⁻¹ · 2 = 2/3.
        let y = DVector::from_column_slice(&[1.0, 1.0]);
        let x = mat(2, 1, &[1.0, 1.0]);
        let j = DMatrix::identity(2, 2);
        let (mean, scale) = posterior_gamma(&y, &x, &j, 1.0).unwrap();
        assert_abs_diff_eq!(mean[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scale[(0, 0)], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_mean_zero_when_y_orthogonal() {
        let y = DVector::from_column_slice(&[1.0, -1.0]);
        let x = mat(2, 1, &[1.0, 1.0]);
        let j = DMatrix::identity(2, 2);
        let (mean, _) = posterior_gamma(&y, &x, &j, 1.0).unwrap();
        assert_abs_diff_eq!(mean[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_empty_summaries_without_parents() {
        let y = DVector::from_column_slice(&[1.0, 2.0]);
        let x = DMatrix::<f64>::zeros(2, 0);
        let j = DMatrix::identity(2, 2);
        let (mean, scale) = posterior_gamma(&y, &x, &j, 1.0).unwrap();
        assert_eq!(mean.len(), 0);
        assert_eq!(scale.shape(), (0, 0));
    }

    #[test]
    fn b_mean_matches_hand_computation() {
        // k = 0 so J* = I; Q = [1, 1]ᵀ, y = [1, 1]ᵀ, υ = 1 → mean 2/3.
        let y = DVector::from_column_slice(&[1.0, 1.0]);
        let x = DMatrix::<f64>::zeros(2, 0);
        let q = CovariateMatrix::new(mat(2, 1, &[1.0, 1.0])).unwrap();
        let (mean, _) = posterior_b(&y, &x, &q, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(mean[0], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn b_mean_shrinks_to_zero_for_huge_upsilon() {
        let y = DVector::from_column_slice(&[1.0, 1.0, -0.4]);
        let x = DMatrix::<f64>::zeros(3, 0);
        let q = CovariateMatrix::new(mat(3, 1, &[1.0, 1.0, 0.5])).unwrap();
        let (mean, _) = posterior_b(&y, &x, &q, 1.0, 1e12).unwrap();
        assert!(mean[0].abs() < 1e-10);
    }

    #[test]
    fn psi_shape_and_rate_basic_case() {
        // y = [1, 1]ᵀ, k = 0, J = I, τ = 1, δ = 2 → shape 2, rate 3/2.
        let y = DVector::from_column_slice(&[1.0, 1.0]);
        let x = DMatrix::<f64>::zeros(2, 0);
        let j = DMatrix::identity(2, 2);
        let (shape, rate) = posterior_psi(&y, &x, &j, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(shape, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rate, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn psi_rate_floor_at_zero_response() {
        let y = DVector::zeros(3);
        let x = DMatrix::<f64>::zeros(3, 0);
        let j = DMatrix::identity(3, 3);
        let (_, rate) = posterior_psi(&y, &x, &j, 0.8, 2.0).unwrap();
        assert_abs_diff_eq!(rate, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let y = DVector::from_column_slice(&[1.0, 1.0]);
        let x = mat(3, 1, &[1.0, 1.0, 1.0]);
        let j = DMatrix::identity(2, 2);
        assert!(posterior_gamma(&y, &x, &j, 1.0).is_err());
        let j3 = DMatrix::identity(3, 3);
        let x2 = mat(2, 1, &[1.0, 1.0]);
        assert!(posterior_psi(&y, &x2, &j3, 1.0, 2.0).is_err());
    }
}
