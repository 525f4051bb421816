use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::linalg::cholesky_with_jitter;
use crate::error::{Error, Result};
use crate::gram::GramMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    /// Subtract the training mean from targets and add it back to predictions.
    pub center_targets: bool,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            center_targets: true,
        }
    }
}

/// Exact GP regressor with zero prior mean (after optional centering).
#[derive(Debug, Clone)]
pub struct GPRegressor {
    train_ids: Vec<String>,
    factor: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    noise_eta2: f64,
    jitter: f64,
    y_offset: f64,
}

impl GPRegressor {
    pub fn train_ids(&self) -> &[String] {
        &self.train_ids
    }

    /// `(K + eta2 I)^{-1} (y - offset)`.
    pub fn alpha(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    pub fn noise_eta2(&self) -> f64 {
        self.noise_eta2
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn y_offset(&self) -> f64 {
        self.y_offset
    }
}

/// Zero-mean fit without target centering.
pub fn fit_regressor(g: &GramMatrix, y: &[f64], eta2: f64) -> Result<GPRegressor> {
    fit_regressor_with(
        g,
        y,
        eta2,
        RegressionOptions {
            center_targets: false,
        },
    )
}

pub fn fit_regressor_with(
    g: &GramMatrix,
    y: &[f64],
    eta2: f64,
    opts: RegressionOptions,
) -> Result<GPRegressor> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch("training Gram must be square".into()));
    }
    if y.len() != g.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} training points",
            y.len(),
            g.nrows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("regression targets must be finite".into()));
    }
    if !(eta2 > 0.0 && eta2.is_finite()) {
        return Err(Error::Validation(format!("noise variance must be positive, got {eta2}")));
    }
    let y_offset = if opts.center_targets && !y.is_empty() {
        y.iter().sum::<f64>() / y.len() as f64
    } else {
        0.0
    };
    let (factor, jitter) = cholesky_with_jitter(&g.to_dmatrix(), eta2, g.jitter())?;
    let centered = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_offset));
    let alpha = factor.solve(&centered);
    if alpha.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("regression weights are not finite".into()));
    }
    Ok(GPRegressor {
        train_ids: g.row_ids().to_vec(),
        factor,
        alpha,
        noise_eta2: eta2,
        jitter,
        y_offset,
    })
}

/// Rebuilds a fitted regressor from stored weights, refactoring
/// `K + (eta2 + jitter) I` with exactly the stored jitter.
pub fn regressor_from_parts(
    g: &GramMatrix,
    alpha: &[f64],
    eta2: f64,
    jitter: f64,
    y_offset: f64,
) -> Result<GPRegressor> {
    if !g.is_square() || alpha.len() != g.nrows() {
        return Err(Error::DimensionMismatch(
            "stored regression weights do not match the training Gram".into(),
        ));
    }
    let mut k = g.to_dmatrix();
    for i in 0..k.nrows() {
        k[(i, i)] += eta2 + jitter;
    }
    let factor = Cholesky::new(k).ok_or_else(|| {
        Error::Numerical("stored regression model no longer factorizes".into())
    })?;
    Ok(GPRegressor {
        train_ids: g.row_ids().to_vec(),
        factor,
        alpha: DVector::from_column_slice(alpha),
        noise_eta2: eta2,
        jitter,
        y_offset,
    })
}

/// Posterior mean and latent variance at the test points. `k_star` has one
/// row per test point and one column per training point.
pub fn predict_regressor(
    model: &GPRegressor,
    k_star: &GramMatrix,
    k_star_star: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if k_star.col_ids() != model.train_ids.as_slice() {
        return Err(Error::DimensionMismatch(
            "cross-Gram columns must match the training ids".into(),
        ));
    }
    if k_star_star.len() != k_star.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} prior variances for {} test points",
            k_star_star.len(),
            k_star.nrows()
        )));
    }
    let ks = k_star.to_dmatrix();
    let mean = &ks * &model.alpha;
    let mut v: DMatrix<f64> = ks.transpose();
    model.factor.l_dirty().solve_lower_triangular_mut(&mut v);
    let mut var = Vec::with_capacity(k_star.nrows());
    for (j, kss) in k_star_star.iter().enumerate() {
        let q: f64 = v.column(j).iter().map(|x| x * x).sum();
        let s = kss - q;
        if s < 0.0 {
            if s < -1e-10 {
                log::warn!("clamping negative predictive variance {s:e} to zero");
            }
            var.push(0.0);
        } else {
            var.push(s);
        }
    }
    let mean = mean.iter().map(|m| m + model.y_offset).collect();
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;

    fn one(v: f64) -> GramMatrix {
        GramMatrix::square(vec!["x".into()], vec![v])
            .unwrap()
            .with_spec(KernelSpec::md_gak().with_jitter(0.0))
    }

    #[test]
    fn single_point_closed_form() {
        let m = fit_regressor(&one(1.0), &[2.0], 1.0).unwrap();
        assert!((m.alpha()[0] - 1.0).abs() < 1e-15);
        let ks = GramMatrix::new(vec!["t".into()], vec!["x".into()], vec![1.0], None, false).unwrap();
        let (mean, var) = predict_regressor(&m, &ks, &[1.0]).unwrap();
        assert!((mean[0] - 1.0).abs() < 1e-15);
        assert!((var[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_targets_zero_weights() {
        let m = fit_regressor(&one(1.0), &[0.0], 0.1).unwrap();
        assert_eq!(m.alpha(), &[0.0]);
    }

    #[test]
    fn huge_noise_shrinks_to_prior() {
        let m = fit_regressor(&one(1.0), &[2.0], 1e12).unwrap();
        assert!(m.alpha()[0].abs() < 1e-11);
    }

    #[test]
    fn uncorrelated_test_point_keeps_prior() {
        let m = fit_regressor(&one(1.0), &[2.0], 1.0).unwrap();
        let ks = GramMatrix::new(vec!["t".into()], vec!["x".into()], vec![0.0], None, false).unwrap();
        let (mean, var) = predict_regressor(&m, &ks, &[0.7]).unwrap();
        assert_eq!(mean[0], 0.0);
        assert_eq!(var[0], 0.7);
    }

    #[test]
    fn centering_adds_offset_back() {
        let g = GramMatrix::square(vec!["a".into(), "b".into()], vec![1.0, 0.0, 0.0, 1.0])
            .unwrap()
            .with_spec(KernelSpec::md_gak().with_jitter(0.0));
        let m = fit_regressor_with(&g, &[-5.0, -7.0], 1.0, RegressionOptions::default()).unwrap();
        assert_eq!(m.y_offset(), -6.0);
        let ks = GramMatrix::new(vec!["t".into()], g.row_ids().to_vec(), vec![0.0, 0.0], None, false)
            .unwrap();
        let (mean, _) = predict_regressor(&m, &ks, &[1.0]).unwrap();
        assert_eq!(mean[0], -6.0);
    }

    #[test]
    fn shape_errors() {
        assert!(fit_regressor(&one(1.0), &[1.0, 2.0], 1.0).is_err());
        assert!(fit_regressor(&one(1.0), &[1.0], 0.0).is_err());
        let m = fit_regressor(&one(1.0), &[1.0], 1.0).unwrap();
        let ks = GramMatrix::new(vec!["t".into()], vec!["y".into()], vec![0.0], None, false).unwrap();
        assert!(predict_regressor(&m, &ks, &[1.0]).is_err());
    }
}
