//! Gaussian processes over precomputed Gram matrices.
//!
//! Regression is exact (Cholesky of `K + eta2 I`); binary classification uses
//! the Laplace approximation with a logistic likelihood. Both use a zero prior
//! mean. Training Grams get `jitter` added to their diagonal, doubled up to
//! three times if the factorization fails.

mod laplace;
mod linalg;
mod regression;
mod select;

pub use laplace::{
    fit_laplace, gauss_hermite, logistic, predict_laplace, predict_latent, LaplaceState,
    GAUSS_HERMITE_NODES,
};
pub use regression::{
    fit_regressor, fit_regressor_with, predict_regressor, regressor_from_parts, GPRegressor,
    RegressionOptions,
};
pub use select::{fit_predict, select_hyperparams, Candidate, SelectionResult, Targets, Task};

use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::kernel::KernelSpec;

/// Entrywise `alpha * g1 + (1 - alpha) * g2`.
pub fn mix_kernels(g1: &GramMatrix, g2: &GramMatrix, alpha: f64) -> Result<GramMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha {alpha} outside [0, 1]")));
    }
    if g1.row_ids() != g2.row_ids() || g1.col_ids() != g2.col_ids() {
        return Err(Error::DimensionMismatch(
            "mixed Gram matrices must share row and column ids".into(),
        ));
    }
    let values = if alpha == 1.0 {
        g1.values().to_vec()
    } else if alpha == 0.0 {
        g2.values().to_vec()
    } else {
        g1.values()
            .iter()
            .zip(g2.values())
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect()
    };
    let spec = match (g1.spec(), g2.spec()) {
        (Some(a), Some(b)) => Some(KernelSpec::convex(alpha, a.clone(), b.clone())),
        _ => None,
    };
    GramMatrix::new(
        g1.row_ids().to_vec(),
        g1.col_ids().to_vec(),
        values,
        spec,
        g1.normalized() && g2.normalized(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(vals: &[f64]) -> GramMatrix {
        GramMatrix::square(vec!["a".into(), "b".into()], vals.to_vec()).unwrap()
    }

    #[test]
    fn mix_endpoints_and_midpoint() {
        let a = g(&[1.0, 0.2, 0.2, 1.0]);
        let b = g(&[1.0, 0.6, 0.6, 1.0]);
        assert_eq!(mix_kernels(&a, &b, 1.0).unwrap().values(), a.values());
        assert_eq!(mix_kernels(&a, &b, 0.0).unwrap().values(), b.values());
        let m = mix_kernels(&a, &b, 0.5).unwrap();
        assert!((m.get(0, 1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn mix_records_provenance() {
        let a = g(&[1.0, 0.2, 0.2, 1.0]).with_spec(KernelSpec::md_gak());
        let b = g(&[1.0, 0.6, 0.6, 1.0]).with_spec(KernelSpec::tanimoto_peptide());
        let m = mix_kernels(&a, &b, 0.3).unwrap();
        match &m.spec().unwrap().family {
            crate::kernel::KernelFamily::Convex { alpha, first, second } => {
                assert_eq!(*alpha, 0.3);
                assert_eq!(**first, KernelSpec::md_gak());
                assert_eq!(**second, KernelSpec::tanimoto_peptide());
            }
            f => panic!("unexpected family {f:?}"),
        }
    }

    #[test]
    fn mix_rejects_mismatched_ids() {
        let a = g(&[1.0, 0.2, 0.2, 1.0]);
        let b = GramMatrix::square(vec!["a".into(), "c".into()], vec![1.0; 4]).unwrap();
        assert!(matches!(mix_kernels(&a, &b, 0.5), Err(Error::DimensionMismatch(_))));
    }
}
