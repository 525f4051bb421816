//! Token-level similarities: count Tanimoto, its exponential soft version,
//! the triangular position window and their product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repr::SparseCountVector;

/// Temperature of the soft local kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftKernelParams {
    pub beta: f64,
}

impl SoftKernelParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Validation(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { beta })
    }
}

/// Bandwidth of the triangular position window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowParams {
    pub bandwidth: u32,
}

impl WindowParams {
    pub fn new(bandwidth: u32) -> Result<Self> {
        if bandwidth == 0 {
            return Err(Error::Validation("window bandwidth must be >= 1".into()));
        }
        Ok(Self { bandwidth })
    }
}

/// Count Tanimoto `<u,v> / (<u,u> + <v,v> - <u,v>)`.
///
/// Two empty vectors compare as identical (1); an empty and a non-empty
/// vector compare as 0.
pub fn tanimoto(u: &SparseCountVector, v: &SparseCountVector) -> f64 {
    match (u.is_empty(), v.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    tanimoto_from_products(u.dot(v), u.squared_norm(), v.squared_norm())
}

/// Tanimoto given the inner product and both squared norms. Lets callers
/// that compare one vector against many reuse the norms.
pub fn tanimoto_from_products(uv: f64, uu: f64, vv: f64) -> f64 {
    if uu == 0.0 && vv == 0.0 {
        return 1.0;
    }
    let denom = uu + vv - uv;
    if denom <= 0.0 {
        return 0.0;
    }
    (uv / denom).clamp(0.0, 1.0)
}

/// `exp(-beta * (1 - k0))`.
pub fn soft_kernel(k0: f64, params: SoftKernelParams) -> f64 {
    (-params.beta * (1.0 - k0)).exp()
}

/// `max(0, 1 - |i - j| / T)` for 1-based positions.
pub fn triangular_window(i: usize, j: usize, params: WindowParams) -> f64 {
    let lag = i.abs_diff(j) as f64;
    let t = f64::from(params.bandwidth);
    if lag >= t {
        0.0
    } else {
        1.0 - lag / t
    }
}

/// Window-modulated soft kernel used by PMD-GAK.
pub fn position_local_kernel(
    u: &SparseCountVector,
    v: &SparseCountVector,
    i: usize,
    j: usize,
    soft: SoftKernelParams,
    win: WindowParams,
) -> f64 {
    let w = triangular_window(i, j, win);
    if w == 0.0 {
        return 0.0;
    }
    w * soft_kernel(tanimoto(u, v), soft)
}

/// Maps a PSD similarity `t` in [0, 1] to `t / (2 - t)`.
///
/// The image `g` satisfies `g / (1 + g) = t / 2`, so the transformed
/// similarity meets the sufficient condition for the canonical GA kernel to
/// be positive definite.
pub fn ga_admissible(t: f64) -> f64 {
    t / (2.0 - t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(pairs: &[(u64, u32)]) -> SparseCountVector {
        SparseCountVector::from_counts(pairs.iter().copied())
    }

    #[test]
    fn tanimoto_cases() {
        let a = v(&[(1, 1), (2, 1)]);
        let b = v(&[(1, 1)]);
        assert_eq!(tanimoto(&a, &a), 1.0);
        assert_eq!(tanimoto(&a, &b), 0.5);
        assert_eq!(tanimoto(&b, &a), 0.5);
        assert_eq!(tanimoto(&a, &v(&[(3, 4)])), 0.0);
        let e = SparseCountVector::empty();
        assert_eq!(tanimoto(&e, &e), 1.0);
        assert_eq!(tanimoto(&e, &a), 0.0);
    }

    #[test]
    fn tanimoto_counts_self_similarity_is_one() {
        let a = v(&[(1, 5), (9, 3), (11, 1)]);
        assert_eq!(tanimoto(&a, &a), 1.0);
        // counts matter: {1:2} vs {1:1} -> 2 / (4 + 1 - 2)
        assert!((tanimoto(&v(&[(1, 2)]), &v(&[(1, 1)])) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn soft_kernel_values() {
        let p = SoftKernelParams::new(2.0).unwrap();
        assert_eq!(soft_kernel(1.0, p), 1.0);
        assert!((soft_kernel(0.0, p) - 0.1353352832366127).abs() < 1e-15);
        let tiny = SoftKernelParams::new(1e-12).unwrap();
        assert!((soft_kernel(0.0, tiny) - 1.0).abs() < 1e-11);
        assert!(SoftKernelParams::new(0.0).is_err());
        assert!(SoftKernelParams::new(-1.0).is_err());
    }

    #[test]
    fn window_values() {
        let w = WindowParams::new(3).unwrap();
        assert_eq!(triangular_window(5, 5, w), 1.0);
        assert_eq!(triangular_window(1, 4, w), 0.0);
        assert!((triangular_window(2, 4, w) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(triangular_window(4, 2, w), triangular_window(2, 4, w));
        assert_eq!(triangular_window(10, 12, w), triangular_window(1, 3, w));
        assert!(WindowParams::new(0).is_err());
    }

    #[test]
    fn position_kernel_values() {
        let soft = SoftKernelParams::new(1.0).unwrap();
        let win = WindowParams::new(3).unwrap();
        let a = v(&[(1, 1), (2, 1)]);
        let b = v(&[(1, 1)]);
        assert_eq!(position_local_kernel(&a, &a, 2, 2, soft, win), 1.0);
        assert_eq!(position_local_kernel(&a, &a, 1, 4, soft, win), 0.0);
        let got = position_local_kernel(&a, &b, 2, 3, soft, win);
        assert!((got - 0.4043537731417556).abs() < 1e-12, "{got}");
    }

    #[test]
    fn admissible_transform() {
        for t in [0.0, 0.25, 0.5, 1.0] {
            let g = ga_admissible(t);
            assert!((g / (1.0 + g) - t / 2.0).abs() < 1e-15);
        }
        assert_eq!(ga_admissible(1.0), 1.0);
    }
}
