//! Global alignment dynamic programs.
//!
//! All three kernels share the boundary `M[0][0] = 1`, `M[i][0] = M[0][j] = 0`
//! and return `M[n][m]`:
//!
//! - GAK: `M[i][j] = k(i,j) * (M[i-1][j-1] + M[i-1][j] + M[i][j-1])`
//! - MD-GAK: `M[i][j] = k(i,j) * M[i-1][j-1] + M[i-1][j] + M[i][j-1]`
//! - PMD-GAK: MD-GAK with `k` replaced by `w_T(i,j) * exp(-beta (1 - k0))`.
//!
//! The `*_indexed` variants take the local similarity as a closure over
//! 0-based positions, which lets Gram assembly feed precomputed monomer tables.
//! Values are accumulated in plain `f64`: for length 15 the largest path count
//! is about 3e11, far from overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local_kernels::{soft_kernel, triangular_window, SoftKernelParams, WindowParams};

/// Gap weight of the decoupled recursions. Fixed to one.
pub const GAP_DECAY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlignmentKernelKind {
    Gak,
    MdGak,
    PmdGak {
        soft: SoftKernelParams,
        window: WindowParams,
    },
}

impl AlignmentKernelKind {
    pub fn gap_decay(&self) -> f64 {
        GAP_DECAY
    }
}

fn check_lengths(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::Precondition(format!(
            "alignment kernels need nonempty sequences (got lengths {n} and {m})"
        )));
    }
    Ok(())
}

/// Canonical GA recursion over positions `0..n` x `0..m`.
pub fn gak_indexed(n: usize, m: usize, local: impl Fn(usize, usize) -> f64) -> Result<f64> {
    check_lengths(n, m)?;
    let mut row = vec![0.0; m + 1];
    row[0] = 1.0;
    for i in 0..n {
        let mut diag = row[0];
        row[0] = 0.0;
        for j in 0..m {
            let up = row[j + 1];
            let cell = local(i, j) * (diag + up + row[j]);
            diag = up;
            row[j + 1] = cell;
        }
    }
    Ok(row[m])
}

/// Decoupled recursion: the local similarity gates only the match transition.
pub fn mdgak_indexed(n: usize, m: usize, local: impl Fn(usize, usize) -> f64) -> Result<f64> {
    check_lengths(n, m)?;
    let mut row = vec![0.0; m + 1];
    row[0] = 1.0;
    for i in 0..n {
        let mut diag = row[0];
        row[0] = 0.0;
        for j in 0..m {
            let up = row[j + 1];
            let cell = local(i, j) * diag + up + row[j];
            diag = up;
            row[j + 1] = cell;
        }
    }
    Ok(row[m])
}

/// Banded PMD-GAK. `soft_local(i, j)` must return the soft similarity
/// `exp(-beta (1 - k0))` for 0-based positions; it is only called inside the
/// window support `|i - j| < T`. Outside the band cells carry gap mass only,
/// which keeps the result identical to [`pmdgak_dense_indexed`].
pub fn pmdgak_indexed(
    n: usize,
    m: usize,
    window: WindowParams,
    soft_local: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    check_lengths(n, m)?;
    let band = window.bandwidth as usize;
    let mut row = vec![0.0; m + 1];
    row[0] = 1.0;
    for i in 0..n {
        let mut diag = row[0];
        row[0] = 0.0;
        let lo = i.saturating_sub(band - 1);
        let hi = (i + band).min(m);
        for j in 0..m {
            let up = row[j + 1];
            let cell = if j >= lo && j < hi {
                let kt = triangular_window(i + 1, j + 1, window) * soft_local(i, j);
                kt * diag + up + row[j]
            } else {
                up + row[j]
            };
            diag = up;
            row[j + 1] = cell;
        }
    }
    Ok(row[m])
}

/// Dense reference for PMD-GAK: evaluates the windowed local kernel on every
/// cell, including the zero-weight ones.
pub fn pmdgak_dense_indexed(
    n: usize,
    m: usize,
    window: WindowParams,
    soft_local: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    mdgak_indexed(n, m, |i, j| {
        triangular_window(i + 1, j + 1, window) * soft_local(i, j)
    })
}

pub fn gak<T>(a: &[T], b: &[T], local: impl Fn(&T, &T) -> f64) -> Result<f64> {
    gak_indexed(a.len(), b.len(), |i, j| local(&a[i], &b[j]))
}

pub fn mdgak<T>(a: &[T], b: &[T], local: impl Fn(&T, &T) -> f64) -> Result<f64> {
    mdgak_indexed(a.len(), b.len(), |i, j| local(&a[i], &b[j]))
}

/// PMD-GAK from a base similarity `k0` in [0, 1].
pub fn pmdgak<T>(
    a: &[T],
    b: &[T],
    base: impl Fn(&T, &T) -> f64,
    soft: SoftKernelParams,
    window: WindowParams,
) -> Result<f64> {
    pmdgak_indexed(a.len(), b.len(), window, |i, j| {
        soft_kernel(base(&a[i], &b[j]), soft)
    })
}

pub fn pmdgak_dense<T>(
    a: &[T],
    b: &[T],
    base: impl Fn(&T, &T) -> f64,
    soft: SoftKernelParams,
    window: WindowParams,
) -> Result<f64> {
    pmdgak_dense_indexed(a.len(), b.len(), window, |i, j| {
        soft_kernel(base(&a[i], &b[j]), soft)
    })
}

/// `k_ab / sqrt(k_aa * k_bb)`.
pub fn cosine_normalize(k_ab: f64, k_aa: f64, k_bb: f64) -> Result<f64> {
    if k_aa.is_nan() || k_bb.is_nan() || k_aa <= 0.0 || k_bb <= 0.0 {
        return Err(Error::Normalization(format!(
            "self-similarities {k_aa} and {k_bb}"
        )));
    }
    Ok(k_ab / (k_aa * k_bb).sqrt())
}

/// Exhaustive path enumeration used as an independent reference for the
/// dynamic programs. Exponential in `n + m`; guarded at [`oracle::MAX_TOTAL`].
pub mod oracle {
    use super::AlignmentKernelKind;
    use crate::error::{Error, Result};

    pub const MAX_TOTAL: usize = 12;

    #[derive(Clone, Copy)]
    enum Step {
        Right,
        Up,
        Diagonal,
    }

    /// Sums path weights over every monotone lattice path from `(0,0)` to
    /// `(n,m)` with steps R, U, D.
    ///
    /// `base(i, j)` is the token similarity for 1-based cell `(i, j)`. Paths
    /// touching a boundary cell other than the origin weigh zero. For the
    /// decoupled kinds a path weighs the product of the similarity at the
    /// endpoints of its diagonal steps; for `PmdGak` that similarity is first
    /// windowed and softened. For `Gak` every entered interior cell contributes.
    pub fn oracle_path_sum(
        n: usize,
        m: usize,
        base: &dyn Fn(usize, usize) -> f64,
        kind: AlignmentKernelKind,
    ) -> Result<f64> {
        if n + m > MAX_TOTAL {
            return Err(Error::OracleRefused {
                total: n + m,
                limit: MAX_TOTAL,
            });
        }
        if n == 0 || m == 0 {
            return Err(Error::Precondition("oracle needs nonempty sequences".into()));
        }
        let weight = |i: usize, j: usize| -> f64 {
            match kind {
                AlignmentKernelKind::PmdGak { soft, window } => {
                    let t = f64::from(window.bandwidth);
                    let lag = (i as f64 - j as f64).abs();
                    let w = if lag >= t { 0.0 } else { 1.0 - lag / t };
                    w * (-soft.beta * (1.0 - base(i, j))).exp()
                }
                _ => base(i, j),
            }
        };
        let mut path = Vec::with_capacity(n + m);
        let mut total = 0.0;
        enumerate(0, 0, n, m, &mut path, &mut |steps: &[Step]| {
            let (mut i, mut j) = (0usize, 0usize);
            let mut w = 1.0;
            for s in steps {
                match s {
                    Step::Right => i += 1,
                    Step::Up => j += 1,
                    Step::Diagonal => {
                        i += 1;
                        j += 1;
                    }
                }
                if i == 0 || j == 0 {
                    return 0.0;
                }
                match (kind, s) {
                    (AlignmentKernelKind::Gak, _) => w *= weight(i, j),
                    (_, Step::Diagonal) => w *= weight(i, j),
                    _ => {}
                }
            }
            w
        }, &mut total);
        Ok(total)
    }

    fn enumerate(
        i: usize,
        j: usize,
        n: usize,
        m: usize,
        path: &mut Vec<Step>,
        score: &mut dyn FnMut(&[Step]) -> f64,
        total: &mut f64,
    ) {
        if i == n && j == m {
            *total += score(path);
            return;
        }
        if i < n {
            path.push(Step::Right);
            enumerate(i + 1, j, n, m, path, score, total);
            path.pop();
        }
        if j < m {
            path.push(Step::Up);
            enumerate(i, j + 1, n, m, path, score, total);
            path.pop();
        }
        if i < n && j < m {
            path.push(Step::Diagonal);
            enumerate(i + 1, j + 1, n, m, path, score, total);
            path.pop();
        }
    }

    /// Number of monotone R/U/D paths from the origin to `(n, m)`.
    pub fn count_paths(n: usize, m: usize) -> u64 {
        let mut path = Vec::new();
        let mut total = 0.0;
        enumerate(0, 0, n, m, &mut path, &mut |_| 1.0, &mut total);
        total as u64
    }
}
