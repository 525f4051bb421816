use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::kernel::DEFAULT_JITTER;

const JITTER_RETRIES: usize = 3;

/// Cholesky of `m + (shift + jitter) I`, doubling the jitter on failure.
/// Returns the factor and the jitter that succeeded.
pub(crate) fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    shift: f64,
    jitter: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = jitter;
    for attempt in 0..=JITTER_RETRIES {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += shift + j;
        }
        if let Some(c) = Cholesky::new(a) {
            if attempt > 0 {
                log::warn!("Cholesky succeeded after raising jitter to {j:e}");
            }
            return Ok((c, j));
        }
        if attempt == JITTER_RETRIES {
            let mut a = m.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += shift + j;
            }
            return Err(Error::IllConditioned {
                jitter: j,
                min_pivot: failing_pivot(&a),
            });
        }
        j = if j == 0.0 { DEFAULT_JITTER } else { 2.0 * j };
    }
    unreachable!()
}

/// Runs an unblocked Cholesky and returns the smallest pivot seen, which is
/// the first nonpositive one when the factorization breaks down.
fn failing_pivot(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        min_pivot = min_pivot.min(d);
        if d.is_nan() || d <= 0.0 {
            return d;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    min_pivot
}
