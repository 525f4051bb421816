//! Laplace-approximation GP classifier with logistic likelihood.
//!
//! Mode finding follows the usual Newton scheme parameterized by
//! `f = K a`, factoring `B = I + W^{1/2} K W^{1/2}` at each step so that only
//! well-conditioned systems are solved.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gram::GramMatrix;

pub const GAUSS_HERMITE_NODES: usize = 32;
const MAX_ITERATIONS: usize = 100;
const GRAD_TOL: f64 = 1e-6;
const OBJ_TOL: f64 = 1e-10;
const GRAD_FLOOR: f64 = 1e-12;
const MAX_HALVINGS: usize = 30;

/// `1 / (1 + exp(-z))`, evaluated without overflow.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(logistic(z))`.
fn log_logistic(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// Gauss–Hermite nodes and weights for `∫ g(x) exp(-x²) dx`, from the
/// eigen-decomposition of the Jacobi matrix (Golub–Welsch).
pub fn gauss_hermite() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_HERMITE_NODES;
        let mut j = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            j[(k - 1, k)] = b;
            j[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(j);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], sqrt_pi * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    })
}

/// `∫ logistic(f) N(f; mean, var) df`.
fn expected_logistic(mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return logistic(mean);
    }
    let (nodes, weights) = gauss_hermite();
    let scale = (2.0 * var).sqrt();
    let s: f64 = nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * logistic(mean + scale * x))
        .sum();
    s / std::f64::consts::PI.sqrt()
}

#[derive(Debug, Clone)]
pub struct LaplaceState {
    train_ids: Vec<String>,
    f_hat: DVector<f64>,
    /// `K^{-1} f_hat` (the Newton iterate with `f_hat = K a`).
    a: DVector<f64>,
    w: DVector<f64>,
    sqrt_w: DVector<f64>,
    factor: Cholesky<f64, Dyn>,
    grad_at_mode: f64,
    iterations: usize,
    jitter: f64,
}

impl LaplaceState {
    pub fn train_ids(&self) -> &[String] {
        &self.train_ids
    }

    pub fn f_hat(&self) -> &[f64] {
        self.f_hat.as_slice()
    }

    pub fn a(&self) -> &[f64] {
        self.a.as_slice()
    }

    pub fn w(&self) -> &[f64] {
        self.w.as_slice()
    }

    pub fn grad_at_mode(&self) -> f64 {
        self.grad_at_mode
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Rebuilds the state from a stored mode, recomputing `W` and the factor
    /// of `B` against the training Gram.
    pub fn from_mode(g: &GramMatrix, labels: &[u8], a: &[f64], jitter: f64) -> Result<Self> {
        let n = g.nrows();
        if !g.is_square() || labels.len() != n || a.len() != n {
            return Err(Error::DimensionMismatch(
                "stored Laplace state does not match the training Gram".into(),
            ));
        }
        let k = jittered(g, jitter);
        let a = DVector::from_column_slice(a);
        let f = &k * &a;
        let y = signs(labels);
        let (w, sqrt_w) = curvature(&f);
        let factor = factor_b(&k, &sqrt_w)?;
        let grad = gradient(&f, &a, &y);
        Ok(Self {
            train_ids: g.row_ids().to_vec(),
            f_hat: f,
            a,
            w,
            sqrt_w,
            factor,
            grad_at_mode: grad,
            iterations: 0,
            jitter,
        })
    }
}

fn jittered(g: &GramMatrix, jitter: f64) -> DMatrix<f64> {
    let mut k = g.to_dmatrix();
    for i in 0..k.nrows() {
        k[(i, i)] += jitter;
    }
    k
}

fn signs(labels: &[u8]) -> DVector<f64> {
    DVector::from_iterator(labels.len(), labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }))
}

fn curvature(f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let w = f.map(|fi| {
        let p = logistic(fi);
        p * (1.0 - p)
    });
    let s = w.map(f64::sqrt);
    (w, s)
}

/// `d log p(y|f) / df` for labels in {-1, +1}.
fn likelihood_gradient(f: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    f.zip_map(y, |fi, yi| (yi + 1.0) / 2.0 - logistic(fi))
}

fn gradient(f: &DVector<f64>, a: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (likelihood_gradient(f, y) - a).amax()
}

fn objective(f: &DVector<f64>, a: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let lik: f64 = f.iter().zip(y.iter()).map(|(fi, yi)| log_logistic(yi * fi)).sum();
    lik - 0.5 * a.dot(f)
}

fn factor_b(k: &DMatrix<f64>, sqrt_w: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = k.nrows();
    let mut b = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += sqrt_w[i] * k[(i, j)] * sqrt_w[j];
        }
    }
    Cholesky::new(b).ok_or_else(|| {
        Error::Numerical("I + W^1/2 K W^1/2 is not positive definite; Gram is not PSD".into())
    })
}

/// Finds the posterior mode of the latent logits for labels in {0, 1}.
pub fn fit_laplace(g: &GramMatrix, labels: &[u8]) -> Result<LaplaceState> {
    if !g.is_square() {
        return Err(Error::DimensionMismatch("training Gram must be square".into()));
    }
    let n = g.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} training points",
            labels.len(),
            n
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Validation("classification labels must be 0 or 1".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        log::warn!("Laplace fit on single-class labels ({positives} of {n} positive)");
    }
    let jitter = g.jitter();
    let k = jittered(g, jitter);
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("training Gram has non-finite entries".into()));
    }
    let y = signs(labels);

    let mut a = DVector::<f64>::zeros(n);
    let mut f = DVector::<f64>::zeros(n);
    let mut obj = objective(&f, &a, &y);
    let mut grad = gradient(&f, &a, &y);
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    // Stop once the gradient meets the tolerance and the objective has
    // settled (or the gradient is at rounding level).
    while grad > GRAD_TOL || (change > OBJ_TOL && grad > GRAD_FLOOR) {
        if iterations == MAX_ITERATIONS {
            if grad <= GRAD_TOL {
                break;
            }
            return Err(Error::Convergence {
                iterations,
                grad_norm: grad,
            });
        }
        iterations += 1;
        let (w, sqrt_w) = curvature(&f);
        let factor = factor_b(&k, &sqrt_w)?;
        let b = w.component_mul(&f) + likelihood_gradient(&f, &y);
        let kb = &k * &b;
        let c = factor.solve(&sqrt_w.component_mul(&kb));
        let a_newton = &b - sqrt_w.component_mul(&c);

        // Damped step: halve until the objective does not decrease.
        let direction = &a_newton - &a;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let a_try = &a + &direction * step;
            let f_try = &k * &a_try;
            let obj_try = objective(&f_try, &a_try, &y);
            if obj_try >= obj - 1e-12 * obj.abs().max(1.0) {
                accepted = Some((a_try, f_try, obj_try));
                break;
            }
            step *= 0.5;
        }
        let Some((a_new, f_new, obj_new)) = accepted else {
            if grad <= GRAD_TOL {
                break;
            }
            return Err(Error::Convergence {
                iterations,
                grad_norm: grad,
            });
        };
        change = (obj_new - obj).abs();
        a = a_new;
        f = f_new;
        obj = obj_new;
        grad = gradient(&f, &a, &y);
    }
    let (w, sqrt_w) = curvature(&f);
    let factor = factor_b(&k, &sqrt_w)?;
    Ok(LaplaceState {
        train_ids: g.row_ids().to_vec(),
        f_hat: f,
        a,
        w,
        sqrt_w,
        factor,
        grad_at_mode: grad,
        iterations,
        jitter,
    })
}

/// Latent predictive mean and variance at the test points.
pub fn predict_latent(
    state: &LaplaceState,
    k_star: &GramMatrix,
    k_star_star: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if k_star.col_ids() != state.train_ids.as_slice() {
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
    let mean = &ks * &state.a;
    let mut v = ks.transpose();
    for (i, mut row) in v.row_iter_mut().enumerate() {
        row *= state.sqrt_w[i];
    }
    state.factor.l_dirty().solve_lower_triangular_mut(&mut v);
    let mut var = Vec::with_capacity(k_star.nrows());
    for (j, &kss) in k_star_star.iter().enumerate() {
        let q: f64 = v.column(j).iter().map(|x| x * x).sum();
        let s = kss - q;
        if s < -1e-8 * kss.abs().max(1.0) {
            return Err(Error::NegativeVariance(s));
        }
        var.push(s.max(0.0));
    }
    Ok((mean.iter().copied().collect(), var))
}

/// Predictive probabilities of the positive class, strictly inside (0, 1).
pub fn predict_laplace(
    state: &LaplaceState,
    k_star: &GramMatrix,
    k_star_star: &[f64],
) -> Result<Vec<f64>> {
    let (mean, var) = predict_latent(state, k_star, k_star_star)?;
    Ok(mean
        .iter()
        .zip(&var)
        .map(|(&m, &v)| expected_logistic(m, v).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
        .collect())
}
