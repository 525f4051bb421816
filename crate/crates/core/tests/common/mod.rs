#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pepgak::repr::{Dataset, MonomerRecord, PeptideRecord, SparseCountVector};
use pepgak::GramMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/separable.jsonl")
}

pub fn random_fp(r: &mut impl Rng, universe: u64, max_feats: usize) -> SparseCountVector {
    let n = r.gen_range(1..=max_feats);
    SparseCountVector::from_counts((0..n).map(|_| (r.gen_range(0..universe), r.gen_range(1..=4))))
}

/// Random dataset: `n_monomers` monomers over a small feature universe and
/// `n_peptides` peptides of length 2 to 15 with summed molecule fingerprints.
pub fn random_dataset(seed: u64, n_monomers: usize, n_peptides: usize) -> Dataset {
    let mut r = rng(seed);
    let monomers: Vec<MonomerRecord> = (0..n_monomers)
        .map(|i| MonomerRecord {
            id: format!("m{i}"),
            fingerprint: random_fp(&mut r, 40, 8),
        })
        .collect();
    let peptides = (0..n_peptides)
        .map(|i| {
            let len = r.gen_range(2..=15);
            let seq: Vec<usize> = (0..len).map(|_| r.gen_range(0..n_monomers)).collect();
            let mol = SparseCountVector::from_counts(
                seq.iter()
                    .flat_map(|&m| monomers[m].fingerprint.entries().iter().copied()),
            );
            PeptideRecord {
                id: format!("p{i}"),
                monomers: seq.iter().map(|&m| format!("m{m}")).collect(),
                permeability: r.gen_range(-10.0..=-4.0),
                molecule_fingerprint: Some(mol),
                group_id: format!("g{}", r.gen_range(0..n_peptides / 2 + 1)),
                scaffold_id: Some(format!("s{}", r.gen_range(0..n_peptides / 3 + 1))),
                force_train: r.gen_bool(0.05),
            }
        })
        .collect();
    Dataset::new(monomers, peptides).unwrap()
}

/// Brute-force pairwise concordance: each positive-negative pair scores 1
/// when the positive ranks higher and 1/2 on ties.
pub fn brute_force_auc(p: &[f64], y: &[u8]) -> Option<f64> {
    let mut num = 0.0;
    let mut pairs = 0usize;
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1;
                if p[i] > p[j] {
                    num += 1.0;
                } else if p[i] == p[j] {
                    num += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| num / pairs as f64)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `∫ sigmoid(f) N(f; mu, var) df` by composite Simpson on mu ± 40 sd.
pub fn simpson_expected_sigmoid(mu: f64, var: f64) -> f64 {
    if var == 0.0 {
        return sigmoid(mu);
    }
    let sd = var.sqrt();
    let (a, b) = (mu - 40.0 * sd, mu + 40.0 * sd);
    let n = 400_000;
    let h = (b - a) / n as f64;
    let g = |f: f64| sigmoid(f) * (-(f - mu).powi(2) / (2.0 * var)).exp();
    let mut s = g(a) + g(b);
    for k in 1..n {
        let x = a + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * g(x);
    }
    s * h / 3.0 / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Dense Laplace predictive moments: `mu = k*^T K^{-1} f`,
/// `var = k** - k*^T (K + W^{-1})^{-1} k*`, using explicit inverses.
pub fn dense_latent(
    k: &DMatrix<f64>,
    f_hat: &[f64],
    w: &[f64],
    k_star: &DMatrix<f64>,
    kss: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = k.nrows();
    let kinv = k.clone().try_inverse().unwrap();
    let f = DVector::from_column_slice(f_hat);
    let mut kw = k.clone();
    for i in 0..n {
        kw[(i, i)] += 1.0 / w[i];
    }
    let kwinv = kw.try_inverse().unwrap();
    let mut mu = Vec::new();
    let mut var = Vec::new();
    for (t, &prior) in kss.iter().enumerate() {
        let ks = k_star.row(t).transpose();
        mu.push((ks.transpose() * &kinv * &f)[(0, 0)]);
        var.push(prior - (ks.transpose() * &kwinv * &ks)[(0, 0)]);
    }
    (mu, var)
}

/// Squared-exponential Gram over random 3-d points, scaled by `amp`.
pub fn random_se_gram(r: &mut impl Rng, n: usize, amp: f64) -> (GramMatrix, Vec<[f64; 3]>) {
    let pts: Vec<[f64; 3]> = (0..n)
        .map(|_| [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)])
        .collect();
    let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let vals = se_block(&pts, &pts, amp);
    (GramMatrix::square(ids, vals).unwrap(), pts)
}

pub fn se_block(a: &[[f64; 3]], b: &[[f64; 3]], amp: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            let d2: f64 = x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum();
            v.push(amp * (-d2 / 2.0).exp());
        }
    }
    v
}

pub fn min_max_eig(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let e = sym.symmetric_eigenvalues();
    (e.min(), e.max())
}
