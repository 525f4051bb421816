//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.
//!
//! ```text
//! cargo test -p pepgak --test acceptance
//! ```

mod common;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use pepgak::alignment::oracle::oracle_path_sum;
use pepgak::alignment::{gak_indexed, mdgak_indexed, pmdgak_dense_indexed, pmdgak_indexed, AlignmentKernelKind};
use pepgak::eval::cv::{nested_cv, CvOptions};
use pepgak::eval::metrics::{accuracy, brier, ece, f1, roc_auc, Objective, ECE_BINS};
use pepgak::eval::splits::split_label_stratified;
use pepgak::gp::{fit_laplace, fit_regressor, predict_latent, predict_laplace, predict_regressor, Candidate};
use pepgak::gram::{full_gram, psd_check, GramCache};
use pepgak::local_kernels::{
    position_local_kernel, soft_kernel, tanimoto, triangular_window, SoftKernelParams, WindowParams,
};
use pepgak::repr::read_dataset_file;
use pepgak::{GramMatrix, KernelSpec};
use rand::Rng;

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let out = f()?;
    let el = t.elapsed();
    if el > limit {
        return Err(format!("{out}; took {el:.2?}, limit {limit:?}"));
    }
    Ok(format!("{out}; {el:.2?}"))
}

fn oracle_equivalence() -> Outcome {
    timed(Duration::from_secs(10), || {
        let mut r = rng(11);
        let mut worst = 0.0f64;
        for case in 0..500 {
            let n = r.gen_range(1..=5);
            let m = r.gen_range(1..=5);
            let table: Vec<f64> = (0..n * m).map(|_| r.gen_range(0.0..=1.0)).collect();
            let local = |i: usize, j: usize| table[i * m + j];
            let base = |i: usize, j: usize| table[(i - 1) * m + (j - 1)];
            for (kind, dp) in [
                (AlignmentKernelKind::MdGak, mdgak_indexed(n, m, local).unwrap()),
                (AlignmentKernelKind::Gak, gak_indexed(n, m, local).unwrap()),
            ] {
                let o = oracle_path_sum(n, m, &base, kind).unwrap();
                let err = (dp - o).abs() / o.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(if dp == o { 0.0 } else { err });
                if !rel_close(dp, o, 1e-10) {
                    return Err(format!("case {case} {kind:?} n={n} m={m}: dp {dp} oracle {o}"));
                }
            }
        }
        Ok(format!("1000 comparisons, worst relative error {worst:.1e}"))
    })
}

fn delannoy() -> Outcome {
    let expected = [1.0, 3.0, 13.0, 63.0, 321.0];
    let mut got = Vec::new();
    for n in 1..=5 {
        let v = mdgak_indexed(n, n, |_, _| 1.0).unwrap();
        let o = oracle_path_sum(n, n, &|_, _| 1.0, AlignmentKernelKind::MdGak).unwrap();
        if v != expected[n - 1] || o != expected[n - 1] {
            return Err(format!("n={n}: dp {v}, enumeration {o}, expected {}", expected[n - 1]));
        }
        got.push(v);
    }
    Ok(format!("{got:?}"))
}

fn psd_of(name: &str, m: DMatrix<f64>, report: &mut Vec<String>) -> Result<(), String> {
    let (lo, hi) = min_max_eig(&m);
    if lo < -1e-8 * hi {
        return Err(format!("{name}: min eig {lo:e}, max eig {hi:e}"));
    }
    report.push(format!("{name} {lo:.1e}"));
    Ok(())
}

fn psd_suite() -> Outcome {
    timed(Duration::from_secs(60), || {
        let ds = random_dataset(5, 30, 50);
        let mut report = Vec::new();
        let md = full_gram(&ds, &KernelSpec::md_gak()).map_err(|e| e.to_string())?;
        let pmd = full_gram(&ds, &KernelSpec::pmd_gak(2.0, 3)).map_err(|e| e.to_string())?;
        let tan = full_gram(&ds, &KernelSpec::tanimoto_peptide()).map_err(|e| e.to_string())?;
        for (name, g) in [("md_gak", &md), ("pmd_gak", &pmd), ("tanimoto_peptide", &tan)] {
            let rep = psd_check(g, 1e-8).map_err(|e| e.to_string())?;
            if !rep.is_psd {
                return Err(format!("{name}: {rep:?}"));
            }
            psd_of(name, g.to_dmatrix(), &mut report)?;
        }
        let mix = full_gram(
            &ds,
            &KernelSpec::convex(0.3, KernelSpec::pmd_gak(1.0, 5), KernelSpec::tanimoto_peptide()),
        )
        .map_err(|e| e.to_string())?;
        psd_of("convex(pmd_gak, tanimoto)", mix.to_dmatrix(), &mut report)?;
        let mix2 = full_gram(&ds, &KernelSpec::convex(0.6, KernelSpec::md_gak(), KernelSpec::pmd_gak(0.5, 2)))
            .map_err(|e| e.to_string())?;
        psd_of("convex(md_gak, pmd_gak)", mix2.to_dmatrix(), &mut report)?;

        // token-level kernels over the monomer table and random positions
        let fps: Vec<_> = ds.monomers().records().iter().map(|m| m.fingerprint.clone()).collect();
        let n = fps.len();
        let soft = SoftKernelParams::new(2.0).unwrap();
        let win = WindowParams::new(3).unwrap();
        psd_of("tanimoto", DMatrix::from_fn(n, n, |i, j| tanimoto(&fps[i], &fps[j])), &mut report)?;
        psd_of(
            "soft_kernel(tanimoto)",
            DMatrix::from_fn(n, n, |i, j| soft_kernel(tanimoto(&fps[i], &fps[j]), soft)),
            &mut report,
        )?;
        psd_of("triangular_window", DMatrix::from_fn(15, 15, |i, j| triangular_window(i + 1, j + 1, win)), &mut report)?;
        let mut r = rng(3);
        let tokens: Vec<(usize, usize)> = (0..50).map(|_| (r.gen_range(0..n), r.gen_range(1..=15))).collect();
        let plk = DMatrix::from_fn(50, 50, |a, b| {
            let (u, i) = tokens[a];
            let (v, j) = tokens[b];
            position_local_kernel(&fps[u], &fps[v], i, j, soft, win)
        });
        psd_of("position_local_kernel", plk.clone(), &mut report)?;
        let tk = DMatrix::from_fn(50, 50, |a, b| tanimoto(&fps[tokens[a].0], &fps[tokens[b].0]));
        psd_of("convex(position_local_kernel, tanimoto)", plk * 0.4 + tk * 0.6, &mut report)?;
        Ok(report.join(", "))
    })
}

fn band_exactness() -> Outcome {
    let mut r = rng(17);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.gen_range(1..=15);
        let m = r.gen_range(1..=15);
        let table: Vec<f64> = (0..n * m).map(|_| r.gen_range(0.0..=1.0)).collect();
        for t in [1, 2, 3, 5, 8] {
            let w = WindowParams::new(t).unwrap();
            let banded = pmdgak_indexed(n, m, w, |i, j| table[i * m + j]).unwrap();
            let dense = pmdgak_dense_indexed(n, m, w, |i, j| table[i * m + j]).unwrap();
            if !rel_close(banded, dense, 1e-12) && banded != dense {
                return Err(format!("n={n} m={m} T={t}: banded {banded} dense {dense}"));
            }
            if banded != dense {
                worst = worst.max((banded - dense).abs() / dense.abs());
            }
        }
    }
    Ok(format!("1000 comparisons, worst relative error {worst:.1e}"))
}

fn decoupling_contrast() -> Outcome {
    let local = |i: usize, j: usize| if i == 1 && j == 1 { 0.0 } else { 1.0 };
    let g = gak_indexed(2, 2, local).unwrap();
    let md = mdgak_indexed(2, 2, local).unwrap();
    if g == 0.0 && md == 2.0 {
        Ok(format!("gak {g}, md_gak {md}"))
    } else {
        Err(format!("gak {g}, md_gak {md}"))
    }
}

fn gp_correctness() -> Outcome {
    // closed-form single point
    let one = GramMatrix::square(vec!["x".into()], vec![1.0])
        .unwrap()
        .with_spec(KernelSpec::md_gak().with_jitter(0.0));
    let model = fit_regressor(&one, &[2.0], 1.0).map_err(|e| e.to_string())?;
    let ks = GramMatrix::new(vec!["t".into()], vec!["x".into()], vec![1.0], None, false).unwrap();
    let (mean, var) = predict_regressor(&model, &ks, &[1.0]).map_err(|e| e.to_string())?;
    if (mean[0] - 1.0).abs() > 1e-12 || (var[0] - 0.5).abs() > 1e-12 {
        return Err(format!("regression closed form: mean {} var {}", mean[0], var[0]));
    }

    // Laplace convergence on random problems
    let mut r = rng(23);
    let mut worst_grad = 0.0f64;
    let mut worst_quad = 0.0f64;
    let mut worst_var_excess = f64::NEG_INFINITY;
    for case in 0..50 {
        let amp = [0.25, 0.5, 1.0, 4.0][case % 4];
        let (g, pts) = random_se_gram(&mut r, 20, amp);
        let labels: Vec<u8> = (0..20).map(|_| u8::from(r.gen_bool(0.5))).collect();
        let st = fit_laplace(&g, &labels).map_err(|e| format!("case {case}: {e}"))?;
        worst_grad = worst_grad.max(st.grad_at_mode());
        if st.grad_at_mode() > 1e-6 {
            return Err(format!("case {case}: gradient {:e}", st.grad_at_mode()));
        }
        let test: Vec<[f64; 3]> = (0..5)
            .map(|_| [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)])
            .collect();
        let ksv = se_block(&test, &pts, amp);
        let ks = GramMatrix::new(
            (0..5).map(|i| format!("t{i}")).collect(),
            g.row_ids().to_vec(),
            ksv,
            None,
            false,
        )
        .unwrap();
        let kss = vec![amp; 5];
        let (mu, v) = predict_latent(&st, &ks, &kss).map_err(|e| e.to_string())?;
        let p = predict_laplace(&st, &ks, &kss).map_err(|e| e.to_string())?;
        for t in 0..5 {
            let oracle = simpson_expected_sigmoid(mu[t], v[t]);
            worst_quad = worst_quad.max((p[t] - oracle).abs());
            if (p[t] - oracle).abs() > 1e-6 {
                return Err(format!("case {case}: quadrature {} vs oracle {oracle}", p[t]));
            }
        }

        // regression on the same inputs: posterior variance within prior
        let y: Vec<f64> = (0..20).map(|_| r.gen_range(-2.0..2.0)).collect();
        let reg = fit_regressor(&g, &y, 0.1).map_err(|e| e.to_string())?;
        let (_, rv) = predict_regressor(&reg, &ks, &kss).map_err(|e| e.to_string())?;
        for t in 0..5 {
            worst_var_excess = worst_var_excess.max(rv[t] - kss[t]);
            if rv[t] > kss[t] {
                return Err(format!("case {case}: variance {} above prior {}", rv[t], kss[t]));
            }
        }
    }
    // mu = 1, var = 1: one training point with K = 1, f = 1 (a = 1), k* = 1, k** = 1 + 1/(1 + 1/w)
    let st = pepgak::gp::LaplaceState::from_mode(&one, &[1], &[1.0], 0.0).map_err(|e| e.to_string())?;
    let w0 = st.w()[0];
    let ks1 = GramMatrix::new(vec!["t".into()], vec!["x".into()], vec![1.0], None, false).unwrap();
    let kss1 = 1.0 + 1.0 / (1.0 + 1.0 / w0);
    let (m1, v1) = predict_latent(&st, &ks1, &[kss1]).map_err(|e| e.to_string())?;
    let p1 = predict_laplace(&st, &ks1, &[kss1]).map_err(|e| e.to_string())?[0];
    let o1 = simpson_expected_sigmoid(1.0, 1.0);
    if (m1[0] - 1.0).abs() > 1e-12 || (v1[0] - 1.0).abs() > 1e-12 || (p1 - o1).abs() > 1e-6 {
        return Err(format!("mu {} var {}: quadrature {p1} vs oracle {o1}", m1[0], v1[0]));
    }

    // zero latent mean through a one-point model with k* = 0
    let ks0 = GramMatrix::new(vec!["t".into()], vec!["x".into()], vec![0.0], None, false).unwrap();
    let st = fit_laplace(&one, &[1]).map_err(|e| e.to_string())?;
    let p0 = predict_laplace(&st, &ks0, &[1.0]).map_err(|e| e.to_string())?[0];
    if (p0 - 0.5).abs() > 1e-12 {
        return Err(format!("zero-mean prediction {p0}"));
    }
    Ok(format!(
        "closed form ok; max gradient {worst_grad:.1e}; max quadrature error {worst_quad:.1e}; max variance excess {worst_var_excess:.1e}"
    ))
}

fn metric_suite() -> Outcome {
    let mut r = rng(29);
    for case in 0..300 {
        let n = r.gen_range(1..=200);
        let p: Vec<f64> = (0..n).map(|_| (r.gen_range(0..=20) as f64) / 20.0).collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(0.4))).collect();
        let a = roc_auc(&p, &y).map_err(|e| e.to_string())?;
        let b = brute_force_auc(&p, &y);
        match (a, b) {
            (None, None) => {}
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
            _ => return Err(format!("case {case}: auc {a:?} vs brute force {b:?}")),
        }
    }
    let checks: Vec<(&str, f64, f64)> = vec![
        ("acc perfect", accuracy(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0]).unwrap(), 1.0),
        ("f1 perfect", f1(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0]).unwrap(), 1.0),
        ("auc perfect", roc_auc(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0]).unwrap().unwrap(), 1.0),
        ("brier perfect", brier(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0]).unwrap(), 0.0),
        ("brier 0.5", brier(&[0.5; 4], &[1, 0, 1, 0]).unwrap(), 0.25),
        ("auc ties", roc_auc(&[0.5; 4], &[1, 0, 1, 0]).unwrap().unwrap(), 0.5),
        ("auc 3 samples", roc_auc(&[0.9, 0.4, 0.35], &[1, 0, 1]).unwrap().unwrap(), 0.5),
        ("ece confident", ece(&[1.0, 0.0, 1.0], &[1, 0, 1], ECE_BINS).unwrap(), 0.0),
        (
            "ece calibrated",
            ece(&[0.7; 10], &[1, 1, 1, 1, 1, 1, 1, 0, 0, 0], ECE_BINS).unwrap(),
            0.0,
        ),
        ("ece half right", ece(&[1.0; 4], &[1, 0, 1, 0], ECE_BINS).unwrap(), 0.5),
        ("acc 3 of 4", accuracy(&[0.8, 0.6, 0.2, 0.4], &[1, 0, 0, 0]).unwrap(), 0.75),
        ("f1 2tp 1fp 1fn", f1(&[0.9, 0.8, 0.7, 0.1], &[1, 1, 0, 1]).unwrap(), 2.0 / 3.0),
    ];
    for (name, got, want) in &checks {
        if (got - want).abs() > 1e-12 {
            return Err(format!("{name}: {got} vs {want}"));
        }
    }
    Ok(format!("300 random AUC instances, {} tabulated values", checks.len()))
}

fn end_to_end() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    timed(Duration::from_secs(120), || {
        pool.install(|| {
            let ds = read_dataset_file(&fixture_path()).map_err(|e| e.to_string())?;
            let plan = split_label_stratified(&ds, 5, 0).map_err(|e| e.to_string())?;
            let cache = GramCache::new(&ds);
            let opts = CvOptions {
                grid: vec![Candidate::new(KernelSpec::md_gak())],
                objective: Objective::RocAuc,
                k_inner: 5,
                seed: 0,
            };
            let rep = nested_cv(&ds, &plan, &cache, &opts).map_err(|e| e.to_string())?;
            let auc = rep.aggregate["roc_auc"];
            if rep.folds.len() != 5 || auc.n != 5 {
                return Err(format!("{} folds, {} AUC values", rep.folds.len(), auc.n));
            }
            if auc.mean < 0.9 {
                return Err(format!("mean ROC-AUC {:.4} ± {:.4} < 0.9", auc.mean, auc.sem));
            }
            Ok(format!("mean ROC-AUC {:.4} ± {:.4} over 5 folds", auc.mean, auc.sem))
        })
    })
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("oracle equivalence", oracle_equivalence),
        ("delannoy values", delannoy),
        ("psd suite", psd_suite),
        ("band exactness", band_exactness),
        ("decoupling contrast", decoupling_contrast),
        ("gp correctness", gp_correctness),
        ("metric suite", metric_suite),
        ("end-to-end nested cv", end_to_end),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match std::panic::catch_unwind(f) {
            Ok(Ok(msg)) => println!("PASS  {name}: {msg}"),
            Ok(Err(msg)) => {
                failed += 1;
                println!("FAIL  {name}: {msg}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
