//! Nested cross-validation and holdout evaluation of GP classifiers.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{classification_metrics, histogram, Objective, ECE_BINS};
use super::splits::{inner_folds, FoldPair, Partition, Scheme, SplitPlan};
use crate::error::{Error, Result};
use crate::gp::{fit_predict, select_hyperparams, Candidate, Targets};
use crate::gram::GramCache;
use crate::repr::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probability: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub selected: Candidate,
    /// Inner-CV score per grid point, in grid order.
    pub inner_scores: Vec<Option<f64>>,
    pub metrics: BTreeMap<String, f64>,
    pub predictions: Vec<Prediction>,
}

impl FoldResult {
    /// Metrics recomputed from the stored predictions.
    pub fn recompute_metrics(&self) -> Result<BTreeMap<String, f64>> {
        let (p, y) = split_predictions(&self.predictions);
        classification_metrics(&p, &y)
    }
}

pub fn split_predictions(preds: &[Prediction]) -> (Vec<f64>, Vec<u8>) {
    preds.iter().map(|p| (p.probability, p.label)).unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over folds divided by `sqrt(k)`; zero for a
    /// single fold.
    pub sem: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub aggregate: BTreeMap<String, Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub grid: Vec<Candidate>,
    pub objective: Objective,
    pub k_inner: usize,
    /// Base seed for inner splits; fold `f` uses `seed + 1 + f`.
    pub seed: u64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            sem: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sem = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, sem, n }
}

/// Mean and s.e.m. of every metric across folds. Folds where a metric is
/// undefined are left out of that metric's summary.
pub fn aggregate(folds: &[FoldResult]) -> BTreeMap<String, Summary> {
    let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for f in folds {
        for (k, v) in &f.metrics {
            per_metric.entry(k.clone()).or_default().push(*v);
        }
    }
    for (k, v) in &per_metric {
        if v.len() < folds.len() {
            log::warn!("{k} undefined on {} of {} folds", folds.len() - v.len(), folds.len());
        }
    }
    per_metric
        .into_iter()
        .map(|(k, v)| (k, summarize(&v)))
        .collect()
}

/// Fails if any group id (group scheme) or scaffold id (scaffold scheme)
/// occurs on both sides of a train/test split.
pub fn check_leakage(ds: &Dataset, scheme: Scheme, train: &[usize], test: &[usize]) -> Result<()> {
    let peps = ds.peptides();
    let key = |i: usize| -> Option<&str> {
        match scheme {
            Scheme::GroupStratified => Some(peps[i].group_id.as_str()),
            Scheme::Scaffold811 => peps[i].scaffold_id.as_deref(),
            _ => None,
        }
    };
    let seen: std::collections::HashSet<&str> = train.iter().filter_map(|&i| key(i)).collect();
    for &i in test {
        if let Some(k) = key(i) {
            if seen.contains(k) {
                return Err(Error::Integrity(format!(
                    "leakage: {k:?} appears in both train and test (peptide {:?})",
                    peps[i].id
                )));
            }
        }
    }
    Ok(())
}

/// Runs the outer protocol described by `plan`. For k-fold schemes each
/// outer-train slice is split again with the same scheme for model
/// selection; holdout schemes select on the validation partition. The
/// selected candidate is refitted on the outer-train positions and scored on
/// the outer test.
pub fn nested_cv(
    ds: &Dataset,
    plan: &SplitPlan,
    cache: &GramCache<'_>,
    opts: &CvOptions,
) -> Result<CvReport> {
    plan.validate(ds)?;
    if opts.grid.is_empty() {
        return Err(Error::Validation("hyperparameter grid is empty".into()));
    }
    let labels = ds.labels();
    let targets = Targets::Labels(&labels);
    let ids = ds.peptide_ids();

    let outer: Vec<(Vec<usize>, Vec<usize>, Vec<FoldPair>)> =
        if plan.scheme.is_kfold() {
            plan.outer_folds()
                .into_iter()
                .enumerate()
                .map(|(f, (train, test))| {
                    let inner = if opts.grid.len() > 1 {
                        inner_folds(ds, plan.scheme, &train, opts.k_inner, fold_seed(opts.seed, f))?
                    } else {
                        Vec::new()
                    };
                    Ok((train, test, inner))
                })
                .collect::<Result<_>>()?
        } else {
            let train = plan.partition_indices(Partition::Train);
            let val = plan.partition_indices(Partition::Validation);
            let test = plan.partition_indices(Partition::Test);
            let inner = if opts.grid.len() > 1 && !val.is_empty() {
                vec![(train.clone(), val)]
            } else {
                Vec::new()
            };
            vec![(train, test, inner)]
        };

    let mut folds = Vec::with_capacity(outer.len());
    for (f, (train, test, inner)) in outer.into_iter().enumerate() {
        check_leakage(ds, plan.scheme, &train, &test)?;
        for (itr, ite) in &inner {
            check_leakage(ds, plan.scheme, itr, ite)?;
        }
        if test.is_empty() {
            return Err(Error::Validation(format!("outer fold {f} has an empty test set")));
        }
        let (selected, inner_scores) = if inner.is_empty() {
            (opts.grid[0].clone(), vec![None; opts.grid.len()])
        } else {
            let sel = select_hyperparams(cache, &opts.grid, targets, &inner, opts.objective)?;
            (sel.candidate, sel.scores)
        };
        log::info!("outer fold {f}: selected {}", selected.label());
        let probs = fit_predict(cache, &selected, targets, &train, &test)?;
        let predictions: Vec<Prediction> = test
            .iter()
            .zip(&probs)
            .map(|(&i, &p)| Prediction {
                id: ids[i].clone(),
                probability: p,
                label: labels[i],
            })
            .collect();
        let (p, y) = split_predictions(&predictions);
        let metrics = classification_metrics(&p, &y)?;
        folds.push(FoldResult {
            fold: f,
            selected,
            inner_scores,
            metrics,
            predictions,
        });
    }
    let aggregate = aggregate(&folds);
    Ok(CvReport { folds, aggregate })
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add(1 + fold as u64)
}

pub fn write_fold_json(fold: &FoldResult, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, fold)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_fold_json(path: &Path) -> Result<FoldResult> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

/// `metric,mean,sem` rows at full precision.
pub fn write_aggregate_csv<W: Write>(agg: &BTreeMap<String, Summary>, mut out: W) -> Result<()> {
    writeln!(out, "metric,mean,sem,n")?;
    for (k, s) in agg {
        writeln!(out, "{k},{:?},{:?},{}", s.mean, s.sem, s.n)?;
    }
    Ok(())
}

/// Counts of test-set probabilities in equal-width bins, pooled over folds.
pub fn write_histogram_csv<W: Write>(folds: &[FoldResult], mut out: W) -> Result<()> {
    let probs: Vec<f64> = folds
        .iter()
        .flat_map(|f| f.predictions.iter().map(|p| p.probability))
        .collect();
    let counts = histogram(&probs, ECE_BINS);
    writeln!(out, "bin,lower,upper,count")?;
    for (b, c) in counts.iter().enumerate() {
        let lo = b as f64 / ECE_BINS as f64;
        let hi = (b + 1) as f64 / ECE_BINS as f64;
        writeln!(out, "{b},{lo:?},{hi:?},{c}")?;
    }
    Ok(())
}
