//! Inner-CV hyperparameter selection over a grid of kernel specs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::laplace::{fit_laplace, predict_laplace};
use super::regression::{fit_regressor_with, predict_regressor, RegressionOptions};
use crate::error::{Error, Result};
use crate::eval::metrics::Objective;
use crate::gram::GramCache;
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Regress,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "regress" => Ok(Task::Regress),
            _ => Err(Error::Validation(format!("unknown task {s:?}"))),
        }
    }
}

/// One grid point. `eta2` is the observation noise and only used for
/// regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub spec: KernelSpec,
    pub eta2: Option<f64>,
}

impl Candidate {
    pub fn new(spec: KernelSpec) -> Self {
        Self { spec, eta2: None }
    }

    pub fn label(&self) -> String {
        match self.eta2 {
            Some(e) => format!("{} eta2={e}", self.spec.label()),
            None => self.spec.label(),
        }
    }
}

/// Targets for every dataset position.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [u8]),
    Values(&'a [f64]),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(y) => y.len(),
            Targets::Values(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn task(&self) -> Task {
        match self {
            Targets::Labels(_) => Task::Classify,
            Targets::Values(_) => Task::Regress,
        }
    }

    /// Targets at the given positions as reals.
    pub fn gather(&self, idx: &[usize]) -> Vec<f64> {
        match self {
            Targets::Labels(y) => idx.iter().map(|&i| f64::from(y[i])).collect(),
            Targets::Values(y) => idx.iter().map(|&i| y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Position of the winner in the grid.
    pub best: usize,
    pub candidate: Candidate,
    /// Inner-CV mean objective per grid point; `None` when the candidate
    /// failed on some fold or the objective was undefined on every fold.
    pub scores: Vec<Option<f64>>,
}

/// Fits on `train` and predicts at `test` (dataset positions). Returns
/// probabilities for classification and posterior means for regression.
pub fn fit_predict(
    cache: &GramCache<'_>,
    candidate: &Candidate,
    targets: Targets<'_>,
    train: &[usize],
    test: &[usize],
) -> Result<Vec<f64>> {
    let k = cache.block(&candidate.spec, train, train)?;
    let ks = cache.block(&candidate.spec, test, train)?;
    let kss = cache.diagonal(&candidate.spec, test)?;
    match targets {
        Targets::Labels(y) => {
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let state = fit_laplace(&k, &yt)?;
            predict_laplace(&state, &ks, &kss)
        }
        Targets::Values(y) => {
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let eta2 = candidate.eta2.ok_or_else(|| {
                Error::Validation("regression candidates need a noise variance".into())
            })?;
            let model = fit_regressor_with(&k, &yt, eta2, RegressionOptions::default())?;
            Ok(predict_regressor(&model, &ks, &kss)?.0)
        }
    }
}

/// Scores every candidate by its mean objective over the inner folds, each
/// given as `(train, test)` dataset positions, and returns the best one.
/// Ties go to the earlier grid point.
pub fn select_hyperparams(
    cache: &GramCache<'_>,
    grid: &[Candidate],
    targets: Targets<'_>,
    folds: &[(Vec<usize>, Vec<usize>)],
    objective: Objective,
) -> Result<SelectionResult> {
    if grid.is_empty() {
        return Err(Error::Validation("hyperparameter grid is empty".into()));
    }
    if folds.is_empty() {
        return Err(Error::Validation("no inner folds".into()));
    }
    if objective.task() != targets.task() {
        return Err(Error::Validation(format!(
            "objective {} does not apply to this task",
            objective.name()
        )));
    }
    for c in grid {
        c.spec.validate()?;
    }
    // Compute every distinct Gram once, sequentially, before fanning out.
    for c in grid {
        cache.base(&c.spec)?;
    }

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();
    let outcomes: Vec<Option<Option<f64>>> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let (train, test) = &folds[f];
            let preds = match fit_predict(cache, &grid[c], targets, train, test) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("candidate {} failed on inner fold {f}: {e}", grid[c].label());
                    return None;
                }
            };
            let truth = targets.gather(test);
            match objective.evaluate(&preds, &truth) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("objective failed for {} on inner fold {f}: {e}", grid[c].label());
                    None
                }
            }
        })
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    for c in 0..grid.len() {
        let per_fold = &outcomes[c * folds.len()..(c + 1) * folds.len()];
        if per_fold.iter().any(Option::is_none) {
            scores.push(None);
            continue;
        }
        let defined: Vec<f64> = per_fold.iter().filter_map(|o| o.flatten()).collect();
        if defined.is_empty() {
            scores.push(None);
        } else {
            scores.push(Some(defined.iter().sum::<f64>() / defined.len() as f64));
        }
    }

    let mut best = 0;
    for c in 1..grid.len() {
        if objective.better(scores[c], scores[best]) {
            best = c;
        }
    }
    if scores[best].is_none() {
        log::warn!("no candidate produced a valid inner-CV score; keeping the first grid point");
    }
    Ok(SelectionResult {
        best,
        candidate: grid[best].clone(),
        scores,
    })
}
