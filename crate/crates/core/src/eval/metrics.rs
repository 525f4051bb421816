//! Classification, calibration and regression metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Task;

pub const ECE_BINS: usize = 30;
pub const THRESHOLD: f64 = 0.5;

fn check(preds: &[f64], labels: &[u8]) -> Result<()> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(p) = preds.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Validation(format!("probability {p} outside [0, 1]")));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }
    Ok(())
}

fn predicted(p: f64) -> u8 {
    u8::from(p >= THRESHOLD)
}

pub fn accuracy(preds: &[f64], labels: &[u8]) -> Result<f64> {
    check(preds, labels)?;
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| predicted(p) == y)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// F1 of the positive (permeable) class. Zero when nothing is predicted
/// positive or there are no positives.
pub fn f1(preds: &[f64], labels: &[u8]) -> Result<f64> {
    check(preds, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        match (predicted(p), y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if tp + fp == 0 || denom == 0 {
        log::warn!("F1 undefined (no predicted positives); reporting 0");
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

/// Area under the ROC curve from midranks. `None` for single-class labels.
pub fn roc_auc(preds: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    check(preds, labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        log::warn!("ROC-AUC undefined for single-class labels");
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && preds[order[j + 1]] == preds[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok(Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64)))
}

pub fn brier(preds: &[f64], labels: &[u8]) -> Result<f64> {
    check(preds, labels)?;
    let s: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - f64::from(y)).powi(2))
        .sum();
    Ok(s / preds.len() as f64)
}

/// Expected calibration error over `bins` equal-width bins of the
/// predicted-class confidence `max(p, 1 - p)`.
pub fn ece(preds: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    check(preds, labels)?;
    if bins == 0 {
        return Err(Error::Validation("ECE needs at least one bin".into()));
    }
    let mut count = vec![0usize; bins];
    let mut correct = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    for (&p, &y) in preds.iter().zip(labels) {
        let c = p.max(1.0 - p);
        let b = ((c * bins as f64).floor() as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += c;
        if predicted(p) == y {
            correct[b] += 1;
        }
    }
    let n = preds.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let m = count[b] as f64;
        total += (m / n) * (correct[b] as f64 / m - conf[b] / m).abs();
    }
    Ok(total)
}

/// Counts of probabilities in `bins` equal-width bins over [0, 1].
pub fn histogram(preds: &[f64], bins: usize) -> Vec<usize> {
    let mut h = vec![0usize; bins];
    if bins == 0 {
        return h;
    }
    for &p in preds {
        let b = ((p.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let s: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((s / preds.len() as f64).sqrt())
}

/// All classification metrics keyed by name. `roc_auc` is absent when
/// undefined.
pub fn classification_metrics(preds: &[f64], labels: &[u8]) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    m.insert("accuracy".to_string(), accuracy(preds, labels)?);
    m.insert("f1".to_string(), f1(preds, labels)?);
    if let Some(a) = roc_auc(preds, labels)? {
        m.insert("roc_auc".to_string(), a);
    }
    m.insert("brier".to_string(), brier(preds, labels)?);
    m.insert("ece".to_string(), ece(preds, labels, ECE_BINS)?);
    Ok(m)
}

/// Model-selection criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    RocAuc,
    Accuracy,
    F1,
    Brier,
    Ece,
    Rmse,
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::RocAuc => "roc_auc",
            Objective::Accuracy => "accuracy",
            Objective::F1 => "f1",
            Objective::Brier => "brier",
            Objective::Ece => "ece",
            Objective::Rmse => "rmse",
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Objective::Rmse => Task::Regress,
            _ => Task::Classify,
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, Objective::RocAuc | Objective::Accuracy | Objective::F1)
    }

    /// Whether score `a` strictly beats `b`; `None` loses to everything.
    pub fn better(&self, a: Option<f64>, b: Option<f64>) -> bool {
        match (a, b) {
            (Some(_), None) => true,
            (None, _) => false,
            (Some(a), Some(b)) => {
                if self.higher_is_better() {
                    a > b
                } else {
                    a < b
                }
            }
        }
    }

    /// Score of predictions against real-valued truth (labels as 0.0/1.0).
    pub fn evaluate(&self, preds: &[f64], truth: &[f64]) -> Result<Option<f64>> {
        if *self == Objective::Rmse {
            return rmse(preds, truth).map(Some);
        }
        let labels: Vec<u8> = truth.iter().map(|&t| u8::from(t >= 0.5)).collect();
        Ok(match self {
            Objective::RocAuc => roc_auc(preds, &labels)?,
            Objective::Accuracy => Some(accuracy(preds, &labels)?),
            Objective::F1 => Some(f1(preds, &labels)?),
            Objective::Brier => Some(brier(preds, &labels)?),
            Objective::Ece => Some(ece(preds, &labels, ECE_BINS)?),
            Objective::Rmse => unreachable!(),
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "roc_auc" | "auc" => Objective::RocAuc,
            "accuracy" | "acc" => Objective::Accuracy,
            "f1" => Objective::F1,
            "brier" => Objective::Brier,
            "ece" => Objective::Ece,
            "rmse" => Objective::Rmse,
            _ => return Err(Error::Validation(format!("unknown objective {s:?}"))),
        })
    }
}
