//! Split generators: label- and group-stratified k-fold, and 8:1:1 random and
//! scaffold holdouts.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repr::{Dataset, PeptideRecord};

/// `(train, test)` dataset positions.
pub type FoldPair = (Vec<usize>, Vec<usize>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    LabelStratified,
    GroupStratified,
    Random811,
    Scaffold811,
}

impl Scheme {
    pub fn is_kfold(&self) -> bool {
        matches!(self, Scheme::LabelStratified | Scheme::GroupStratified)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    Fold(usize),
    Part(Partition),
}

/// Assignment of every peptide (in dataset order) to a fold or partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: Scheme,
    /// Number of folds for k-fold schemes, 1 for holdouts.
    pub k: usize,
    pub seed: u64,
    pub ids: Vec<String>,
    pub assignments: Vec<Assignment>,
}

impl SplitPlan {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.positions(|a| a == Assignment::Fold(fold))
    }

    pub fn partition_indices(&self, part: Partition) -> Vec<usize> {
        self.positions(|a| a == Assignment::Part(part))
    }

    fn positions(&self, pred: impl Fn(Assignment) -> bool) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| pred(a))
            .map(|(i, _)| i)
            .collect()
    }

    /// `(train, test)` positions per outer evaluation. For k-fold schemes one
    /// pair per fold; for holdouts a single pair of train and test.
    pub fn outer_folds(&self) -> Vec<FoldPair> {
        if self.scheme.is_kfold() {
            (0..self.k)
                .map(|f| {
                    let test = self.fold_indices(f);
                    let train = self.positions(|a| a != Assignment::Fold(f));
                    (train, test)
                })
                .collect()
        } else {
            vec![(
                self.partition_indices(Partition::Train),
                self.partition_indices(Partition::Test),
            )]
        }
    }

    /// Checks that the plan covers `ds` exactly and honours the grouping
    /// constraints of its scheme.
    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.ids != ds.peptide_ids() || self.assignments.len() != self.ids.len() {
            return Err(Error::Integrity("split plan does not cover the dataset".into()));
        }
        for a in &self.assignments {
            match (self.scheme.is_kfold(), a) {
                (true, Assignment::Fold(f)) if *f < self.k => {}
                (false, Assignment::Part(_)) => {}
                _ => {
                    return Err(Error::Integrity(format!(
                        "assignment {a:?} invalid for scheme {:?}",
                        self.scheme
                    )))
                }
            }
        }
        let peps = ds.peptides();
        match self.scheme {
            Scheme::GroupStratified => {
                same_key_same_tag(peps, &self.assignments, |p| Some(p.group_id.as_str()), "group")
            }
            Scheme::Scaffold811 => {
                same_key_same_tag(peps, &self.assignments, |p| p.scaffold_id.as_deref(), "scaffold")?;
                self.check_force_train(peps)
            }
            Scheme::Random811 => self.check_force_train(peps),
            Scheme::LabelStratified => Ok(()),
        }
    }

    fn check_force_train(&self, peps: &[PeptideRecord]) -> Result<()> {
        for (p, a) in peps.iter().zip(&self.assignments) {
            if p.force_train && *a != Assignment::Part(Partition::Train) {
                return Err(Error::Integrity(format!(
                    "force_train peptide {:?} is not in train",
                    p.id
                )));
            }
        }
        Ok(())
    }
}

fn same_key_same_tag<'a>(
    peps: &'a [PeptideRecord],
    tags: &[Assignment],
    key: impl Fn(&'a PeptideRecord) -> Option<&'a str>,
    what: &str,
) -> Result<()> {
    let mut seen: HashMap<&str, Assignment> = HashMap::new();
    for (p, &a) in peps.iter().zip(tags) {
        if let Some(k) = key(p) {
            if let Some(&prev) = seen.get(k) {
                if prev != a {
                    return Err(Error::Integrity(format!("{what} {k:?} spans {prev:?} and {a:?}")));
                }
            } else {
                seen.insert(k, a);
            }
        }
    }
    Ok(())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Validation(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Validation(format!("{k} folds for {n} peptides")));
    }
    Ok(())
}

/// Fold per peptide; each class is shuffled and dealt round-robin so fold
/// sizes and per-fold class counts differ by at most one.
pub fn label_stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    check_k(k, labels.len())?;
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    let minority = pos.len().min(neg.len());
    if minority == 0 {
        return Err(Error::Validation("label stratification needs both classes".into()));
    }
    if k > minority {
        return Err(Error::Validation(format!(
            "{k} folds but the minority class has {minority} peptides"
        )));
    }
    let mut r = rng(seed);
    pos.shuffle(&mut r);
    neg.shuffle(&mut r);
    let mut fold = vec![0; labels.len()];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        fold[i] = slot % k;
    }
    Ok(fold)
}

pub fn split_label_stratified(ds: &Dataset, k: usize, seed: u64) -> Result<SplitPlan> {
    let folds = label_stratified_folds(&ds.labels(), k, seed)?;
    Ok(SplitPlan {
        scheme: Scheme::LabelStratified,
        k,
        seed,
        ids: ds.peptide_ids(),
        assignments: folds.into_iter().map(Assignment::Fold).collect(),
    })
}

/// Fold per peptide with whole groups kept together. Groups are placed
/// largest first (positive-rich first among equal sizes, then seeded order).
/// A group may only go to a fold whose size keeps the max-min spread within
/// the largest group size; among those, positive groups pick the fold with
/// fewest positives and negative-only groups the fold with fewest negatives,
/// then the smallest fold, then the lowest index.
pub fn group_stratified_folds(
    labels: &[u8],
    groups: &[&str],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if labels.len() != groups.len() {
        return Err(Error::DimensionMismatch("one group id per label required".into()));
    }
    check_k(k, labels.len())?;
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(*g).or_default().push(i);
    }
    let mut order: Vec<(&str, Vec<usize>)> = members.into_iter().collect();
    order.shuffle(&mut rng(seed));
    let positives = |m: &[usize]| m.iter().filter(|&&i| labels[i] == 1).count();
    order.sort_by(|a, b| {
        b.1.len()
            .cmp(&a.1.len())
            .then_with(|| positives(&b.1).cmp(&positives(&a.1)))
    });
    let largest = order.first().map_or(0, |g| g.1.len());
    if largest * k > labels.len() {
        log::warn!("group of {largest} peptides exceeds n/k; fold sizes will be uneven");
    }

    let mut size = vec![0usize; k];
    let mut pos = vec![0usize; k];
    let mut fold = vec![0; labels.len()];
    for (_, m) in &order {
        let g = m.len();
        let p = positives(m);
        let min_size = *size.iter().min().expect("k >= 2");
        let limit = min_size + largest - g;
        let best = (0..k)
            .filter(|&f| size[f] <= limit)
            .min_by_key(|&f| {
                let primary = if p > 0 { pos[f] } else { size[f] - pos[f] };
                (primary, size[f], f)
            })
            .expect("the smallest fold is always a candidate");
        size[best] += g;
        pos[best] += p;
        for &i in m {
            fold[i] = best;
        }
    }
    Ok(fold)
}

pub fn split_group_stratified(ds: &Dataset, k: usize, seed: u64) -> Result<SplitPlan> {
    let groups: Vec<&str> = ds.peptides().iter().map(|p| p.group_id.as_str()).collect();
    let folds = group_stratified_folds(&ds.labels(), &groups, k, seed)?;
    Ok(SplitPlan {
        scheme: Scheme::GroupStratified,
        k,
        seed,
        ids: ds.peptide_ids(),
        assignments: folds.into_iter().map(Assignment::Fold).collect(),
    })
}

/// Random 8:1:1 holdout. Validation and test each receive
/// `round(0.1 * eligible)` of the peptides not flagged `force_train`.
pub fn split_random_811(ds: &Dataset, seed: u64) -> Result<SplitPlan> {
    let peps = ds.peptides();
    let mut eligible: Vec<usize> = (0..peps.len()).filter(|&i| !peps[i].force_train).collect();
    if eligible.is_empty() && !peps.is_empty() {
        log::warn!("every peptide is force_train; validation and test are empty");
    }
    eligible.shuffle(&mut rng(seed));
    let quota = (0.1 * eligible.len() as f64).round() as usize;
    let mut tags = vec![Assignment::Part(Partition::Train); peps.len()];
    for &i in &eligible[..quota] {
        tags[i] = Assignment::Part(Partition::Validation);
    }
    for &i in &eligible[quota..2 * quota] {
        tags[i] = Assignment::Part(Partition::Test);
    }
    Ok(SplitPlan {
        scheme: Scheme::Random811,
        k: 1,
        seed,
        ids: ds.peptide_ids(),
        assignments: tags,
    })
}

/// Deterministic scaffold holdout. Within each length bucket, scaffolds are
/// taken largest first into train until it holds at least 80% of the bucket;
/// the remaining scaffolds go smallest first into test until it holds at
/// least 10%, and the rest into validation. Scaffolds containing a
/// `force_train` peptide always go to train.
pub fn split_scaffold_811(ds: &Dataset) -> Result<SplitPlan> {
    let peps = ds.peptides();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in peps.iter().enumerate() {
        let s = p.scaffold_id.as_deref().ok_or_else(|| {
            Error::Validation(format!("peptide {:?} has no scaffold id", p.id))
        })?;
        members.entry(s).or_default().push(i);
    }
    // a scaffold shared across lengths joins the bucket of its most common
    // length (shortest on ties) so it is never split
    let mut buckets: BTreeMap<usize, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (s, m) in members {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &i in &m {
            *counts.entry(peps[i].len()).or_default() += 1;
        }
        let len = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(l, _)| *l)
            .unwrap_or(0);
        buckets.entry(len).or_default().insert(s, m);
    }
    let mut tags = vec![Assignment::Part(Partition::Train); peps.len()];
    for scaffolds in buckets.values() {
        let n: usize = scaffolds.values().map(Vec::len).sum();
        let train_quota = 0.8 * n as f64;
        let test_quota = 0.1 * n as f64;
        let mut by_size: Vec<(&str, &Vec<usize>)> =
            scaffolds.iter().map(|(s, m)| (*s, m)).collect();
        by_size.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(b.0)));

        let forced: HashSet<&str> = by_size
            .iter()
            .filter(|(_, m)| m.iter().any(|&i| peps[i].force_train))
            .map(|(s, _)| *s)
            .collect();
        let mut train = forced
            .iter()
            .map(|s| scaffolds[s].len())
            .sum::<usize>();
        let mut rest = Vec::new();
        for (s, m) in &by_size {
            if forced.contains(s) {
                continue;
            }
            if (train as f64) < train_quota {
                train += m.len();
            } else {
                rest.push(*m);
            }
        }
        rest.reverse();
        let mut test = 0usize;
        for m in rest {
            let part = if (test as f64) < test_quota {
                test += m.len();
                Partition::Test
            } else {
                Partition::Validation
            };
            for &i in m {
                tags[i] = Assignment::Part(part);
            }
        }
    }
    if !tags.contains(&Assignment::Part(Partition::Test)) && !peps.is_empty() {
        log::warn!("scaffold split produced an empty test partition");
    }
    Ok(SplitPlan {
        scheme: Scheme::Scaffold811,
        k: 1,
        seed: 0,
        ids: ds.peptide_ids(),
        assignments: tags,
    })
}

/// Outer plan for a scheme.
pub fn make_plan(ds: &Dataset, scheme: Scheme, k: usize, seed: u64) -> Result<SplitPlan> {
    match scheme {
        Scheme::LabelStratified => split_label_stratified(ds, k, seed),
        Scheme::GroupStratified => split_group_stratified(ds, k, seed),
        Scheme::Random811 => split_random_811(ds, seed),
        Scheme::Scaffold811 => split_scaffold_811(ds),
    }
}

/// Inner `(train, test)` folds over the dataset positions `outer_train`,
/// reusing the outer scheme. Holdout schemes have no inner k-fold; callers
/// select on their validation partition instead.
pub fn inner_folds(
    ds: &Dataset,
    scheme: Scheme,
    outer_train: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<FoldPair>> {
    let peps = ds.peptides();
    let labels: Vec<u8> = outer_train.iter().map(|&i| peps[i].label()).collect();
    let folds = match scheme {
        Scheme::LabelStratified => label_stratified_folds(&labels, k, seed)?,
        Scheme::GroupStratified => {
            let groups: Vec<&str> = outer_train.iter().map(|&i| peps[i].group_id.as_str()).collect();
            group_stratified_folds(&labels, &groups, k, seed)?
        }
        Scheme::Random811 | Scheme::Scaffold811 => {
            return Err(Error::Precondition(
                "holdout schemes select on the validation partition".into(),
            ))
        }
    };
    Ok((0..k)
        .map(|f| {
            let pick = |keep: bool| -> Vec<usize> {
                outer_train
                    .iter()
                    .zip(&folds)
                    .filter(|(_, &g)| (g == f) == keep)
                    .map(|(&i, _)| i)
                    .collect()
            };
            (pick(false), pick(true))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five_balanced() {
        let labels = [1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
        let folds = label_stratified_folds(&labels, 5, 7).unwrap();
        for f in 0..5 {
            let pos = (0..10).filter(|&i| folds[i] == f && labels[i] == 1).count();
            let neg = (0..10).filter(|&i| folds[i] == f && labels[i] == 0).count();
            assert_eq!((pos, neg), (1, 1));
        }
        assert_eq!(folds, label_stratified_folds(&labels, 5, 7).unwrap());
    }

    #[test]
    fn too_many_folds() {
        assert!(label_stratified_folds(&[1, 0, 0, 0], 2, 0).is_err());
        assert!(label_stratified_folds(&[1, 1, 0, 0], 1, 0).is_err());
        assert!(label_stratified_folds(&[1, 1, 1, 1], 2, 0).is_err());
    }

    #[test]
    fn one_group_holds_all_positives() {
        let labels = [1, 1, 1, 0, 0, 0, 0, 0, 0];
        let groups = ["g", "g", "g", "a", "b", "c", "d", "e", "f"];
        let folds = group_stratified_folds(&labels, &groups, 3, 1).unwrap();
        assert!(folds[0] == folds[1] && folds[1] == folds[2]);
    }

    #[test]
    fn singleton_groups_stratify() {
        let labels: Vec<u8> = (0..23).map(|i| u8::from(i % 3 == 0)).collect();
        let ids: Vec<String> = (0..23).map(|i| format!("g{i}")).collect();
        let groups: Vec<&str> = ids.iter().map(String::as_str).collect();
        let folds = group_stratified_folds(&labels, &groups, 5, 3).unwrap();
        let pos: Vec<usize> =
            (0..5).map(|f| (0..23).filter(|&i| folds[i] == f && labels[i] == 1).count()).collect();
        let size: Vec<usize> = (0..5).map(|f| folds.iter().filter(|&&g| g == f).count()).collect();
        assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
        assert!(size.iter().max().unwrap() - size.iter().min().unwrap() <= 1);
    }
}
