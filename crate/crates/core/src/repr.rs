//! Fingerprints, peptides and datasets, plus the JSONL interchange format.
//!
//! A dataset file holds one JSON object per line. Two record kinds exist,
//! discriminated by `"kind"`:
//!
//! ```text
//! {"kind":"monomer","id":"A1","fp":[[17,2],[903,1]]}
//! {"kind":"peptide","id":"P1","monomers":["A1","A1"],"perm":-5.2,"mol_fp":null,
//!  "group":"g1","scaffold":null,"force_train":false}
//! ```
//!
//! Fingerprint pairs are `[feature_id, count]` sorted by feature id with
//! positive counts. Peptide lines may reference monomers defined later in the
//! file; references are resolved once the whole stream has been read.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PERMEABILITY_MIN: f64 = -10.0;
pub const PERMEABILITY_MAX: f64 = -4.0;
/// Peptides with log-permeability at or above this value are labelled permeable.
pub const PERMEABLE_THRESHOLD: f64 = -6.0;
pub const MIN_LENGTH: usize = 2;
pub const MAX_LENGTH: usize = 15;

/// Hashed count fingerprint: strictly increasing feature ids, counts >= 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct SparseCountVector {
    entries: Vec<(u64, u32)>,
}

impl SparseCountVector {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a vector from pairs that must already be sorted and positive.
    pub fn from_sorted(entries: Vec<(u64, u32)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::Validation(format!(
                    "fingerprint feature ids must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(id, _)) = entries.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Validation(format!(
                "fingerprint feature {id} has zero count"
            )));
        }
        Ok(Self { entries })
    }

    /// Builds a vector from unordered pairs, summing counts of repeated ids
    /// and dropping zero counts.
    pub fn from_counts<I: IntoIterator<Item = (u64, u32)>>(pairs: I) -> Self {
        let mut entries: Vec<(u64, u32)> = pairs.into_iter().filter(|(_, c)| *c > 0).collect();
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(u64, u32)> = Vec::with_capacity(entries.len());
        for (id, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == id => last.1 += c,
                _ => merged.push((id, c)),
            }
        }
        Self { entries: merged }
    }

    pub fn entries(&self) -> &[(u64, u32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inner product of the two count vectors (sorted merge).
    pub fn dot(&self, other: &Self) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += f64::from(a[i].1) * f64::from(b[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, c)| f64::from(c) * f64::from(c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonomerRecord {
    pub id: String,
    pub fingerprint: SparseCountVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeptideRecord {
    pub id: String,
    pub monomers: Vec<String>,
    /// Log-scale permeability, already clipped to [-10, -4] upstream.
    pub permeability: f64,
    pub molecule_fingerprint: Option<SparseCountVector>,
    /// Canonical-structure duplicate group.
    pub group_id: String,
    pub scaffold_id: Option<String>,
    /// Always allocate to the training partition in holdout splits.
    pub force_train: bool,
}

impl PeptideRecord {
    pub fn len(&self) -> usize {
        self.monomers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomers.is_empty()
    }

    pub fn label(&self) -> u8 {
        binary_label(self.permeability)
    }
}

/// 1 when the peptide counts as permeable (`p >= -6`), else 0.
pub fn binary_label(p: f64) -> u8 {
    u8::from(p >= PERMEABLE_THRESHOLD)
}

/// Monomer lookup table keyed by id.
#[derive(Debug, Clone, Default)]
pub struct MonomerTable {
    records: Vec<MonomerRecord>,
    index: HashMap<String, usize>,
}

impl PartialEq for MonomerTable {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl MonomerTable {
    pub fn new(records: Vec<MonomerRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, m) in records.iter().enumerate() {
            if index.insert(m.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate monomer id {:?}", m.id)));
            }
        }
        Ok(Self { records, index })
    }

    pub fn records(&self) -> &[MonomerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&MonomerRecord> {
        self.position(id).map(|i| &self.records[i])
    }

    /// Union of two tables. Shared ids must carry identical fingerprints.
    pub fn merge(&self, other: &MonomerTable) -> Result<MonomerTable> {
        let mut records = self.records.clone();
        for m in &other.records {
            match self.get(&m.id) {
                Some(existing) if existing.fingerprint != m.fingerprint => {
                    return Err(Error::Integrity(format!(
                        "monomer {:?} has different fingerprints in the two tables",
                        m.id
                    )));
                }
                Some(_) => {}
                None => records.push(m.clone()),
            }
        }
        MonomerTable::new(records)
    }

    /// Maps a monomer id sequence onto table positions.
    pub fn encode(&self, monomers: &[String]) -> Result<Vec<u32>> {
        monomers
            .iter()
            .map(|id| {
                self.position(id)
                    .map(|p| p as u32)
                    .ok_or_else(|| Error::Integrity(format!("unknown monomer {id:?}")))
            })
            .collect()
    }
}

/// Validated, immutable collection of monomers and peptides.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    monomers: MonomerTable,
    peptides: Vec<PeptideRecord>,
    peptide_index: HashMap<String, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.monomers == other.monomers && self.peptides == other.peptides
    }
}

impl Dataset {
    pub fn new(monomers: Vec<MonomerRecord>, peptides: Vec<PeptideRecord>) -> Result<Self> {
        let monomers = MonomerTable::new(monomers)?;
        let mut peptide_index = HashMap::with_capacity(peptides.len());
        for (i, p) in peptides.iter().enumerate() {
            if peptide_index.insert(p.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate peptide id {:?}", p.id)));
            }
            validate_peptide(p)?;
            for m in &p.monomers {
                if monomers.position(m).is_none() {
                    return Err(Error::Integrity(format!(
                        "peptide {:?} references unknown monomer {:?}",
                        p.id, m
                    )));
                }
            }
        }
        Ok(Self {
            monomers,
            peptides,
            peptide_index,
        })
    }

    pub fn monomers(&self) -> &MonomerTable {
        &self.monomers
    }

    pub fn peptides(&self) -> &[PeptideRecord] {
        &self.peptides
    }

    pub fn len(&self) -> usize {
        self.peptides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peptides.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.peptides.iter().map(PeptideRecord::label).collect()
    }

    pub fn peptide_ids(&self) -> Vec<String> {
        self.peptides.iter().map(|p| p.id.clone()).collect()
    }

    pub fn position(&self, peptide_id: &str) -> Option<usize> {
        self.peptide_index.get(peptide_id).copied()
    }

    /// Peptides at `indices` together with only the monomers they reference.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let peptides: Vec<PeptideRecord> = indices
            .iter()
            .map(|&i| {
                self.peptides
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Precondition(format!("peptide index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        let used: HashSet<&str> = peptides
            .iter()
            .flat_map(|p| p.monomers.iter().map(String::as_str))
            .collect();
        let monomers = self
            .monomers
            .records()
            .iter()
            .filter(|m| used.contains(m.id.as_str()))
            .cloned()
            .collect();
        Dataset::new(monomers, peptides)
    }
}

fn validate_peptide(p: &PeptideRecord) -> Result<()> {
    let n = p.monomers.len();
    if !(MIN_LENGTH..=MAX_LENGTH).contains(&n) {
        return Err(Error::Validation(format!(
            "peptide {:?} has length {n}, expected {MIN_LENGTH}..={MAX_LENGTH}",
            p.id
        )));
    }
    if !p.permeability.is_finite()
        || p.permeability < PERMEABILITY_MIN
        || p.permeability > PERMEABILITY_MAX
    {
        return Err(Error::Validation(format!(
            "peptide {:?} permeability {} outside [{PERMEABILITY_MIN}, {PERMEABILITY_MAX}]",
            p.id, p.permeability
        )));
    }
    Ok(())
}

/// `(n_negative, n_positive)` under [`binary_label`].
pub fn class_counts(ds: &Dataset) -> (usize, usize) {
    let pos = ds.peptides.iter().filter(|p| p.label() == 1).count();
    (ds.len() - pos, pos)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawRecord {
    Monomer {
        id: String,
        fp: Vec<(u64, u32)>,
    },
    Peptide {
        id: String,
        monomers: Vec<String>,
        perm: f64,
        mol_fp: Option<Vec<(u64, u32)>>,
        group: String,
        scaffold: Option<String>,
        force_train: bool,
    },
}

fn at_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
        other => other,
    })
}

/// Reads and validates a JSONL dataset.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut monomers = Vec::new();
    let mut peptides = Vec::new();
    let mut peptide_lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        match raw {
            RawRecord::Monomer { id, fp } => {
                let fingerprint = at_line(lineno, SparseCountVector::from_sorted(fp))?;
                monomers.push(MonomerRecord { id, fingerprint });
            }
            RawRecord::Peptide {
                id,
                monomers: seq,
                perm,
                mol_fp,
                group,
                scaffold,
                force_train,
            } => {
                let molecule_fingerprint = match mol_fp {
                    Some(fp) => Some(at_line(lineno, SparseCountVector::from_sorted(fp))?),
                    None => None,
                };
                let p = PeptideRecord {
                    id,
                    monomers: seq,
                    permeability: perm,
                    molecule_fingerprint,
                    group_id: group,
                    scaffold_id: scaffold,
                    force_train,
                };
                at_line(lineno, validate_peptide(&p))?;
                peptides.push(p);
                peptide_lines.push(lineno);
            }
        }
    }
    let table = MonomerTable::new(monomers)?;
    for (p, line) in peptides.iter().zip(&peptide_lines) {
        for m in &p.monomers {
            if table.position(m).is_none() {
                return Err(Error::Integrity(format!(
                    "line {line}: peptide {:?} references unknown monomer {:?}",
                    p.id, m
                )));
            }
        }
    }
    Dataset::new(table.records, peptides)
}

/// Writes `ds` in the JSONL interchange format: monomers first, then peptides.
pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for m in ds.monomers.records() {
        let raw = RawRecord::Monomer {
            id: m.id.clone(),
            fp: m.fingerprint.entries().to_vec(),
        };
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n")?;
    }
    for p in &ds.peptides {
        let raw = RawRecord::Peptide {
            id: p.id.clone(),
            monomers: p.monomers.clone(),
            perm: p.permeability,
            mol_fp: p.molecule_fingerprint.as_ref().map(|f| f.entries().to_vec()),
            group: p.group_id.clone(),
            scaffold: p.scaffold_id.clone(),
            force_train: p.force_train,
        };
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset_file(path: &std::path::Path) -> Result<Dataset> {
    let f = std::fs::File::open(path)?;
    parse_dataset(std::io::BufReader::new(f))
}
