//! Gram matrices: assembly, eigenvalue checks and the binary cache format.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::cosine_normalize;
use crate::error::{Error, Result};
use crate::gp::mix_kernels;
use crate::kernel::{EncodedPeptide, KernelFamily, KernelSpec, PeptideKernel, DEFAULT_JITTER};
use crate::repr::{Dataset, MonomerTable, PeptideRecord};

/// Dense row-major kernel matrix with the ids and spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    values: Vec<f64>,
    spec: Option<KernelSpec>,
    normalized: bool,
}

impl GramMatrix {
    pub fn new(
        row_ids: Vec<String>,
        col_ids: Vec<String>,
        values: Vec<f64>,
        spec: Option<KernelSpec>,
        normalized: bool,
    ) -> Result<Self> {
        if values.len() != row_ids.len() * col_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} matrix",
                values.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        Ok(Self {
            row_ids,
            col_ids,
            values,
            spec,
            normalized,
        })
    }

    /// Square matrix over `ids` without provenance.
    pub fn square(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        Self::new(ids.clone(), ids, values, None, false)
    }

    pub fn from_dmatrix(row_ids: Vec<String>, col_ids: Vec<String>, m: &DMatrix<f64>) -> Result<Self> {
        let values = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self::new(row_ids, col_ids, values, None, false)
    }

    pub fn with_spec(mut self, spec: KernelSpec) -> Self {
        self.normalized = spec.normalize;
        self.spec = Some(spec);
        self
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[String] {
        &self.col_ids
    }

    pub fn nrows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn ncols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        self.spec.as_ref()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Training-diagonal jitter from the kernel spec, or the library default.
    pub fn jitter(&self) -> f64 {
        self.spec.as_ref().map_or(DEFAULT_JITTER, |s| s.jitter)
    }

    pub fn is_square(&self) -> bool {
        self.row_ids == self.col_ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.col_ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.col_ids.len();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows(), self.ncols(), &self.values)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    /// Submatrix at the given row and column positions.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> GramMatrix {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let r = self.row(i);
            values.extend(cols.iter().map(|&j| r[j]));
        }
        GramMatrix {
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            col_ids: cols.iter().map(|&j| self.col_ids[j].clone()).collect(),
            values,
            spec: self.spec.clone(),
            normalized: self.normalized,
        }
    }

    /// Entrywise scaling; the kernel spec amplitude is multiplied accordingly.
    pub fn scaled(&self, factor: f64) -> GramMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        if let Some(s) = out.spec.as_mut() {
            s.amplitude *= factor;
        }
        out
    }

    /// Replaces the provenance spec without touching values.
    pub fn relabel(mut self, spec: Option<KernelSpec>) -> Self {
        self.spec = spec;
        self
    }
}

/// Gram over peptide ids of one dataset.
pub fn gram(rows: &[String], cols: &[String], spec: &KernelSpec, ds: &Dataset) -> Result<GramMatrix> {
    let lookup = |ids: &[String]| -> Result<Vec<&PeptideRecord>> {
        ids.iter()
            .map(|id| {
                ds.position(id)
                    .map(|i| &ds.peptides()[i])
                    .ok_or_else(|| Error::Integrity(format!("unknown peptide id {id:?}")))
            })
            .collect()
    };
    let r = lookup(rows)?;
    let c = lookup(cols)?;
    gram_between(&r, &c, ds.monomers(), spec)
}

/// Gram over all peptides of a dataset.
pub fn full_gram(ds: &Dataset, spec: &KernelSpec) -> Result<GramMatrix> {
    let all: Vec<&PeptideRecord> = ds.peptides().iter().collect();
    gram_between(&all, &all, ds.monomers(), spec)
}

/// Gram between two peptide lists whose monomers resolve in `monomers`.
/// When both lists carry the same ids only the upper triangle is evaluated.
pub fn gram_between(
    rows: &[&PeptideRecord],
    cols: &[&PeptideRecord],
    monomers: &MonomerTable,
    spec: &KernelSpec,
) -> Result<GramMatrix> {
    spec.validate()?;
    let row_ids: Vec<String> = rows.iter().map(|p| p.id.clone()).collect();
    let col_ids: Vec<String> = cols.iter().map(|p| p.id.clone()).collect();
    if let KernelFamily::Convex {
        alpha,
        first,
        second,
    } = &spec.family
    {
        let g1 = gram_between(rows, cols, monomers, first)?;
        let g2 = gram_between(rows, cols, monomers, second)?;
        let mixed = mix_kernels(&g1, &g2, *alpha)?;
        let mut out = mixed.scaled(spec.amplitude);
        out.spec = Some(spec.clone());
        out.normalized = first.normalize && second.normalize;
        return Ok(out);
    }

    let kernel = PeptideKernel::new(&spec.family, monomers)?;
    let er = encode_all(rows, monomers)?;
    let symmetric = row_ids == col_ids;
    let (nr, nc) = (rows.len(), cols.len());

    let mut values = vec![0.0; nr * nc];
    if symmetric {
        let upper: Vec<Vec<f64>> = (0..nr)
            .into_par_iter()
            .map(|i| {
                (i..nr)
                    .map(|j| kernel.eval(&er[i], &er[j]))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for (i, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + off;
                values[i * nc + j] = v;
                values[j * nc + i] = v;
            }
        }
        if spec.normalize {
            let diag: Vec<f64> = (0..nr).map(|i| values[i * nc + i]).collect();
            for (i, &d) in diag.iter().enumerate() {
                if d.is_nan() || d <= 0.0 {
                    return Err(Error::Normalization(format!("peptide {:?}", row_ids[i])));
                }
            }
            for i in 0..nr {
                for j in 0..nc {
                    values[i * nc + j] = if i == j {
                        1.0
                    } else {
                        cosine_normalize(values[i * nc + j], diag[i], diag[j])?
                    };
                }
            }
        }
    } else {
        let ec = encode_all(cols, monomers)?;
        let rows_out: Vec<Vec<f64>> = (0..nr)
            .into_par_iter()
            .map(|i| {
                ec.iter()
                    .map(|b| kernel.eval(&er[i], b))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for (i, row) in rows_out.into_iter().enumerate() {
            values[i * nc..(i + 1) * nc].copy_from_slice(&row);
        }
        if spec.normalize {
            let self_sim = |es: &[EncodedPeptide<'_>]| -> Result<Vec<f64>> {
                es.par_iter().map(|e| kernel.eval(e, e)).collect()
            };
            let dr = self_sim(&er)?;
            let dc = self_sim(&ec)?;
            for i in 0..nr {
                for j in 0..nc {
                    values[i * nc + j] = cosine_normalize(values[i * nc + j], dr[i], dc[j])
                        .map_err(|_| {
                            Error::Normalization(format!(
                                "peptide pair {:?}/{:?}",
                                row_ids[i], col_ids[j]
                            ))
                        })?;
                }
            }
        }
    }
    if spec.amplitude != 1.0 {
        values.iter_mut().for_each(|v| *v *= spec.amplitude);
    }
    Ok(GramMatrix {
        row_ids,
        col_ids,
        values,
        spec: Some(spec.clone()),
        normalized: spec.normalize,
    })
}

fn encode_all<'a>(
    ps: &[&'a PeptideRecord],
    monomers: &MonomerTable,
) -> Result<Vec<EncodedPeptide<'a>>> {
    ps.iter().map(|p| EncodedPeptide::new(p, monomers)).collect()
}

/// Prior variances `k(x, x)` for each peptide.
pub fn self_similarities(
    peptides: &[&PeptideRecord],
    monomers: &MonomerTable,
    spec: &KernelSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    match &spec.family {
        KernelFamily::Convex {
            alpha,
            first,
            second,
        } => {
            let a = self_similarities(peptides, monomers, first)?;
            let b = self_similarities(peptides, monomers, second)?;
            Ok(a.iter()
                .zip(&b)
                .map(|(x, y)| spec.amplitude * (alpha * x + (1.0 - alpha) * y))
                .collect())
        }
        family => {
            if spec.normalize {
                return Ok(vec![spec.amplitude; peptides.len()]);
            }
            let kernel = PeptideKernel::new(family, monomers)?;
            peptides
                .par_iter()
                .map(|p| {
                    let e = EncodedPeptide::new(p, monomers)?;
                    Ok(spec.amplitude * kernel.eval(&e, &e)?)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub min_eig: f64,
    pub max_eig: f64,
    pub is_psd: bool,
}

/// Eigenvalue extremes of `(G + G^T) / 2`; PSD when
/// `min_eig >= -tol * max(1, max_eig)`.
pub fn psd_check(g: &GramMatrix, tol: f64) -> Result<PsdReport> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "psd_check needs a square matrix, got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let m = g.to_dmatrix();
    let sym = (&m + m.transpose()) * 0.5;
    eigen_extremes(sym, tol)
}

pub fn eigen_extremes(sym: DMatrix<f64>, tol: f64) -> Result<PsdReport> {
    if sym.nrows() == 0 {
        return Ok(PsdReport {
            min_eig: 0.0,
            max_eig: 0.0,
            is_psd: true,
        });
    }
    let eig = SymmetricEigen::new(sym);
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PsdReport {
        min_eig,
        max_eig,
        is_psd: min_eig >= -tol * max_eig.max(1.0),
    })
}

const GRAM_MAGIC: &[u8; 8] = b"PGKGRAM1";

#[derive(Serialize, Deserialize)]
struct GramHeader {
    spec: Option<KernelSpec>,
    row_ids: Vec<String>,
    col_ids: Vec<String>,
    normalized: bool,
}

/// Binary cache layout: 8-byte magic, little-endian u64 header length, JSON
/// header, then row-major little-endian f64 values.
pub fn write_gram<W: Write>(g: &GramMatrix, mut out: W) -> Result<()> {
    let header = GramHeader {
        spec: g.spec.clone(),
        row_ids: g.row_ids.clone(),
        col_ids: g.col_ids.clone(),
        normalized: g.normalized,
    };
    let hjson = serde_json::to_vec(&header)?;
    out.write_all(GRAM_MAGIC)?;
    out.write_all(&(hjson.len() as u64).to_le_bytes())?;
    out.write_all(&hjson)?;
    let mut buf = Vec::with_capacity(g.values.len() * 8);
    for v in &g.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_gram<R: Read>(mut input: R) -> Result<GramMatrix> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != GRAM_MAGIC {
        return Err(Error::Validation("not a Gram cache file".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let hlen = u64::from_le_bytes(len) as usize;
    let mut hbuf = vec![0u8; hlen];
    input.read_exact(&mut hbuf)?;
    let header: GramHeader = serde_json::from_slice(&hbuf)?;
    let n = header.row_ids.len() * header.col_ids.len();
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != n * 8 {
        return Err(Error::Validation(format!(
            "Gram cache holds {} bytes of values, expected {}",
            raw.len(),
            n * 8
        )));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GramMatrix::new(
        header.row_ids,
        header.col_ids,
        values,
        header.spec,
        header.normalized,
    )
}

pub fn write_gram_file(g: &GramMatrix, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_gram(g, std::io::BufWriter::new(f))
}

pub fn read_gram_file(path: &std::path::Path) -> Result<GramMatrix> {
    let f = std::fs::File::open(path)?;
    read_gram(std::io::BufReader::new(f))
}

/// Full-dataset Grams keyed by [`KernelSpec::base_key`], so candidates that
/// differ only in amplitude or jitter share one evaluation. Convex specs are
/// mixed from their cached components.
#[derive(Debug)]
pub struct GramCache<'a> {
    ds: &'a Dataset,
    grams: Mutex<HashMap<String, Arc<GramMatrix>>>,
}

impl<'a> GramCache<'a> {
    pub fn new(ds: &'a Dataset) -> Self {
        Self {
            ds,
            grams: Mutex::new(HashMap::new()),
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.ds
    }

    /// Seeds the cache with a precomputed Gram over the whole dataset.
    pub fn insert(&self, g: GramMatrix) -> Result<()> {
        let spec = g
            .spec
            .clone()
            .ok_or_else(|| Error::Validation("cached Gram carries no kernel spec".into()))?;
        let ids = self.ds.peptide_ids();
        if !g.is_square() || g.row_ids != ids {
            return Err(Error::Integrity(
                "cached Gram ids do not match the dataset peptides in order".into(),
            ));
        }
        let base = g.scaled(1.0 / spec.amplitude).relabel(Some(base_spec(&spec)));
        self.grams
            .lock()
            .expect("gram cache lock")
            .insert(spec.base_key(), Arc::new(base));
        Ok(())
    }

    pub fn contains(&self, spec: &KernelSpec) -> bool {
        self.grams
            .lock()
            .expect("gram cache lock")
            .contains_key(&spec.base_key())
    }

    /// Unit-amplitude Gram over all dataset peptides.
    pub fn base(&self, spec: &KernelSpec) -> Result<Arc<GramMatrix>> {
        spec.validate()?;
        let key = spec.base_key();
        if let Some(g) = self.grams.lock().expect("gram cache lock").get(&key) {
            return Ok(Arc::clone(g));
        }
        let g = match &spec.family {
            KernelFamily::Convex {
                alpha,
                first,
                second,
            } => {
                let g1 = self.base(first)?.scaled(first.amplitude);
                let g2 = self.base(second)?.scaled(second.amplitude);
                mix_kernels(&g1, &g2, *alpha)?
            }
            _ => full_gram(self.ds, &base_spec(spec))?,
        };
        let g = Arc::new(g.relabel(Some(base_spec(spec))));
        let mut map = self.grams.lock().expect("gram cache lock");
        Ok(Arc::clone(map.entry(key).or_insert(g)))
    }

    /// Block of the Gram for `spec` at dataset positions, amplitude applied.
    pub fn block(&self, spec: &KernelSpec, rows: &[usize], cols: &[usize]) -> Result<GramMatrix> {
        let base = self.base(spec)?;
        let mut g = base.select(rows, cols);
        if spec.amplitude != 1.0 {
            g.values.iter_mut().for_each(|v| *v *= spec.amplitude);
        }
        Ok(g.relabel(Some(spec.clone())))
    }

    /// Prior variances at dataset positions, amplitude applied.
    pub fn diagonal(&self, spec: &KernelSpec, idx: &[usize]) -> Result<Vec<f64>> {
        let base = self.base(spec)?;
        Ok(idx.iter().map(|&i| spec.amplitude * base.get(i, i)).collect())
    }
}

fn base_spec(spec: &KernelSpec) -> KernelSpec {
    spec.clone().with_amplitude(1.0).with_jitter(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn psd_examples() {
        let eye = GramMatrix::square(ids(3), vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let r = psd_check(&eye, 1e-8).unwrap();
        assert!((r.min_eig - 1.0).abs() < 1e-12 && r.is_psd);

        let v = [1.0, -2.0, 0.5];
        let outer: Vec<f64> = v.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let r = psd_check(&GramMatrix::square(ids(3), outer).unwrap(), 1e-8).unwrap();
        assert!(r.is_psd);
        assert!(r.min_eig > -1e-12);

        let bad = GramMatrix::square(ids(2), vec![1., 2., 2., 1.]).unwrap();
        let r = psd_check(&bad, 1e-8).unwrap();
        assert!((r.min_eig + 1.0).abs() < 1e-12);
        assert!((r.max_eig - 3.0).abs() < 1e-12);
        assert!(!r.is_psd);
    }

    #[test]
    fn psd_rejects_rectangular() {
        let g = GramMatrix::new(ids(2), ids(3), vec![0.0; 6], None, false).unwrap();
        assert!(matches!(psd_check(&g, 1e-8), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn dimension_checked() {
        assert!(GramMatrix::square(ids(2), vec![1.0; 3]).is_err());
    }

    #[test]
    fn select_and_scale() {
        let g = GramMatrix::square(ids(3), (0..9).map(f64::from).collect()).unwrap();
        let s = g.select(&[2, 0], &[1]);
        assert_eq!(s.values(), &[7.0, 1.0]);
        assert_eq!(s.row_ids(), &["p2".to_string(), "p0".to_string()]);
        assert_eq!(g.scaled(2.0).get(1, 1), 8.0);
    }

    #[test]
    fn cache_roundtrip() {
        let g = GramMatrix::new(ids(2), ids(3), vec![0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0], None, true)
            .unwrap()
            .with_spec(KernelSpec::pmd_gak(1.5, 3));
        let mut buf = Vec::new();
        write_gram(&g, &mut buf).unwrap();
        let back = read_gram(buf.as_slice()).unwrap();
        assert_eq!(back, g);
        assert!(read_gram(&b"garbage!xxxxxxxx"[..]).is_err());
    }
}
