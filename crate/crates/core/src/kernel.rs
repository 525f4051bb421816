//! Declarative kernel descriptions and the peptide-pair evaluator behind them.

use serde::{Deserialize, Serialize};

use crate::alignment::{gak_indexed, mdgak_indexed, pmdgak_indexed};
use crate::error::{Error, Result};
use crate::local_kernels::{soft_kernel, tanimoto, SoftKernelParams, WindowParams};
use crate::repr::{MonomerTable, PeptideRecord, SparseCountVector};

pub const DEFAULT_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Canonical global alignment with monomer Tanimoto as local kernel.
    Gak,
    /// Decoupled global alignment with monomer Tanimoto.
    MdGak,
    /// Decoupled alignment with a soft local kernel and triangular window.
    PmdGak { beta: f64, band: u32 },
    /// Tanimoto on whole-peptide fingerprints.
    TanimotoPeptide,
    /// `alpha * first + (1 - alpha) * second`.
    Convex {
        alpha: f64,
        first: Box<KernelSpec>,
        second: Box<KernelSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub normalize: bool,
    /// Scale applied to the final Gram.
    pub amplitude: f64,
    /// Added to the training diagonal when fitting.
    pub jitter: f64,
}

impl KernelSpec {
    fn with_family(family: KernelFamily) -> Self {
        Self {
            family,
            normalize: true,
            amplitude: 1.0,
            jitter: DEFAULT_JITTER,
        }
    }

    pub fn gak() -> Self {
        Self::with_family(KernelFamily::Gak)
    }

    pub fn md_gak() -> Self {
        Self::with_family(KernelFamily::MdGak)
    }

    pub fn pmd_gak(beta: f64, band: u32) -> Self {
        Self::with_family(KernelFamily::PmdGak { beta, band })
    }

    pub fn tanimoto_peptide() -> Self {
        Self::with_family(KernelFamily::TanimotoPeptide)
    }

    pub fn convex(alpha: f64, first: KernelSpec, second: KernelSpec) -> Self {
        Self::with_family(KernelFamily::Convex {
            alpha,
            first: Box::new(first),
            second: Box::new(second),
        })
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_normalize(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Validation(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Validation(format!(
                "jitter must be nonnegative, got {}",
                self.jitter
            )));
        }
        match &self.family {
            KernelFamily::PmdGak { beta, band } => {
                SoftKernelParams::new(*beta)?;
                WindowParams::new(*band)?;
            }
            KernelFamily::Convex {
                alpha,
                first,
                second,
            } => {
                if !(0.0..=1.0).contains(alpha) {
                    return Err(Error::Validation(format!("alpha {alpha} outside [0, 1]")));
                }
                for c in [first, second] {
                    if matches!(c.family, KernelFamily::Convex { .. }) {
                        return Err(Error::Validation(
                            "convex kernel components must not be convex".into(),
                        ));
                    }
                    c.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Short human-readable name, e.g. `pmd_gak(beta=1,T=3)`.
    pub fn label(&self) -> String {
        let core = match &self.family {
            KernelFamily::Gak => "gak".to_string(),
            KernelFamily::MdGak => "md_gak".to_string(),
            KernelFamily::PmdGak { beta, band } => format!("pmd_gak(beta={beta},T={band})"),
            KernelFamily::TanimotoPeptide => "tanimoto".to_string(),
            KernelFamily::Convex {
                alpha,
                first,
                second,
            } => format!("convex(alpha={alpha},{},{})", first.label(), second.label()),
        };
        if self.amplitude != 1.0 {
            format!("{core}*{}", self.amplitude)
        } else {
            core
        }
    }

    /// Identity of the Gram this spec produces before amplitude scaling.
    pub fn base_key(&self) -> String {
        let mut base = self.clone();
        base.amplitude = 1.0;
        base.jitter = 0.0;
        serde_json::to_string(&base).expect("kernel spec serializes")
    }
}

/// Peptide in evaluator-ready form.
#[derive(Debug, Clone)]
pub struct EncodedPeptide<'a> {
    pub monomers: Vec<u32>,
    pub fingerprint: Option<&'a SparseCountVector>,
}

impl<'a> EncodedPeptide<'a> {
    pub fn new(p: &'a PeptideRecord, table: &MonomerTable) -> Result<Self> {
        Ok(Self {
            monomers: table.encode(&p.monomers)?,
            fingerprint: p.molecule_fingerprint.as_ref(),
        })
    }
}

/// Evaluates one non-convex kernel family on peptide pairs. Monomer-level
/// similarities are tabulated once for the whole monomer table.
#[derive(Debug, Clone)]
pub struct PeptideKernel {
    family: KernelFamily,
    table: Vec<f64>,
    stride: usize,
}

impl PeptideKernel {
    pub fn new(family: &KernelFamily, monomers: &MonomerTable) -> Result<Self> {
        let n = monomers.len();
        let records = monomers.records();
        let table = match family {
            KernelFamily::Gak | KernelFamily::MdGak | KernelFamily::PmdGak { .. } => {
                let soft = match family {
                    KernelFamily::PmdGak { beta, .. } => Some(SoftKernelParams::new(*beta)?),
                    _ => None,
                };
                let mut t = vec![0.0; n * n];
                for a in 0..n {
                    for b in a..n {
                        let k0 = tanimoto(&records[a].fingerprint, &records[b].fingerprint);
                        let v = match soft {
                            Some(p) => soft_kernel(k0, p),
                            None => k0,
                        };
                        t[a * n + b] = v;
                        t[b * n + a] = v;
                    }
                }
                t
            }
            KernelFamily::TanimotoPeptide => Vec::new(),
            KernelFamily::Convex { .. } => {
                return Err(Error::Precondition(
                    "convex kernels are evaluated component-wise".into(),
                ))
            }
        };
        Ok(Self {
            family: family.clone(),
            table,
            stride: n,
        })
    }

    #[inline]
    fn local(&self, a: u32, b: u32) -> f64 {
        self.table[a as usize * self.stride + b as usize]
    }

    /// Unnormalized kernel value.
    pub fn eval(&self, a: &EncodedPeptide<'_>, b: &EncodedPeptide<'_>) -> Result<f64> {
        let (sa, sb) = (&a.monomers, &b.monomers);
        match &self.family {
            KernelFamily::Gak => gak_indexed(sa.len(), sb.len(), |i, j| self.local(sa[i], sb[j])),
            KernelFamily::MdGak => {
                mdgak_indexed(sa.len(), sb.len(), |i, j| self.local(sa[i], sb[j]))
            }
            KernelFamily::PmdGak { band, .. } => {
                let window = WindowParams::new(*band)?;
                pmdgak_indexed(sa.len(), sb.len(), window, |i, j| {
                    self.local(sa[i], sb[j])
                })
            }
            KernelFamily::TanimotoPeptide => match (a.fingerprint, b.fingerprint) {
                (Some(u), Some(v)) => Ok(tanimoto(u, v)),
                _ => Err(Error::Validation(
                    "whole-peptide Tanimoto needs molecule fingerprints on every peptide".into(),
                )),
            },
            KernelFamily::Convex { .. } => unreachable!("rejected in constructor"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::md_gak().validate().is_ok());
        assert!(KernelSpec::pmd_gak(0.0, 3).validate().is_err());
        assert!(KernelSpec::pmd_gak(1.0, 0).validate().is_err());
        assert!(KernelSpec::md_gak().with_amplitude(0.0).validate().is_err());
        assert!(KernelSpec::md_gak().with_jitter(-1.0).validate().is_err());
        let mix = KernelSpec::convex(0.3, KernelSpec::md_gak(), KernelSpec::tanimoto_peptide());
        assert!(mix.validate().is_ok());
        let bad_alpha =
            KernelSpec::convex(1.3, KernelSpec::md_gak(), KernelSpec::tanimoto_peptide());
        assert!(bad_alpha.validate().is_err());
        let nested = KernelSpec::convex(0.5, mix.clone(), KernelSpec::md_gak());
        assert!(nested.validate().is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let mix = KernelSpec::convex(
            0.25,
            KernelSpec::pmd_gak(2.0, 5),
            KernelSpec::tanimoto_peptide(),
        )
        .with_amplitude(4.0);
        let s = serde_json::to_string(&mix).unwrap();
        let back: KernelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, mix);
        assert_eq!(
            mix.base_key(),
            mix.clone().with_amplitude(16.0).with_jitter(0.1).base_key()
        );
    }
}
