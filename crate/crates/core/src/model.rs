//! Fitted-model files: versioned JSON holding the kernel spec, the training
//! data and the fitted weights. Factorizations are recomputed on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{
    fit_laplace, fit_regressor_with, predict_laplace, predict_regressor, regressor_from_parts,
    GPRegressor, LaplaceState, RegressionOptions, Task,
};
use crate::gram::{gram_between, self_similarities};
use crate::kernel::KernelSpec;
use crate::repr::{parse_dataset, write_dataset, Dataset, PeptideRecord};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    library_version: String,
    task: Task,
    spec: KernelSpec,
    /// Training dataset in the JSONL interchange format.
    training_data: String,
    /// Laplace `a` (with `f_hat = K a`) or regression `alpha`.
    weights: Vec<f64>,
    /// Laplace mode; empty for regression.
    f_hat: Vec<f64>,
    jitter: f64,
    eta2: Option<f64>,
    y_offset: f64,
}

#[derive(Debug, Clone)]
enum Fitted {
    Classifier(LaplaceState),
    Regressor(GPRegressor),
}

/// One row of model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPrediction {
    pub id: String,
    /// Probability of the permeable class, or the posterior mean.
    pub value: f64,
    /// Posterior standard deviation of the latent function.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    task: Task,
    spec: KernelSpec,
    train: Dataset,
    fitted: Fitted,
    eta2: Option<f64>,
}

impl Model {
    /// Fits on every peptide of `train`. Classification uses the permeability
    /// labels; regression the log-permeability values with `eta2` noise.
    pub fn fit(
        train: &Dataset,
        spec: &KernelSpec,
        task: Task,
        eta2: Option<f64>,
        opts: RegressionOptions,
    ) -> Result<Self> {
        let all: Vec<&PeptideRecord> = train.peptides().iter().collect();
        let g = gram_between(&all, &all, train.monomers(), spec)?;
        let fitted = match task {
            Task::Classify => Fitted::Classifier(fit_laplace(&g, &train.labels())?),
            Task::Regress => {
                let eta2 = eta2.ok_or_else(|| {
                    Error::Validation("regression needs a noise variance eta2".into())
                })?;
                let y: Vec<f64> = train.peptides().iter().map(|p| p.permeability).collect();
                Fitted::Regressor(fit_regressor_with(&g, &y, eta2, opts)?)
            }
        };
        Ok(Self {
            task,
            spec: spec.clone(),
            train: train.clone(),
            fitted,
            eta2,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn training_data(&self) -> &Dataset {
        &self.train
    }

    pub fn laplace_state(&self) -> Option<&LaplaceState> {
        match &self.fitted {
            Fitted::Classifier(s) => Some(s),
            Fitted::Regressor(_) => None,
        }
    }

    pub fn regressor(&self) -> Option<&GPRegressor> {
        match &self.fitted {
            Fitted::Regressor(r) => Some(r),
            Fitted::Classifier(_) => None,
        }
    }

    /// Predicts every peptide of `query`. Query monomers are merged into the
    /// training table; an id bound to a different fingerprint is an error.
    pub fn predict(&self, query: &Dataset) -> Result<Vec<ModelPrediction>> {
        let table = self.train.monomers().merge(query.monomers())?;
        let q: Vec<&PeptideRecord> = query.peptides().iter().collect();
        let t: Vec<&PeptideRecord> = self.train.peptides().iter().collect();
        let ks = gram_between(&q, &t, &table, &self.spec)?;
        let kss = self_similarities(&q, &table, &self.spec)?;
        let ids = query.peptide_ids();
        match &self.fitted {
            Fitted::Classifier(state) => {
                let (_, var) = crate::gp::predict_latent(state, &ks, &kss)?;
                let p = predict_laplace(state, &ks, &kss)?;
                Ok(ids
                    .into_iter()
                    .zip(p)
                    .zip(var)
                    .map(|((id, value), v)| ModelPrediction {
                        id,
                        value,
                        sd: Some(v.sqrt()),
                    })
                    .collect())
            }
            Fitted::Regressor(r) => {
                let (mean, var) = predict_regressor(r, &ks, &kss)?;
                Ok(ids
                    .into_iter()
                    .zip(mean)
                    .zip(var)
                    .map(|((id, value), v)| ModelPrediction {
                        id,
                        value,
                        sd: Some(v.sqrt()),
                    })
                    .collect())
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        write_dataset(&self.train, &mut buf)?;
        let training_data = String::from_utf8(buf)
            .map_err(|e| Error::Validation(format!("dataset is not UTF-8: {e}")))?;
        let (weights, f_hat, jitter, y_offset) = match &self.fitted {
            Fitted::Classifier(s) => (s.a().to_vec(), s.f_hat().to_vec(), s.jitter(), 0.0),
            Fitted::Regressor(r) => (r.alpha().to_vec(), Vec::new(), r.jitter(), r.y_offset()),
        };
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            task: self.task,
            spec: self.spec.clone(),
            training_data,
            weights,
            f_hat,
            jitter,
            eta2: self.eta2,
            y_offset,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        file.spec.validate()?;
        let train = parse_dataset(file.training_data.as_bytes())?;
        let all: Vec<&PeptideRecord> = train.peptides().iter().collect();
        let g = gram_between(&all, &all, train.monomers(), &file.spec)?;
        let fitted = match file.task {
            Task::Classify => Fitted::Classifier(LaplaceState::from_mode(
                &g,
                &train.labels(),
                &file.weights,
                file.jitter,
            )?),
            Task::Regress => {
                let eta2 = file
                    .eta2
                    .ok_or_else(|| Error::Validation("regression model without eta2".into()))?;
                Fitted::Regressor(regressor_from_parts(
                    &g,
                    &file.weights,
                    eta2,
                    file.jitter,
                    file.y_offset,
                )?)
            }
        };
        Ok(Self {
            task: file.task,
            spec: file.spec,
            train,
            fitted,
            eta2: file.eta2,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
