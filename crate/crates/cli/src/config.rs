//! Run configuration: a flat `key = value` file, overridden by environment
//! variables and command-line flags.
//!
//! Recognised keys (all optional):
//!
//! | key              | meaning                                             | default          |
//! |------------------|-----------------------------------------------------|------------------|
//! | `dataset`        | JSONL dataset path                                  |                  |
//! | `kernel`         | `gak`, `md_gak`, `pmd_gak` or `tanimoto`            | `md_gak`         |
//! | `beta`           | PMD-GAK soft-kernel sharpness (fixes it)            | grid / 1.0       |
//! | `band`           | PMD-GAK window bandwidth T (fixes it)               | grid / 3         |
//! | `alpha`          | mix with whole-peptide Tanimoto at this weight      | no mixing        |
//! | `normalize`      | cosine-normalize the alignment kernel               | `true`           |
//! | `amplitude`      | Gram scale                                          | 1                |
//! | `jitter`         | training diagonal jitter                            | 1e-6             |
//! | `task`           | `classify` or `regress`                             | `classify`       |
//! | `protocol`       | `nested_cv_label`, `nested_cv_group`, `random_811`, `scaffold_811` | `nested_cv_label` |
//! | `seed`           | split seed                                          | 0                |
//! | `k_outer`        | outer folds                                         | 5                |
//! | `k_inner`        | inner folds                                         | 5                |
//! | `objective`      | selection metric                                    | `roc_auc`/`rmse` |
//! | `beta_grid`      | comma list                                          | 0.5,1,2,5        |
//! | `band_grid`      | comma list                                          | 2,3,5,8          |
//! | `alpha_grid`     | comma list; tunes the Tanimoto mixture              | unset            |
//! | `amplitude_grid` | comma list; tunes the amplitude                     | unset            |
//! | `eta2`           | regression noise variance                           | 0.1              |
//! | `eta2_grid`      | comma list                                          | 0.01,0.1,1       |
//! | `center`         | center regression targets                           | `true`           |
//! | `workers`        | worker threads                                      | logical cores    |
//! | `out_dir`        | crossval output directory                           |                  |
//! | `gram_in`        | Gram cache to load                                  |                  |
//! | `gram_out`       | Gram cache to write                                 |                  |
//!
//! Lines starting with `#` and blank lines are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pepgak::eval::Objective;
use pepgak::eval::Scheme;
use pepgak::gp::{Candidate, Task};
use pepgak::{Error, KernelSpec, Result};

pub const KEYS: &[&str] = &[
    "dataset",
    "kernel",
    "beta",
    "band",
    "alpha",
    "normalize",
    "amplitude",
    "jitter",
    "task",
    "protocol",
    "seed",
    "k_outer",
    "k_inner",
    "objective",
    "beta_grid",
    "band_grid",
    "alpha_grid",
    "amplitude_grid",
    "eta2",
    "eta2_grid",
    "center",
    "workers",
    "out_dir",
    "gram_in",
    "gram_out",
];

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("unknown config key {k:?}"),
            });
        }
        map.insert(k, v.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_config_text(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelName {
    Gak,
    MdGak,
    PmdGak,
    Tanimoto,
}

impl FromStr for KernelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gak" => KernelName::Gak,
            "md_gak" | "mdgak" => KernelName::MdGak,
            "pmd_gak" | "pmdgak" => KernelName::PmdGak,
            "tanimoto" | "tan_sim" => KernelName::Tanimoto,
            _ => return Err(Error::Validation(format!("unknown kernel {s:?}"))),
        })
    }
}

impl KernelName {
    fn as_str(&self) -> &'static str {
        match self {
            KernelName::Gak => "gak",
            KernelName::MdGak => "md_gak",
            KernelName::PmdGak => "pmd_gak",
            KernelName::Tanimoto => "tanimoto",
        }
    }
}

pub fn parse_protocol(s: &str) -> Result<Scheme> {
    Ok(match s {
        "nested_cv_label" => Scheme::LabelStratified,
        "nested_cv_group" => Scheme::GroupStratified,
        "random_811" => Scheme::Random811,
        "scaffold_811" => Scheme::Scaffold811,
        _ => return Err(Error::Validation(format!("unknown protocol {s:?}"))),
    })
}

pub fn protocol_name(s: Scheme) -> &'static str {
    match s {
        Scheme::LabelStratified => "nested_cv_label",
        Scheme::GroupStratified => "nested_cv_group",
        Scheme::Random811 => "random_811",
        Scheme::Scaffold811 => "scaffold_811",
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub kernel: KernelName,
    pub beta: Option<f64>,
    pub band: Option<u32>,
    pub alpha: Option<f64>,
    pub normalize: bool,
    pub amplitude: f64,
    pub jitter: f64,
    pub task: Task,
    pub protocol: Scheme,
    pub seed: u64,
    pub k_outer: usize,
    pub k_inner: usize,
    pub objective: Objective,
    pub beta_grid: Vec<f64>,
    pub band_grid: Vec<u32>,
    pub alpha_grid: Option<Vec<f64>>,
    pub amplitude_grid: Option<Vec<f64>>,
    pub eta2: f64,
    pub eta2_grid: Vec<f64>,
    pub center: bool,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub gram_in: Option<PathBuf>,
    pub gram_out: Option<PathBuf>,
}

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_BAND: u32 = 3;

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::Validation(format!("{key}: cannot parse {v:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Validation(format!("{key}: grid must not be empty")));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Validation(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

impl RunConfig {
    /// Builds the configuration from merged string settings, where later
    /// layers have already overridden earlier ones.
    pub fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| m.get(k).map(String::as_str);
        let task: Task = get("task").map_or(Ok(Task::Classify), str::parse)?;
        let objective = match get("objective") {
            Some(o) => o.parse()?,
            None => match task {
                Task::Classify => Objective::RocAuc,
                Task::Regress => Objective::Rmse,
            },
        };
        let cfg = RunConfig {
            dataset: get("dataset").map(PathBuf::from),
            kernel: get("kernel").map_or(Ok(KernelName::MdGak), str::parse)?,
            beta: get("beta").map(|v| parse_value("beta", v)).transpose()?,
            band: get("band").map(|v| parse_value("band", v)).transpose()?,
            alpha: get("alpha").map(|v| parse_value("alpha", v)).transpose()?,
            normalize: get("normalize").map_or(Ok(true), |v| parse_bool("normalize", v))?,
            amplitude: get("amplitude").map_or(Ok(1.0), |v| parse_value("amplitude", v))?,
            jitter: get("jitter").map_or(Ok(pepgak::kernel::DEFAULT_JITTER), |v| {
                parse_value("jitter", v)
            })?,
            task,
            protocol: get("protocol").map_or(Ok(Scheme::LabelStratified), parse_protocol)?,
            seed: get("seed").map_or(Ok(0), |v| parse_value("seed", v))?,
            k_outer: get("k_outer").map_or(Ok(5), |v| parse_value("k_outer", v))?,
            k_inner: get("k_inner").map_or(Ok(5), |v| parse_value("k_inner", v))?,
            objective,
            beta_grid: get("beta_grid").map_or(Ok(vec![0.5, 1.0, 2.0, 5.0]), |v| {
                parse_list("beta_grid", v)
            })?,
            band_grid: get("band_grid").map_or(Ok(vec![2, 3, 5, 8]), |v| parse_list("band_grid", v))?,
            alpha_grid: get("alpha_grid").map(|v| parse_list("alpha_grid", v)).transpose()?,
            amplitude_grid: get("amplitude_grid")
                .map(|v| parse_list("amplitude_grid", v))
                .transpose()?,
            eta2: get("eta2").map_or(Ok(0.1), |v| parse_value("eta2", v))?,
            eta2_grid: get("eta2_grid").map_or(Ok(vec![0.01, 0.1, 1.0]), |v| {
                parse_list("eta2_grid", v)
            })?,
            center: get("center").map_or(Ok(true), |v| parse_bool("center", v))?,
            workers: get("workers").map(|v| parse_value("workers", v)).transpose()?,
            out_dir: get("out_dir").map(PathBuf::from),
            gram_in: get("gram_in").map(PathBuf::from),
            gram_out: get("gram_out").map(PathBuf::from),
        };
        if cfg.k_outer < 2 || cfg.k_inner < 2 {
            return Err(Error::Validation("k_outer and k_inner must be at least 2".into()));
        }
        if cfg.alpha.is_some() && cfg.alpha_grid.is_some() {
            return Err(Error::Validation("set either alpha or alpha_grid, not both".into()));
        }
        if cfg.objective.task() != cfg.task {
            return Err(Error::Validation(format!(
                "objective {} does not match the task",
                cfg.objective.name()
            )));
        }
        if cfg.eta2 <= 0.0 || cfg.eta2_grid.iter().any(|&e| e <= 0.0) {
            return Err(Error::Validation("noise variance eta2 must be positive".into()));
        }
        cfg.kernel_spec()?;
        cfg.grid()?;
        Ok(cfg)
    }

    fn base_specs(&self, fixed_only: bool) -> Vec<KernelSpec> {
        let mut specs = Vec::new();
        match self.kernel {
            KernelName::Gak => specs.push(KernelSpec::gak()),
            KernelName::MdGak => specs.push(KernelSpec::md_gak()),
            KernelName::Tanimoto => specs.push(KernelSpec::tanimoto_peptide()),
            KernelName::PmdGak => {
                let betas = match (self.beta, fixed_only) {
                    (Some(b), _) => vec![b],
                    (None, true) => vec![DEFAULT_BETA],
                    (None, false) => self.beta_grid.clone(),
                };
                let bands = match (self.band, fixed_only) {
                    (Some(t), _) => vec![t],
                    (None, true) => vec![DEFAULT_BAND],
                    (None, false) => self.band_grid.clone(),
                };
                for &b in &betas {
                    for &t in &bands {
                        specs.push(KernelSpec::pmd_gak(b, t));
                    }
                }
            }
        }
        let specs: Vec<KernelSpec> = specs
            .into_iter()
            .map(|s| s.with_normalize(self.normalize))
            .collect();
        let alphas = match (&self.alpha, &self.alpha_grid, fixed_only) {
            (Some(a), _, _) => Some(vec![*a]),
            (None, Some(g), false) => Some(g.clone()),
            (None, Some(g), true) => Some(vec![g[0]]),
            (None, None, _) => None,
        };
        let mixed: Vec<KernelSpec> = match alphas {
            None => specs,
            Some(alphas) => specs
                .iter()
                .flat_map(|s| {
                    alphas.iter().map(move |&a| {
                        KernelSpec::convex(a, s.clone(), KernelSpec::tanimoto_peptide())
                    })
                })
                .collect(),
        };
        let amps = match (&self.amplitude_grid, fixed_only) {
            (Some(g), false) => g.clone(),
            _ => vec![self.amplitude],
        };
        mixed
            .iter()
            .flat_map(|s| {
                amps.iter()
                    .map(move |&a| s.clone().with_amplitude(a).with_jitter(self.jitter))
            })
            .collect()
    }

    /// The single kernel used by `gram`, `fit` and `predict`.
    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let spec = self.base_specs(true).remove(0);
        spec.validate()?;
        Ok(spec)
    }

    /// Candidates for model selection, in grid order.
    pub fn grid(&self) -> Result<Vec<Candidate>> {
        let specs = self.base_specs(false);
        let mut out = Vec::new();
        for s in specs {
            s.validate()?;
            match self.task {
                Task::Classify => out.push(Candidate::new(s)),
                Task::Regress => {
                    for &e in &self.eta2_grid {
                        out.push(Candidate {
                            spec: s.clone(),
                            eta2: Some(e),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Settings as a flat key = value document that reproduces this run.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut lines = Vec::new();
        let mut put = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        if let Some(d) = &self.dataset {
            put("dataset", d.display().to_string());
        }
        put("kernel", self.kernel.as_str().to_string());
        if let Some(b) = self.beta {
            put("beta", format!("{b:?}"));
        }
        if let Some(t) = self.band {
            put("band", t.to_string());
        }
        if let Some(a) = self.alpha {
            put("alpha", format!("{a:?}"));
        }
        put("normalize", self.normalize.to_string());
        put("amplitude", format!("{:?}", self.amplitude));
        put("jitter", format!("{:?}", self.jitter));
        put(
            "task",
            match self.task {
                Task::Classify => "classify",
                Task::Regress => "regress",
            }
            .to_string(),
        );
        put("protocol", protocol_name(self.protocol).to_string());
        put("seed", self.seed.to_string());
        put("k_outer", self.k_outer.to_string());
        put("k_inner", self.k_inner.to_string());
        put("objective", self.objective.name().to_string());
        put("beta_grid", join(&self.beta_grid));
        put(
            "band_grid",
            self.band_grid.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
        );
        if let Some(g) = &self.alpha_grid {
            put("alpha_grid", join(g));
        }
        if let Some(g) = &self.amplitude_grid {
            put("amplitude_grid", join(g));
        }
        put("eta2", format!("{:?}", self.eta2));
        put("eta2_grid", join(&self.eta2_grid));
        put("center", self.center.to_string());
        if let Some(p) = &self.gram_in {
            put("gram_in", p.display().to_string());
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_parsing() {
        let m = parse_config_text("# comment\nkernel = pmd_gak\n\nbeta_grid=1, 2\nk-inner = 3\n")
            .unwrap();
        assert_eq!(m["kernel"], "pmd_gak");
        assert_eq!(m["k_inner"], "3");
        let cfg = RunConfig::from_map(&m).unwrap();
        assert_eq!(cfg.beta_grid, vec![1.0, 2.0]);
        assert_eq!(cfg.grid().unwrap().len(), 2 * 4);
        assert!(parse_config_text("nonsense").is_err());
        assert!(parse_config_text("colour = red").is_err());
    }

    #[test]
    fn fixed_values_collapse_grids() {
        let mut m = BTreeMap::new();
        m.insert("kernel".to_string(), "pmd_gak".to_string());
        m.insert("beta".to_string(), "2".to_string());
        m.insert("alpha_grid".to_string(), "0,0.5,1".to_string());
        let cfg = RunConfig::from_map(&m).unwrap();
        assert_eq!(cfg.grid().unwrap().len(), 4 * 3);
        assert_eq!(
            cfg.kernel_spec().unwrap(),
            KernelSpec::convex(0.0, KernelSpec::pmd_gak(2.0, 3), KernelSpec::tanimoto_peptide())
        );
    }

    #[test]
    fn text_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("kernel".to_string(), "gak".to_string());
        m.insert("amplitude_grid".to_string(), "1,4,16".to_string());
        m.insert("seed".to_string(), "9".to_string());
        let cfg = RunConfig::from_map(&m).unwrap();
        let back = RunConfig::from_map(&parse_config_text(&cfg.to_text()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn regression_grid_includes_noise() {
        let mut m = BTreeMap::new();
        m.insert("task".to_string(), "regress".to_string());
        let cfg = RunConfig::from_map(&m).unwrap();
        assert_eq!(cfg.objective, Objective::Rmse);
        assert_eq!(cfg.grid().unwrap().len(), 3);
    }
}
