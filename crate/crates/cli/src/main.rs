use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use pepgak::eval::cv::{
    nested_cv, split_predictions, write_aggregate_csv, write_fold_json, write_histogram_csv,
    CvOptions, Prediction,
};
use pepgak::eval::metrics::classification_metrics;
use pepgak::eval::splits::make_plan;
use pepgak::gp::{RegressionOptions, Task};
use pepgak::gram::{full_gram, read_gram_file, write_gram_file, GramCache};
use pepgak::model::Model;
use pepgak::repr::{class_counts, read_dataset_file, Dataset};
use pepgak::{Error, ErrorKind, Result};

mod config;

use config::{protocol_name, read_config_file, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "pepgak", version, about = "Alignment kernels and Gaussian processes for cyclic peptides")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Each overrides the config file key
/// of the same name.
#[derive(Args, Debug, Default)]
struct GlobalOpts {
    /// Flat key = value configuration file
    #[arg(long, global = true, env = "PEPGAK_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "PEPGAK_DATASET")]
    dataset: Option<String>,
    /// gak, md_gak, pmd_gak or tanimoto
    #[arg(long, global = true, env = "PEPGAK_KERNEL")]
    kernel: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_BETA")]
    beta: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_BAND")]
    band: Option<String>,
    /// Weight of the alignment kernel in a mixture with whole-peptide Tanimoto
    #[arg(long, global = true, env = "PEPGAK_ALPHA")]
    alpha: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_NORMALIZE")]
    normalize: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_AMPLITUDE")]
    amplitude: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_JITTER")]
    jitter: Option<String>,
    /// classify or regress
    #[arg(long, global = true, env = "PEPGAK_TASK")]
    task: Option<String>,
    /// nested_cv_label, nested_cv_group, random_811 or scaffold_811
    #[arg(long, global = true, env = "PEPGAK_PROTOCOL")]
    protocol: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_SEED")]
    seed: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_K_OUTER")]
    k_outer: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_K_INNER")]
    k_inner: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_OBJECTIVE")]
    objective: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_BETA_GRID")]
    beta_grid: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_BAND_GRID")]
    band_grid: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_ALPHA_GRID")]
    alpha_grid: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_AMPLITUDE_GRID")]
    amplitude_grid: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_ETA2")]
    eta2: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_ETA2_GRID")]
    eta2_grid: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_CENTER")]
    center: Option<String>,
    /// Worker threads (default: logical cores)
    #[arg(long, global = true, env = "PEPGAK_WORKERS")]
    workers: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_OUT_DIR")]
    out_dir: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_GRAM_IN")]
    gram_in: Option<String>,
    #[arg(long, global = true, env = "PEPGAK_GRAM_OUT")]
    gram_out: Option<String>,
}

impl GlobalOpts {
    fn overrides(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("dataset", &self.dataset),
            ("kernel", &self.kernel),
            ("beta", &self.beta),
            ("band", &self.band),
            ("alpha", &self.alpha),
            ("normalize", &self.normalize),
            ("amplitude", &self.amplitude),
            ("jitter", &self.jitter),
            ("task", &self.task),
            ("protocol", &self.protocol),
            ("seed", &self.seed),
            ("k_outer", &self.k_outer),
            ("k_inner", &self.k_inner),
            ("objective", &self.objective),
            ("beta_grid", &self.beta_grid),
            ("band_grid", &self.band_grid),
            ("alpha_grid", &self.alpha_grid),
            ("amplitude_grid", &self.amplitude_grid),
            ("eta2", &self.eta2),
            ("eta2_grid", &self.eta2_grid),
            ("center", &self.center),
            ("workers", &self.workers),
            ("out_dir", &self.out_dir),
            ("gram_in", &self.gram_in),
            ("gram_out", &self.gram_out),
        ]
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut map = match &self.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        for (k, v) in self.overrides() {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        RunConfig::from_map(&map)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the Gram matrix over all peptides and write the binary cache
    Gram,
    /// Run the configured evaluation protocol end to end
    Crossval,
    /// Fit a GP on the whole dataset and save the model
    Fit {
        #[arg(long)]
        model: PathBuf,
    },
    /// Predict a dataset with a saved model and write a CSV
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Output CSV (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute metrics from a predictions CSV with columns id,probability,label
    Metrics {
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Check a dataset and print a summary
    Validate,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = match e.kind() {
                ErrorKind::Validation => (2, "validation"),
                ErrorKind::Numerical => (3, "numerical"),
                ErrorKind::Io => (4, "io"),
            };
            let msg = json!({ "error": kind, "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.opts.resolve()?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("cannot start {n} workers: {e}")))?;
    }
    match &cli.command {
        Command::Gram => cmd_gram(&cfg),
        Command::Crossval => cmd_crossval(&cfg),
        Command::Fit { model } => cmd_fit(&cfg, model),
        Command::Predict { model, out } => cmd_predict(&cfg, model, out.as_deref()),
        Command::Metrics { predictions } => cmd_metrics(predictions),
        Command::Validate => cmd_validate(&cfg),
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Validation("no dataset given (--dataset)".into()))?;
    if !path.exists() {
        return Err(Error::Validation(format!("dataset {} does not exist", path.display())));
    }
    read_dataset_file(path)
}

fn cmd_gram(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let spec = cfg.kernel_spec()?;
    let out = cfg
        .gram_out
        .as_ref()
        .ok_or_else(|| Error::Validation("gram needs --gram-out".into()))?;
    let g = full_gram(&ds, &spec)?;
    write_gram_file(&g, out)?;
    log::info!("wrote {}x{} Gram to {}", g.nrows(), g.ncols(), out.display());
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn cmd_crossval(cfg: &RunConfig) -> Result<()> {
    if cfg.task != Task::Classify {
        return Err(Error::Validation(
            "crossval evaluates classifiers; use fit/predict for regression".into(),
        ));
    }
    let ds = load_dataset(cfg)?;
    let out_dir = cfg
        .out_dir
        .as_ref()
        .ok_or_else(|| Error::Validation("crossval needs --out-dir".into()))?;
    std::fs::create_dir_all(out_dir)?;
    let grid = cfg.grid()?;
    let cache = GramCache::new(&ds);
    if let Some(p) = &cfg.gram_in {
        cache.insert(read_gram_file(p)?)?;
    }
    let plan = make_plan(&ds, cfg.protocol, cfg.k_outer, cfg.seed)?;
    let opts = CvOptions {
        grid,
        objective: cfg.objective,
        k_inner: cfg.k_inner,
        seed: cfg.seed,
    };
    let report = nested_cv(&ds, &plan, &cache, &opts)?;

    for f in &report.folds {
        write_fold_json(f, &out_dir.join(format!("fold_{}.json", f.fold)))?;
    }
    let agg = std::fs::File::create(out_dir.join("aggregate.csv"))?;
    write_aggregate_csv(&report.aggregate, std::io::BufWriter::new(agg))?;
    let hist = std::fs::File::create(out_dir.join("histogram.csv"))?;
    write_histogram_csv(&report.folds, std::io::BufWriter::new(hist))?;
    let pooled: Vec<Prediction> = report
        .folds
        .iter()
        .flat_map(|f| f.predictions.iter().cloned())
        .collect();
    write_predictions_csv(&pooled, &out_dir.join("predictions.csv"))?;

    let config_text = cfg.to_text();
    std::fs::write(out_dir.join("config.txt"), &config_text)?;
    let dataset_hash = sha256_hex(&std::fs::read(cfg.dataset.as_ref().expect("loaded"))?);
    let manifest = json!({
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "config": config_text,
        "dataset_sha256": dataset_hash,
        "library_version": env!("CARGO_PKG_VERSION"),
        "protocol": protocol_name(cfg.protocol),
        "seed": cfg.seed,
        "inner_seeds": (0..report.folds.len()).map(|f| cfg.seed.wrapping_add(1 + f as u64)).collect::<Vec<_>>(),
        "folds": report.folds.len(),
        "selected": report.folds.iter().map(|f| f.selected.label()).collect::<Vec<_>>(),
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    let mut stdout = std::io::stdout().lock();
    for (k, s) in &report.aggregate {
        writeln!(stdout, "{k}\t{:.6}\t± {:.6}", s.mean, s.sem)?;
    }
    Ok(())
}

fn write_predictions_csv(preds: &[Prediction], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for p in preds {
        w.serialize(p).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Validation(format!("csv: {e}"))
    }
}

fn cmd_fit(cfg: &RunConfig, model_path: &Path) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let spec = cfg.kernel_spec()?;
    let eta2 = match cfg.task {
        Task::Classify => None,
        Task::Regress => Some(cfg.eta2),
    };
    let model = Model::fit(
        &ds,
        &spec,
        cfg.task,
        eta2,
        RegressionOptions {
            center_targets: cfg.center,
        },
    )?;
    model.save(model_path)
}

fn cmd_predict(cfg: &RunConfig, model_path: &Path, out: Option<&Path>) -> Result<()> {
    let model = Model::load(model_path)?;
    let ds = load_dataset(cfg)?;
    let preds = model.predict(&ds)?;
    let header = match model.task() {
        Task::Classify => ["id", "probability", "latent_sd"],
        Task::Regress => ["id", "mean", "sd"],
    };
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(csv_error)?;
    for p in &preds {
        let sd = p.sd.map_or(String::new(), |s| format!("{s:?}"));
        w.write_record([p.id.clone(), format!("{:?}", p.value), sd])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_metrics(path: &Path) -> Result<()> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let preds: Vec<Prediction> = r
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)?;
    let (p, y) = split_predictions(&preds);
    let m = classification_metrics(&p, &y)?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn cmd_validate(cfg: &RunConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let (neg, pos) = class_counts(&ds);
    let lengths: Vec<usize> = ds.peptides().iter().map(|p| p.len()).collect();
    let groups: std::collections::BTreeSet<&str> =
        ds.peptides().iter().map(|p| p.group_id.as_str()).collect();
    let summary = json!({
        "peptides": ds.len(),
        "monomers": ds.monomers().len(),
        "permeable": pos,
        "impermeable": neg,
        "groups": groups.len(),
        "min_length": lengths.iter().min(),
        "max_length": lengths.iter().max(),
        "with_molecule_fingerprint": ds.peptides().iter().filter(|p| p.molecule_fingerprint.is_some()).count(),
        "with_scaffold": ds.peptides().iter().filter(|p| p.scaffold_id.is_some()).count(),
        "force_train": ds.peptides().iter().filter(|p| p.force_train).count(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
