//! Seeded Monte Carlo experiments over the simulation models.
//!
//! Each replicate `r` draws its truth, training set and validation set from the
//! stream seeded by `sub_seed(base_seed, r)`, tunes every method on the validation
//! set, fits, and reports per-mode losses and support recovery. Replicates run on a
//! pool of `jobs` threads; rows are sorted before output, so the CSV does not depend
//! on scheduling. Wall-clock times go to a separate timing file for the same reason.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorSpec, Method};
use crate::evaluation::{
    mode_losses, support_metrics, tune, LambdaGrid, LossConvention, LossReport, SupportReport,
    DEFAULT_ZERO_TOL,
};
use crate::simulation::{
    make_model, rng_from_seed, sample, sub_seed, DistSpec, GroundTruth, ModelId,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExternalTag {
    External,
}

/// A simulation model id, or `"external"` for user data (which is handled by the
/// estimate and tune commands rather than by experiments).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Id(ModelId),
    External(ExternalTag),
}

fn default_n() -> usize {
    100
}
fn default_replicates() -> usize {
    20
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_jobs() -> usize {
    1
}
fn default_zero_tol() -> f64 {
    DEFAULT_ZERO_TOL
}
fn default_dist() -> DistSpec {
    DistSpec::TensorNormal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelRef,
    #[serde(default = "default_dist")]
    pub distribution: DistSpec,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Defaults to `n`.
    #[serde(default)]
    pub n_validation: Option<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub lambda_grid: LambdaGrid,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub loss_convention: LossConvention,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub slow_ok: bool,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
}

impl ExperimentConfig {
    pub fn new(model: ModelId, distribution: DistSpec) -> Self {
        Self {
            model: ModelRef::Id(model),
            distribution,
            n: default_n(),
            n_validation: None,
            replicates: default_replicates(),
            methods: default_methods(),
            lambda_grid: LambdaGrid::default(),
            base_seed: 0,
            jobs: default_jobs(),
            loss_convention: LossConvention::default(),
            output_path: None,
            slow_ok: false,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn model_id(&self) -> Result<ModelId> {
        match self.model {
            ModelRef::Id(id) => Ok(id),
            ModelRef::External(_) => Err(Error::InvalidArgument(
                "experiments need a simulation model (1-6); run external data through estimate or tune"
                    .into(),
            )),
        }
    }

    /// Check the config and fill in derived defaults.
    pub fn resolved(&self) -> Result<Self> {
        let id = self.model_id()?;
        if id.is_slow() && !self.slow_ok {
            return Err(Error::InvalidArgument(format!(
                "model {id} is very expensive; set slow_ok to run it"
            )));
        }
        self.distribution.validate()?;
        self.lambda_grid.validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidArgument(
                "replicates must be at least 1".into(),
            ));
        }
        if self.n < 2 || self.n_validation.is_some_and(|v| v < 2) {
            return Err(Error::InvalidArgument(
                "n and n_validation must be at least 2".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidArgument("jobs must be at least 1".into()));
        }
        if !(self.zero_tol >= 0.0) {
            return Err(Error::InvalidArgument(
                "zero_tol must be nonnegative".into(),
            ));
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        Ok(Self {
            n_validation: Some(self.n_validation.unwrap_or(self.n)),
            methods,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Value,
    Mean,
    Se,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub model: u8,
    pub distribution: String,
    pub method: Method,
    /// Replicate index, or `summary`.
    pub replicate: String,
    pub stat: Stat,
    /// `1..K` or `avg`.
    pub mode: String,
    pub frob_loss: Option<f64>,
    pub max_loss: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub lambda: Option<f64>,
    pub sub_seed: Option<u64>,
    pub convention: LossConvention,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub replicate: usize,
    pub method: Method,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub records: Vec<ExperimentRecord>,
    pub timings: Vec<TimingRecord>,
}

struct MethodFit {
    lambdas: Vec<f64>,
    losses: LossReport,
    support: SupportReport,
}

fn fit_method(
    train: &[Tensor],
    validation: &[Tensor],
    truth: &GroundTruth,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<MethodFit> {
    let base = EstimatorSpec::new(method, vec![0.0; truth.order()]);
    let tuned = tune(train, validation, &base, &cfg.lambda_grid)?;
    let spec = EstimatorSpec {
        lambdas: tuned.lambdas(),
        ..base
    };
    let est = estimate(train, &spec)?;
    Ok(MethodFit {
        lambdas: spec.lambdas,
        losses: mode_losses(&est.omegas, truth, cfg.loss_convention)?,
        support: support_metrics(&est.omegas, truth, cfg.zero_tol)?,
    })
}

fn run_replicate(
    cfg: &ExperimentConfig,
    id: ModelId,
    r: usize,
) -> (Vec<ExperimentRecord>, Vec<TimingRecord>) {
    let seed = sub_seed(cfg.base_seed, r as u64);
    let row = |method: Method, mode: String| ExperimentRecord {
        model: id.get(),
        distribution: cfg.distribution.name(),
        method,
        replicate: r.to_string(),
        stat: Stat::Value,
        mode,
        frob_loss: None,
        max_loss: None,
        tpr: None,
        tnr: None,
        lambda: None,
        sub_seed: Some(seed),
        convention: cfg.loss_convention,
        error: String::new(),
    };
    let mut rng = rng_from_seed(seed);
    let n_val = cfg.n_validation.unwrap_or(cfg.n);
    let data = make_model(id, &mut rng).and_then(|truth| {
        let train = sample(cfg.n, &truth, cfg.distribution, &mut rng)?;
        let validation = sample(n_val, &truth, cfg.distribution, &mut rng)?;
        Ok((truth, train, validation))
    });
    let (truth, train, validation) = match data {
        Ok(d) => d,
        Err(e) => {
            let rows = cfg
                .methods
                .iter()
                .map(|&m| ExperimentRecord {
                    error: e.to_string(),
                    ..row(m, "avg".into())
                })
                .collect();
            return (rows, Vec::new());
        }
    };

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &method in &cfg.methods {
        let start = Instant::now();
        let fit = fit_method(&train, &validation, &truth, method, cfg);
        timings.push(TimingRecord {
            replicate: r,
            method,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        match fit {
            Ok(f) => {
                for (k, (loss, sup)) in f
                    .losses
                    .per_mode
                    .iter()
                    .zip(&f.support.per_mode)
                    .enumerate()
                {
                    rows.push(ExperimentRecord {
                        frob_loss: Some(loss.frob),
                        max_loss: Some(loss.max),
                        tpr: sup.tpr,
                        tnr: sup.tnr,
                        lambda: Some(f.lambdas[k]),
                        ..row(method, (k + 1).to_string())
                    });
                }
                rows.push(ExperimentRecord {
                    frob_loss: Some(f.losses.avg_frob),
                    max_loss: Some(f.losses.avg_max),
                    tpr: f.support.avg_tpr(),
                    tnr: f.support.avg_tnr(),
                    ..row(method, "avg".into())
                });
            }
            Err(e) => rows.push(ExperimentRecord {
                error: e.to_string(),
                ..row(method, "avg".into())
            }),
        }
    }
    (rows, timings)
}

/// Mean and standard error (`sd / sqrt(R)`) of the defined values.
fn mean_se(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let se = (v.len() > 1).then(|| {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    });
    (Some(mean), se)
}

fn mode_key(mode: &str) -> usize {
    mode.parse().unwrap_or(usize::MAX)
}

fn summarize(
    cfg: &ExperimentConfig,
    id: ModelId,
    rows: &[ExperimentRecord],
) -> Vec<ExperimentRecord> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        let mut modes: Vec<&str> = rows
            .iter()
            .filter(|r| r.method == method && r.error.is_empty())
            .map(|r| r.mode.as_str())
            .collect();
        modes.sort_by_key(|m| mode_key(m));
        modes.dedup();
        for mode in modes {
            let cell: Vec<&ExperimentRecord> = rows
                .iter()
                .filter(|r| r.method == method && r.mode == mode && r.error.is_empty())
                .collect();
            let stat = |f: fn(&ExperimentRecord) -> Option<f64>| mean_se(cell.iter().map(|r| f(r)));
            let (frob, max, tpr, tnr, lambda) = (
                stat(|r| r.frob_loss),
                stat(|r| r.max_loss),
                stat(|r| r.tpr),
                stat(|r| r.tnr),
                stat(|r| r.lambda),
            );
            let base = ExperimentRecord {
                model: id.get(),
                distribution: cfg.distribution.name(),
                method,
                replicate: "summary".into(),
                stat: Stat::Mean,
                mode: mode.to_string(),
                frob_loss: frob.0,
                max_loss: max.0,
                tpr: tpr.0,
                tnr: tnr.0,
                lambda: lambda.0,
                sub_seed: None,
                convention: cfg.loss_convention,
                error: String::new(),
            };
            out.push(ExperimentRecord {
                stat: Stat::Se,
                frob_loss: frob.1,
                max_loss: max.1,
                tpr: tpr.1,
                tnr: tnr.1,
                lambda: lambda.1,
                ..base.clone()
            });
            out.push(base);
        }
    }
    out.sort_by(|a, b| {
        (a.method, mode_key(&a.mode), a.stat).cmp(&(b.method, mode_key(&b.mode), b.stat))
    });
    out
}

/// Run all replicates of `cfg`; output rows are independent of `cfg.jobs`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let cfg = cfg.resolved()?;
    let id = cfg.model_id()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(Vec<ExperimentRecord>, Vec<TimingRecord>)> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| run_replicate(&cfg, id, r))
            .collect()
    });
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for (rows, t) in results {
        records.extend(rows);
        timings.extend(t);
    }
    records.sort_by(|a, b| {
        let key = |x: &ExperimentRecord| {
            (
                x.replicate.parse::<usize>().unwrap_or(usize::MAX),
                x.method,
                mode_key(&x.mode),
            )
        };
        key(a).cmp(&key(b))
    });
    let summary = summarize(&cfg, id, &records);
    records.extend(summary);
    Ok(ExperimentOutput {
        config: cfg,
        records,
        timings,
    })
}

pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn records_csv_string(records: &[ExperimentRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_records_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Write the results CSV at `path`, plus `<stem>.config.json` (resolved config) and
/// `<stem>.timing.csv` (per replicate and method wall-clock time).
pub fn write_experiment(out: &ExperimentOutput, path: &Path) -> Result<Vec<PathBuf>> {
    let wrap = |p: &Path, r: Result<()>| r.map_err(|e| Error::file(p, e.to_string()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        wrap(dir, fs::create_dir_all(dir).map_err(Error::from))?;
    }
    wrap(
        path,
        fs::write(path, records_csv_string(&out.records)?).map_err(Error::from),
    )?;
    let config_path = sidecar(path, "config.json");
    let mut config_json = serde_json::to_string_pretty(&out.config)?;
    config_json.push('\n');
    wrap(
        &config_path,
        fs::write(&config_path, config_json).map_err(Error::from),
    )?;
    let timing_path = sidecar(path, "timing.csv");
    let mut buf = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buf);
        for t in &out.timings {
            writer.serialize(t)?;
        }
        writer.flush()?;
    }
    wrap(
        &timing_path,
        fs::write(&timing_path, buf).map_err(Error::from),
    )?;
    Ok(vec![path.to_path_buf(), config_path, timing_path])
}
