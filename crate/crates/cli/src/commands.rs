use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use tegma_core::estimators::{
    estimate as run_estimate, threshold_precision, CenterMode, EstimatorSpec,
};
use tegma_core::evaluation::{self, mode_loss, mode_support, TuneResult};
use tegma_core::experiment::{write_experiment, ExperimentConfig};
use tegma_core::io::{self, read_matrix_csv, read_samples, write_matrix_csv, write_tensor};
use tegma_core::simulation::{make_model, rng_from_seed, sample, sub_seed, ModeTruth};
use tegma_core::{run_experiment, ModelId, Tensor};

use crate::{
    CenterArg, EstimateArgs, EvalArgs, ExperimentArgs, FileFormat, GlobalArgs, PrepArgs,
    SimulateArgs, Standardize, TuneArgs,
};

fn out_dir(global: &GlobalArgs, default: &str) -> Result<PathBuf> {
    let dir = global
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(default));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
struct Manifest {
    model: u8,
    dims: Vec<usize>,
    structures: Vec<String>,
    distribution: String,
    n: usize,
    seed: u64,
    stream_seed: u64,
    samples: Vec<String>,
}

pub fn simulate(global: &GlobalArgs, a: &SimulateArgs) -> Result<()> {
    let id = ModelId::new(a.model)?;
    ensure!(
        !id.is_slow() || global.slow_ok,
        "model {id} is very expensive; pass --slow-ok to run it"
    );
    ensure!(a.n >= 1, "n must be at least 1");
    let seed = global.seed.unwrap_or(0);
    // Same stream as replicate 0 of an experiment with this base seed.
    let stream_seed = sub_seed(seed, 0);
    let mut rng = rng_from_seed(stream_seed);
    let truth = make_model(id, &mut rng)?;
    let samples = sample(a.n, &truth, a.dist, &mut rng)?;

    let dir = out_dir(global, "tegma-sim")?;
    let ext = match a.format {
        FileFormat::Ten => "ten",
        FileFormat::Tenb => "tenb",
    };
    let width = a.n.to_string().len().max(4);
    let mut names = Vec::with_capacity(a.n);
    for (i, s) in samples.iter().enumerate() {
        let name = format!("sample_{i:0width$}.{ext}");
        write_tensor(&dir.join(&name), s)?;
        names.push(name);
    }
    for (k, m) in truth.modes.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("sigma_{}.csv", k + 1)), &m.sigma)?;
        write_matrix_csv(&dir.join(format!("omega_{}.csv", k + 1)), &m.omega)?;
    }
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            model: id.get(),
            dims: truth.dims.clone(),
            structures: truth.modes.iter().map(|m| m.kind.to_string()).collect(),
            distribution: a.dist.name(),
            n: a.n,
            seed,
            stream_seed,
            samples: names,
        },
    )?;
    println!(
        "wrote {} samples of dims {:?} to {}",
        a.n,
        truth.dims,
        dir.display()
    );
    Ok(())
}

/// Per-entry mean and standard deviation across samples.
struct Scaling {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Scaling {
    fn fit(samples: &[Tensor]) -> Scaling {
        let n = samples.len() as f64;
        let len = samples[0].len();
        let mut mean = vec![0.0; len];
        for s in samples {
            mean.iter_mut()
                .zip(s.as_slice())
                .for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; len];
        for s in samples {
            var.iter_mut()
                .zip(s.as_slice().iter().zip(&mean))
                .for_each(|(acc, (v, m))| *acc += (v - m).powi(2));
        }
        let denom = (n - 1.0).max(1.0);
        let sd = var.into_iter().map(|v| (v / denom).sqrt()).collect();
        Scaling { mean, sd }
    }

    /// Entries with zero spread are only centered.
    fn apply(&self, samples: &[Tensor]) -> Result<Vec<Tensor>> {
        samples
            .iter()
            .map(|s| {
                let data = s
                    .as_slice()
                    .iter()
                    .zip(self.mean.iter().zip(&self.sd))
                    .map(|(v, (m, sd))| if *sd > 0.0 { (v - m) / sd } else { v - m })
                    .collect();
                Ok(Tensor::new(s.dims().to_vec(), data)?)
            })
            .collect()
    }
}

struct Prepared {
    train: Vec<Tensor>,
    validation: Option<Vec<Tensor>>,
    spec: EstimatorSpec,
}

fn prepare(
    prep: &PrepArgs,
    inputs: &[PathBuf],
    validation: Option<&[PathBuf]>,
) -> Result<Prepared> {
    let mut train = read_samples(inputs)?;
    ensure!(
        train.len() >= 2,
        "at least two samples are required, got {}",
        train.len()
    );
    if train.iter().all(|t| t == &train[0]) {
        return Err(tegma_core::Error::DegenerateSample.into());
    }
    let mut val = validation.map(read_samples).transpose()?;
    if let Some(v) = &val {
        ensure!(
            v[0].dims() == train[0].dims(),
            "validation dims {:?} differ from training dims {:?}",
            v[0].dims(),
            train[0].dims()
        );
    }
    if prep.standardize == Standardize::Entrywise {
        let scaling = Scaling::fit(&train);
        train = scaling.apply(&train)?;
        val = val.map(|v| scaling.apply(&v)).transpose()?;
    }
    let order = train[0].order();
    let mut spec = EstimatorSpec::new(prep.method, vec![0.0; order]);
    spec.center = match (&prep.center_file, prep.center) {
        (Some(path), _) => Some(CenterMode::Known(io::read_tensor(path)?)),
        (None, CenterArg::Default) => None,
        (None, CenterArg::Median) => Some(CenterMode::SpatialMedian),
        (None, CenterArg::Mean) => Some(CenterMode::SampleMean),
    };
    Ok(Prepared {
        train,
        validation: val,
        spec,
    })
}

fn run_tune(p: &Prepared, prep: &PrepArgs, folds: usize) -> Result<TuneResult> {
    let grid = prep.grid.grid();
    Ok(match &p.validation {
        Some(v) => evaluation::tune(&p.train, v, &p.spec, &grid)?,
        None => evaluation::tune_cv(&p.train, folds, &p.spec, &grid)?,
    })
}

#[derive(Serialize)]
struct ModeReport {
    mode: usize,
    dim: usize,
    lambda: f64,
    lambda_eff: f64,
    iterations: usize,
    converged: bool,
    kkt_residual: f64,
    init_inverse: bool,
    file: String,
}

#[derive(Serialize)]
struct Diagnostics {
    method: String,
    dims: Vec<usize>,
    n: usize,
    standardize: String,
    center_mode: String,
    center_file: String,
    tuning: String,
    threshold: Option<f64>,
    cycles: usize,
    cycles_converged: bool,
    modes: Vec<ModeReport>,
}

pub fn estimate(global: &GlobalArgs, a: &EstimateArgs) -> Result<()> {
    let mut p = prepare(&a.prep, &a.inputs, a.validation.as_deref())?;
    let order = p.train[0].order();
    let tuning = match &a.lambda {
        Some(l) if l.len() == 1 => {
            p.spec.lambdas = vec![l[0]; order];
            "fixed".to_string()
        }
        Some(l) => {
            ensure!(
                l.len() == order,
                "{} penalties given for an order-{order} tensor",
                l.len()
            );
            p.spec.lambdas = l.clone();
            "fixed".to_string()
        }
        None => {
            let tuned = run_tune(&p, &a.prep, a.folds)?;
            p.spec.lambdas = tuned.lambdas();
            match p.validation {
                Some(_) => "validation".to_string(),
                None => format!("{}-fold cross-validation", a.folds),
            }
        }
    };
    if let Some(t) = a.threshold {
        ensure!(
            t >= 0.0 && t.is_finite(),
            "threshold must be a nonnegative number"
        );
    }
    let est = run_estimate(&p.train, &p.spec)?;

    let dir = out_dir(global, "tegma-estimate")?;
    let mut modes = Vec::with_capacity(order);
    for (k, (omega, d)) in est.omegas.iter().zip(&est.diagnostics).enumerate() {
        let omega = match a.threshold {
            Some(t) => threshold_precision(omega, t),
            None => omega.clone(),
        };
        let file = format!("omega_{}.csv", k + 1);
        write_matrix_csv(&dir.join(&file), &omega)?;
        modes.push(ModeReport {
            mode: k + 1,
            dim: omega.dim(),
            lambda: d.lambda,
            lambda_eff: d.lambda_eff,
            iterations: d.iterations,
            converged: d.converged,
            kkt_residual: d.kkt_residual,
            init_inverse: d.init_inverse,
            file,
        });
    }
    write_tensor(&dir.join("center.ten"), &est.center)?;
    let center_mode = match &p.spec.center {
        None => p.spec.method.default_center(),
        Some(c) => c.clone(),
    };
    write_json(
        &dir.join("diagnostics.json"),
        &Diagnostics {
            method: est.method.to_string(),
            dims: p.train[0].dims().to_vec(),
            n: p.train.len(),
            standardize: format!("{:?}", a.prep.standardize).to_lowercase(),
            center_mode: match center_mode {
                CenterMode::Known(_) => "known",
                CenterMode::SpatialMedian => "spatial-median",
                CenterMode::SampleMean => "sample-mean",
            }
            .into(),
            center_file: "center.ten".into(),
            tuning,
            threshold: a.threshold,
            cycles: est.cycles,
            cycles_converged: est.cycles_converged,
            modes,
        },
    )?;
    for (k, l) in p.spec.lambdas.iter().enumerate() {
        println!("mode {}: lambda = {l:e}", k + 1);
    }
    println!("wrote {order} precision matrices to {}", dir.display());
    Ok(())
}

pub fn tune(global: &GlobalArgs, a: &TuneArgs) -> Result<()> {
    let p = prepare(&a.prep, &a.train, a.validation.as_deref())?;
    let tuned = run_tune(&p, &a.prep, a.folds)?;
    let mut csv = String::from("mode,lambda,loss\n");
    for (k, m) in tuned.per_mode.iter().enumerate() {
        println!("mode {}: lambda = {:e}", k + 1, m.chosen);
        for pt in &m.curve {
            let loss = pt.loss.map(|l| format!("{l:e}")).unwrap_or_default();
            writeln!(csv, "{},{:e},{loss}", k + 1, pt.lambda)?;
        }
    }
    match &global.output {
        Some(path) => {
            fs::write(path, csv).with_context(|| format!("cannot write {}", path.display()))?;
            println!("wrote validation curve to {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn numbered_files(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    (1..)
        .map(|k| dir.join(format!("{prefix}_{k}.csv")))
        .take_while(|p| p.is_file())
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn eval(global: &GlobalArgs, a: &EvalArgs) -> Result<()> {
    let estimates = numbered_files(&a.estimate, "omega");
    let sigmas = numbered_files(&a.truth, "sigma");
    let omegas = numbered_files(&a.truth, "omega");
    if estimates.is_empty() {
        bail!("no omega_<k>.csv files in {}", a.estimate.display());
    }
    ensure!(
        sigmas.len() == estimates.len() && omegas.len() == estimates.len(),
        "{} estimated modes but the truth directory has {} covariance and {} precision files",
        estimates.len(),
        sigmas.len(),
        omegas.len()
    );
    let convention = global.convention.unwrap_or_default();
    let mut csv = String::from("mode,frob_loss,max_loss,tpr,tnr,convention\n");
    for (k, ((e, s), o)) in estimates.iter().zip(&sigmas).zip(&omegas).enumerate() {
        let est = read_matrix_csv(e)?;
        let truth = ModeTruth::from_matrices(read_matrix_csv(s)?, &read_matrix_csv(o)?)
            .with_context(|| format!("truth for mode {}", k + 1))?;
        let loss =
            mode_loss(&est, &truth, convention).with_context(|| format!("mode {}", k + 1))?;
        let sup = mode_support(&est, &truth, a.zero_tol)?;
        writeln!(
            csv,
            "{},{},{},{},{},{convention}",
            k + 1,
            loss.frob,
            loss.max,
            fmt_opt(sup.tpr),
            fmt_opt(sup.tnr)
        )?;
    }
    match &global.output {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("cannot write {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn experiment(global: &GlobalArgs, a: &ExperimentArgs) -> Result<()> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            ExperimentConfig::from_json(&text)
                .with_context(|| format!("invalid config {}", path.display()))?
        }
        None => {
            let model = a.model.context("either --config or --model is required")?;
            ExperimentConfig::new(ModelId::new(model)?, tegma_core::DistSpec::TensorNormal)
        }
    };
    if let Some(m) = a.model {
        cfg.model = tegma_core::experiment::ModelRef::Id(ModelId::new(m)?);
    }
    if let Some(d) = a.dist {
        cfg.distribution = d;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if a.n_validation.is_some() {
        cfg.n_validation = a.n_validation;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(m) = &a.methods {
        cfg.methods = m.clone();
    }
    if a.grid.grid.is_some()
        || a.grid.grid_count.is_some()
        || a.grid.grid_lo.is_some()
        || a.grid.grid_hi.is_some()
    {
        cfg.lambda_grid = a.grid.grid();
    }
    if let Some(s) = global.seed {
        cfg.base_seed = s;
    }
    if let Some(j) = global.jobs {
        cfg.jobs = j;
    }
    if let Some(c) = global.convention {
        cfg.loss_convention = c;
    }
    if global.slow_ok {
        cfg.slow_ok = true;
    }
    if let Some(o) = &global.output {
        cfg.output_path = Some(o.clone());
    }
    let path = cfg
        .output_path
        .clone()
        .unwrap_or_else(|| PathBuf::from("experiment.csv"));
    cfg.output_path = Some(path.clone());

    let out = run_experiment(&cfg)?;
    let written = write_experiment(&out, &path)?;
    let failures = out.records.iter().filter(|r| !r.error.is_empty()).count();
    for r in out
        .records
        .iter()
        .filter(|r| r.replicate == "summary" && r.mode == "avg")
    {
        println!(
            "{:<4} {:<4} frob {:<22} max {:<22} tpr {:<22} tnr {}",
            r.method,
            format!("{:?}", r.stat).to_lowercase(),
            fmt_opt(r.frob_loss),
            fmt_opt(r.max_loss),
            fmt_opt(r.tpr),
            fmt_opt(r.tnr)
        );
    }
    if failures > 0 {
        eprintln!("warning: {failures} replicate fits failed; see the error column");
    }
    for w in written {
        println!("wrote {}", w.display());
    }
    Ok(())
}
