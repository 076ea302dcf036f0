//! End-to-end precision estimators for tensor data.
//!
//! * [`Method::Sss`]: spatial-sign separate estimator. Samples are centered at the
//!   spatial median and replaced by their spatial signs; every mode is then solved
//!   once, independently, from fixed initial factors of the other modes.
//! * [`Method::Sep`]: the same separate scheme on plainly centered data.
//! * [`Method::Cyc`]: mean-based cyclic estimator; starts from `Sep` and re-solves each
//!   mode in turn with the latest estimates of the others.
//!
//! Penalties are user-facing per-mode `λ_k`; the solver runs on `Ŝ_k` with
//! `p_k λ_k`, which has the same minimizer as the per-mode loss
//! `(1/p_k) tr(Ŝ_k Ω) - (1/p_k) log|Ω| + λ_k ||Ω||_{1,off}`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::{graphical_lasso, SolverOptions, SolverResult};
use crate::robust::{
    coordinate_mean, init_precision_from, init_uses_inverse, mode_scatter, scatter_scale,
    spatial_median, transform_samples, MedianOptions, Transform,
};
use crate::sym::{SymMatrix, DEFAULT_RIDGE};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SSS")]
    Sss,
    #[serde(rename = "Sep")]
    Sep,
    #[serde(rename = "Cyc")]
    Cyc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sss, Method::Sep, Method::Cyc];

    pub fn transform(self) -> Transform {
        match self {
            Method::Sss => Transform::Sign,
            Method::Sep | Method::Cyc => Transform::Center,
        }
    }

    pub fn default_center(self) -> CenterMode {
        match self {
            Method::Sss => CenterMode::SpatialMedian,
            Method::Sep | Method::Cyc => CenterMode::SampleMean,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sss => "SSS",
            Method::Sep => "Sep",
            Method::Cyc => "Cyc",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sss" => Ok(Method::Sss),
            "sep" => Ok(Method::Sep),
            "cyc" => Ok(Method::Cyc),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method {s:?} (expected SSS, Sep or Cyc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CenterMode {
    Known(Tensor),
    SpatialMedian,
    SampleMean,
}

#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub method: Method,
    /// One penalty per mode.
    pub lambdas: Vec<f64>,
    /// `None` uses the method's default center.
    pub center: Option<CenterMode>,
    /// Solver settings; `lambda` is overwritten per mode.
    pub solver: SolverOptions,
    pub median: MedianOptions,
    pub cyc_max_cycles: usize,
    /// Cyc stops once no mode moves more than this in Frobenius norm.
    pub cyc_tol: f64,
    /// Eigenvalue floor for inverses and square roots, relative to `trace / p`.
    pub ridge: f64,
    /// Order in which the modes are processed; defaults to `0..K`.
    pub mode_order: Option<Vec<usize>>,
}

impl EstimatorSpec {
    pub fn new(method: Method, lambdas: Vec<f64>) -> Self {
        Self {
            method,
            lambdas,
            center: None,
            solver: SolverOptions::default(),
            median: MedianOptions::default(),
            cyc_max_cycles: 10,
            cyc_tol: 1e-4,
            ridge: DEFAULT_RIDGE,
            mode_order: None,
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }

    fn validate(&self, order: usize) -> Result<()> {
        if self.lambdas.len() != order {
            return Err(Error::InvalidArgument(format!(
                "{} penalties given for an order-{order} tensor",
                self.lambdas.len()
            )));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument(
                "penalties must be finite and nonnegative".into(),
            ));
        }
        if self.cyc_max_cycles == 0 {
            return Err(Error::InvalidArgument(
                "cyc_max_cycles must be at least 1".into(),
            ));
        }
        if let Some(order_list) = &self.mode_order {
            let mut sorted = order_list.clone();
            sorted.sort_unstable();
            if sorted != (0..order).collect::<Vec<_>>() {
                return Err(Error::InvalidArgument(format!(
                    "mode order {order_list:?} is not a permutation of the modes"
                )));
            }
        }
        Ok(())
    }

    fn order_of_modes(&self, order: usize) -> Vec<usize> {
        self.mode_order
            .clone()
            .unwrap_or_else(|| (0..order).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeDiagnostics {
    /// User-facing penalty `λ_k`.
    pub lambda: f64,
    /// Penalty handed to the solver, `p_k λ_k`.
    pub lambda_eff: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    /// Whether the initial factor came from an inverted scatter (rather than identity).
    pub init_inverse: bool,
}

#[derive(Debug, Clone)]
pub struct PrecisionSet {
    pub method: Method,
    /// Estimated precisions, each with unit Frobenius norm.
    pub omegas: Vec<SymMatrix>,
    /// Solver outputs before normalization.
    pub raw: Vec<SymMatrix>,
    pub diagnostics: Vec<ModeDiagnostics>,
    pub center: Tensor,
    /// Cycles run (0 for the separate estimators).
    pub cycles: usize,
    pub cycles_converged: bool,
}

impl PrecisionSet {
    pub fn order(&self) -> usize {
        self.omegas.len()
    }
}

/// Samples transformed for a method together with the initial factors `Ω̃_ℓ`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub transform: Transform,
    pub dims: Vec<usize>,
    pub center: Tensor,
    pub transformed: Vec<Tensor>,
    /// `Ω̃_ℓ`, unit Frobenius norm.
    pub init: Vec<SymMatrix>,
    /// `Ω̃_ℓ^{1/2}`.
    pub roots: Vec<SymMatrix>,
    pub init_inverse: Vec<bool>,
    ridge: f64,
}

fn check_samples(samples: &[Tensor]) -> Result<&[usize]> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    for s in samples {
        first.check_same_dims(s)?;
    }
    Ok(first.dims())
}

/// Locate the center for `samples`.
pub fn find_center(samples: &[Tensor], mode: &CenterMode, median: MedianOptions) -> Result<Tensor> {
    match mode {
        CenterMode::Known(c) => {
            samples
                .first()
                .ok_or(Error::EmptySample)?
                .check_same_dims(c)?;
            Ok(c.clone())
        }
        CenterMode::SampleMean => coordinate_mean(samples),
        CenterMode::SpatialMedian => Ok(spatial_median(samples, median)?.center),
    }
}

impl Prepared {
    /// Center, transform and initialize factors for `spec.method`.
    pub fn new(samples: &[Tensor], spec: &EstimatorSpec) -> Result<Self> {
        let dims = check_samples(samples)?.to_vec();
        let transform = spec.method.transform();
        let center_mode = spec
            .center
            .clone()
            .unwrap_or_else(|| spec.method.default_center());
        let center = find_center(samples, &center_mode, spec.median)?;
        let transformed = transform_samples(samples, &center, transform)?;
        Self::from_transformed(dims, center, transformed, transform, spec.ridge)
    }

    fn from_transformed(
        dims: Vec<usize>,
        center: Tensor,
        transformed: Vec<Tensor>,
        transform: Transform,
        ridge: f64,
    ) -> Result<Self> {
        if transformed
            .iter()
            .all(|t| t.as_slice().iter().all(|&v| v == 0.0))
        {
            return Err(Error::DegenerateSample);
        }
        let n = transformed.len();
        let init = (0..dims.len())
            .map(|l| {
                init_precision_from(&transformed, l, transform, ridge).map_err(|e| e.in_mode(l))
            })
            .collect::<Result<Vec<_>>>()?;
        let roots = init
            .iter()
            .map(|o| o.sqrt(ridge * o.trace() / o.dim() as f64))
            .collect();
        let init_inverse = (0..dims.len())
            .map(|l| init_uses_inverse(n, &dims, l))
            .collect();
        Ok(Self {
            transform,
            dims,
            center,
            transformed,
            init,
            roots,
            init_inverse,
            ridge,
        })
    }

    /// Transform other samples (e.g. a validation set) the same way, keeping this
    /// set's initial factors. The center is recomputed on `samples` with `spec`'s mode.
    pub fn with_samples(&self, samples: &[Tensor], spec: &EstimatorSpec) -> Result<Prepared> {
        let dims = check_samples(samples)?.to_vec();
        if dims != self.dims {
            return Err(Error::DimensionMismatch(format!(
                "samples have dims {dims:?}, expected {:?}",
                self.dims
            )));
        }
        let center_mode = spec
            .center
            .clone()
            .unwrap_or_else(|| spec.method.default_center());
        let center = find_center(samples, &center_mode, spec.median)?;
        let transformed = transform_samples(samples, &center, self.transform)?;
        Ok(Prepared {
            transform: self.transform,
            dims,
            center,
            transformed,
            init: self.init.clone(),
            roots: self.roots.clone(),
            init_inverse: self.init_inverse.clone(),
            ridge: self.ridge,
        })
    }

    pub fn n(&self) -> usize {
        self.transformed.len()
    }

    /// Mode-`mode` scatter built with the given square-root factors for the other modes.
    pub fn scatter_with(&self, mode: usize, roots: &[SymMatrix]) -> Result<SymMatrix> {
        let factors: Vec<&SymMatrix> = roots
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != mode)
            .map(|(_, r)| r)
            .collect();
        let scale = scatter_scale(self.transform, &self.dims, mode, self.n());
        mode_scatter(&self.transformed, mode, &factors, scale)
    }

    /// Mode-`mode` scatter with the initial factors.
    pub fn scatter(&self, mode: usize) -> Result<SymMatrix> {
        self.scatter_with(mode, &self.roots)
    }
}

/// Solve one mode: graphical lasso on `scatter` with penalty `p_k λ_k`.
pub fn solve_mode(
    scatter: &SymMatrix,
    lambda: f64,
    solver: &SolverOptions,
) -> Result<SolverResult> {
    let opts = SolverOptions {
        lambda: lambda * scatter.dim() as f64,
        ..solver.clone()
    };
    graphical_lasso(scatter, &opts)
}

fn diagnostics(res: &SolverResult, lambda: f64, p: usize, init_inverse: bool) -> ModeDiagnostics {
    ModeDiagnostics {
        lambda,
        lambda_eff: lambda * p as f64,
        iterations: res.iterations,
        converged: res.converged,
        kkt_residual: res.kkt_residual,
        init_inverse,
    }
}

struct ModeFit {
    raw: SymMatrix,
    omega: SymMatrix,
    diag: ModeDiagnostics,
}

fn fit_mode(
    prep: &Prepared,
    mode: usize,
    roots: &[SymMatrix],
    spec: &EstimatorSpec,
) -> Result<ModeFit> {
    let run = || -> Result<ModeFit> {
        let scatter = prep.scatter_with(mode, roots)?;
        let lambda = spec.lambdas[mode];
        let res = solve_mode(&scatter, lambda, &spec.solver)?;
        let omega = res.omega.normalize_frob()?;
        let diag = diagnostics(&res, lambda, prep.dims[mode], prep.init_inverse[mode]);
        Ok(ModeFit {
            raw: res.omega,
            omega,
            diag,
        })
    };
    run().map_err(|e| e.in_mode(mode))
}

/// Separate estimation: each mode from the initial factors only.
fn estimate_separate(prep: &Prepared, spec: &EstimatorSpec) -> Result<Vec<ModeFit>> {
    let order = spec.order_of_modes(prep.dims.len());
    let mut fits: Vec<(usize, ModeFit)> = order
        .par_iter()
        .map(|&k| fit_mode(prep, k, &prep.roots, spec).map(|f| (k, f)))
        .collect::<Result<Vec<_>>>()?;
    fits.sort_by_key(|(k, _)| *k);
    Ok(fits.into_iter().map(|(_, f)| f).collect())
}

fn assemble(
    method: Method,
    prep: Prepared,
    fits: Vec<ModeFit>,
    cycles: usize,
    cycles_converged: bool,
) -> PrecisionSet {
    let mut omegas = Vec::with_capacity(fits.len());
    let mut raw = Vec::with_capacity(fits.len());
    let mut diagnostics = Vec::with_capacity(fits.len());
    for f in fits {
        omegas.push(f.omega);
        raw.push(f.raw);
        diagnostics.push(f.diag);
    }
    PrecisionSet {
        method,
        omegas,
        raw,
        diagnostics,
        center: prep.center,
        cycles,
        cycles_converged,
    }
}

fn require_method(spec: &EstimatorSpec, method: Method, samples: &[Tensor]) -> Result<()> {
    if spec.method != method {
        return Err(Error::InvalidArgument(format!(
            "spec is for {}, called the {method} estimator",
            spec.method
        )));
    }
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two samples are required".into(),
        ));
    }
    spec.validate(check_samples(samples)?.len())
}

/// Spatial-sign separate estimator.
pub fn estimate_sss(samples: &[Tensor], spec: &EstimatorSpec) -> Result<PrecisionSet> {
    require_method(spec, Method::Sss, samples)?;
    let prep = Prepared::new(samples, spec)?;
    let fits = estimate_separate(&prep, spec)?;
    Ok(assemble(Method::Sss, prep, fits, 0, true))
}

/// Mean-based separate estimator.
pub fn estimate_sep(samples: &[Tensor], spec: &EstimatorSpec) -> Result<PrecisionSet> {
    require_method(spec, Method::Sep, samples)?;
    let prep = Prepared::new(samples, spec)?;
    let fits = estimate_separate(&prep, spec)?;
    Ok(assemble(Method::Sep, prep, fits, 0, true))
}

/// Mean-based cyclic estimator, initialized at the separate estimate.
pub fn estimate_cyc(samples: &[Tensor], spec: &EstimatorSpec) -> Result<PrecisionSet> {
    require_method(spec, Method::Cyc, samples)?;
    let prep = Prepared::new(samples, spec)?;
    let mut fits = estimate_separate(&prep, spec)?;
    let mut roots: Vec<SymMatrix> = fits
        .iter()
        .map(|f| {
            f.omega
                .sqrt(prep.ridge * f.omega.trace() / f.omega.dim() as f64)
        })
        .collect();
    let order = spec.order_of_modes(prep.dims.len());
    let mut cycles = 0;
    let mut converged = false;
    while cycles < spec.cyc_max_cycles {
        cycles += 1;
        let mut max_change = 0.0f64;
        for &k in &order {
            let fit = fit_mode(&prep, k, &roots, spec)?;
            max_change = max_change.max(fit.omega.sub(&fits[k].omega).frob_norm());
            roots[k] = fit
                .omega
                .sqrt(prep.ridge * fit.omega.trace() / fit.omega.dim() as f64);
            fits[k] = fit;
        }
        if max_change <= spec.cyc_tol {
            converged = true;
            break;
        }
    }
    Ok(assemble(Method::Cyc, prep, fits, cycles, converged))
}

/// Run the estimator named by `spec.method`.
pub fn estimate(samples: &[Tensor], spec: &EstimatorSpec) -> Result<PrecisionSet> {
    match spec.method {
        Method::Sss => estimate_sss(samples, spec),
        Method::Sep => estimate_sep(samples, spec),
        Method::Cyc => estimate_cyc(samples, spec),
    }
}

/// Zero every off-diagonal entry with `|Ω_ij| < tau`; the diagonal is kept.
pub fn threshold_precision(omega: &SymMatrix, tau: f64) -> SymMatrix {
    let p = omega.dim();
    SymMatrix::from_fn(p, |i, j| {
        let v = omega.get(i, j);
        if i != j && v.abs() < tau {
            0.0
        } else {
            v
        }
    })
}

/// `a / ||a||_F`.
pub fn normalize_frob(a: &SymMatrix) -> Result<SymMatrix> {
    a.normalize_frob()
}
