//! Loss and support metrics against a known truth, validation-likelihood tuning,
//! and population-level oracles for the sign scatter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{solve_mode, EstimatorSpec, Prepared};
use crate::glasso::{SolverOptions, WarmStart};
use crate::robust::{mode_scatter, transform_samples, Transform};
use crate::simulation::GroundTruth;
use crate::sym::SymMatrix;
use crate::tensor::Tensor;

pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossConvention {
    /// Trace-normalized loss: `Ω̂_k` and `Ω_k*` each rescaled to trace `p_k`, then
    /// `||Δ||_F` and `||Δ||_max` of the difference. This reading reproduces the
    /// published simulation tables.
    #[default]
    CovarianceTrace,
    /// Compare the unit-Frobenius precisions directly.
    PrecisionFrobenius,
    /// `inv(Ω̂_k)` against `Σ_k*`, both rescaled to trace `p_k`; Frobenius loss
    /// divided by `sqrt(p_k)`.
    CovarianceInverse,
}

impl fmt::Display for LossConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossConvention::CovarianceTrace => "covariance-trace",
            LossConvention::PrecisionFrobenius => "precision-frobenius",
            LossConvention::CovarianceInverse => "covariance-inverse",
        })
    }
}

impl FromStr for LossConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "covariance-trace" => Ok(LossConvention::CovarianceTrace),
            "precision-frobenius" => Ok(LossConvention::PrecisionFrobenius),
            "covariance-inverse" => Ok(LossConvention::CovarianceInverse),
            _ => Err(Error::InvalidArgument(format!(
                "unknown loss convention {s:?} (expected covariance-trace, precision-frobenius or covariance-inverse)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeLoss {
    pub frob: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub per_mode: Vec<ModeLoss>,
    pub avg_frob: f64,
    pub avg_max: f64,
    pub convention: LossConvention,
}

/// `a * target / trace(a)`.
pub fn trace_normalize(a: &SymMatrix, target: f64) -> Result<SymMatrix> {
    let tr = a.trace();
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "trace normalization needs a positive trace, got {tr}"
        )));
    }
    Ok(a.scaled(target / tr))
}

/// Loss of one estimated precision against the truth of its mode.
pub fn mode_loss(
    est: &SymMatrix,
    truth: &crate::simulation::ModeTruth,
    convention: LossConvention,
) -> Result<ModeLoss> {
    let p = truth.dim();
    if est.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {p}x{p}",
            est.dim(),
            est.dim()
        )));
    }
    let (diff, denom) = match convention {
        LossConvention::CovarianceTrace => {
            let a = trace_normalize(est, p as f64)?;
            let b = trace_normalize(&truth.omega, p as f64)?;
            (a.sub(&b), 1.0)
        }
        LossConvention::CovarianceInverse => {
            let sigma_hat = trace_normalize(&est.inverse_pd()?, p as f64)?;
            let sigma = trace_normalize(&truth.sigma, p as f64)?;
            (sigma_hat.sub(&sigma), (p as f64).sqrt())
        }
        LossConvention::PrecisionFrobenius => (est.normalize_frob()?.sub(&truth.omega), 1.0),
    };
    Ok(ModeLoss {
        frob: diff.frob_norm() / denom,
        max: diff.max_abs(),
    })
}

fn check_order(omegas: &[SymMatrix], truth: &GroundTruth) -> Result<()> {
    if omegas.len() != truth.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated modes, truth has {}",
            omegas.len(),
            truth.order()
        )));
    }
    Ok(())
}

pub fn mode_losses(
    omegas: &[SymMatrix],
    truth: &GroundTruth,
    convention: LossConvention,
) -> Result<LossReport> {
    check_order(omegas, truth)?;
    let per_mode = omegas
        .iter()
        .zip(&truth.modes)
        .enumerate()
        .map(|(k, (o, t))| mode_loss(o, t, convention).map_err(|e| e.in_mode(k)))
        .collect::<Result<Vec<_>>>()?;
    let k = per_mode.len() as f64;
    Ok(LossReport {
        avg_frob: per_mode.iter().map(|l| l.frob).sum::<f64>() / k,
        avg_max: per_mode.iter().map(|l| l.max).sum::<f64>() / k,
        per_mode,
        convention,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSupport {
    /// `None` when the truth has no off-diagonal nonzeros.
    pub tpr: Option<f64>,
    /// `None` when the truth is fully dense.
    pub tnr: Option<f64>,
    /// Number of nonzero off-diagonal entries of the truth (ordered pairs).
    pub s_k: usize,
    /// Largest number of nonzeros in a row of the truth, diagonal included.
    pub d_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub per_mode: Vec<ModeSupport>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl SupportReport {
    /// Mean TPR over modes where it is defined.
    pub fn avg_tpr(&self) -> Option<f64> {
        mean_of(self.per_mode.iter().map(|m| m.tpr))
    }

    /// Mean TNR over modes where it is defined.
    pub fn avg_tnr(&self) -> Option<f64> {
        mean_of(self.per_mode.iter().map(|m| m.tnr))
    }
}

pub fn mode_support(
    est: &SymMatrix,
    truth: &crate::simulation::ModeTruth,
    zero_tol: f64,
) -> Result<ModeSupport> {
    let p = truth.dim();
    if est.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {p}x{p}",
            est.dim(),
            est.dim()
        )));
    }
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..p {
        for i in 0..j {
            let predicted = est.get(i, j).abs() > zero_tol;
            match (truth.is_edge(i, j), predicted) {
                (true, true) => tp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
            }
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    let d_k = (0..p)
        .map(|i| 1 + (0..p).filter(|&j| truth.is_edge(i, j)).count())
        .max()
        .unwrap_or(0);
    Ok(ModeSupport {
        tpr: ratio(tp, fn_),
        tnr: if truth.fully_dense {
            None
        } else {
            ratio(tn, fp)
        },
        s_k: 2 * (tp + fn_),
        d_k,
    })
}

pub fn support_metrics(
    omegas: &[SymMatrix],
    truth: &GroundTruth,
    zero_tol: f64,
) -> Result<SupportReport> {
    check_order(omegas, truth)?;
    let per_mode = omegas
        .iter()
        .zip(&truth.modes)
        .enumerate()
        .map(|(k, (o, t))| mode_support(o, t, zero_tol).map_err(|e| e.in_mode(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SupportReport { per_mode })
}

/// Negative log-likelihood `trace(S Ω) - log det Ω`.
pub fn validation_loss(omega: &SymMatrix, scatter: &SymMatrix) -> Result<f64> {
    if omega.dim() != scatter.dim() {
        return Err(Error::DimensionMismatch(format!(
            "precision is {}x{}, scatter is {}x{}",
            omega.dim(),
            omega.dim(),
            scatter.dim(),
            scatter.dim()
        )));
    }
    Ok(scatter.trace_product(omega) - omega.logdet_pd()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LambdaGrid {
    /// `count` log-spaced multipliers in `[lo, hi]` of the largest off-diagonal
    /// entry of each mode's training scatter; the resulting solver penalty is
    /// divided by `p_k` to give the reported `λ_k`.
    Relative { count: usize, lo: f64, hi: f64 },
    /// The same user-facing `λ` values for every mode.
    Explicit { values: Vec<f64> },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Relative {
            count: 20,
            lo: 1e-4,
            hi: 1.0,
        }
    }
}

impl LambdaGrid {
    pub fn validate(&self) -> Result<()> {
        match self {
            LambdaGrid::Relative { count, lo, hi } => {
                if *count == 0 || !(*lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "relative grid needs count >= 1 and 0 < lo <= hi, got {count}, {lo}, {hi}"
                    )));
                }
            }
            LambdaGrid::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidArgument("lambda grid is empty".into()));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "lambda grid values must be finite and nonnegative".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Ascending user-facing penalties for a mode with the given scatter.
    pub fn resolve(&self, scatter: &SymMatrix) -> Vec<f64> {
        let mut out = match self {
            LambdaGrid::Relative { count, lo, hi } => {
                let p = scatter.dim() as f64;
                let top = scatter.max_abs_off_diagonal();
                let (llo, lhi) = (lo.ln(), hi.ln());
                (0..*count)
                    .map(|i| {
                        let t = if *count == 1 {
                            1.0
                        } else {
                            i as f64 / (*count - 1) as f64
                        };
                        (llo + t * (lhi - llo)).exp() * top / p
                    })
                    .collect::<Vec<_>>()
            }
            LambdaGrid::Explicit { values } => values.clone(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub lambda: f64,
    /// `None` when the solver failed at this penalty.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeTune {
    pub chosen: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub per_mode: Vec<ModeTune>,
    pub grid: LambdaGrid,
}

impl TuneResult {
    pub fn lambdas(&self) -> Vec<f64> {
        self.per_mode.iter().map(|m| m.chosen).collect()
    }
}

/// Minimizer of a curve; exact ties go to the larger penalty.
pub fn select_lambda(curve: &[CurvePoint]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for pt in curve {
        if let Some(loss) = pt.loss {
            match best {
                Some((_, b)) if loss > b => {}
                Some((bl, b)) if loss == b && pt.lambda < bl => {}
                _ => best = Some((pt.lambda, loss)),
            }
        }
    }
    best.map(|(l, _)| l)
}

/// Validation losses along `lambdas` (ascending) for one mode. Solves run from the
/// largest penalty down, each warm-started from the previous solution.
fn curve_for(
    train: &SymMatrix,
    validation: &SymMatrix,
    lambdas: &[f64],
    solver: &SolverOptions,
) -> Vec<Option<f64>> {
    let mut losses = vec![None; lambdas.len()];
    let mut warm: Option<WarmStart> = None;
    for (idx, &lambda) in lambdas.iter().enumerate().rev() {
        let attempt = |ws: Option<WarmStart>| {
            let opts = SolverOptions {
                warm_start: ws,
                ..solver.clone()
            };
            solve_mode(train, lambda, &opts)
        };
        let res = match attempt(warm.clone()) {
            Ok(r) if r.converged || warm.is_none() => Ok(r),
            _ => attempt(None),
        };
        match res {
            Ok(r) => {
                losses[idx] = validation_loss(&r.omega, validation)
                    .ok()
                    .filter(|l| l.is_finite());
                warm = Some(WarmStart {
                    omega: r.omega,
                    sigma: r.sigma_hat,
                });
            }
            Err(_) => warm = None,
        }
    }
    losses
}

fn finish_mode(lambdas: Vec<f64>, losses: Vec<Option<f64>>, mode: usize) -> Result<ModeTune> {
    let curve: Vec<CurvePoint> = lambdas
        .into_iter()
        .zip(losses)
        .map(|(lambda, loss)| CurvePoint { lambda, loss })
        .collect();
    let chosen = select_lambda(&curve).ok_or_else(|| {
        Error::InvalidArgument("solver failed at every penalty on the grid".into()).in_mode(mode)
    })?;
    Ok(ModeTune { chosen, curve })
}

/// Choose one penalty per mode by validation likelihood. Each mode is fitted on
/// `train` with the other modes fixed at their initial factors; the validation
/// scatter reuses those training factors with the validation set's own center.
pub fn tune(
    train: &[Tensor],
    validation: &[Tensor],
    spec: &EstimatorSpec,
    grid: &LambdaGrid,
) -> Result<TuneResult> {
    grid.validate()?;
    let prep = Prepared::new(train, spec)?;
    let val = prep.with_samples(validation, spec)?;
    let per_mode = (0..prep.dims.len())
        .map(|k| {
            let s_train = prep.scatter(k).map_err(|e| e.in_mode(k))?;
            let s_val = val.scatter(k).map_err(|e| e.in_mode(k))?;
            let lambdas = grid.resolve(&s_train);
            let losses = curve_for(&s_train, &s_val, &lambdas, &spec.solver);
            finish_mode(lambdas, losses, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuneResult {
        per_mode,
        grid: grid.clone(),
    })
}

/// `folds`-fold cross-validation over contiguous blocks of `samples`; losses are
/// averaged across folds. A relative grid is resolved once on the full sample.
pub fn tune_cv(
    samples: &[Tensor],
    folds: usize,
    spec: &EstimatorSpec,
    grid: &LambdaGrid,
) -> Result<TuneResult> {
    grid.validate()?;
    let n = samples.len();
    if folds < 2 || n < 2 * folds {
        return Err(Error::InvalidArgument(format!(
            "{folds}-fold cross-validation needs at least 2 folds and {} samples, got {n}",
            2 * folds.max(2)
        )));
    }
    let full = Prepared::new(samples, spec)?;
    let order = full.dims.len();
    let grids = (0..order)
        .map(|k| {
            full.scatter(k)
                .map(|s| grid.resolve(&s))
                .map_err(|e| e.in_mode(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sums: Vec<Vec<Option<f64>>> = grids.iter().map(|g| vec![Some(0.0); g.len()]).collect();
    for f in 0..folds {
        let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
        let validation = &samples[lo..hi];
        let train: Vec<Tensor> = samples[..lo]
            .iter()
            .chain(&samples[hi..])
            .cloned()
            .collect();
        let prep = Prepared::new(&train, spec)?;
        let val = prep.with_samples(validation, spec)?;
        for k in 0..order {
            let s_train = prep.scatter(k).map_err(|e| e.in_mode(k))?;
            let s_val = val.scatter(k).map_err(|e| e.in_mode(k))?;
            let losses = curve_for(&s_train, &s_val, &grids[k], &spec.solver);
            for (acc, l) in sums[k].iter_mut().zip(losses) {
                *acc = match (*acc, l) {
                    (Some(a), Some(b)) => Some(a + b),
                    _ => None,
                };
            }
        }
    }
    let per_mode = grids
        .into_iter()
        .zip(sums)
        .enumerate()
        .map(|(k, (lambdas, s))| {
            let mean = s.into_iter().map(|v| v.map(|x| x / folds as f64)).collect();
            finish_mode(lambdas, mean, k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TuneResult {
        per_mode,
        grid: grid.clone(),
    })
}

/// `Π_{j≠k} trace(Λ_j Ω_j)` with `Λ_j` the shape matrix of mode `j`.
fn trace_products(truth: &GroundTruth, omegas: &[SymMatrix], k: usize) -> Result<f64> {
    if omegas.len() != truth.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for an order-{} truth",
            omegas.len(),
            truth.order()
        )));
    }
    if k >= truth.order() {
        return Err(Error::ModeOutOfRange {
            mode: k + 1,
            order: truth.order(),
        });
    }
    let mut prod = 1.0;
    for (j, (m, o)) in truth.modes.iter().zip(omegas).enumerate() {
        if j != k {
            if o.dim() != m.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "factor for mode {} is {}x{}, mode size is {}",
                    j + 1,
                    o.dim(),
                    o.dim(),
                    m.dim()
                )));
            }
            prod *= m.shape().trace_product(o);
        }
    }
    if prod == 0.0 || !prod.is_finite() {
        return Err(Error::InvalidArgument("trace product is zero".into()));
    }
    Ok(prod)
}

/// Population minimizer of the mode-`k` sign loss with the other modes fixed at
/// `omegas`: `p*/(p_k Π_{j≠k} tr(Λ_j Ω_j)) inv(Λ_k)`. `omegas[k]` is ignored.
pub fn population_target(truth: &GroundTruth, omegas: &[SymMatrix], k: usize) -> Result<SymMatrix> {
    let prod = trace_products(truth, omegas, k)?;
    let p_star: f64 = truth.dims.iter().map(|&d| d as f64).product();
    let p_k = truth.dims[k] as f64;
    Ok(truth.modes[k]
        .shape()
        .inverse_pd()?
        .scaled(p_star / (p_k * prod)))
}

/// `||Ŝ_k - c Λ_k||_max` with `c = p_k Π_{j≠k} tr(Λ_j Ω_j) / p*`, where `Ŝ_k` is the
/// sign scatter about the true center (zero) using `Ω_j^{1/2}` factors.
pub fn sign_scatter_gap(
    samples: &[Tensor],
    truth: &GroundTruth,
    omegas: &[SymMatrix],
    k: usize,
) -> Result<f64> {
    let prod = trace_products(truth, omegas, k)?;
    let first = samples.first().ok_or(Error::EmptySample)?;
    if first.dims() != truth.dims.as_slice() {
        return Err(Error::DimensionMismatch(format!(
            "samples have dims {:?}, truth has {:?}",
            first.dims(),
            truth.dims
        )));
    }
    let center = Tensor::zeros(&truth.dims);
    let signs = transform_samples(samples, &center, Transform::Sign)?;
    let roots: Vec<SymMatrix> = omegas
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, o)| o.sqrt(o.default_ridge()))
        .collect();
    let factors: Vec<&SymMatrix> = roots.iter().collect();
    let p_k = truth.dims[k] as f64;
    let p_star: f64 = truth.dims.iter().map(|&d| d as f64).product();
    let scatter = mode_scatter(&signs, k, &factors, p_k / samples.len() as f64)?;
    let c = p_k * prod / p_star;
    Ok(scatter.sub(&truth.modes[k].shape().scaled(c)).max_abs())
}
