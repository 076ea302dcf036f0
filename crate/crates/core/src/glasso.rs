//! Graphical lasso: minimize `trace(S Ω) - log det Ω + λ Σ_{i≠j} |Ω_ij|`.
//!
//! Blockwise coordinate descent on the working covariance `W`: each column of `W`
//! is updated by solving a lasso problem in the coefficients `β` with the remaining
//! block of `W` as its Gram matrix, and `Ω` is recovered from `W` and `β` at the end.
//! Convergence is certified by the stationarity (KKT) residual of the returned `Ω`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sym::SymMatrix;

/// Starting point for a warm-started solve.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub omega: SymMatrix,
    pub sigma: SymMatrix,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub lambda: f64,
    pub tol: f64,
    /// Maximum number of full sweeps over the columns.
    pub max_iter: usize,
    pub penalize_diagonal: bool,
    pub warm_start: Option<WarmStart>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tol: 1e-8,
            max_iter: 500,
            penalize_diagonal: false,
            warm_start: None,
        }
    }
}

impl SolverOptions {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub omega: SymMatrix,
    /// Working covariance `W`.
    pub sigma_hat: SymMatrix,
    /// Number of sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub objective: f64,
    /// Penalized objective after each sweep at which the recovered `Ω` was positive definite.
    pub objective_history: Vec<f64>,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    // |x| == t maps to zero.
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn l1_penalty(omega: &SymMatrix, lambda: f64, penalize_diagonal: bool) -> f64 {
    let p = omega.dim();
    let mut acc = 0.0;
    for j in 0..p {
        for i in 0..p {
            if i != j || penalize_diagonal {
                acc += omega.get(i, j).abs();
            }
        }
    }
    lambda * acc
}

/// `trace(S Ω) - log det Ω + λ Σ_{i≠j} |Ω_ij|`.
pub fn objective(s: &SymMatrix, omega: &SymMatrix, lambda: f64) -> Result<f64> {
    objective_with(s, omega, lambda, false)
}

pub fn objective_with(
    s: &SymMatrix,
    omega: &SymMatrix,
    lambda: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    check_same(s, omega)?;
    Ok(s.trace_product(omega) - omega.logdet_pd()? + l1_penalty(omega, lambda, penalize_diagonal))
}

fn check_same(s: &SymMatrix, omega: &SymMatrix) -> Result<()> {
    if s.dim() != omega.dim() {
        return Err(Error::DimensionMismatch(format!(
            "scatter is {}x{}, precision is {}x{}",
            s.dim(),
            s.dim(),
            omega.dim(),
            omega.dim()
        )));
    }
    Ok(())
}

/// Maximum violation of the stationarity conditions at `omega`, with an unpenalized
/// diagonal.
pub fn kkt_residual(s: &SymMatrix, omega: &SymMatrix, lambda: f64) -> Result<f64> {
    kkt_residual_with(s, omega, lambda, false)
}

pub fn kkt_residual_with(
    s: &SymMatrix,
    omega: &SymMatrix,
    lambda: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    check_same(s, omega)?;
    let inv = omega.inverse_pd()?;
    let p = s.dim();
    let mut worst = 0.0f64;
    for j in 0..p {
        for i in 0..=j {
            let g = s.get(i, j) - inv.get(i, j);
            let w = omega.get(i, j);
            let r = if i == j && !penalize_diagonal {
                g.abs()
            } else if w != 0.0 {
                (g + lambda * w.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Column-major symmetric working state.
struct State {
    p: usize,
    w: Vec<f64>,
    /// `beta[j * p + i]`: coefficient of variable `i` in the regression for column `j`.
    beta: Vec<f64>,
}

impl State {
    fn recover_omega(&self) -> SymMatrix {
        let p = self.p;
        let mut omega = DMatrix::zeros(p, p);
        for j in 0..p {
            let col = &self.w[j * p..][..p];
            let b = &self.beta[j * p..][..p];
            let mut quad = 0.0;
            for i in 0..p {
                if i != j {
                    quad += col[i] * b[i];
                }
            }
            let theta_jj = 1.0 / (col[j] - quad);
            omega[(j, j)] = theta_jj;
            for i in 0..p {
                if i != j {
                    omega[(i, j)] = -b[i] * theta_jj;
                }
            }
        }
        SymMatrix::symmetrized(omega)
    }

    fn sigma(&self) -> SymMatrix {
        SymMatrix::symmetrized(DMatrix::from_column_slice(self.p, self.p, &self.w))
    }
}

/// Solve `min_β ½ βᵀ W₁₁ β - s₁₂ᵀ β + λ ||β||₁` over the coordinates `i ≠ j`, in place.
/// Returns the number of passes.
fn lasso_column(
    st: &mut State,
    s: &SymMatrix,
    j: usize,
    lambda: f64,
    tol: f64,
    wb: &mut [f64],
) -> usize {
    let p = st.p;
    let (w, beta) = (&st.w, &mut st.beta[j * p..][..p]);
    // wb = W₁₁ β, indexed over all variables (entry j unused).
    wb.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..p {
        let bk = beta[k];
        if k != j && bk != 0.0 {
            let col = &w[k * p..][..p];
            for (acc, &wik) in wb.iter_mut().zip(col) {
                *acc += wik * bk;
            }
        }
    }
    let max_passes = 10_000;
    let mut passes = 0;
    while passes < max_passes {
        passes += 1;
        let mut max_delta = 0.0f64;
        for i in 0..p {
            if i == j {
                continue;
            }
            let wii = w[i * p + i];
            let old = beta[i];
            let r = s.get(i, j) - (wb[i] - wii * old);
            let new = soft_threshold(r, lambda) / wii;
            let delta = new - old;
            if delta != 0.0 {
                beta[i] = new;
                let col = &w[i * p..][..p];
                for (acc, &wki) in wb.iter_mut().zip(col) {
                    *acc += wki * delta;
                }
                max_delta = max_delta.max(delta.abs() * wii);
            }
        }
        if max_delta <= tol {
            break;
        }
    }
    passes
}

/// Graphical lasso by blockwise coordinate descent.
pub fn graphical_lasso(s: &SymMatrix, opts: &SolverOptions) -> Result<SolverResult> {
    let p = s.dim();
    let lambda = opts.lambda;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be a finite nonnegative number, got {lambda}"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    if (0..p).any(|i| s.get(i, i) <= 0.0) {
        return Err(Error::InvalidArgument(
            "scatter must have a strictly positive diagonal".into(),
        ));
    }
    // λ = 0 needs S itself to be invertible; otherwise S + λI must be.
    if !s
        .add(&SymMatrix::identity(p).scaled(lambda))
        .is_positive_definite()
    {
        return Err(Error::NotPositiveDefinite);
    }
    if lambda == 0.0 {
        // Unpenalized: the maximum likelihood estimate is S^{-1}.
        let omega = s.inverse_pd()?;
        let kkt = kkt_residual_with(s, &omega, 0.0, opts.penalize_diagonal)?;
        let objective = objective_with(s, &omega, 0.0, opts.penalize_diagonal)?;
        return Ok(SolverResult {
            omega,
            sigma_hat: s.clone(),
            iterations: 0,
            converged: true,
            kkt_residual: kkt,
            objective,
            objective_history: vec![objective],
        });
    }
    let diag_shift = if opts.penalize_diagonal { lambda } else { 0.0 };

    let mut st = State {
        p,
        w: s.as_matrix().as_slice().to_vec(),
        beta: vec![0.0; p * p],
    };
    for i in 0..p {
        st.w[i * p + i] += diag_shift;
    }
    if let Some(ws) = &opts.warm_start {
        if ws.omega.dim() != p || ws.sigma.dim() != p {
            return Err(Error::DimensionMismatch(
                "warm start size differs from scatter".into(),
            ));
        }
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    st.w[j * p + i] = ws.sigma.get(i, j);
                    st.beta[j * p + i] = -ws.omega.get(i, j) / ws.omega.get(j, j);
                }
            }
        }
    }

    let finish = |st: &State, omega: SymMatrix, iterations, converged, kkt, history: Vec<f64>| {
        let objective = objective_with(s, &omega, lambda, opts.penalize_diagonal)?;
        Ok(SolverResult {
            omega,
            sigma_hat: st.sigma(),
            iterations,
            converged,
            kkt_residual: kkt,
            objective,
            objective_history: history,
        })
    };

    if p == 1 {
        let omega = SymMatrix::from_diagonal(&[1.0 / st.w[0]]);
        let kkt = kkt_residual_with(s, &omega, lambda, opts.penalize_diagonal)?;
        return finish(&st, omega, 0, true, kkt, Vec::new());
    }

    let off_count = (p * (p - 1)) as f64;
    let mean_diag = (0..p).map(|i| s.get(i, i)).sum::<f64>() / p as f64;
    let mut mean_off = 0.0;
    for j in 0..p {
        for i in 0..p {
            if i != j {
                mean_off += s.get(i, j).abs();
            }
        }
    }
    mean_off /= off_count;
    let change_scale = mean_off.max(1e-3 * mean_diag);

    let mut change_tol = opts.tol;
    let mut inner_tol = 0.1 * opts.tol * mean_diag;
    let mut wb = vec![0.0; p];
    let mut history = Vec::new();
    let mut best: Option<(f64, SymMatrix)> = None;

    for sweep in 1..=opts.max_iter {
        let mut change = 0.0;
        for j in 0..p {
            lasso_column(&mut st, s, j, lambda, inner_tol, &mut wb);
            for (i, &v) in wb.iter().enumerate() {
                if i != j {
                    change += (v - st.w[j * p + i]).abs();
                    st.w[j * p + i] = v;
                    st.w[i * p + j] = v;
                }
            }
        }
        let omega = st.recover_omega();
        if let Ok(obj) = objective_with(s, &omega, lambda, opts.penalize_diagonal) {
            history.push(obj);
        }
        if change / off_count > change_tol * change_scale {
            continue;
        }
        let kkt =
            kkt_residual_with(s, &omega, lambda, opts.penalize_diagonal).unwrap_or(f64::INFINITY);
        if kkt <= opts.tol {
            return finish(&st, omega, sweep, true, kkt, history);
        }
        if best.as_ref().is_none_or(|(k, _)| kkt < *k) {
            best = Some((kkt, omega));
        }
        change_tol *= 0.1;
        inner_tol *= 0.1;
    }

    let omega = st.recover_omega();
    let kkt = kkt_residual_with(s, &omega, lambda, opts.penalize_diagonal).unwrap_or(f64::INFINITY);
    match best {
        Some((k, b)) if k < kkt => finish(&st, b, opts.max_iter, false, k, history),
        _ if kkt.is_finite() => finish(&st, omega, opts.max_iter, false, kkt, history),
        _ => Err(Error::NotPositiveDefinite),
    }
}
