//! Spatial signs, the sample spatial median, and the sign-based scatter matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sym::SymMatrix;
use crate::tensor::Tensor;

/// Relative size below which a centered sample counts as sitting on the center.
pub const SIGN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianOptions {
    /// Step tolerance, relative to the mean distance of the samples from their mean.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MedianOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CenterEstimate {
    pub center: Tensor,
    pub iterations: usize,
    pub converged: bool,
    /// Norm of the last iterate displacement.
    pub final_step: f64,
    /// `Σ_i ||T_i - μ||` at every iterate, starting from the coordinate-wise mean.
    pub objective_history: Vec<f64>,
}

/// A scatter matrix together with the dimension multiplier applied to it.
#[derive(Debug, Clone)]
pub struct SignScatter {
    pub matrix: SymMatrix,
    pub scale_dim: usize,
    pub n: usize,
}

/// How each sample is turned into the tensor whose outer products are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `U(T_i - μ)`, the spatial sign.
    Sign,
    /// `T_i - μ`, plain centering.
    Center,
}

/// `(t - center) / ||t - center||`, or zero when the norm is at most `eps`.
pub fn spatial_sign(t: &Tensor, center: &Tensor, eps: f64) -> Result<Tensor> {
    let diff = t.sub(center)?;
    let norm = diff.norm();
    if norm <= eps {
        return Ok(Tensor::zeros(t.dims()));
    }
    Ok(diff.scaled(1.0 / norm))
}

fn check_common_dims(samples: &[Tensor]) -> Result<&[usize]> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    for s in &samples[1..] {
        first.check_same_dims(s)?;
    }
    Ok(first.dims())
}

/// Coordinate-wise mean of the samples.
pub fn coordinate_mean(samples: &[Tensor]) -> Result<Tensor> {
    let dims = check_common_dims(samples)?;
    let mut acc = vec![0.0; samples[0].len()];
    for s in samples {
        for (a, v) in acc.iter_mut().zip(s.as_slice()) {
            *a += v;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(Tensor::from_parts(dims.to_vec(), acc))
}

/// Largest distance of a sample from `center`, used to scale the sign cutoff.
pub fn data_scale(samples: &[Tensor], center: &Tensor) -> Result<f64> {
    let mut scale = 0.0f64;
    for s in samples {
        center.check_same_dims(s)?;
        scale = scale.max(distance(s.as_slice(), center.as_slice()));
    }
    Ok(scale)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn median_objective(samples: &[Tensor], y: &[f64]) -> f64 {
    samples.iter().map(|s| distance(s.as_slice(), y)).sum()
}

/// Sample spatial median by Weiszfeld iteration with the Vardi–Zhang modification
/// at data points.
pub fn spatial_median(samples: &[Tensor], opts: MedianOptions) -> Result<CenterEstimate> {
    let dims = check_common_dims(samples)?.to_vec();
    if samples.len() == 1 {
        return Ok(CenterEstimate {
            center: samples[0].clone(),
            iterations: 0,
            converged: true,
            final_step: 0.0,
            objective_history: vec![0.0],
        });
    }
    let mut y = coordinate_mean(samples)?.into_data();
    let scale = samples
        .iter()
        .map(|s| distance(s.as_slice(), &y))
        .sum::<f64>()
        / samples.len() as f64;
    if scale == 0.0 {
        return Ok(CenterEstimate {
            center: Tensor::from_parts(dims, y),
            iterations: 0,
            converged: true,
            final_step: 0.0,
            objective_history: vec![0.0],
        });
    }
    let tol = opts.tol * scale;
    let p = y.len();
    let mut history = Vec::new();
    let mut dist = vec![0.0; samples.len()];
    let mut converged = false;
    let mut final_step = f64::INFINITY;
    let mut iterations = 0;
    let mut next = vec![0.0; p];
    while iterations < opts.max_iter {
        for (d, s) in dist.iter_mut().zip(samples) {
            *d = distance(s.as_slice(), &y);
        }
        history.push(dist.iter().sum());
        iterations += 1;

        let coincident = dist.iter().filter(|&&d| d <= tol).count();
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut weight_sum = 0.0;
        for (d, s) in dist.iter().zip(samples) {
            if *d > tol {
                let w = 1.0 / d;
                weight_sum += w;
                for (n, v) in next.iter_mut().zip(s.as_slice()) {
                    *n += w * v;
                }
            }
        }
        if weight_sum == 0.0 {
            converged = true;
            final_step = 0.0;
            break;
        }
        next.iter_mut().for_each(|v| *v /= weight_sum);

        if coincident > 0 {
            // Resultant pull of the other points: R = Σ w_i (x_i - y) = weight_sum (T - y).
            let r = weight_sum * distance(&next, &y);
            let eta = coincident as f64;
            if r <= eta {
                converged = true;
                final_step = 0.0;
                break;
            }
            let beta = eta / r;
            for (n, v) in next.iter_mut().zip(&y) {
                *n = (1.0 - beta) * *n + beta * v;
            }
        }
        final_step = distance(&next, &y);
        std::mem::swap(&mut y, &mut next);
        if final_step <= tol {
            converged = true;
            break;
        }
    }

    // A median sitting on a data point is approached only sublinearly; snap to the
    // nearest sample when that is at least as good.
    let mut best = median_objective(samples, &y);
    if let Some(nearest) = samples
        .iter()
        .min_by(|a, b| distance(a.as_slice(), &y).total_cmp(&distance(b.as_slice(), &y)))
    {
        let at_point = median_objective(samples, nearest.as_slice());
        if at_point < best {
            best = at_point;
            y.copy_from_slice(nearest.as_slice());
        }
    }
    history.push(best);

    Ok(CenterEstimate {
        center: Tensor::from_parts(dims, y),
        iterations,
        converged,
        final_step,
        objective_history: history,
    })
}

/// Apply `transform` about `center` to every sample.
pub fn transform_samples(
    samples: &[Tensor],
    center: &Tensor,
    transform: Transform,
) -> Result<Vec<Tensor>> {
    check_common_dims(samples)?;
    match transform {
        Transform::Center => samples.iter().map(|s| s.sub(center)).collect(),
        Transform::Sign => {
            let eps = SIGN_EPS * data_scale(samples, center)?;
            samples
                .iter()
                .map(|s| spatial_sign(s, center, eps))
                .collect()
        }
    }
}

/// `Ŝ = (p*/n) Σ_i vec(U_i) vec(U_i)^T`. Dense `p* x p*`; intended for small tensors.
pub fn sign_covariance_full(samples: &[Tensor], center: &Tensor) -> Result<SignScatter> {
    let signs = transform_samples(samples, center, Transform::Sign)?;
    let p_star = center.len();
    let n = signs.len();
    let mut acc = DMatrix::zeros(p_star, p_star);
    for s in &signs {
        let v = nalgebra::DVector::from_column_slice(s.as_slice());
        acc.ger(1.0, &v, &v, 1.0);
    }
    acc *= p_star as f64 / n as f64;
    Ok(SignScatter {
        matrix: SymMatrix::symmetrized(acc),
        scale_dim: p_star,
        n,
    })
}

/// `scale * Σ_i V_i V_i^T` with `V_i` the mode-`mode` unfolding of
/// `X_i x {F_1, .., I, .., F_K}`; `factors` holds one matrix per mode other than `mode`,
/// in mode order.
pub fn mode_scatter(
    transformed: &[Tensor],
    mode: usize,
    factors: &[&SymMatrix],
    scale: f64,
) -> Result<SymMatrix> {
    let dims = check_common_dims(transformed)?;
    let order = dims.len();
    if mode >= order {
        return Err(Error::ModeOutOfRange {
            mode: mode + 1,
            order,
        });
    }
    if factors.len() != order - 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} square-root factors, got {}",
            order - 1,
            factors.len()
        )));
    }
    let others: Vec<usize> = (0..order).filter(|&l| l != mode).collect();
    for (&l, f) in others.iter().zip(factors) {
        if f.dim() != dims[l] {
            return Err(Error::DimensionMismatch(format!(
                "factor for mode {} is {}x{}, mode size is {}",
                l + 1,
                f.dim(),
                f.dim(),
                dims[l]
            )));
        }
    }
    let mats: Vec<(&DMatrix<f64>, usize)> = others
        .iter()
        .zip(factors)
        .map(|(&l, f)| (f.as_matrix(), l))
        .collect();
    let p = dims[mode];
    let mut acc = DMatrix::zeros(p, p);
    for x in transformed {
        if mats.is_empty() {
            x.add_mode_gram(mode, scale, &mut acc)?;
        } else {
            x.multi_mode_product(&mats)?
                .add_mode_gram(mode, scale, &mut acc)?;
        }
    }
    Ok(SymMatrix::symmetrized(acc))
}

/// `Ŝ_k = (p_k/n) Σ_i V_i^k V_i^{kT}` from spatial signs about `center`.
pub fn mode_sign_matrix(
    samples: &[Tensor],
    center: &Tensor,
    mode: usize,
    sqrt_factors: &[SymMatrix],
) -> Result<SignScatter> {
    let signs = transform_samples(samples, center, Transform::Sign)?;
    let factors: Vec<&SymMatrix> = sqrt_factors.iter().collect();
    let p = center
        .dims()
        .get(mode)
        .copied()
        .ok_or(Error::ModeOutOfRange {
            mode: mode + 1,
            order: center.order(),
        })?;
    let n = signs.len();
    let matrix = mode_scatter(&signs, mode, &factors, p as f64 / n as f64)?;
    Ok(SignScatter {
        matrix,
        scale_dim: p,
        n,
    })
}

/// Scale applied to the mode-k outer-product sum: `p_k/n` for signs and
/// `p_k/(p* n)` for centered data.
pub fn scatter_scale(transform: Transform, dims: &[usize], mode: usize, n: usize) -> f64 {
    let p_k = dims[mode] as f64;
    match transform {
        Transform::Sign => p_k / n as f64,
        Transform::Center => p_k / (dims.iter().product::<usize>() as f64 * n as f64),
    }
}

/// Whether the initial precision for mode `mode` comes from an inverted scatter
/// (`n p* > p^2 (p-1) / 2`) rather than the identity.
pub fn init_uses_inverse(n: usize, dims: &[usize], mode: usize) -> bool {
    let p = dims[mode] as f64;
    let p_star: f64 = dims.iter().map(|&d| d as f64).product();
    n as f64 * p_star > p * p * (p - 1.0) / 2.0
}

/// Initial precision estimate from already transformed samples, Frobenius-normalized.
pub fn init_precision_from(
    transformed: &[Tensor],
    mode: usize,
    transform: Transform,
    ridge_rel: f64,
) -> Result<SymMatrix> {
    let dims = check_common_dims(transformed)?;
    let n = transformed.len();
    let p = dims[mode];
    if !init_uses_inverse(n, dims, mode) {
        return SymMatrix::identity(p).normalize_frob();
    }
    let scale = scatter_scale(transform, dims, mode, n);
    let mut acc = DMatrix::zeros(p, p);
    for x in transformed {
        x.add_mode_gram(mode, scale, &mut acc)?;
    }
    let scatter = SymMatrix::symmetrized(acc);
    if scatter.trace() <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    let ridge = ridge_rel * scatter.trace() / p as f64;
    scatter.inverse(ridge).normalize_frob()
}

/// Initial precision `Ω̃_ℓ` for mode `mode`: the inverse of the mode scatter when the
/// sample is large enough, else the identity; always scaled to unit Frobenius norm.
pub fn init_precision(
    samples: &[Tensor],
    center: &Tensor,
    mode: usize,
    use_sign: bool,
    ridge_rel: f64,
) -> Result<SymMatrix> {
    let transform = if use_sign {
        Transform::Sign
    } else {
        Transform::Center
    };
    let transformed = transform_samples(samples, center, transform)?;
    init_precision_from(&transformed, mode, transform, ridge_rel)
}
