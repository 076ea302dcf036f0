//! Ground-truth covariance structures, the six simulation models, and samplers for
//! tensor elliptical distributions.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sym::SymMatrix;
use crate::tensor::Tensor;

/// Random stream used for every simulation draw.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `r`: `mix64(base ^ (r * 0x9E3779B97F4A7C15))`.
pub fn sub_seed(base_seed: u64, replicate: u64) -> u64 {
    mix64(base_seed ^ replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Entries of a TR precision below this magnitude are exact zeros in the truth.
pub const TR_ZERO_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CovKind {
    /// Triangle covariance, `Σ_ij = exp(-|h_i - h_j| / 2)` with uniform gaps.
    Tr,
    /// Autoregressive precision `Ω_ij = ρ^|i-j|`.
    Ar {
        rho: f64,
    },
    /// Compound-symmetry precision: 1 on the diagonal, `rho` elsewhere.
    Cs {
        rho: f64,
    },
    Identity,
    /// Supplied directly rather than generated.
    Custom,
}

impl fmt::Display for CovKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovKind::Tr => write!(f, "TR"),
            CovKind::Ar { rho } => write!(f, "AR({rho})"),
            CovKind::Cs { rho } => write!(f, "CS({rho})"),
            CovKind::Identity => write!(f, "I"),
            CovKind::Custom => write!(f, "custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovSpec {
    pub kind: CovKind,
    pub p: usize,
}

/// Truth for one mode.
#[derive(Debug, Clone)]
pub struct ModeTruth {
    pub kind: CovKind,
    pub sigma: SymMatrix,
    /// Precision scaled to unit Frobenius norm.
    pub omega: SymMatrix,
    /// Off-diagonal support, row-major `p x p`; the diagonal is always `false`.
    pub support: Vec<bool>,
    pub fully_dense: bool,
}

impl ModeTruth {
    fn new(kind: CovKind, sigma: SymMatrix, omega: SymMatrix) -> Self {
        let p = omega.dim();
        let mut support = vec![false; p * p];
        for i in 0..p {
            for j in 0..p {
                support[i * p + j] = i != j && omega.get(i, j).abs() > 1e-12;
            }
        }
        let fully_dense = (0..p).all(|i| (0..p).all(|j| i == j || support[i * p + j]));
        Self {
            kind,
            sigma,
            omega,
            support,
            fully_dense,
        }
    }

    /// Truth from a covariance and its (possibly unnormalized) precision.
    pub fn from_matrices(sigma: SymMatrix, omega: &SymMatrix) -> Result<Self> {
        if sigma.dim() != omega.dim() {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {0}x{0}, precision is {1}x{1}",
                sigma.dim(),
                omega.dim()
            )));
        }
        if !sigma.is_positive_definite() || !omega.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self::new(CovKind::Custom, sigma, omega.normalize_frob()?))
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.support[i * self.dim() + j]
    }

    /// Shape matrix `p Σ / trace(Σ)`.
    pub fn shape(&self) -> SymMatrix {
        self.sigma.scaled(self.dim() as f64 / self.sigma.trace())
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub dims: Vec<usize>,
    pub modes: Vec<ModeTruth>,
}

impl GroundTruth {
    /// Truth from explicit per-mode covariance structures.
    pub fn from_specs(specs: &[CovSpec], rng: &mut impl Rng) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one mode is required".into(),
            ));
        }
        let modes = specs
            .iter()
            .map(|s| mode_truth(*s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims: specs.iter().map(|s| s.p).collect(),
            modes,
        })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }
}

fn check_dim(p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!(
            "structured covariances need p >= 2, got {p}"
        )));
    }
    Ok(())
}

/// TR covariance with gaps drawn iid from `Unif(0.5, 1)`.
pub fn gen_tr(p: usize, rng: &mut impl Rng) -> Result<SymMatrix> {
    check_dim(p)?;
    let mut h = Vec::with_capacity(p);
    h.push(0.0);
    for i in 1..p {
        let gap: f64 = rng.random_range(0.5..1.0);
        h.push(h[i - 1] + gap);
    }
    Ok(SymMatrix::from_fn(p, |i, j| {
        (-(h[j] - h[i]).abs() / 2.0).exp()
    }))
}

/// Toeplitz precision `ρ^|i-j|`, returned as `(Ω / ||Ω||_F, Ω^{-1})`.
pub fn gen_ar_precision(p: usize, rho: f64) -> Result<(SymMatrix, SymMatrix)> {
    check_dim(p)?;
    let omega = SymMatrix::from_fn(p, |i, j| rho.powi((j - i) as i32));
    let sigma = omega.inverse_pd()?;
    Ok((omega.normalize_frob()?, sigma))
}

/// Compound-symmetry precision (1 on the diagonal, `rho` off it), returned as
/// `(Ω / ||Ω||_F, Ω^{-1})`.
pub fn gen_cs_precision(p: usize, rho: f64) -> Result<(SymMatrix, SymMatrix)> {
    check_dim(p)?;
    let omega = SymMatrix::from_fn(p, |i, j| if i == j { 1.0 } else { rho });
    let sigma = omega.inverse_pd()?;
    Ok((omega.normalize_frob()?, sigma))
}

fn mode_truth(spec: CovSpec, rng: &mut impl Rng) -> Result<ModeTruth> {
    let CovSpec { kind, p } = spec;
    match kind {
        CovKind::Tr => {
            let sigma = gen_tr(p, rng)?;
            Ok(tr_truth(sigma)?)
        }
        CovKind::Ar { rho } => {
            let (omega, sigma) = gen_ar_precision(p, rho)?;
            Ok(ModeTruth::new(kind, sigma, omega))
        }
        CovKind::Cs { rho } => {
            let (omega, sigma) = gen_cs_precision(p, rho)?;
            Ok(ModeTruth::new(kind, sigma, omega))
        }
        CovKind::Identity => {
            let sigma = SymMatrix::identity(p);
            let omega = sigma.normalize_frob()?;
            Ok(ModeTruth::new(kind, sigma, omega))
        }
        CovKind::Custom => Err(Error::InvalidArgument(
            "custom structures are supplied as matrices, not generated".into(),
        )),
    }
}

fn tr_truth(sigma: SymMatrix) -> Result<ModeTruth> {
    let mut omega = sigma.inverse_pd()?.normalize_frob()?.into_inner();
    omega.iter_mut().for_each(|v| {
        if v.abs() <= TR_ZERO_CUTOFF {
            *v = 0.0;
        }
    });
    Ok(ModeTruth::new(
        CovKind::Tr,
        sigma,
        SymMatrix::symmetrized(omega),
    ))
}

/// Identifier of one of the six simulation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ModelId(u8);

impl ModelId {
    pub fn new(id: u8) -> Result<Self> {
        if (1..=6).contains(&id) {
            Ok(ModelId(id))
        } else {
            Err(Error::InvalidArgument(format!(
                "model id must be in 1..=6, got {id}"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn dims(self) -> [usize; 3] {
        match self.0 {
            1 | 4 | 5 => [30, 36, 30],
            2 => [100, 100, 100],
            _ => [10, 10, 50],
        }
    }

    /// Model 2 is far beyond desk scale.
    pub fn is_slow(self) -> bool {
        self.0 == 2
    }

    pub fn kinds(self) -> [CovKind; 3] {
        let cs = CovKind::Cs { rho: 0.6 };
        match self.0 {
            4 => [CovKind::Ar { rho: 0.8 }, CovKind::Tr, CovKind::Tr],
            5 | 6 => [cs, cs, CovKind::Tr],
            _ => [CovKind::Tr; 3],
        }
    }
}

impl TryFrom<u8> for ModelId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        ModelId::new(v)
    }
}

impl From<ModelId> for u8 {
    fn from(m: ModelId) -> u8 {
        m.0
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ground truth for a simulation model. A TR covariance is drawn for every mode, in
/// mode order, even where the model overrides it, so that shared TR modes coincide
/// across models under the same stream.
pub fn make_model(id: ModelId, rng: &mut impl Rng) -> Result<GroundTruth> {
    let dims = id.dims();
    let modes = dims
        .iter()
        .zip(id.kinds())
        .map(|(&p, kind)| {
            let tr = gen_tr(p, rng)?;
            match kind {
                CovKind::Tr => tr_truth(tr),
                other => mode_truth(CovSpec { kind: other, p }, rng),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth {
        dims: dims.to_vec(),
        modes,
    })
}

/// Radial law of the elliptical sampler.
/// Serialized by name: `normal`, `t<nu>`, `mixed` or `mixed(<gamma>,<sigma>)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistSpec {
    TensorNormal,
    /// Multivariate t via the normal / chi-square mixture.
    TensorT {
        nu: f64,
    },
    /// `(1 - γ) N(0, Σ) + γ N(0, σ² Σ)`.
    MixedNormal {
        gamma: f64,
        sigma: f64,
    },
}

impl DistSpec {
    pub const T3: DistSpec = DistSpec::TensorT { nu: 3.0 };
    pub const MIXED: DistSpec = DistSpec::MixedNormal {
        gamma: 0.2,
        sigma: 10.0,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistSpec::TensorNormal => Ok(()),
            DistSpec::TensorT { nu } if nu > 2.0 => Ok(()),
            DistSpec::MixedNormal { gamma, sigma }
                if (0.0..=1.0).contains(&gamma) && sigma > 0.0 =>
            {
                Ok(())
            }
            other => Err(Error::InvalidArgument(format!(
                "invalid distribution {other:?}"
            ))),
        }
    }

    /// Radial multiplier for one draw.
    pub fn radial(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            DistSpec::TensorNormal => 1.0,
            DistSpec::TensorT { nu } => {
                let chi: f64 = ChiSquared::new(nu).expect("nu > 0").sample(rng);
                (nu / chi).sqrt()
            }
            DistSpec::MixedNormal { gamma, sigma } => {
                if rng.random::<f64>() < gamma {
                    sigma
                } else {
                    1.0
                }
            }
        }
    }

    /// Short name used in files and CSV output.
    pub fn name(&self) -> String {
        match *self {
            DistSpec::TensorNormal => "normal".into(),
            DistSpec::TensorT { nu } => format!("t{nu}"),
            d if d == DistSpec::MIXED => "mixed".into(),
            DistSpec::MixedNormal { gamma, sigma } => format!("mixed({gamma},{sigma})"),
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl TryFrom<String> for DistSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DistSpec> for String {
    fn from(d: DistSpec) -> String {
        d.name()
    }
}

impl FromStr for DistSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(DistSpec::TensorNormal),
            "t3" | "t" => Ok(DistSpec::T3),
            "mixed" | "mixed-normal" => Ok(DistSpec::MIXED),
            other => {
                if let Some(args) = other
                    .strip_prefix("mixed(")
                    .and_then(|r| r.strip_suffix(')'))
                {
                    let parsed: Option<Vec<f64>> =
                        args.split(',').map(|v| v.trim().parse().ok()).collect();
                    if let Some([gamma, sigma]) = parsed.as_deref() {
                        let d = DistSpec::MixedNormal {
                            gamma: *gamma,
                            sigma: *sigma,
                        };
                        d.validate()?;
                        return Ok(d);
                    }
                }
                if let Some(nu) = other.strip_prefix('t').and_then(|v| v.parse::<f64>().ok()) {
                    let d = DistSpec::TensorT { nu };
                    d.validate()?;
                    return Ok(d);
                }
                Err(Error::InvalidArgument(format!(
                    "unknown distribution {other:?} (expected normal, t3 or mixed)"
                )))
            }
        }
    }
}

/// Precomputed square roots of the mode covariances for repeated sampling.
#[derive(Debug, Clone)]
pub struct Sampler {
    dims: Vec<usize>,
    roots: Vec<DMatrix<f64>>,
    dist: DistSpec,
}

impl Sampler {
    pub fn new(truth: &GroundTruth, dist: DistSpec) -> Result<Self> {
        dist.validate()?;
        let roots = truth
            .modes
            .iter()
            .map(|m| m.sigma.sqrt(0.0).into_inner())
            .collect();
        Ok(Self {
            dims: truth.dims.clone(),
            roots,
            dist,
        })
    }

    /// One draw `v · Z x {Σ_1^{1/2}, .., Σ_K^{1/2}}` with `Z` iid standard normal.
    pub fn draw(&self, rng: &mut impl Rng) -> Tensor {
        let len = self.dims.iter().product();
        let z: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        let mut t = Tensor::from_parts(self.dims.clone(), z);
        for (k, root) in self.roots.iter().enumerate() {
            t = t.mode_product(root, k).expect("root matches mode size");
        }
        let v = self.dist.radial(rng);
        if v == 1.0 {
            t
        } else {
            t.scaled(v)
        }
    }
}

/// `n` independent draws from the elliptical distribution with the truth's shape.
pub fn sample(
    n: usize,
    truth: &GroundTruth,
    dist: DistSpec,
    rng: &mut impl Rng,
) -> Result<Vec<Tensor>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be positive".into(),
        ));
    }
    let sampler = Sampler::new(truth, dist)?;
    Ok((0..n).map(|_| sampler.draw(rng)).collect())
}
