//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use tegma_core::simulation::{make_model, rng_from_seed, sample};
use tegma_core::{DistSpec, GroundTruth, ModelId, SymMatrix, Tensor};

/// Sample covariance of `2p` standard normal vectors, plus a small ridge.
pub fn pd_matrix(p: usize, seed: u64) -> SymMatrix {
    let mut rng = rng_from_seed(seed);
    let b = DMatrix::from_fn(p, 2 * p, |_, _| rng.sample::<f64, _>(StandardNormal));
    SymMatrix::new(&b * b.transpose() / (2 * p) as f64 + DMatrix::identity(p, p) * 0.05).unwrap()
}

/// Truth and `n` draws from a simulation model.
pub fn model_sample(model: u8, n: usize, dist: DistSpec, seed: u64) -> (GroundTruth, Vec<Tensor>) {
    let mut rng = rng_from_seed(seed);
    let truth = make_model(ModelId::new(model).unwrap(), &mut rng).unwrap();
    let data = sample(n, &truth, dist, &mut rng).unwrap();
    (truth, data)
}
