//! Seeded random variate generators used by the sampler and the simulator.
//!
//! Every generator draws from an [`RngHandle`], a ChaCha20 stream keyed by a
//! master seed and a stream id. Child streams are derived from the parent's
//! `(seed, stream)` pair only, never from its consumed state, so replicate and
//! chain streams are the same regardless of scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{check_positive, Error, Result};
use crate::linalg::CholeskyFactor;

#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Independent child stream number `index`.
    pub fn split(&self, index: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(index.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    /// Stream for chain `chain` of replicate `replicate` under `seed`.
    pub fn for_replicate(seed: u64, replicate: u64, chain: u64) -> Self {
        Self::new(seed).split(replicate).split(chain)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.random_range(0..upper)
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Gamma(shape, rate) by Marsaglia and Tsang's squeeze method; shapes below
/// one use the `G(shape + 1) * U^(1/shape)` boost.
pub fn sample_gamma(rng: &mut RngHandle, shape: f64, rate: f64) -> Result<f64> {
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    Ok(gamma_unit(rng, shape) / rate)
}

fn gamma_unit(rng: &mut RngHandle, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = gamma_unit(rng, shape + 1.0);
        let u = rng.uniform_open();
        return g * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.uniform_open();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Inverse-Gaussian(mean, shape) by the Michael-Schucany-Haas transformation.
///
/// The smaller root is evaluated as `mean / (1 + w + sqrt(2w + w²))`, which
/// stays accurate when `mean` is huge (reciprocal scales of near-zero
/// precision entries).
pub fn sample_inverse_gaussian(rng: &mut RngHandle, mean: f64, shape: f64) -> Result<f64> {
    check_positive("mean", mean)?;
    check_positive("shape", shape)?;
    let z = rng.standard_normal();
    let w = mean * z * z / (2.0 * shape);
    let root = mean / (1.0 + w + (w * (2.0 + w)).sqrt());
    let u = rng.uniform();
    if u * (mean + root) <= mean {
        Ok(root)
    } else {
        Ok(mean * (mean / root))
    }
}

/// Draws from `N(mean, precision⁻¹)` through the Cholesky factor of the
/// precision; the covariance is never formed.
pub fn sample_mvn_from_precision(
    rng: &mut RngHandle,
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if precision.nrows() != mean.len() {
        return Err(Error::InvalidInput(format!(
            "mean has length {} but precision is {}x{}",
            mean.len(),
            precision.nrows(),
            precision.ncols()
        )));
    }
    let factor = CholeskyFactor::new(precision)?;
    let mut draw = standard_normal_vector(rng, mean.len());
    factor.solve_upper_in_place(&mut draw);
    Ok(draw + mean)
}

/// Draws from the Gaussian with density ∝ exp(-½ xᵀPx + bᵀx), i.e.
/// `N(P⁻¹b, P⁻¹)`, reusing a single factorization of `P`.
pub(crate) fn sample_mvn_canonical(
    rng: &mut RngHandle,
    linear: &DVector<f64>,
    precision: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let factor = CholeskyFactor::new(precision)?;
    // mean = L⁻ᵀ L⁻¹ b; noise = L⁻ᵀ z; both share the final back-substitution.
    let mut y = linear.clone();
    factor.solve_lower_in_place(&mut y);
    let z = standard_normal_vector(rng, linear.len());
    let mut x = y + z;
    factor.solve_upper_in_place(&mut x);
    Ok(x)
}

fn standard_normal_vector(rng: &mut RngHandle, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.standard_normal()))
}
