//! Seeded sampling of χ radii, sphere directions, and noise vectors.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id mapped onto ChaCha's 64-bit stream
/// counter, so streams sharing a seed never overlap. Two `RngStream`s built
/// from the same pair produce identical sequences.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream number `index`, derived only from `(seed, stream_id)`.
    ///
    /// Used to hand one stream to each parallel work item; the result does
    /// not depend on how much of `self` has been consumed.
    pub fn substream(&self, index: u64) -> RngStream {
        let child_seed = splitmix64(self.seed ^ splitmix64(self.stream_id.wrapping_add(1)));
        RngStream::new(child_seed, index)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
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

/// A noise (or direction) vector of fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseVector(Vec<f64>);

impl NoiseVector {
    pub fn zeros(m: usize) -> Self {
        NoiseVector(vec![0.0; m])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        NoiseVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl std::ops::Index<usize> for NoiseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// One draw from the χ distribution with `nu` degrees of freedom.
///
/// `nu = 1` is `|N(0,1)|`; otherwise the root of a sum of `nu` squared normals.
pub fn sample_chi(rng: &mut RngStream, nu: usize) -> Result<f64> {
    match nu {
        0 => Err(Error::domain("sample_chi", "nu must be at least 1")),
        1 => Ok(rng.standard_normal().abs()),
        _ => Ok((0..nu)
            .map(|_| {
                let z = rng.standard_normal();
                z * z
            })
            .sum::<f64>()
            .sqrt()),
    }
}

/// Fill `out` with a uniform point on the unit sphere by normalizing a
/// standard Gaussian vector. Zero draws are resampled.
pub fn fill_sphere(rng: &mut RngStream, out: &mut [f64]) {
    loop {
        let mut sq = 0.0;
        for x in out.iter_mut() {
            *x = rng.standard_normal();
            sq += *x * *x;
        }
        if sq > 0.0 {
            let inv = 1.0 / sq.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}

fn check_dim(func: &'static str, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::domain(
            func,
            format!("dimension must be at least 2, got {m}"),
        ));
    }
    Ok(())
}

fn check_scale(func: &'static str, sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(
            func,
            format!("scale must be positive, got {sigma}"),
        ));
    }
    Ok(())
}

/// Uniform direction on `𝕊^{m-1}`.
pub fn sample_sphere(rng: &mut RngStream, m: usize) -> Result<NoiseVector> {
    check_dim("sample_sphere", m)?;
    let mut v = vec![0.0; m];
    fill_sphere(rng, &mut v);
    Ok(NoiseVector(v))
}

/// Product noise `σ_M · R · h` with `R ~ χ₁` and `h` uniform on the sphere.
/// The radius is drawn first, then the direction.
pub fn sample_product_noise(rng: &mut RngStream, sigma_m: f64, m: usize) -> Result<NoiseVector> {
    check_scale("sample_product_noise", sigma_m)?;
    check_dim("sample_product_noise", m)?;
    let r = rng.standard_normal().abs();
    let mut v = vec![0.0; m];
    fill_sphere(rng, &mut v);
    let s = sigma_m * r;
    v.iter_mut().for_each(|x| *x *= s);
    Ok(NoiseVector(v))
}

/// Isotropic Gaussian noise `N(0, σ² I_m)`.
pub fn sample_gaussian_noise(rng: &mut RngStream, sigma: f64, m: usize) -> Result<NoiseVector> {
    check_scale("sample_gaussian_noise", sigma)?;
    check_dim("sample_gaussian_noise", m)?;
    Ok(NoiseVector(
        (0..m).map(|_| sigma * rng.standard_normal()).collect(),
    ))
}
