//! Random variates for the importance-sampling density of photon paths:
//! exponential leg lengths, a uniform-cone source angle, phase-function
//! scattering angles and uniform azimuths.
//!
//! Every variate has a `*_from_uniform` form taking `u ∈ [0, 1)` so that the
//! transforms can be checked without randomness.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::atmosphere::AtmosphereModel;
use crate::error::{ChannelError, Result};
use crate::quadrature::GaussLegendre;

/// Largest f64 below one.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// A seeded, counter-based random stream.
///
/// ChaCha keystreams are indexed by (seed, stream id, block counter), so
/// distinct stream ids give independent sequences and any (seed, stream id)
/// pair is reproducible regardless of which thread consumes it.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha12Rng,
    seed: u64,
    stream_id: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            rng,
            seed,
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl RngCore for RandomStream {
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

/// Combines integer labels into a 64-bit stream id (splitmix64 finalizer
/// applied per label).
pub fn stream_key(labels: &[u64]) -> u64 {
    labels.iter().fold(0x9e37_79b9_7f4a_7c15u64, |h, &x| mix64(h ^ mix64(x)))
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn clamp_unit(u: f64) -> f64 {
    if u >= 1.0 {
        ONE_MINUS_ULP
    } else {
        u.max(0.0)
    }
}

/// Inverse CDF of the exponential leg length, `-ln(1 - u) / k_e`.
pub fn distance_from_uniform(u: f64, k_e: f64) -> f64 {
    -(-clamp_unit(u)).ln_1p() / k_e
}

pub fn sample_distance<R: RngCore + ?Sized>(rng: &mut R, k_e: f64) -> f64 {
    distance_from_uniform(rng.random::<f64>(), k_e)
}

/// Source angle uniform over the solid angle of a cone of full width
/// `beta_t`: `arccos(1 - u (1 - cos(β_T/2)))`.
pub fn theta0_from_uniform(u: f64, beta_t: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    (1.0 - u * (1.0 - (0.5 * beta_t).cos())).acos()
}

pub fn sample_theta0<R: RngCore + ?Sized>(rng: &mut R, beta_t: f64) -> f64 {
    theta0_from_uniform(rng.random::<f64>(), beta_t)
}

pub fn phi_from_uniform(u: f64) -> f64 {
    2.0 * PI * u
}

pub fn sample_phi<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    phi_from_uniform(rng.random::<f64>())
}

/// Default node count of a [`PhaseCdfTable`].
pub const DEFAULT_CDF_RESOLUTION: usize = 4096;
pub const MIN_CDF_RESOLUTION: usize = 256;
const RAW_NORMALIZATION_WARN: f64 = 1e-6;
const RAW_NORMALIZATION_LIMIT: f64 = 1e-4;

/// Tabulated CDF of the scattering angle, `F(θ) = ∫₀^θ 2π p(t) sin t dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCdfTable {
    thetas: Vec<f64>,
    cdf: Vec<f64>,
}

impl PhaseCdfTable {
    /// Table from explicit nodes; `cdf` must start at 0, end at 1 and
    /// increase strictly.
    pub fn from_nodes(thetas: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if thetas.len() != cdf.len() || thetas.len() < 2 {
            return Err(ChannelError::LengthMismatch(format!(
                "{} angles, {} cdf values",
                thetas.len(),
                cdf.len()
            )));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&thetas) || !increasing(&cdf) || cdf[0] != 0.0 || cdf[cdf.len() - 1] != 1.0 {
            return Err(ChannelError::InvalidParameter(
                "cdf table must be strictly increasing from 0 to 1".into(),
            ));
        }
        Ok(Self { thetas, cdf })
    }

    pub fn resolution(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn values(&self) -> &[f64] {
        &self.cdf
    }

    /// F(θ) by linear interpolation between nodes.
    pub fn cdf_at(&self, theta: f64) -> f64 {
        let j = self.thetas.partition_point(|&t| t <= theta);
        if j == 0 {
            return 0.0;
        }
        if j == self.thetas.len() {
            return 1.0;
        }
        let (t0, t1) = (self.thetas[j - 1], self.thetas[j]);
        let (f0, f1) = (self.cdf[j - 1], self.cdf[j]);
        f0 + (theta - t0) / (t1 - t0) * (f1 - f0)
    }

    /// F⁻¹(u): binary search for the cell, linear interpolation inside it.
    pub fn inverse(&self, u: f64) -> f64 {
        let u = clamp_unit(u);
        let j = self.cdf.partition_point(|&f| f <= u);
        let last = self.cdf.len() - 1;
        if j > last {
            return self.thetas[last];
        }
        let (f0, f1) = (self.cdf[j - 1], self.cdf[j]);
        let (t0, t1) = (self.thetas[j - 1], self.thetas[j]);
        t0 + (u - f0) / (f1 - f0) * (t1 - t0)
    }
}

/// Angle nodes on [0, π]: cosine-spaced (dense near θ = 0), plus a
/// logarithmic sub-grid below 1e-2 rad when the phase function contains the
/// turbulence term.
fn angle_nodes(resolution: usize, forward_log_grid: bool) -> Vec<f64> {
    let mut nodes: Vec<f64> = (0..resolution)
        .map(|j| PI * (1.0 - (0.5 * PI * j as f64 / (resolution - 1) as f64).cos()))
        .collect();
    nodes[resolution - 1] = PI;
    if forward_log_grid {
        let per_decade = 64;
        let (lo, hi) = (-10.0f64, -2.0f64);
        let count = ((hi - lo) * per_decade as f64) as usize;
        nodes.extend((0..=count).map(|i| 10f64.powf(lo + i as f64 / per_decade as f64)));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1e-300));
    }
    nodes
}

/// Builds the scattering-angle CDF of the atmosphere's total phase function.
///
/// Each cell is integrated with 8-point Gauss-Legendre. The raw end value
/// must be within 1e-4 of one (else [`ChannelError::Normalization`]); the
/// table is then scaled so that it ends at exactly one.
pub fn build_cdf_table(model: &AtmosphereModel, resolution: usize) -> Result<PhaseCdfTable> {
    if resolution < MIN_CDF_RESOLUTION {
        return Err(ChannelError::InvalidParameter(format!(
            "cdf resolution {resolution} is below the minimum {MIN_CDF_RESOLUTION}"
        )));
    }
    let weights = model.mixture_weights()?;
    let density = |t: f64| 2.0 * PI * model.phase_from_cos(&weights, t.cos()) * t.sin();
    build_table_from_density(density, angle_nodes(resolution, model.turbulence_scattering.is_some()))
}

fn build_table_from_density<F: Fn(f64) -> f64>(density: F, thetas: Vec<f64>) -> Result<PhaseCdfTable> {
    let gl = GaussLegendre::new(8);
    let mut cdf: Vec<f64> = Vec::with_capacity(thetas.len());
    cdf.push(0.0);
    let mut acc = 0.0;
    for w in thetas.windows(2) {
        acc += gl.integrate(&density, w[0], w[1]);
        cdf.push(acc);
    }
    let deviation = (acc - 1.0).abs();
    if deviation > RAW_NORMALIZATION_LIMIT {
        return Err(ChannelError::Normalization {
            deviation,
            limit: RAW_NORMALIZATION_LIMIT,
        });
    }
    if deviation > RAW_NORMALIZATION_WARN {
        log::warn!("phase function integrates to {acc}; renormalizing the cdf table");
    }
    let last = cdf.len() - 1;
    // drop nodes that add no mass after rounding, then pin the end at (π, 1)
    let (mut t_keep, mut f_keep) = (vec![thetas[0]], vec![0.0]);
    for i in 1..last {
        let f = cdf[i] / acc;
        if f > f_keep[f_keep.len() - 1] && f < 1.0 {
            t_keep.push(thetas[i]);
            f_keep.push(f);
        }
    }
    t_keep.push(thetas[last]);
    f_keep.push(1.0);
    PhaseCdfTable::from_nodes(t_keep, f_keep)
}

/// Scattering angle drawn by inverting the tabulated CDF.
pub fn sample_theta<R: RngCore + ?Sized>(rng: &mut R, table: &PhaseCdfTable) -> f64 {
    table.inverse(rng.random::<f64>())
}
