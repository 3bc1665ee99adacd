//! Monte-Carlo-integration estimators of the turbulent NLOS channel.
//!
//! For each scattering order `n` the engine draws `M` paths from the
//! importance-sampling density (exponential legs, uniform-cone emission,
//! phase-function scattering angles, uniform azimuths) and accumulates
//!
//! - the objective `O_n`, whose mean is the received power `P_n`,
//! - `Π M₂(d_i) − 1` over the `n + 1` legs of every accepted path, whose mean
//!   over accepted paths is the turbulent variance,
//! - `Σ σ_ln²(d_i)` of every accepted path, which fixes the log-normal
//!   mixture describing the equivalent fading coefficient.
//!
//! # Reproducibility
//!
//! Samples are split into fixed chunks of [`CHUNK_SIZE`]. Chunk `c` of order
//! `n` always consumes the random stream keyed by `(seed, n, c)`, and chunk
//! results are reduced in chunk order on the calling thread. Estimates
//! therefore depend on the seed and the sample count only, not on the
//! number of worker threads.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::atmosphere::AtmosphereModel;
use crate::error::{ChannelError, Result};
use crate::geometry::{build_path_into, solid_angle, GeometryConfig, PathSample};
use crate::sampler::{
    build_cdf_table, distance_from_uniform, phi_from_uniform, stream_key, theta0_from_uniform,
    PhaseCdfTable, RandomStream, DEFAULT_CDF_RESOLUTION,
};
use crate::stats::{linear_fit, DensityGrid, LinearFit};
use crate::turbulence::{draw_fading, ln_cdf, ln_quantile, second_moment, TurbulenceModel};

/// Samples per work unit.
pub const CHUNK_SIZE: u64 = 16_384;
/// Largest fading-density mass allowed beyond the η grid.
pub const MAX_GRID_OVERFLOW: f64 = 1e-3;
/// Minimum repetitions for the conventional-MCS variance experiment.
pub const MIN_MCS_REPS: usize = 30;

const DOMAIN_POWER: u64 = 0x5057;
const DOMAIN_MCS: u64 = 0x4d43;
/// Per-component CDF tail below which cells are skipped.
const COMPONENT_TAIL: f64 = 1e-17;

/// Everything that defines the physical channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub geometry: GeometryConfig,
    pub atmosphere: AtmosphereModel,
    pub turbulence: TurbulenceModel,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.atmosphere.validate()?;
        self.turbulence.optical.validate()
    }
}

/// How per-path log-variances are retained for the fading density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdfMode {
    /// Compressed histogram with the given number of bins.
    Histogram { bins: usize },
    /// Every value kept.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfSettings {
    pub eta_max: f64,
    pub eta_points: usize,
    pub mode: PdfMode,
}

impl Default for PdfSettings {
    fn default() -> Self {
        Self {
            eta_max: 4.0,
            eta_points: 4096,
            mode: PdfMode::Histogram { bins: 512 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    /// Paths per scattering order (M).
    pub samples: u64,
    /// Highest scattering order (N).
    pub orders: usize,
    pub seed: u64,
    pub workers: usize,
    pub cdf_resolution: usize,
    pub pdf: PdfSettings,
}

impl RunSettings {
    pub fn new(samples: u64, orders: usize, seed: u64) -> Self {
        Self {
            samples,
            orders,
            seed,
            workers: 1,
            cdf_resolution: DEFAULT_CDF_RESOLUTION,
            pdf: PdfSettings::default(),
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(ChannelError::InvalidParameter(msg.into()));
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if self.orders == 0 {
            return bad("orders must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if let PdfMode::Histogram { bins } = self.pdf.mode {
            if bins < 2 {
                return bad("pdf histogram needs at least 2 bins");
            }
        }
        DensityGrid::zeros(self.pdf.eta_max, self.pdf.eta_points).map(|_| ())
    }

    /// Number of chunks the samples of one order are split into.
    pub fn chunks(&self) -> u64 {
        self.samples.div_ceil(CHUNK_SIZE)
    }
}

/// Per-path values of `Σ σ_ln²(d_i)` for one order.
#[derive(Debug, Clone, PartialEq)]
pub enum PdfAccumulator {
    /// Bins over `u = s / (s + scale)` holding the count and the sum of `s`.
    Histogram { scale: f64, counts: Vec<u64>, sums: Vec<f64> },
    Exact(Vec<f64>),
}

impl PdfAccumulator {
    pub fn new(mode: PdfMode, scale: f64) -> Self {
        match mode {
            PdfMode::Histogram { bins } => Self::Histogram {
                scale,
                counts: vec![0; bins],
                sums: vec![0.0; bins],
            },
            PdfMode::Exact => Self::Exact(Vec::new()),
        }
    }

    pub fn push(&mut self, s: f64) {
        match self {
            Self::Histogram { scale, counts, sums } => {
                let u = s / (s + *scale);
                let k = ((u * counts.len() as f64) as usize).min(counts.len() - 1);
                counts[k] += 1;
                sums[k] += s;
            }
            Self::Exact(v) => v.push(s),
        }
    }

    fn merge(&mut self, other: &Self) {
        match (self, other) {
            (Self::Histogram { counts, sums, .. }, Self::Histogram { counts: c2, sums: s2, .. }) => {
                counts.iter_mut().zip(c2).for_each(|(a, b)| *a += b);
                sums.iter_mut().zip(s2).for_each(|(a, b)| *a += b);
            }
            (Self::Exact(a), Self::Exact(b)) => a.extend_from_slice(b),
            _ => unreachable!("accumulators of one run share a mode"),
        }
    }

    pub fn count(&self) -> u64 {
        match self {
            Self::Histogram { counts, .. } => counts.iter().sum(),
            Self::Exact(v) => v.len() as u64,
        }
    }

    /// Mixture components as (log-variance, multiplicity). Histogram bins
    /// are represented by the mean of their members.
    pub fn components(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Histogram { counts, sums, .. } => counts
                .iter()
                .zip(sums)
                .filter(|(c, _)| **c > 0)
                .map(|(&c, &s)| (s / c as f64, c as f64))
                .collect(),
            Self::Exact(v) => v.iter().map(|&s| (s, 1.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub order: usize,
    pub samples: u64,
    /// P_n, the mean received power for unit transmitted power.
    pub power: f64,
    /// Monte-Carlo standard error of `power`.
    pub power_stderr: f64,
    /// Accepted paths.
    pub count: u64,
    /// Turbulent variance; `None` when no path was accepted.
    pub sigma2: Option<f64>,
    pub pdf: PdfAccumulator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub orders: Vec<OrderEstimate>,
    pub total_power: f64,
    pub total_variance: f64,
    /// Density of the equivalent fading coefficient on `[0, eta_max]`.
    pub pdf: DensityGrid,
}

impl ChannelEstimate {
    pub fn power_stderr(&self) -> Vec<f64> {
        self.orders.iter().map(|o| o.power_stderr).collect()
    }

    /// Standard error of the total power (orders are sampled independently).
    pub fn total_power_stderr(&self) -> f64 {
        self.orders.iter().map(|o| o.power_stderr.powi(2)).sum::<f64>().sqrt()
    }

    /// `P_n / P_tot` per order.
    pub fn weights(&self) -> Vec<f64> {
        self.orders.iter().map(|o| o.power / self.total_power).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsCompareResult {
    pub sample_sizes: Vec<u64>,
    /// Variance of the conventional estimate across repetitions, per M.
    pub variances: Vec<f64>,
    /// Mean of the conventional estimate across repetitions, per M.
    pub means: Vec<f64>,
    /// log10(variance) against log10(M).
    pub fit: LinearFit,
}

/// Received-power probability of a single built path.
pub fn conditional_prob(path: &PathSample, atmosphere: &AtmosphereModel, geometry: &GeometryConfig) -> f64 {
    match atmosphere.mixture_weights() {
        Ok(w) => objective(path, atmosphere, &w, atmosphere.albedo(), atmosphere.k_e_tot(), geometry),
        Err(_) => 0.0,
    }
}

fn objective(
    path: &PathSample,
    atmosphere: &AtmosphereModel,
    weights: &[f64; 3],
    albedo: f64,
    k_e: f64,
    geometry: &GeometryConfig,
) -> f64 {
    if !path.accepted {
        return 0.0;
    }
    let dn = path.receiver_distance;
    let p = atmosphere.phase_from_cos(weights, path.theta_rn.cos());
    let detect = (p * solid_angle(dn, geometry)).min(1.0);
    albedo.powi(path.order as i32) * (-k_e * dn).exp() * path.phi_r.cos() * detect
}

/// `-10 log10(P)`.
pub fn path_loss_db(p: f64) -> Result<f64> {
    if p > 0.0 {
        Ok(-10.0 * p.log10())
    } else {
        Err(ChannelError::NoAcceptedPaths)
    }
}

/// Precomputed tables shared by every sample of a run.
struct Prepared<'a> {
    scenario: &'a Scenario,
    table: PhaseCdfTable,
    weights: [f64; 3],
    albedo: f64,
    k_e: f64,
}

impl<'a> Prepared<'a> {
    fn new(scenario: &'a Scenario, cdf_resolution: usize) -> Result<Self> {
        scenario.validate()?;
        let atm = &scenario.atmosphere;
        Ok(Self {
            scenario,
            table: build_cdf_table(atm, cdf_resolution)?,
            weights: atm.mixture_weights()?,
            albedo: atm.albedo(),
            k_e: atm.k_e_tot(),
        })
    }

    fn draw_path(&self, rng: &mut RandomStream, n: usize, scratch: &mut Scratch) -> Result<()> {
        let g = &self.scenario.geometry;
        scratch.d.clear();
        scratch.theta.clear();
        scratch.phi.clear();
        for i in 0..n {
            scratch.d.push(distance_from_uniform(rng.uniform(), self.k_e));
            let u = rng.uniform();
            scratch.theta.push(if i == 0 {
                theta0_from_uniform(u, g.tx_divergence)
            } else {
                self.table.inverse(u)
            });
            scratch.phi.push(phi_from_uniform(rng.uniform()));
        }
        build_path_into(g, &scratch.d, &scratch.theta, &scratch.phi, &mut scratch.path)
    }

    fn objective(&self, path: &PathSample) -> f64 {
        let s = self.scenario;
        objective(path, &s.atmosphere, &self.weights, self.albedo, self.k_e, &s.geometry)
    }

    /// Σ σ_ln²(d_i) over the sampled legs and the receiver leg.
    fn log_variance(&self, path: &PathSample) -> f64 {
        let t = &self.scenario.turbulence;
        path.distances
            .iter()
            .chain(std::iter::once(&path.receiver_distance))
            .map(|&d| second_moment(d, t).sigma_ln2)
            .sum()
    }

    fn histogram_scale(&self, n: usize) -> f64 {
        let s = second_moment(self.scenario.geometry.baseline, &self.scenario.turbulence).sigma_ln2;
        if s > 0.0 {
            (n + 1) as f64 * s
        } else {
            1.0
        }
    }
}

#[derive(Default)]
struct Scratch {
    d: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    path: PathSample,
}

struct ChunkSums {
    sum: f64,
    sum_sq: f64,
    count: u64,
    variance_sum: f64,
    pdf: PdfAccumulator,
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ChannelError::InvalidParameter(format!("cannot start {workers} workers: {e}")))
}

fn chunk_len(samples: u64, chunk: u64) -> u64 {
    (samples - chunk * CHUNK_SIZE).min(CHUNK_SIZE)
}

fn run_order(prep: &Prepared, n: usize, settings: &RunSettings, pool: &rayon::ThreadPool) -> Result<OrderEstimate> {
    let chunks = settings.chunks();
    log::debug!(
        "order {n}: {} samples in {chunks} chunks of {CHUNK_SIZE} on {} workers",
        settings.samples,
        settings.workers
    );
    let scale = prep.histogram_scale(n);
    let parts: Vec<Result<ChunkSums>> = pool.install(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = RandomStream::new(settings.seed, stream_key(&[DOMAIN_POWER, n as u64, c]));
                let mut scratch = Scratch::default();
                let mut sums = ChunkSums {
                    sum: 0.0,
                    sum_sq: 0.0,
                    count: 0,
                    variance_sum: 0.0,
                    pdf: PdfAccumulator::new(settings.pdf.mode, scale),
                };
                for _ in 0..chunk_len(settings.samples, c) {
                    prep.draw_path(&mut rng, n, &mut scratch)?;
                    if !scratch.path.accepted {
                        continue;
                    }
                    let o = prep.objective(&scratch.path);
                    let s = prep.log_variance(&scratch.path);
                    sums.sum += o;
                    sums.sum_sq += o * o;
                    sums.count += 1;
                    // Π M₂ − 1 with M₂ = exp(σ_ln²)
                    sums.variance_sum += s.exp_m1();
                    sums.pdf.push(s);
                }
                Ok(sums)
            })
            .collect()
    });

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0;
    let mut variance_sum = 0.0;
    let mut pdf = PdfAccumulator::new(settings.pdf.mode, scale);
    for part in parts {
        let part = part?;
        sum += part.sum;
        sum_sq += part.sum_sq;
        count += part.count;
        variance_sum += part.variance_sum;
        pdf.merge(&part.pdf);
    }
    let m = settings.samples as f64;
    let power = sum / m;
    let power_stderr = if settings.samples > 1 {
        ((sum_sq - m * power * power).max(0.0) / (m - 1.0) / m).sqrt()
    } else {
        0.0
    };
    Ok(OrderEstimate {
        order: n,
        samples: settings.samples,
        power,
        power_stderr,
        count,
        sigma2: (count > 0).then(|| variance_sum / count as f64),
        pdf,
    })
}

/// Estimates one scattering order.
pub fn estimate_order(n: usize, settings: &RunSettings, scenario: &Scenario) -> Result<OrderEstimate> {
    settings.validate()?;
    if n == 0 {
        return Err(ChannelError::InvalidParameter("scattering order must be at least 1".into()));
    }
    let prep = Prepared::new(scenario, settings.cdf_resolution)?;
    run_order(&prep, n, settings, &thread_pool(settings.workers)?)
}

/// Per-order estimates for orders `1..=settings.orders`.
pub fn estimate_orders(settings: &RunSettings, scenario: &Scenario) -> Result<Vec<OrderEstimate>> {
    settings.validate()?;
    let prep = Prepared::new(scenario, settings.cdf_resolution)?;
    let pool = thread_pool(settings.workers)?;
    (1..=settings.orders)
        .map(|n| run_order(&prep, n, settings, &pool))
        .collect()
}

/// Estimates orders `1..=settings.orders` and combines them.
pub fn estimate_channel(settings: &RunSettings, scenario: &Scenario) -> Result<ChannelEstimate> {
    combine_orders(estimate_orders(settings, scenario)?, &settings.pdf)
}

/// Total power and total turbulent variance `Σ (P_n/P_tot)² σ²_n`.
/// Orders without accepted paths are skipped.
pub fn channel_totals(orders: &[OrderEstimate]) -> Result<(f64, f64)> {
    let total_power: f64 = orders.iter().map(|o| o.power).sum();
    if !(total_power > 0.0) || !orders.iter().any(|o| o.count > 0) {
        return Err(ChannelError::NoAcceptedPaths);
    }
    let total_variance = orders
        .iter()
        .filter(|o| o.count > 0 && o.power > 0.0)
        .map(|o| (o.power / total_power).powi(2) * o.sigma2.unwrap_or(0.0))
        .sum();
    Ok((total_power, total_variance))
}

/// Total power, total variance and the fading density from per-order
/// estimates. Orders without accepted paths are skipped.
pub fn combine_orders(orders: Vec<OrderEstimate>, pdf: &PdfSettings) -> Result<ChannelEstimate> {
    for o in orders.iter().filter(|o| o.count == 0) {
        log::warn!("order {} has no accepted paths; it is left out of the variance and density", o.order);
    }
    let (total_power, total_variance) = channel_totals(&orders)?;
    let scaled = orders
        .iter()
        .filter(|o| o.count > 0 && o.power > 0.0)
        .map(|o| order_pdf_scaled(&o.pdf, pdf.eta_max, pdf.eta_points, o.power / total_power))
        .collect::<Result<Vec<_>>>()?;
    let density = convolve_grids(&scaled)?;
    Ok(ChannelEstimate {
        orders,
        total_power,
        total_variance,
        pdf: density,
    })
}

/// Density of one order's equivalent fading coefficient: the equal-weight
/// mixture of unit-mean log-normals over the accepted paths.
pub fn order_pdf(acc: &PdfAccumulator, eta_max: f64, points: usize) -> Result<DensityGrid> {
    order_pdf_scaled(acc, eta_max, points, 1.0)
}

/// Density of `w·η` where η follows [`order_pdf`]. Cell masses come from
/// log-normal CDF differences, so the grid integrates exactly to one minus
/// the mass beyond the last cell.
pub fn order_pdf_scaled(acc: &PdfAccumulator, eta_max: f64, points: usize, w: f64) -> Result<DensityGrid> {
    if !(w > 0.0) {
        return Err(ChannelError::InvalidParameter(format!("density scale {w} must be positive")));
    }
    let mut grid = DensityGrid::zeros(eta_max, points)?;
    let components = acc.components();
    let total: f64 = components.iter().map(|c| c.1).sum();
    if total == 0.0 {
        return Err(ChannelError::NoAcceptedPaths);
    }
    let h = grid.step();
    let mut overflow = 0.0;
    let mass = grid.masses_mut();
    for (s, weight) in components {
        let share = weight / total;
        let cdf = |x: f64| ln_cdf(x / w, s);
        let lo = w * ln_quantile(COMPONENT_TAIL, s);
        let start = (((lo / h) - 0.5).floor().max(0.0) as usize).min(points - 1);
        let mut prev = if start == 0 { 0.0 } else { cdf(h * (start as f64 - 0.5)) };
        let mut j = start;
        while j < points {
            let upper = cdf(h * (j as f64 + 0.5));
            mass[j] += share * (upper - prev).max(0.0);
            prev = upper;
            if upper >= 1.0 - COMPONENT_TAIL {
                break;
            }
            j += 1;
        }
        overflow += share * (1.0 - prev).max(0.0);
    }
    grid.overflow = overflow;
    Ok(grid)
}

/// Density of `Σ w_n η_n` for independent `η_n` with the given densities.
///
/// Each input is rescaled to `w_n η` on the common lattice by linear mass
/// splitting, then the lattice densities are convolved.
pub fn pdf_convolve(pdfs: &[DensityGrid], weights: &[f64]) -> Result<DensityGrid> {
    if pdfs.is_empty() {
        return Err(ChannelError::InvalidParameter("no densities to convolve".into()));
    }
    if pdfs.len() != weights.len() {
        return Err(ChannelError::LengthMismatch(format!(
            "{} densities, {} weights",
            pdfs.len(),
            weights.len()
        )));
    }
    let wsum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w > 0.0)) || (wsum - 1.0).abs() > 1e-9 {
        return Err(ChannelError::InvalidParameter(format!(
            "weights must be positive and sum to one (sum {wsum})"
        )));
    }
    let scaled = pdfs
        .iter()
        .zip(weights)
        .map(|(p, &w)| rescale(p, w))
        .collect::<Result<Vec<_>>>()?;
    convolve_grids(&scaled)
}

/// Moves each node mass from `η_j` to `w·η_j`, split linearly between the
/// neighbouring nodes so that the mean scales exactly.
fn rescale(grid: &DensityGrid, w: f64) -> Result<DensityGrid> {
    let first = grid.masses();
    let k = first.len();
    let mut out = vec![0.0; k];
    let mut overflow = grid.overflow;
    for (j, &m) in first.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let pos = w * j as f64;
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        for (idx, part) in [(lo, m * (1.0 - frac)), (lo + 1, m * frac)] {
            if part == 0.0 {
                continue;
            }
            if idx < k {
                out[idx] += part;
            } else {
                overflow += part;
            }
        }
    }
    Ok(DensityGrid::from_masses(grid.step(), out, overflow))
}

/// Lattice convolution of densities sharing one grid, renormalised.
///
/// Fails with [`ChannelError::GridOverflow`] when the inputs' own overflow
/// plus the mass pushed past the last node exceeds [`MAX_GRID_OVERFLOW`].
pub fn convolve_grids(grids: &[DensityGrid]) -> Result<DensityGrid> {
    let first = grids
        .first()
        .ok_or_else(|| ChannelError::InvalidParameter("no densities to convolve".into()))?;
    let (k, step) = (first.len(), first.step());
    if grids.iter().any(|g| g.len() != k || g.step() != step) {
        return Err(ChannelError::InvalidParameter("densities must share one grid".into()));
    }
    let mut overflow: f64 = grids.iter().map(|g| g.overflow).sum();
    let mut acc = first.masses().to_vec();
    if grids.len() > 1 {
        let size = (2 * k - 1).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let spectrum = |v: &[f64]| {
            let mut buf: Vec<Complex<f64>> = v.iter().map(|&x| Complex::new(x, 0.0)).collect();
            buf.resize(size, Complex::new(0.0, 0.0));
            fwd.process(&mut buf);
            buf
        };
        for g in &grids[1..] {
            let mut a = spectrum(&acc);
            let b = spectrum(g.masses());
            a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
            inv.process(&mut a);
            let norm = size as f64;
            let full: Vec<f64> = a.iter().map(|c| (c.re / norm).max(0.0)).collect();
            overflow += full[k..].iter().sum::<f64>();
            acc = full[..k].to_vec();
        }
    }
    let eta_max = first.eta_max();
    if overflow > MAX_GRID_OVERFLOW {
        return Err(ChannelError::GridOverflow { mass: overflow, eta_max });
    }
    let mut out = DensityGrid::from_masses(step, acc, overflow);
    out.normalize();
    Ok(out)
}

/// Conventional Monte-Carlo estimates of the received power, where every
/// accepted path is weighted by fresh fading draws on all of its legs.
/// Records the variance across `reps` repetitions for every M and fits the
/// log-log slope.
pub fn mcs_variance_experiment(
    m_list: &[u64],
    reps: usize,
    settings: &RunSettings,
    scenario: &Scenario,
) -> Result<McsCompareResult> {
    settings.validate()?;
    if reps < MIN_MCS_REPS {
        return Err(ChannelError::InvalidParameter(format!(
            "reps = {reps}; the variance experiment needs at least {MIN_MCS_REPS}"
        )));
    }
    if m_list.len() < 2 || m_list.contains(&0) {
        return Err(ChannelError::InvalidParameter(
            "need at least two sample sizes, all positive".into(),
        ));
    }
    let prep = Prepared::new(scenario, settings.cdf_resolution)?;
    let pool = thread_pool(settings.workers)?;
    let orders = settings.orders;

    let mut variances = Vec::with_capacity(m_list.len());
    let mut means = Vec::with_capacity(m_list.len());
    for (mi, &m) in m_list.iter().enumerate() {
        let chunks = m.div_ceil(CHUNK_SIZE);
        let tasks: Vec<(usize, usize, u64)> = (0..reps)
            .flat_map(|r| (1..=orders).flat_map(move |n| (0..chunks).map(move |c| (r, n, c))))
            .collect();
        let sums: Vec<Result<f64>> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(r, n, c)| {
                    let key = stream_key(&[DOMAIN_MCS, mi as u64, r as u64, n as u64, c]);
                    let mut rng = RandomStream::new(settings.seed, key);
                    let mut scratch = Scratch::default();
                    let mut sum = 0.0;
                    for _ in 0..chunk_len(m, c) {
                        prep.draw_path(&mut rng, n, &mut scratch)?;
                        if scratch.path.accepted {
                            sum += prep.objective(&scratch.path) * fading_product(&mut rng, &scratch.path, &prep);
                        }
                    }
                    Ok(sum)
                })
                .collect()
        });
        let mut estimates = vec![0.0; reps];
        for (&(r, _, _), s) in tasks.iter().zip(sums) {
            estimates[r] += s? / m as f64;
        }
        let (mean, var) = crate::stats::mean_variance(&estimates)?;
        if !(var > 0.0) {
            return Err(ChannelError::NoAcceptedPaths);
        }
        means.push(mean);
        variances.push(var);
    }
    let x: Vec<f64> = m_list.iter().map(|&m| (m as f64).log10()).collect();
    let y: Vec<f64> = variances.iter().map(|v| v.log10()).collect();
    Ok(McsCompareResult {
        sample_sizes: m_list.to_vec(),
        variances,
        means,
        fit: linear_fit(&x, &y)?,
    })
}

fn fading_product(rng: &mut RandomStream, path: &PathSample, prep: &Prepared) -> f64 {
    let t = &prep.scenario.turbulence;
    path.distances
        .iter()
        .chain(std::iter::once(&path.receiver_distance))
        .map(|&d| draw_fading(rng, d, t))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atmosphere::{ScatteringParams, TurbulenceOpticalParams};
    use crate::geometry::{build_path, Vec3};
    use crate::stats::NormalFit;
    use crate::turbulence::{ln_pdf, FadingFamily};
    use std::f64::consts::PI;

    fn scenario(cn2: f64) -> Scenario {
        let atmosphere = AtmosphereModel::new(
            0.266e-3,
            0.284e-3,
            0.802e-3,
            ScatteringParams::new(0.017, 0.72, 0.5).unwrap(),
        )
        .unwrap();
        let optical = TurbulenceOpticalParams::new(1e-3, 100.0, cn2, 260e-9).unwrap();
        Scenario {
            geometry: GeometryConfig::reference(),
            atmosphere,
            turbulence: TurbulenceModel::new(optical, FadingFamily::Auto).unwrap(),
        }
    }

    #[test]
    fn rejected_path_contributes_nothing() {
        let s = scenario(1e-15);
        let p = build_path(&s.geometry, &[100.0], &[0.0], &[0.0]).unwrap();
        assert!(!p.accepted);
        assert_eq!(conditional_prob(&p, &s.atmosphere, &s.geometry), 0.0);
    }

    #[test]
    fn unit_factors_give_unit_probability() {
        let atmosphere =
            AtmosphereModel::new(0.266e-3, 0.284e-3, 0.0, ScatteringParams::new(0.017, 0.72, 0.5).unwrap()).unwrap();
        let g = GeometryConfig::reference();
        let path = PathSample {
            order: 2,
            distances: vec![10.0, 20.0],
            thetas: vec![0.0, 0.1],
            phis: vec![0.0, 0.0],
            positions: vec![Vec3::zeros(), Vec3::zeros()],
            directions: vec![g.tx_pointing(), g.tx_pointing()],
            receiver_distance: 0.0,
            theta_rn: 0.0,
            phi_r: 0.0,
            accepted: true,
        };
        assert_eq!(conditional_prob(&path, &atmosphere, &g), 1.0);
    }

    #[test]
    fn apex_path_matches_closed_form() {
        let s = scenario(1e-15);
        let d = 250.0 * 2f64.sqrt();
        let p = build_path(&s.geometry, &[d], &[0.0], &[0.0]).unwrap();
        // θ_rn = 90°, φ_r = 0: only the cos²θ-free parts of both phase terms
        let (gamma, g, f) = (0.017, 0.72, 0.5);
        let p_ray = 3.0 * (1.0 + 3.0 * gamma) / (16.0 * PI * (1.0 + 2.0 * gamma));
        let p_mie = (1.0 - g * g) / (4.0 * PI) * ((1.0 + g * g).powf(-1.5) - f / (2.0 * (1.0 + g * g).powf(1.5)));
        let (k_ray, k_mie, k_a) = (0.266e-3, 0.284e-3, 0.802e-3);
        let ks = k_ray + k_mie;
        let ke = ks + k_a;
        let p_tot = (k_ray * p_ray + k_mie * p_mie) / ks;
        let r_a2 = 1.77e-4 / PI;
        // 1 - d/√(d²+a²) by series, a²/d² ~ 1e-9
        let x = r_a2 / (d * d);
        let omega = 2.0 * PI * (0.5 * x - 0.375 * x * x);
        let want = ks / ke * (-ke * d).exp() * (p_tot * omega).min(1.0);
        let got = conditional_prob(&p, &s.atmosphere, &s.geometry);
        assert!((got / want - 1.0).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss_db(1.0).unwrap(), 0.0);
        assert!((path_loss_db(1e-9).unwrap() - 90.0).abs() < 1e-12);
        assert!(path_loss_db(1e-3).unwrap() > path_loss_db(1e-2).unwrap());
        assert_eq!(path_loss_db(0.0), Err(ChannelError::NoAcceptedPaths));
    }

    #[test]
    fn quiescent_turbulence_has_zero_variance() {
        let s = scenario(0.0);
        let settings = RunSettings::new(50_000, 2, 3);
        let est = estimate_channel(&settings, &s).unwrap();
        for o in &est.orders {
            assert!(o.count > 0);
            assert_eq!(o.sigma2, Some(0.0));
        }
        assert_eq!(est.total_variance, 0.0);
        // a point mass at one
        let j = est.pdf.masses().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((est.pdf.eta(j) - 1.0).abs() <= est.pdf.step());
        assert!((est.pdf.mean() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn power_is_blind_to_turbulence() {
        let settings = RunSettings::new(40_000, 3, 99);
        let on = estimate_channel(&settings, &scenario(1e-15)).unwrap();
        let off = estimate_channel(&settings, &scenario(0.0)).unwrap();
        for (a, b) in on.orders.iter().zip(&off.orders) {
            assert_eq!(a.power.to_bits(), b.power.to_bits());
            assert_eq!(a.count, b.count);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let s = scenario(1e-15);
        let base = RunSettings::new(3 * CHUNK_SIZE + 17, 2, 5);
        let one = estimate_channel(&base, &s).unwrap();
        let four = estimate_channel(&base.with_workers(4), &s).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn seeds_change_results() {
        let s = scenario(1e-15);
        let a = estimate_order(1, &RunSettings::new(20_000, 1, 1), &s).unwrap();
        let b = estimate_order(1, &RunSettings::new(20_000, 1, 2), &s).unwrap();
        assert_ne!(a.power, b.power);
    }

    #[test]
    fn single_order_channel_is_the_order_itself() {
        let s = scenario(1e-15);
        let settings = RunSettings::new(30_000, 1, 8);
        let est = estimate_channel(&settings, &s).unwrap();
        let o = estimate_order(1, &settings, &s).unwrap();
        assert_eq!(est.orders[0], o);
        assert_eq!(est.total_power, o.power);
        assert_eq!(est.total_variance, o.sigma2.unwrap());
        let mut alone = order_pdf(&o.pdf, 4.0, 4096).unwrap();
        alone.normalize();
        for (a, b) in alone.masses().iter().zip(est.pdf.masses()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_invariants() {
        let s = scenario(1e-15);
        let est = estimate_channel(&RunSettings::new(100_000, 3, 21), &s).unwrap();
        let sum: f64 = est.orders.iter().map(|o| o.power).sum();
        assert_eq!(est.total_power, sum);
        assert!((est.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((est.pdf.integral() - 1.0).abs() < 1e-12);
        assert!((est.pdf.mean() - 1.0).abs() < 0.02);
        let v = est.pdf.variance();
        assert!((v / est.total_variance - 1.0).abs() < 0.05, "{v} vs {}", est.total_variance);
        for o in &est.orders {
            assert!(o.power >= 0.0 && o.count <= o.samples);
            assert!(o.power_stderr > 0.0 && o.power_stderr < o.power);
        }
        assert!(est.total_power_stderr() > 0.0);
    }

    #[test]
    fn invalid_settings_rejected() {
        let s = scenario(1e-15);
        let mut r = RunSettings::new(0, 1, 0);
        assert!(estimate_channel(&r, &s).is_err());
        r.samples = 10;
        r.orders = 0;
        assert!(estimate_channel(&r, &s).is_err());
        r.orders = 1;
        r.workers = 0;
        assert!(estimate_channel(&r, &s).is_err());
        assert!(estimate_order(0, &RunSettings::new(10, 1, 0), &s).is_err());
    }

    #[test]
    fn histogram_merge_and_components() {
        let mut a = PdfAccumulator::new(PdfMode::Histogram { bins: 8 }, 1.0);
        for s in [0.1, 0.1, 3.0] {
            a.push(s);
        }
        let mut b = PdfAccumulator::new(PdfMode::Histogram { bins: 8 }, 1.0);
        b.push(0.1);
        a.merge(&b);
        assert_eq!(a.count(), 4);
        let c = a.components();
        assert_eq!(c.len(), 2);
        assert!((c[0].0 - 0.1).abs() < 1e-15 && c[0].1 == 3.0);
        let mut e = PdfAccumulator::new(PdfMode::Exact, 1.0);
        e.push(0.2);
        e.merge(&PdfAccumulator::Exact(vec![0.3]));
        assert_eq!(e.components(), vec![(0.2, 1.0), (0.3, 1.0)]);
    }

    #[test]
    fn identical_paths_give_one_lognormal() {
        let acc = PdfAccumulator::Exact(vec![0.05; 10]);
        let g = order_pdf(&acc, 4.0, 4096).unwrap();
        assert!((g.integral() + g.overflow - 1.0).abs() < 1e-12);
        assert!((g.integral() - 1.0).abs() < 1e-3);
        let d = g.density();
        for j in [800, 1000, 1024, 1100, 1300] {
            let want = ln_pdf(g.eta(j), 0.05);
            assert!((d[j] - want).abs() < 1e-3 * want.max(1e-3), "{j}: {} vs {want}", d[j]);
        }
    }

    #[test]
    fn histogram_and_exact_densities_agree() {
        let s = scenario(1e-15);
        let mut settings = RunSettings::new(60_000, 2, 4);
        let hist = estimate_order(2, &settings, &s).unwrap();
        settings.pdf.mode = PdfMode::Exact;
        let exact = estimate_order(2, &settings, &s).unwrap();
        assert_eq!(hist.count, exact.count);
        let gh = order_pdf(&hist.pdf, 4.0, 4096).unwrap();
        let ge = order_pdf(&exact.pdf, 4.0, 4096).unwrap();
        let mut worst: f64 = 0.0;
        let (mut ch, mut ce) = (0.0, 0.0);
        for (a, b) in gh.masses().iter().zip(ge.masses()) {
            ch += a;
            ce += b;
            worst = worst.max((ch - ce).abs());
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn convolve_identity_and_halving() {
        let n = NormalFit::new(1.0, 0.1).unwrap();
        let g = DensityGrid::from_cdf(4.0, 4096, |x| n.cdf(x)).unwrap();
        let same = pdf_convolve(std::slice::from_ref(&g), &[1.0]).unwrap();
        assert_eq!(same.masses(), g.masses());

        let half = pdf_convolve(&[g.clone(), g.clone()], &[0.5, 0.5]).unwrap();
        assert!((half.mean() - 1.0).abs() < 1e-6);
        assert!((half.variance() / (0.5 * g.variance()) - 1.0).abs() < 0.01, "{}", half.variance());
    }

    #[test]
    fn convolve_variance_bookkeeping() {
        let specs = [(0.02, 0.55), (0.3, 0.3), (1.2, 0.15)];
        let grids: Vec<DensityGrid> = specs
            .iter()
            .map(|&(s, _)| DensityGrid::from_cdf(60.0, 65_536, |x| ln_cdf(x, s)).unwrap())
            .collect();
        let w: Vec<f64> = specs.iter().map(|p| p.1).collect();
        let out = pdf_convolve(&grids, &w).unwrap();
        let want: f64 = specs.iter().map(|&(s, w)| w * w * s.exp_m1()).sum();
        assert!((out.variance() / want - 1.0).abs() < 0.02, "{} vs {want}", out.variance());
        assert!((out.mean() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn overflow_is_reported() {
        let wide = DensityGrid::from_cdf(4.0, 512, |x| ln_cdf(x, 2.5)).unwrap();
        assert!(matches!(
            pdf_convolve(&[wide.clone(), wide], &[0.5, 0.5]),
            Err(ChannelError::GridOverflow { .. })
        ));
        assert!(pdf_convolve(&[], &[]).is_err());
        let n = DensityGrid::from_cdf(4.0, 512, |x| ln_cdf(x, 0.01)).unwrap();
        assert!(pdf_convolve(&[n.clone(), n.clone()], &[0.7, 0.7]).is_err());
        assert!(pdf_convolve(&[n], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mcs_slope_without_turbulence() {
        let s = scenario(0.0);
        let settings = RunSettings::new(1, 1, 17).with_workers(4);
        let r = mcs_variance_experiment(&[1_000, 10_000, 100_000], 30, &settings, &s).unwrap();
        assert!((r.fit.slope + 1.0).abs() < 0.2, "{:?}", r.fit);
        assert!(r.variances.iter().all(|v| *v > 0.0));
        assert!(mcs_variance_experiment(&[100, 1000], 1, &settings, &s).is_err());
        assert!(mcs_variance_experiment(&[100], 30, &settings, &s).is_err());
    }

    #[test]
    fn mcs_slope_is_stable_in_reps() {
        let s = scenario(1e-15);
        let settings = RunSettings::new(1, 1, 23).with_workers(4);
        let ms = [1_000, 4_000, 16_000, 64_000];
        let a = mcs_variance_experiment(&ms, 30, &settings, &s).unwrap();
        let b = mcs_variance_experiment(&ms, 60, &settings, &s).unwrap();
        let se = a.fit.slope_stderr.max(b.fit.slope_stderr);
        assert!((a.fit.slope - b.fit.slope).abs() < 2.0 * se, "{:?} {:?}", a.fit, b.fit);
    }
}
