//! Gridded densities, distribution fits and goodness-of-fit measures.

use statrs::distribution::{ContinuousCDF, LogNormal, Normal};

use crate::error::{ChannelError, Result};

/// A probability density on the uniform lattice `η_j = j·h`, `j = 0..len`.
///
/// Node `j` carries the probability mass of the cell `[η_j − h/2, η_j + h/2]`
/// (the first cell starts at zero). `overflow` is the mass that fell beyond
/// the last cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    step: f64,
    mass: Vec<f64>,
    pub overflow: f64,
}

impl DensityGrid {
    /// Empty grid with `points` nodes spanning `[0, eta_max]`.
    pub fn zeros(eta_max: f64, points: usize) -> Result<Self> {
        if points < 2 || !(eta_max > 0.0) || !eta_max.is_finite() {
            return Err(ChannelError::InvalidParameter(format!(
                "eta grid needs eta_max > 0 and at least 2 points (got {eta_max}, {points})"
            )));
        }
        Ok(Self {
            step: eta_max / (points - 1) as f64,
            mass: vec![0.0; points],
            overflow: 0.0,
        })
    }

    /// Grid from per-node cell masses.
    pub fn from_masses(step: f64, mass: Vec<f64>, overflow: f64) -> Self {
        Self { step, mass, overflow }
    }

    /// Grid filled from a CDF: node `j` gets `F(upper edge) − F(lower edge)`.
    pub fn from_cdf(eta_max: f64, points: usize, cdf: impl Fn(f64) -> f64) -> Result<Self> {
        let mut g = Self::zeros(eta_max, points)?;
        let mut prev = 0.0;
        for j in 0..points {
            let upper = cdf(g.upper_edge(j));
            g.mass[j] = (upper - prev).max(0.0);
            prev = upper;
        }
        g.overflow = (1.0 - prev).max(0.0);
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn eta_max(&self) -> f64 {
        self.step * (self.len() - 1) as f64
    }

    pub fn eta(&self, j: usize) -> f64 {
        self.step * j as f64
    }

    pub fn upper_edge(&self, j: usize) -> f64 {
        self.step * (j as f64 + 0.5)
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub(crate) fn masses_mut(&mut self) -> &mut Vec<f64> {
        &mut self.mass
    }

    /// Density values at the nodes.
    pub fn density(&self) -> Vec<f64> {
        let h = self.step;
        self.mass
            .iter()
            .enumerate()
            .map(|(j, m)| if j == 0 { m / (0.5 * h) } else { m / h })
            .collect()
    }

    /// Total mass on the grid.
    pub fn integral(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let total = self.integral();
        self.mass.iter().enumerate().map(|(j, m)| self.eta(j) * m).sum::<f64>() / total
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let total = self.integral();
        self.mass
            .iter()
            .enumerate()
            .map(|(j, m)| (self.eta(j) - mu).powi(2) * m)
            .sum::<f64>()
            / total
    }

    /// Scales the masses to unit total.
    pub fn normalize(&mut self) {
        let total = self.integral();
        if total > 0.0 {
            self.mass.iter_mut().for_each(|m| *m /= total);
        }
    }

    /// Largest gap between the grid CDF at cell edges and `cdf`.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let total = self.integral();
        let mut acc = 0.0;
        let mut worst: f64 = 0.0;
        for (j, m) in self.mass.iter().enumerate() {
            acc += m / total;
            worst = worst.max((acc - cdf(self.upper_edge(j))).abs());
        }
        worst
    }

    /// Log-normal with the grid's mean and variance.
    pub fn fit_lognormal(&self) -> Result<LogNormalFit> {
        LogNormalFit::from_moments(self.mean(), self.variance())
    }

    /// Gaussian with the grid's mean and variance.
    pub fn fit_normal(&self) -> Result<NormalFit> {
        NormalFit::new(self.mean(), self.variance().sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFit {
    pub mean: f64,
    pub std_dev: f64,
    dist: Normal,
}

impl NormalFit {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self> {
        let dist = Normal::new(mean, std_dev)
            .map_err(|e| ChannelError::InvalidParameter(format!("normal fit: {e}")))?;
        Ok(Self { mean, std_dev, dist })
    }

    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let (m, v) = mean_variance(samples)?;
        Self::new(m, v.sqrt())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.dist.cdf(x)
    }
}

/// Log-normal `ln X ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    dist: LogNormal,
}

impl LogNormalFit {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let dist = LogNormal::new(mu, sigma)
            .map_err(|e| ChannelError::InvalidParameter(format!("log-normal fit: {e}")))?;
        Ok(Self { mu, sigma, dist })
    }

    /// Matches mean and variance: `σ² = ln(1 + v/m²)`, `μ = ln m − σ²/2`.
    pub fn from_moments(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0) || !(variance > 0.0) {
            return Err(ChannelError::InvalidParameter(format!(
                "log-normal fit needs positive mean and variance (got {mean}, {variance})"
            )));
        }
        let s2 = (variance / (mean * mean)).ln_1p();
        Self::new(mean.ln() - 0.5 * s2, s2.sqrt())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.dist.cdf(x)
        }
    }
}

/// Sample mean and unbiased variance.
pub fn mean_variance(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(ChannelError::InvalidParameter("need at least two samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and
/// `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |worst, (i, &x)| {
        let f = cdf(x);
        worst.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; NaN with only two points.
    pub slope_stderr: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(ChannelError::LengthMismatch(format!("x has {}, y has {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(ChannelError::InvalidParameter("linear fit needs two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ChannelError::InvalidParameter("linear fit needs distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if x.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Equal-width histogram normalised to a density.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(samples: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 || samples.is_empty() {
            return Err(ChannelError::InvalidParameter("histogram needs samples and bins".into()));
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &x in samples {
            let k = (((x - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let n = samples.len() as f64;
        let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        Ok(Self { edges, counts, density })
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }
}
