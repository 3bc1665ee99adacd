//! Deterministic quadrature rules used for normalization checks, CDF tables
//! and moment computations.

use std::f64::consts::PI;

/// Composite Simpson rule on `intervals` (rounded up to even) uniform cells.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss-Legendre integration over [a, b].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre_rule(order);
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Lower edge of the logarithmic sub-grid used near the forward direction.
const FORWARD_LOG_FLOOR: f64 = 1e-12;
/// Upper edge of the logarithmic sub-grid.
const FORWARD_LOG_CEIL: f64 = 1e-2;

/// Integral of `2π p(θ) sin θ` over θ ∈ [0, π].
///
/// Composite Simpson on a uniform grid of `intervals` cells. With
/// `refine_forward`, [0, 1e-2] is instead covered by Simpson in ln θ from
/// 1e-12 (the sliver below it is taken as `p(0)` times its solid angle),
/// which resolves phase functions peaked within microradians of θ = 0.
pub fn sphere_integral<F: Fn(f64) -> f64>(p: F, intervals: usize, refine_forward: bool) -> f64 {
    let integrand = |t: f64| 2.0 * PI * p(t) * t.sin();
    if !refine_forward {
        return simpson(integrand, 0.0, PI, intervals);
    }
    let (la, lb) = (FORWARD_LOG_FLOOR.ln(), FORWARD_LOG_CEIL.ln());
    let log_part = simpson(
        |s| {
            let t = s.exp();
            integrand(t) * t
        },
        la,
        lb,
        intervals,
    );
    let sliver = 2.0 * PI * p(0.0) * (1.0 - FORWARD_LOG_FLOOR.cos());
    sliver + log_part + simpson(integrand, FORWARD_LOG_CEIL, PI, intervals)
}
