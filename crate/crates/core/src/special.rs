//! Modified Bessel function of the second kind for real order, evaluated in
//! log space.
//!
//! Gamma-Gamma densities need `K_ν(x)` for orders into the hundreds and
//! arguments from ~1e-6 to ~1e5, where the function itself over- or
//! underflows. [`ln_bessel_k`] returns `ln K_ν(x)` instead.
//!
//! Method: Temme's series for `K_μ, K_{μ+1}` with |μ| ≤ 1/2 when x ≤ 2,
//! Steed's continued fraction (exponentially scaled) when x > 2, then
//! forward recurrence in the order, which is stable for K.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const RESCALE: f64 = 1e250;

/// `ln K_ν(x)` for real ν and x > 0. Returns `+inf` at x = 0 and NaN for
/// x < 0.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    if x.is_nan() || nu.is_nan() || x < 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return f64::INFINITY;
    }
    // K_{-ν} = K_ν
    let nu = nu.abs();
    let steps = (nu + 0.5).floor();
    let mu = nu - steps;
    let (mut k_mu, mut k_mu1, mut log_scale) = if x <= 2.0 {
        let (a, b) = temme(mu, x);
        (a, b, 0.0)
    } else {
        let (a, b) = steed_scaled(mu, x);
        (a, b, -x)
    };
    let two_over_x = 2.0 / x;
    for i in 1..=steps as usize {
        let next = (mu + i as f64) * two_over_x * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
        if k_mu1.abs() > RESCALE {
            k_mu /= RESCALE;
            k_mu1 /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    k_mu.ln() + log_scale
}

/// `K_ν(x)`; may overflow or underflow where [`ln_bessel_k`] does not.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k(nu, x).exp()
}

/// Temme's series: returns (K_μ(x), K_{μ+1}(x)) for |μ| ≤ 1/2, x ≤ 2.
fn temme(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -half_x.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = gamma_terms(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = e.exp();
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = half_x * half_x;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// Returns (Γ1, Γ2, 1/Γ(1+μ), 1/Γ(1-μ)) with
/// Γ1 = (1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ) and Γ2 = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2.
fn gamma_terms(mu: f64) -> (f64, f64, f64, f64) {
    let gampl = 1.0 / gamma(1.0 + mu);
    let gammi = 1.0 / gamma(1.0 - mu);
    let gam1 = if mu.abs() < 1e-3 {
        // 1/Γ(1+z) = 1 + γz + c2 z² + c3 z³ + ..., so Γ1 = -γ - c3 μ²
        let c3 = EULER_GAMMA.powi(3) / 6.0 - EULER_GAMMA * PI * PI / 12.0 - 1.202_056_903_159_594_2 / 3.0;
        -EULER_GAMMA - c3 * mu * mu
    } else {
        (gammi - gampl) / (2.0 * mu)
    };
    (gam1, 0.5 * (gammi + gampl), gampl, gammi)
}

/// Steed's continued fraction: returns (e^x K_μ(x), e^x K_{μ+1}(x)) for x > 2.
fn steed_scaled(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * fi;
        c = -a * c / (fi + 1.0);
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}
