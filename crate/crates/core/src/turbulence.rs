//! Turbulent fading statistics for a single propagation leg.
//!
//! A leg of length `d` carries a unit-mean fading coefficient η whose
//! strength is set by the plane-wave Rytov variance σ_r²(d). Three families
//! are supported:
//!
//! - log-normal (weak turbulence),
//! - Gamma-Gamma (moderate to strong turbulence),
//! - hybrid: a log-normal whose log-variance is `ln(Var_GG + 1)`, which keeps
//!   the variance bounded like Gamma-Gamma while retaining the log-normal
//!   algebra needed for path products,
//! - auto: log-normal on legs with σ_r²(d) below [`AUTO_HYBRID_THRESHOLD`],
//!   hybrid on longer legs.
//!
//! Every family is summarised by [`FadingMoments`]: the second moment
//! `E[η²]` and the log-variance of the moment-matched log-normal, with
//! `m2 = exp(sigma_ln2)` in all cases.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::atmosphere::TurbulenceOpticalParams;
use crate::error::{check_domain, ChannelError, Result};
use crate::special::ln_bessel_k;

/// Rytov variance of a leg above which [`FadingFamily::Auto`] switches from
/// log-normal to hybrid.
pub const AUTO_HYBRID_THRESHOLD: f64 = 0.3;

/// Smallest η at which the Gamma-Gamma density is evaluated.
const GG_ETA_FLOOR: f64 = 1e-12;
/// Densities below this are flushed to zero.
const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FadingFamily {
    LogNormal,
    GammaGamma,
    Hybrid,
    /// Chosen per leg from its Rytov variance.
    Auto,
}

impl FadingFamily {
    /// The concrete family used on a leg with Rytov variance `sigma_r2`.
    pub fn for_leg(self, sigma_r2: f64) -> FadingFamily {
        match self {
            FadingFamily::Auto if sigma_r2 < AUTO_HYBRID_THRESHOLD => FadingFamily::LogNormal,
            FadingFamily::Auto => FadingFamily::Hybrid,
            other => other,
        }
    }
}

/// How the log-normal log-variance is tied to the Rytov variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LnConvention {
    /// Log-variance equals σ_r², so that `E[η²] = exp(σ_r²)`.
    #[default]
    MomentMatched,
    /// Log-variance equals `exp(σ_r²) - 1`, the scintillation index of the
    /// moment-matched law. Kept for comparison only.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbulenceModel {
    pub optical: TurbulenceOpticalParams,
    pub family: FadingFamily,
    pub ln_convention: LnConvention,
}

impl TurbulenceModel {
    pub fn new(optical: TurbulenceOpticalParams, family: FadingFamily) -> Result<Self> {
        optical.validate()?;
        Ok(Self {
            optical,
            family,
            ln_convention: LnConvention::MomentMatched,
        })
    }

    pub fn with_ln_convention(mut self, convention: LnConvention) -> Self {
        self.ln_convention = convention;
        self
    }

    /// Fading is identically one for every leg.
    pub fn is_quiescent(&self) -> bool {
        self.optical.cn2 == 0.0
    }
}

/// Second moment of a leg's fading coefficient and the log-variance of the
/// moment-matched log-normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingMoments {
    pub m2: f64,
    pub sigma_ln2: f64,
}

impl FadingMoments {
    pub const UNIT: FadingMoments = FadingMoments {
        m2: 1.0,
        sigma_ln2: 0.0,
    };

    fn from_log_variance(sigma_ln2: f64) -> Self {
        Self {
            m2: sigma_ln2.exp(),
            sigma_ln2,
        }
    }
}

/// Plane-wave Rytov variance `1.23 Cn² k^(7/6) d^(11/6)`.
pub fn rytov_variance(d: f64, model: &TurbulenceModel) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let k = model.optical.wavenumber();
    1.23 * model.optical.cn2 * k.powf(7.0 / 6.0) * d.powf(11.0 / 6.0)
}

/// Unit-mean log-normal density with log-variance `sigma_ln2`.
pub fn ln_pdf(eta: f64, sigma_ln2: f64) -> f64 {
    if eta <= 0.0 || sigma_ln2 <= 0.0 {
        return 0.0;
    }
    let z = eta.ln() + 0.5 * sigma_ln2;
    (-z * z / (2.0 * sigma_ln2)).exp() / (eta * (2.0 * std::f64::consts::PI * sigma_ln2).sqrt())
}

/// CDF of the unit-mean log-normal. A zero log-variance is a step at η = 1.
pub fn ln_cdf(eta: f64, sigma_ln2: f64) -> f64 {
    if eta <= 0.0 {
        return 0.0;
    }
    if sigma_ln2 <= 0.0 {
        return if eta >= 1.0 { 1.0 } else { 0.0 };
    }
    let z = (eta.ln() + 0.5 * sigma_ln2) / sigma_ln2.sqrt();
    standard_normal().cdf(z)
}

/// Quantile of the unit-mean log-normal.
pub fn ln_quantile(p: f64, sigma_ln2: f64) -> f64 {
    if sigma_ln2 <= 0.0 {
        return 1.0;
    }
    let z = standard_normal().inverse_cdf(p);
    (sigma_ln2.sqrt() * z - 0.5 * sigma_ln2).exp()
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Gamma-Gamma shape parameters, stored with their reciprocals so that the
/// weak-turbulence limit (α, β → ∞) stays exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaGammaParams {
    pub alpha: f64,
    pub beta: f64,
    /// ln(1 + 1/α)
    log1p_inv_alpha: f64,
    /// ln(1 + 1/β)
    log1p_inv_beta: f64,
}

impl GammaGammaParams {
    /// Parameters from explicit shapes, for direct density evaluation.
    pub fn from_shapes(alpha: f64, beta: f64) -> Result<Self> {
        check_domain("alpha", alpha, "(0, inf)", alpha > 0.0)?;
        check_domain("beta", beta, "(0, inf)", beta > 0.0)?;
        Ok(Self {
            alpha,
            beta,
            log1p_inv_alpha: (1.0 / alpha).ln_1p(),
            log1p_inv_beta: (1.0 / beta).ln_1p(),
        })
    }

    /// Var[η] = 1/α + 1/β + 1/(αβ).
    pub fn variance(&self) -> f64 {
        (self.log1p_inv_alpha + self.log1p_inv_beta).exp_m1()
    }

    /// E[η²] = (1 + 1/α)(1 + 1/β).
    pub fn second_moment(&self) -> f64 {
        (self.log1p_inv_alpha + self.log1p_inv_beta).exp()
    }

    /// ln E[η²], the log-variance of the moment-matched log-normal.
    pub fn log_second_moment(&self) -> f64 {
        self.log1p_inv_alpha + self.log1p_inv_beta
    }
}

/// Gamma-Gamma shapes from the Rytov variance.
pub fn gg_params(sigma_r2: f64) -> Result<GammaGammaParams> {
    if sigma_r2.is_nan() || sigma_r2 <= 0.0 {
        return Err(ChannelError::Domain {
            name: "sigma_r2",
            value: sigma_r2,
            domain: "(0, inf); zero turbulence has no Gamma-Gamma form",
        });
    }
    let s125 = sigma_r2.powf(1.2);
    // exponents x_a, x_b with α = 1/(e^x_a - 1) and 1 + 1/α = e^x_a
    let x_a = 0.49 * sigma_r2 / (1.0 + 1.11 * s125).powf(7.0 / 6.0);
    let x_b = 0.51 * sigma_r2 / (1.0 + 0.69 * s125).powf(5.0 / 6.0);
    Ok(GammaGammaParams {
        alpha: 1.0 / x_a.exp_m1(),
        beta: 1.0 / x_b.exp_m1(),
        log1p_inv_alpha: x_a,
        log1p_inv_beta: x_b,
    })
}

/// Unit-mean Gamma-Gamma density.
pub fn gg_pdf(eta: f64, params: &GammaGammaParams) -> f64 {
    if eta < 0.0 {
        return 0.0;
    }
    let eta = eta.max(GG_ETA_FLOOR);
    let (a, b) = (params.alpha, params.beta);
    let ab = a * b;
    let half_sum = 0.5 * (a + b);
    let log_density = std::f64::consts::LN_2 + half_sum * ab.ln() + (half_sum - 1.0) * eta.ln()
        - ln_gamma(a)
        - ln_gamma(b)
        + ln_bessel_k(a - b, 2.0 * (ab * eta).sqrt());
    let v = log_density.exp();
    if v < DENSITY_FLOOR {
        0.0
    } else {
        v
    }
}

/// Gamma-Gamma moments of a leg; unit moments when σ_r² = 0.
fn gg_moments(sigma_r2: f64) -> FadingMoments {
    match gg_params(sigma_r2) {
        Ok(p) => FadingMoments::from_log_variance(p.log_second_moment()),
        Err(_) => FadingMoments::UNIT,
    }
}

/// Second moment of the fading on a leg of length `d`.
pub fn second_moment(d: f64, model: &TurbulenceModel) -> FadingMoments {
    let sr2 = rytov_variance(d, model);
    if sr2 <= 0.0 {
        return FadingMoments::UNIT;
    }
    match model.family.for_leg(sr2) {
        FadingFamily::LogNormal => FadingMoments::from_log_variance(match model.ln_convention {
            LnConvention::MomentMatched => sr2,
            LnConvention::Literal => sr2.exp_m1(),
        }),
        _ => gg_moments(sr2),
    }
}

/// Log-variance `ln(Var_GG + 1)` of the hybrid log-normal on a leg of
/// length `d`. Zero when σ_r²(d) = 0.
pub fn hybrid_sigma_ln2(d: f64, model: &TurbulenceModel) -> f64 {
    let sr2 = rytov_variance(d, model);
    match gg_params(sr2) {
        Ok(p) => p.variance().ln_1p(),
        Err(_) => 0.0,
    }
}

/// One unit-mean fading draw for a leg of length `d`.
///
/// Log-normal and hybrid families use inverse-transform sampling of the
/// normal quantile; Gamma-Gamma draws the product of two unit-mean Gamma
/// variates. Returns exactly 1 without consuming randomness when σ_r² = 0.
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R, d: f64, model: &TurbulenceModel) -> f64 {
    let sr2 = rytov_variance(d, model);
    if sr2 <= 0.0 {
        return 1.0;
    }
    match model.family.for_leg(sr2) {
        FadingFamily::GammaGamma => {
            let p = gg_params(sr2).expect("positive Rytov variance");
            let x = Gamma::new(p.alpha, 1.0 / p.alpha).expect("positive shape");
            let y = Gamma::new(p.beta, 1.0 / p.beta).expect("positive shape");
            x.sample(rng) * y.sample(rng)
        }
        _ => {
            let s = second_moment(d, model).sigma_ln2;
            // open interval keeps the quantile finite
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            ln_quantile(u, s)
        }
    }
}

/// Density of the fading family itself on a leg of length `d`, as used for
/// reporting and distribution comparisons.
pub fn leg_pdf(eta: f64, d: f64, model: &TurbulenceModel) -> f64 {
    let sr2 = rytov_variance(d, model);
    match model.family.for_leg(sr2) {
        FadingFamily::GammaGamma if sr2 > 0.0 => {
            gg_pdf(eta, &gg_params(sr2).expect("positive Rytov variance"))
        }
        _ => ln_pdf(eta, second_moment(d, model).sigma_ln2),
    }
}
