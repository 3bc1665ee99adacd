//! Scattering and absorption physics of the turbulent atmosphere.
//!
//! All coefficients are stored in 1/m. Phase functions are densities per
//! steradian over the scattering angle θ ∈ [0, π] and integrate to one over
//! the sphere.
//!
//! Turbulence-induced scattering is concentrated within microradians of the
//! forward direction at UV wavelengths, so it acts as rectilinear
//! propagation. [`AtmosphereModel`] therefore leaves it out of the total
//! scattering coefficient and phase function unless explicitly enabled.

use std::f64::consts::PI;

use crate::error::{check_domain, ChannelError, Result};

/// Real part of the near-ground relative permittivity.
pub const PERMITTIVITY_REAL: f64 = 1.00059;
/// Near-ground atmospheric conductivity, S/m.
pub const CONDUCTIVITY: f64 = 2.2e-14;

/// Shape parameters of the Rayleigh (γ) and Mie (g, f) phase functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringParams {
    pub gamma: f64,
    pub g: f64,
    pub f: f64,
}

impl ScatteringParams {
    pub fn new(gamma: f64, g: f64, f: f64) -> Result<Self> {
        let p = Self { gamma, g, f };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_domain("gamma", self.gamma, "[0, inf)", self.gamma >= 0.0)?;
        check_domain("g", self.g, "(-1, 1)", self.g > -1.0 && self.g < 1.0)?;
        check_domain("f", self.f, "[0, 1]", (0.0..=1.0).contains(&self.f))
    }
}

/// Optical parameters of the turbulent continuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbulenceOpticalParams {
    /// Average eddy size d0, m.
    pub eddy_size: f64,
    /// Outer scale L0, m.
    pub outer_scale: f64,
    /// Refractive-index structure parameter Cn², m^(-2/3).
    pub cn2: f64,
    /// Wavelength, m.
    pub wavelength: f64,
}

impl TurbulenceOpticalParams {
    pub fn new(eddy_size: f64, outer_scale: f64, cn2: f64, wavelength: f64) -> Result<Self> {
        let p = Self {
            eddy_size,
            outer_scale,
            cn2,
            wavelength,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_domain("eddy_size", self.eddy_size, "(0, inf)", self.eddy_size > 0.0)?;
        check_domain("outer_scale", self.outer_scale, "[0, inf)", self.outer_scale >= 0.0)?;
        check_domain("cn2", self.cn2, "[0, inf)", self.cn2 >= 0.0)?;
        check_domain("wavelength", self.wavelength, "(0, inf)", self.wavelength > 0.0)
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Variance of the refractive index, ⟨n₁²⟩ = Cn² L0^(2/3) / 1.91.
    pub fn refractive_index_variance(&self) -> f64 {
        self.cn2 * self.outer_scale.powf(2.0 / 3.0) / 1.91
    }

    /// Booker-Gordon refractive-index spectrum Φn(κ).
    pub fn spectrum(&self, kappa: f64) -> f64 {
        let d0 = self.eddy_size;
        let t = 1.0 + kappa * kappa * d0 * d0;
        self.refractive_index_variance() * d0.powi(3) / (PI * PI * t * t)
    }

    /// Differential cross section per unit volume for a scalar wave,
    /// σ(θ) = 2π k⁴ Φn(2k sin(θ/2)).
    pub fn cross_section(&self, theta: f64) -> f64 {
        let k = self.wavenumber();
        2.0 * PI * k.powi(4) * self.spectrum(2.0 * k * (0.5 * theta).sin())
    }

    /// Total turbulence scattering coefficient ∫σ dΩ, 1/m.
    pub fn scattering_coefficient(&self) -> f64 {
        let k = self.wavenumber();
        let a = 4.0 * k * k * self.eddy_size * self.eddy_size;
        8.0 * k.powi(4) * self.refractive_index_variance() * self.eddy_size.powi(3) / (1.0 + a)
    }

    /// 4k²d0², the forward-peaking strength of the turbulence phase function.
    pub(crate) fn forward_strength(&self) -> f64 {
        let k = self.wavenumber();
        4.0 * k * k * self.eddy_size * self.eddy_size
    }
}

/// Particle scattering/absorption coefficients and phase-function shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtmosphereModel {
    pub k_s_ray: f64,
    pub k_s_mie: f64,
    pub k_a_par: f64,
    pub scattering: ScatteringParams,
    /// When set, turbulence-induced scattering is added to the scattering
    /// coefficient and the phase mixture. Off by default.
    pub turbulence_scattering: Option<TurbulenceOpticalParams>,
}

impl AtmosphereModel {
    pub fn new(k_s_ray: f64, k_s_mie: f64, k_a_par: f64, scattering: ScatteringParams) -> Result<Self> {
        let m = Self {
            k_s_ray,
            k_s_mie,
            k_a_par,
            scattering,
            turbulence_scattering: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_turbulence_scattering(mut self, optical: TurbulenceOpticalParams) -> Self {
        self.turbulence_scattering = Some(optical);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_domain("k_s_ray", self.k_s_ray, "[0, inf)", self.k_s_ray >= 0.0)?;
        check_domain("k_s_mie", self.k_s_mie, "[0, inf)", self.k_s_mie >= 0.0)?;
        check_domain("k_a_par", self.k_a_par, "[0, inf)", self.k_a_par >= 0.0)?;
        self.scattering.validate()?;
        if let Some(t) = &self.turbulence_scattering {
            t.validate()?;
        }
        if self.k_e_tot() <= 0.0 {
            return Err(ChannelError::InvalidParameter(
                "total extinction coefficient must be positive".into(),
            ));
        }
        Ok(())
    }

    fn k_s_tur(&self) -> f64 {
        self.turbulence_scattering
            .map_or(0.0, |t| t.scattering_coefficient())
    }

    pub fn k_s_tot(&self) -> f64 {
        self.k_s_ray + self.k_s_mie + self.k_s_tur()
    }

    pub fn k_e_tot(&self) -> f64 {
        self.k_s_tot() + self.k_a_par
    }

    /// Single-scattering albedo k_s / k_e.
    pub fn albedo(&self) -> f64 {
        self.k_s_tot() / self.k_e_tot()
    }

    /// Mixture weights (Rayleigh, Mie, turbulence); they sum to one.
    pub fn mixture_weights(&self) -> Result<[f64; 3]> {
        let ks = self.k_s_tot();
        if ks <= 0.0 {
            return Err(ChannelError::InvalidParameter(
                "total scattering coefficient is zero".into(),
            ));
        }
        let w_ray = self.k_s_ray / ks;
        let w_tur = self.k_s_tur() / ks;
        Ok([w_ray, 1.0 - w_ray - w_tur, w_tur])
    }

    /// Total phase function evaluated from cos θ, without domain checks.
    pub(crate) fn phase_from_cos(&self, weights: &[f64; 3], cos_theta: f64) -> f64 {
        let mut p = weights[0] * rayleigh_from_cos(cos_theta, &self.scattering)
            + weights[1] * mie_from_cos(cos_theta, &self.scattering);
        if let Some(t) = &self.turbulence_scattering {
            p += weights[2] * turbulence_from_cos(cos_theta, t.forward_strength());
        }
        p
    }
}

fn check_angle(theta: f64) -> Result<()> {
    check_domain("theta", theta, "[0, pi]", (0.0..=PI).contains(&theta))
}

fn rayleigh_from_cos(c: f64, p: &ScatteringParams) -> f64 {
    3.0 * (1.0 + 3.0 * p.gamma + (1.0 - p.gamma) * c * c) / (16.0 * PI * (1.0 + 2.0 * p.gamma))
}

fn mie_from_cos(c: f64, p: &ScatteringParams) -> f64 {
    let g2 = p.g * p.g;
    let hg = (1.0 + g2 - 2.0 * p.g * c).powf(-1.5);
    let second = p.f * (3.0 * c * c - 1.0) / (2.0 * (1.0 + g2).powf(1.5));
    (1.0 - g2) / (4.0 * PI) * (hg + second)
}

fn turbulence_from_cos(c: f64, strength: f64) -> f64 {
    // sin²(θ/2) = (1 - cos θ)/2
    let s2 = 0.5 * (1.0 - c);
    let t = 1.0 + strength * s2;
    (1.0 + strength) / (4.0 * PI * t * t)
}

/// Rayleigh phase function.
pub fn rayleigh_phase(theta: f64, params: &ScatteringParams) -> Result<f64> {
    check_angle(theta)?;
    Ok(rayleigh_from_cos(theta.cos(), params))
}

/// Two-term Mie phase function (Henyey-Greenstein plus a cos² correction).
pub fn mie_phase(theta: f64, params: &ScatteringParams) -> Result<f64> {
    check_angle(theta)?;
    check_domain("g", params.g, "(-1, 1)", params.g.abs() < 1.0)?;
    Ok(mie_from_cos(theta.cos(), params))
}

/// Booker-Gordon turbulence phase function
/// `(1 + 4k²d0²) / (4π (1 + 4k²d0² sin²(θ/2))²)`.
pub fn turbulence_phase(theta: f64, params: &TurbulenceOpticalParams) -> Result<f64> {
    check_angle(theta)?;
    let a = params.forward_strength();
    let s = (0.5 * theta).sin();
    let t = 1.0 + a * s * s;
    Ok((1.0 + a) / (4.0 * PI * t * t))
}

/// Fraction of the turbulence phase function's mass at scattering angles
/// below `theta`, from the closed-form CDF `(1+a)u / (1+a u)` with
/// `a = 4k²d0²`, `u = sin²(θ/2)`.
pub fn turbulence_phase_cdf(theta: f64, params: &TurbulenceOpticalParams) -> Result<f64> {
    check_angle(theta)?;
    let a = params.forward_strength();
    let s = (0.5 * theta).sin();
    let u = s * s;
    Ok((1.0 + a) * u / (1.0 + a * u))
}

/// Scattering-coefficient-weighted mixture of the phase functions.
pub fn total_phase(theta: f64, model: &AtmosphereModel) -> Result<f64> {
    check_angle(theta)?;
    let w = model.mixture_weights()?;
    Ok(model.phase_from_cos(&w, theta.cos()))
}

/// Absorption coefficient of the turbulent continuum, 1/m.
///
/// Computed as `k · Im(sqrt(ε_r + i ε_i))` with `ε_i = 60 λ δ`, which is
/// `k ε_i / (2 sqrt(ε_r))` to first order in ε_i. At 260 nm this is
/// about 4.1457e-12 1/m.
pub fn turbulence_absorption(lambda: f64) -> Result<f64> {
    check_domain("lambda", lambda, "(0, inf)", lambda > 0.0)?;
    let k = 2.0 * PI / lambda;
    let eps_i = 60.0 * lambda * CONDUCTIVITY;
    let modulus = PERMITTIVITY_REAL.hypot(eps_i);
    let re = (0.5 * (modulus + PERMITTIVITY_REAL)).sqrt();
    // Im sqrt(z) = b / (2 Re sqrt(z)); avoids cancellation in (|z| - a)
    Ok(k * eps_i / (2.0 * re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::sphere_integral;
    use proptest::prelude::*;

    fn table_one() -> AtmosphereModel {
        AtmosphereModel::new(
            0.266e-3,
            0.284e-3,
            0.802e-3,
            ScatteringParams::new(0.017, 0.72, 0.5).unwrap(),
        )
        .unwrap()
    }

    fn table_one_turbulence() -> TurbulenceOpticalParams {
        TurbulenceOpticalParams::new(1e-3, 100.0, 1e-15, 260e-9).unwrap()
    }

    #[test]
    fn rayleigh_at_right_angle() {
        let p = ScatteringParams::new(0.017, 0.72, 0.5).unwrap();
        let v = rayleigh_phase(PI / 2.0, &p).unwrap();
        let expected = 3.0 * (1.0 + 3.0 * 0.017) / (16.0 * PI * (1.0 + 2.0 * 0.017));
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 6.07e-2).abs() < 5e-5);
    }

    #[test]
    fn rayleigh_rejects_bad_angle() {
        let p = ScatteringParams::new(0.017, 0.72, 0.5).unwrap();
        assert!(rayleigh_phase(-0.1, &p).is_err());
        assert!(rayleigh_phase(PI + 1e-9, &p).is_err());
        assert!(mie_phase(4.0, &p).is_err());
        assert!(turbulence_phase(-1.0, &table_one_turbulence()).is_err());
    }

    #[test]
    fn mie_forward_dominance_and_isotropic_limit() {
        let p = ScatteringParams::new(0.017, 0.72, 0.5).unwrap();
        assert!(mie_phase(0.0, &p).unwrap() > mie_phase(PI, &p).unwrap());
        let iso = ScatteringParams::new(0.0, 0.0, 0.0).unwrap();
        for t in [0.0, 0.3, 1.0, 2.0, PI] {
            assert!((mie_phase(t, &iso).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn mie_rejects_unphysical_asymmetry() {
        let bad = ScatteringParams {
            gamma: 0.0,
            g: 1.0,
            f: 0.0,
        };
        assert!(mie_phase(0.5, &bad).is_err());
        assert!(ScatteringParams::new(0.0, -1.0, 0.0).is_err());
        assert!(ScatteringParams::new(0.0, 0.5, 1.5).is_err());
        assert!(ScatteringParams::new(-0.1, 0.5, 0.5).is_err());
    }

    #[test]
    fn phase_functions_normalize() {
        let atm = table_one();
        let s = atm.scattering;
        let cases: [(&str, f64); 3] = [
            ("ray", sphere_integral(|t| rayleigh_phase(t, &s).unwrap(), 20_000, false)),
            ("mie", sphere_integral(|t| mie_phase(t, &s).unwrap(), 20_000, false)),
            ("tot", sphere_integral(|t| total_phase(t, &atm).unwrap(), 20_000, false)),
        ];
        for (name, v) in cases {
            assert!((v - 1.0).abs() < 1e-6, "{name}: {v}");
        }
        let t = table_one_turbulence();
        let v = sphere_integral(|x| turbulence_phase(x, &t).unwrap(), 20_000, true);
        assert!((v - 1.0).abs() < 1e-6, "tur: {v}");
    }

    #[test]
    fn turbulence_phase_peak_and_concentration() {
        let t = table_one_turbulence();
        let k = t.wavenumber();
        let a = 4.0 * k * k * 1e-6;
        let p0 = turbulence_phase(0.0, &t).unwrap();
        assert!((p0 - (1.0 + a) / (4.0 * PI)).abs() / p0 < 1e-14);
        let ratio = p0 / turbulence_phase(PI, &t).unwrap();
        assert!((ratio - (1.0 + a).powi(2)).abs() / ratio < 1e-12);
        assert!(ratio > 1e12);
        // more than 99% of the mass within a milliradian
        let below = crate::quadrature::simpson(
            |s| {
                let x = s.exp();
                2.0 * PI * turbulence_phase(x, &t).unwrap() * x.sin() * x
            },
            (1e-12f64).ln(),
            (1e-3f64).ln(),
            20_000,
        );
        assert!(below > 0.99, "{below}");
        let closed = turbulence_phase_cdf(1e-3, &t).unwrap();
        assert!((below - closed).abs() < 1e-6);
        assert!((turbulence_phase_cdf(PI, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_phase_weights_and_degenerate_mixture() {
        let atm = table_one();
        let w = atm.mixture_weights().unwrap();
        assert!((w[0] - 0.266 / 0.55).abs() < 1e-12);
        assert!((w[1] - 0.284 / 0.55).abs() < 1e-12);
        assert_eq!(w[0] + w[1] + w[2], 1.0);

        let ray_only = AtmosphereModel::new(0.266e-3, 0.0, 0.802e-3, atm.scattering).unwrap();
        for t in [0.0, 0.4, 1.7, PI] {
            assert_eq!(
                total_phase(t, &ray_only).unwrap(),
                rayleigh_phase(t, &atm.scattering).unwrap()
            );
        }

        let none = AtmosphereModel::new(0.0, 0.0, 0.802e-3, atm.scattering).unwrap();
        assert!(total_phase(0.3, &none).is_err());
    }

    #[test]
    fn derived_coefficients_follow_edits() {
        let mut atm = table_one();
        assert!((atm.k_s_tot() - 0.55e-3).abs() < 1e-15);
        assert!((atm.k_e_tot() - 1.352e-3).abs() < 1e-15);
        assert!((atm.albedo() - 0.55 / 1.352).abs() < 1e-12);
        atm.k_a_par = 0.0;
        assert_eq!(atm.albedo(), 1.0);
        assert!(AtmosphereModel::new(0.0, 0.0, 0.0, atm.scattering).is_err());
    }

    #[test]
    fn turbulence_scattering_is_opt_in() {
        let atm = table_one();
        let with = atm.with_turbulence_scattering(table_one_turbulence());
        assert!(with.k_s_tot() > atm.k_s_tot());
        let w = with.mixture_weights().unwrap();
        assert!(w[2] > 0.0 && (w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let v = sphere_integral(|t| total_phase(t, &with).unwrap(), 20_000, true);
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        // cross section integral matches the closed-form coefficient
        let t = table_one_turbulence();
        let int = sphere_integral(|x| t.cross_section(x), 20_000, true);
        assert!((int - t.scattering_coefficient()).abs() / t.scattering_coefficient() < 1e-6);
    }

    #[test]
    fn turbulence_absorption_value() {
        let v = turbulence_absorption(260e-9).unwrap();
        assert!((v - 4.1457e-12).abs() / 4.1457e-12 < 1e-3, "{v}");
        // negligible next to particle absorption (ratio ≈ 5.2e-9)
        assert!(v < 1e-8 * 0.802e-3);
        let doubled = turbulence_absorption(520e-9).unwrap();
        assert!((doubled - v).abs() / v < 1e-12);
        assert!(turbulence_absorption(0.0).is_err());
    }

    proptest! {
        #[test]
        fn rayleigh_is_symmetric(theta in 0.0..PI, gamma in 0.0..2.0f64) {
            let p = ScatteringParams::new(gamma, 0.5, 0.5).unwrap();
            let a = rayleigh_phase(theta, &p).unwrap();
            let b = rayleigh_phase(PI - theta, &p).unwrap();
            prop_assert!((a - b).abs() < 1e-14);
        }

        #[test]
        fn total_phase_is_convex_combination(theta in 0.0..PI, kr in 1e-6..1e-2f64, km in 0.0..1e-2f64) {
            let s = ScatteringParams::new(0.017, 0.72, 0.5).unwrap();
            let atm = AtmosphereModel::new(kr, km, 1e-3, s).unwrap();
            let w = atm.mixture_weights().unwrap();
            let expected = w[0] * rayleigh_phase(theta, &s).unwrap() + w[1] * mie_phase(theta, &s).unwrap();
            let got = total_phase(theta, &atm).unwrap();
            prop_assert!((got - expected).abs() <= 1e-14 * expected.abs().max(1.0));
            prop_assert!(got >= 0.0);
        }
    }
}
