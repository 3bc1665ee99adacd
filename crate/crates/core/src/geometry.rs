//! Link geometry and photon path construction.
//!
//! Frame: the receiver sits at the origin and the transmitter at `(0, r, 0)`.
//! Zenith angles are measured from +z and azimuths in the x-y plane from +x,
//! so a pointing `(θ, φ)` has direction `(sinθ cosφ, sinθ sinφ, cosθ)`. With
//! `φ_T = -90°` and `φ_R = +90°` the two cones tilt toward each other.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{check_domain, ChannelError, Result};

pub type Vec3 = Vector3<f64>;

/// Relative slack on the inclusive FOV boundary.
const FOV_TOLERANCE: f64 = 1e-12;
/// Directions closer than this to ±z use the global-axis rotation branch.
const POLE_THRESHOLD: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    /// Tx-Rx baseline along +y, m.
    pub baseline: f64,
    pub tx_zenith: f64,
    pub tx_azimuth: f64,
    pub rx_zenith: f64,
    pub rx_azimuth: f64,
    /// Full divergence of the Tx beam, rad.
    pub tx_divergence: f64,
    /// Full field of view of the Rx, rad.
    pub rx_fov: f64,
    /// Receiver aperture area, m².
    pub aperture_area: f64,
}

impl GeometryConfig {
    /// The reference link: 500 m baseline, both ends at 45° zenith facing
    /// each other, 17° beam, 30° FOV, 1.77 cm² aperture.
    pub fn reference() -> Self {
        Self {
            baseline: 500.0,
            tx_zenith: 45f64.to_radians(),
            tx_azimuth: (-90f64).to_radians(),
            rx_zenith: 45f64.to_radians(),
            rx_azimuth: 90f64.to_radians(),
            tx_divergence: 17f64.to_radians(),
            rx_fov: 30f64.to_radians(),
            aperture_area: 1.77e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_domain("baseline", self.baseline, "(0, inf)", self.baseline > 0.0 && self.baseline.is_finite())?;
        for (name, v) in [
            ("tx_zenith", self.tx_zenith),
            ("tx_azimuth", self.tx_azimuth),
            ("rx_zenith", self.rx_zenith),
            ("rx_azimuth", self.rx_azimuth),
        ] {
            check_domain(name, v, "finite", v.is_finite())?;
        }
        check_domain(
            "tx_divergence",
            self.tx_divergence,
            "(0, pi)",
            self.tx_divergence > 0.0 && self.tx_divergence < PI,
        )?;
        check_domain("rx_fov", self.rx_fov, "(0, pi)", self.rx_fov > 0.0 && self.rx_fov < PI)?;
        check_domain(
            "aperture_area",
            self.aperture_area,
            "(0, inf)",
            self.aperture_area > 0.0 && self.aperture_area.is_finite(),
        )
    }

    pub fn tx_position(&self) -> Vec3 {
        Vec3::new(0.0, self.baseline, 0.0)
    }

    pub fn tx_pointing(&self) -> Vec3 {
        pointing(self.tx_zenith, self.tx_azimuth)
    }

    pub fn rx_pointing(&self) -> Vec3 {
        pointing(self.rx_zenith, self.rx_azimuth)
    }

    /// `r_A = sqrt(A_r / π)`.
    pub fn aperture_radius(&self) -> f64 {
        (self.aperture_area / PI).sqrt()
    }
}

/// Unit vector with zenith `theta` and azimuth `phi`.
pub fn pointing(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vec3::new(st * cp, st * sp, ct)
}

/// Angle between two nonzero vectors, accurate near 0 and π.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Emission direction at polar angle `theta_0` and azimuth `phi_0` about the
/// Tx pointing direction.
pub fn initial_direction(theta_0: f64, phi_0: f64, config: &GeometryConfig) -> Vec3 {
    scatter_direction(&config.tx_pointing(), theta_0, phi_0)
}

/// Rotates `mu_prev` by polar angle `theta_s` and azimuth `phi_s` in the
/// usual radiative-transfer local frame.
pub fn scatter_direction(mu_prev: &Vec3, theta_s: f64, phi_s: f64) -> Vec3 {
    if theta_s == 0.0 {
        return *mu_prev;
    }
    let (st, ct) = theta_s.sin_cos();
    let (sp, cp) = phi_s.sin_cos();
    let (ux, uy, uz) = (mu_prev.x, mu_prev.y, mu_prev.z);
    let out = if uz.abs() > POLE_THRESHOLD {
        Vec3::new(st * cp, st * sp, uz.signum() * ct)
    } else {
        let s = (1.0 - uz * uz).sqrt();
        Vec3::new(
            st * (ux * uz * cp - uy * sp) / s + ux * ct,
            st * (uy * uz * cp + ux * sp) / s + uy * ct,
            -st * cp * s + uz * ct,
        )
    };
    out.normalize()
}

/// An n-order photon path from the transmitter to the last scatterer,
/// together with the receiver-side quantities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PathSample {
    pub order: usize,
    /// Leg lengths d₀..d₍n−1₎.
    pub distances: Vec<f64>,
    /// θ₀ (about the Tx axis) followed by the scattering angles θ₁..θ₍n−1₎.
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    /// Scatterer positions r₁..r_n.
    pub positions: Vec<Vec3>,
    /// Propagation directions μ₀..μ₍n−1₎.
    pub directions: Vec<Vec3>,
    /// d_n = ‖r_n‖, the leg from the last scatterer to the receiver.
    pub receiver_distance: f64,
    /// Angle between μ₍n−1₎ and −r_n; zero when r_n = 0.
    pub theta_rn: f64,
    /// Angle between μ_R and r_n; zero when r_n = 0.
    pub phi_r: f64,
    pub accepted: bool,
}

impl PathSample {
    pub fn last_position(&self) -> Vec3 {
        self.positions.last().copied().unwrap_or_else(Vec3::zeros)
    }
}

/// Builds the path for the given leg lengths and angles.
pub fn build_path(config: &GeometryConfig, d: &[f64], theta: &[f64], phi: &[f64]) -> Result<PathSample> {
    let mut path = PathSample::default();
    build_path_into(config, d, theta, phi, &mut path)?;
    Ok(path)
}

/// [`build_path`] writing into an existing sample, reusing its buffers.
pub fn build_path_into(
    config: &GeometryConfig,
    d: &[f64],
    theta: &[f64],
    phi: &[f64],
    out: &mut PathSample,
) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Err(ChannelError::InvalidParameter("a path needs at least one leg".into()));
    }
    if theta.len() != n || phi.len() != n {
        return Err(ChannelError::LengthMismatch(format!(
            "d has {n} entries, theta {}, phi {}",
            theta.len(),
            phi.len()
        )));
    }
    if let Some(&bad) = d.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
        return Err(ChannelError::Domain {
            name: "d",
            value: bad,
            domain: "[0, inf)",
        });
    }

    out.order = n;
    out.distances.clear();
    out.distances.extend_from_slice(d);
    out.thetas.clear();
    out.thetas.extend_from_slice(theta);
    out.phis.clear();
    out.phis.extend_from_slice(phi);
    out.positions.clear();
    out.directions.clear();

    let mut pos = config.tx_position();
    let mut mu = initial_direction(theta[0], phi[0], config);
    for i in 0..n {
        if i > 0 {
            mu = scatter_direction(&mu, theta[i], phi[i]);
        }
        pos += d[i] * mu;
        out.directions.push(mu);
        out.positions.push(pos);
    }

    let rn = pos;
    let dn = rn.norm();
    out.receiver_distance = dn;
    if dn > 0.0 {
        out.theta_rn = angle_between(&mu, &(-rn));
        out.phi_r = angle_between(&config.rx_pointing(), &rn);
    } else {
        out.theta_rn = 0.0;
        out.phi_r = 0.0;
    }
    out.accepted = fov_indicator(&rn, config);
    Ok(())
}

/// `r_n·μ_R ≥ ‖r_n‖ cos(β_R/2)`, boundary included. The origin is accepted.
pub fn fov_indicator(r_n: &Vec3, config: &GeometryConfig) -> bool {
    let norm = r_n.norm();
    if norm == 0.0 {
        return true;
    }
    r_n.dot(&config.rx_pointing()) >= norm * ((0.5 * config.rx_fov).cos() - FOV_TOLERANCE)
}

/// Solid angle subtended by the aperture at distance `d_n`,
/// `2π(1 − d/√(d² + r_A²))`.
pub fn solid_angle(d_n: f64, config: &GeometryConfig) -> f64 {
    let a2 = config.aperture_area / PI;
    let h = (d_n * d_n + a2).sqrt();
    // 1 - d/h = a²/(h(h + d)), without cancellation at large d
    2.0 * PI * a2 / (h * (h + d_n))
}
