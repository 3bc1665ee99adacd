//! Phase-function tables over a logarithmic angle grid.

use uvturb_core::atmosphere::{mie_phase, rayleigh_phase, total_phase, turbulence_phase, TurbulenceOpticalParams};

use crate::config::ScenarioConfig;
use crate::report::{Cell, Report};
use crate::CliError;

pub const THETA_MIN: f64 = 1e-6;

#[derive(Debug)]
pub struct PhaseTable {
    pub thetas: Vec<f64>,
    pub rayleigh: Vec<f64>,
    pub mie: Vec<f64>,
    pub total: Vec<f64>,
    pub eddy_sizes: Vec<f64>,
    /// One column per eddy size.
    pub turbulence: Vec<Vec<f64>>,
}

/// Log-spaced angles from [`THETA_MIN`] to π.
pub fn angle_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = (THETA_MIN.ln(), std::f64::consts::PI.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                THETA_MIN
            } else if i + 1 == points {
                std::f64::consts::PI
            } else {
                (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Tabulates every phase function. Empty `eddy_sizes` uses the configured
/// eddy size.
pub fn phase_table(cfg: &ScenarioConfig, points: usize, eddy_sizes: &[f64]) -> Result<PhaseTable, CliError> {
    if points < 2 {
        return Err(CliError::Input("phase table needs at least 2 angles".into()));
    }
    let scenario = cfg.scenario()?;
    let eddy_sizes = if eddy_sizes.is_empty() {
        vec![cfg.eddy_size]
    } else {
        eddy_sizes.to_vec()
    };
    let optics = eddy_sizes
        .iter()
        .map(|&d0| TurbulenceOpticalParams::new(d0, cfg.outer_scale, cfg.cn2, cfg.wavelength))
        .collect::<Result<Vec<_>, _>>()?;
    let thetas = angle_grid(points);
    let atm = &scenario.atmosphere;
    let column = |f: &dyn Fn(f64) -> uvturb_core::Result<f64>| thetas.iter().map(|&t| f(t)).collect::<Result<Vec<_>, _>>();
    Ok(PhaseTable {
        rayleigh: column(&|t| rayleigh_phase(t, &atm.scattering))?,
        mie: column(&|t| mie_phase(t, &atm.scattering))?,
        total: column(&|t| total_phase(t, atm))?,
        turbulence: optics
            .iter()
            .map(|o| column(&|t| turbulence_phase(t, o)))
            .collect::<Result<Vec<_>, _>>()?,
        eddy_sizes,
        thetas,
    })
}

impl PhaseTable {
    pub fn report(&self, cfg: &ScenarioConfig) -> Report {
        let mut r = Report::new("phase").with_config(cfg);
        let tur_names: Vec<String> = self.eddy_sizes.iter().map(|d| format!("p_tur_d0={d:e}")).collect();
        let mut columns = vec!["theta", "p_ray", "p_mie", "p_tot"];
        columns.extend(tur_names.iter().map(String::as_str));
        r.section("phase", &columns);
        for (i, &t) in self.thetas.iter().enumerate() {
            let mut row: Vec<Cell> = vec![t.into(), self.rayleigh[i].into(), self.mie[i].into(), self.total[i].into()];
            row.extend(self.turbulence.iter().map(|c| Cell::from(c[i])));
            r.row(row);
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use uvturb_core::atmosphere::turbulence_phase_cdf;

    /// Trapezoid rule for 2π ∫ p sinθ dθ over the grid.
    fn sphere_integral(thetas: &[f64], p: &[f64]) -> f64 {
        thetas
            .windows(2)
            .zip(p.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] * t[0].sin() + v[1] * t[1].sin()))
            .sum::<f64>()
            * 2.0
            * PI
    }

    #[test]
    fn grid_spans_the_range() {
        let g = angle_grid(100);
        assert_eq!(g[0], THETA_MIN);
        assert_eq!(g[99], PI);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn columns_are_normalized_densities() {
        let cfg = ScenarioConfig::default();
        let sizes = [1e-4, 1e-3, 1e-2];
        let t = phase_table(&cfg, 20_000, &sizes).unwrap();
        for col in [&t.rayleigh, &t.mie, &t.total].into_iter().chain(&t.turbulence) {
            assert!(col.iter().all(|&v| v >= 0.0));
        }
        for col in [&t.rayleigh, &t.mie, &t.total] {
            let i = sphere_integral(&t.thetas, col);
            assert!((i - 1.0).abs() < 1e-3, "{i}");
        }
        for (col, &d0) in t.turbulence.iter().zip(&sizes) {
            let o = TurbulenceOpticalParams::new(d0, cfg.outer_scale, cfg.cn2, cfg.wavelength).unwrap();
            // mass inside the first grid angle is not tabulated
            let cap = turbulence_phase_cdf(THETA_MIN, &o).unwrap();
            let i = sphere_integral(&t.thetas, col) + cap;
            assert!((i - 1.0).abs() < 1e-3, "d0 = {d0}: {i}");
        }
    }

    #[test]
    fn larger_eddies_sharpen_the_forward_peak() {
        let cfg = ScenarioConfig::default();
        let t = phase_table(&cfg, 400, &[1e-4, 1e-3, 1e-2]).unwrap();
        let half_width = |col: &[f64]| {
            let half = 0.5 * col[0];
            t.thetas[col.iter().position(|&v| v < half).unwrap()]
        };
        let widths: Vec<f64> = t.turbulence.iter().map(|c| half_width(c)).collect();
        assert!(widths[0] > widths[1] && widths[1] > widths[2], "{widths:?}");
        assert!(t.turbulence[2][0] > t.turbulence[1][0] && t.turbulence[1][0] > t.turbulence[0][0]);
    }

    #[test]
    fn report_has_one_column_per_eddy_size() {
        let cfg = ScenarioConfig::default();
        let t = phase_table(&cfg, 16, &[1e-4, 1e-3]).unwrap();
        let r = t.report(&cfg);
        assert!(r.as_str().contains("theta,p_ray,p_mie,p_tot,p_tur_d0=1e-4,p_tur_d0=1e-3"));
        assert_eq!(r.section_rows("phase").len(), 16);
        assert!(phase_table(&cfg, 1, &[]).is_err());
        assert!(phase_table(&cfg, 10, &[-1.0]).is_err());
    }
}
