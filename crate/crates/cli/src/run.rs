//! Scenario runs, parameter sweeps and the Monte-Carlo variance comparison.

use std::str::FromStr;

use log::info;
use uvturb_core::engine::{
    channel_totals, combine_orders, estimate_orders, mcs_variance_experiment, path_loss_db, McsCompareResult,
    OrderEstimate,
};
use uvturb_core::stats::DensityGrid;

use crate::config::ScenarioConfig;
use crate::report::{Cell, Report};
use crate::CliError;

/// Spacing of per-row seeds in a sweep.
const ROW_SEED_STRIDE: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug)]
pub struct ScenarioRun {
    pub orders: Vec<OrderEstimate>,
    pub total_power: f64,
    pub total_variance: f64,
    /// Fading density; `None` without turbulence.
    pub pdf: Option<DensityGrid>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun, CliError> {
    let scenario = cfg.scenario()?;
    let settings = cfg.run_settings()?;
    info!("estimating {} orders with {} samples each", settings.orders, settings.samples);
    let orders = estimate_orders(&settings, &scenario)?;
    if scenario.turbulence.is_quiescent() {
        let (total_power, total_variance) = channel_totals(&orders)?;
        return Ok(ScenarioRun {
            orders,
            total_power,
            total_variance,
            pdf: None,
        });
    }
    let est = combine_orders(orders, &settings.pdf)?;
    Ok(ScenarioRun {
        orders: est.orders,
        total_power: est.total_power,
        total_variance: est.total_variance,
        pdf: Some(est.pdf),
    })
}

impl ScenarioRun {
    pub fn total_power_stderr(&self) -> f64 {
        self.orders.iter().map(|o| o.power_stderr.powi(2)).sum::<f64>().sqrt()
    }

    pub fn report(&self, cfg: &ScenarioConfig) -> Report {
        let mut r = Report::new("scenario").with_config(cfg);
        r.section(
            "orders",
            &["order", "samples", "accepted", "power", "power_stderr", "path_loss_db", "weight", "sigma2"],
        );
        for o in &self.orders {
            r.row(vec![
                o.order.into(),
                o.samples.into(),
                o.count.into(),
                o.power.into(),
                o.power_stderr.into(),
                path_loss_db(o.power).ok().into(),
                (o.power / self.total_power).into(),
                o.sigma2.into(),
            ]);
        }
        r.section(
            "totals",
            &["total_power", "total_power_stderr", "path_loss_db", "sigma2_tot", "pdf_integral", "pdf_mean", "pdf_variance"],
        );
        let pdf_stats = |f: fn(&DensityGrid) -> f64| self.pdf.as_ref().map(f);
        r.row(vec![
            self.total_power.into(),
            self.total_power_stderr().into(),
            path_loss_db(self.total_power).ok().into(),
            self.total_variance.into(),
            pdf_stats(DensityGrid::integral).into(),
            pdf_stats(DensityGrid::mean).into(),
            pdf_stats(DensityGrid::variance).into(),
        ]);
        match &self.pdf {
            Some(pdf) => {
                r.section("pdf", &["eta", "density"]);
                for (j, d) in pdf.density().into_iter().enumerate() {
                    r.row(vec![pdf.eta(j).into(), d.into()]);
                }
            }
            None => r.note("cn2 = 0: the fading coefficient is identically 1, pdf omitted"),
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Baseline, m.
    Distance,
    /// Tx and Rx zenith together, degrees.
    Zenith,
    /// Structure parameter, m^-2/3.
    Cn2,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distance" => Ok(Self::Distance),
            "zenith" => Ok(Self::Zenith),
            "cn2" => Ok(Self::Cn2),
            _ => Err(format!("`{s}` is not one of distance, zenith, cn2")),
        }
    }
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            Self::Distance => "distance_m",
            Self::Zenith => "zenith_deg",
            Self::Cn2 => "cn2",
        }
    }

    fn apply(self, cfg: &mut ScenarioConfig, value: f64) {
        match self {
            Self::Distance => cfg.baseline = value,
            Self::Zenith => {
                cfg.tx_zenith = value.to_radians();
                cfg.rx_zenith = value.to_radians();
            }
            Self::Cn2 => cfg.cn2 = value,
        }
    }
}

#[derive(Debug)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    /// (P_tot, its standard error, σ²_tot), or the reason the row failed.
    pub result: Result<(f64, f64, f64), String>,
}

/// Row `i` runs with seed `seed + i·stride`, so row 0 reproduces the plain
/// scenario. A failing row is recorded and the sweep continues.
pub fn run_sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Input("sweep needs at least one value".into()));
    }
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut row_cfg = cfg.clone();
            axis.apply(&mut row_cfg, value);
            row_cfg.seed = cfg.seed.wrapping_add((i as u64).wrapping_mul(ROW_SEED_STRIDE));
            info!("sweep row {i}: {} = {value}", axis.name());
            let result = sweep_row(&row_cfg).map_err(|e| {
                log::warn!("sweep row {i} failed: {e}");
                e.to_string()
            });
            SweepRow {
                value,
                seed: row_cfg.seed,
                result,
            }
        })
        .collect())
}

fn sweep_row(cfg: &ScenarioConfig) -> Result<(f64, f64, f64), CliError> {
    cfg.validate()?;
    let orders = estimate_orders(&cfg.run_settings()?, &cfg.scenario()?)?;
    let (power, variance) = channel_totals(&orders)?;
    let stderr = orders.iter().map(|o| o.power_stderr.powi(2)).sum::<f64>().sqrt();
    Ok((power, stderr, variance))
}

pub fn sweep_report(cfg: &ScenarioConfig, axis: SweepAxis, rows: &[SweepRow]) -> Report {
    let mut r = Report::new("sweep").with_config(cfg);
    r.meta("axis", axis.name());
    r.section(
        "sweep",
        &[axis.name(), "seed", "total_power", "total_power_stderr", "path_loss_db", "sigma2_tot", "status"],
    );
    for row in rows {
        let (p, se, s2, status) = match &row.result {
            Ok((p, se, s2)) => (*p, *se, *s2, "ok".to_string()),
            Err(e) => (f64::NAN, f64::NAN, f64::NAN, format!("error: {e}")),
        };
        let loss = path_loss_db(p).unwrap_or(f64::NAN);
        r.row(vec![
            row.value.into(),
            row.seed.into(),
            p.into(),
            se.into(),
            loss.into(),
            s2.into(),
            Cell::Text(status),
        ]);
    }
    r
}

#[derive(Debug)]
pub struct McsCompare {
    pub conventional: McsCompareResult,
    /// σ²_tot from the integration estimator at each M.
    pub mci_variance: Vec<f64>,
    pub mci_power: Vec<f64>,
}

pub fn run_mcs_compare(cfg: &ScenarioConfig, m_list: &[u64], reps: usize) -> Result<McsCompare, CliError> {
    let scenario = cfg.scenario()?;
    let settings = cfg.run_settings()?;
    info!("conventional estimator: {} sizes x {reps} repetitions", m_list.len());
    let conventional = mcs_variance_experiment(m_list, reps, &settings, &scenario)?;
    let mut mci_variance = Vec::with_capacity(m_list.len());
    let mut mci_power = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let mut s = settings;
        s.samples = m;
        let (p, v) = channel_totals(&estimate_orders(&s, &scenario)?)?;
        mci_power.push(p);
        mci_variance.push(v);
    }
    Ok(McsCompare {
        conventional,
        mci_variance,
        mci_power,
    })
}

impl McsCompare {
    pub fn report(&self, cfg: &ScenarioConfig, reps: usize) -> Report {
        let mut r = Report::new("mcs-compare").with_config(cfg);
        r.meta("reps", reps);
        r.section(
            "compare",
            &["samples", "conventional_mean", "conventional_variance", "mci_total_power", "mci_sigma2_tot"],
        );
        let c = &self.conventional;
        for i in 0..c.sample_sizes.len() {
            r.row(vec![
                c.sample_sizes[i].into(),
                c.means[i].into(),
                c.variances[i].into(),
                self.mci_power[i].into(),
                self.mci_variance[i].into(),
            ]);
        }
        r.section("fit", &["slope", "intercept", "slope_stderr"]);
        r.row(vec![c.fit.slope.into(), c.fit.intercept.into(), c.fit.slope_stderr.into()]);
        r
    }
}
