//! Statistics of measured receiver signals.
//!
//! Input is plain text with one sample per line: either a single value or
//! `index value` (whitespace or comma separated). Blank lines and `#`
//! comments are skipped.

use uvturb_core::stats::{ks_statistic, Histogram, NormalFit};

use crate::report::Report;
use crate::CliError;

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug)]
pub struct Analysis {
    pub samples: usize,
    pub mean: f64,
    /// `E[R²]/E²[R] − 1`.
    pub scintillation_index: f64,
    /// Histogram of the samples divided by their mean.
    pub histogram: Histogram,
    /// Gaussian fitted to the normalized samples.
    pub fit: NormalFit,
    pub ks: f64,
}

pub fn parse_measurements(text: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let field = match fields.as_slice() {
            [v] | [_, v] => *v,
            _ => {
                return Err(CliError::Input(format!(
                    "line {}: expected one or two columns, found {}",
                    i + 1,
                    fields.len()
                )))
            }
        };
        let v: f64 = field
            .parse()
            .map_err(|_| CliError::Input(format!("line {}: `{field}` is not a number", i + 1)))?;
        if !v.is_finite() {
            return Err(CliError::Input(format!("line {}: sample is not finite", i + 1)));
        }
        values.push(v);
    }
    Ok(values)
}

pub fn analyze_measurements(samples: &[f64], bins: usize) -> Result<Analysis, CliError> {
    if samples.len() < MIN_SAMPLES {
        return Err(CliError::Input(format!(
            "{} samples; at least {MIN_SAMPLES} are needed",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Input(format!("non-finite sample {bad}")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(CliError::Input(format!("mean signal {mean} must be positive")));
    }
    let normalized: Vec<f64> = samples.iter().map(|v| v / mean).collect();
    let histogram = Histogram::new(&normalized, bins)?;
    if samples.iter().all(|&v| v == samples[0]) {
        return Ok(Analysis {
            samples: samples.len(),
            mean,
            scintillation_index: 0.0,
            histogram,
            fit: NormalFit::new(1.0, f64::MIN_POSITIVE)?,
            ks: 0.0,
        });
    }
    let second = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let scintillation_index = (second / (mean * mean) - 1.0).max(0.0);
    let fit = NormalFit::from_samples(&normalized)?;
    let ks = ks_statistic(&normalized, |x| fit.cdf(x));
    Ok(Analysis {
        samples: samples.len(),
        mean,
        scintillation_index,
        histogram,
        fit,
        ks,
    })
}

impl Analysis {
    pub fn report(&self, input: &str, input_sha256: &str) -> Report {
        let mut r = Report::new("analyze");
        r.meta("input", input);
        r.meta("input_sha256", input_sha256);
        r.section(
            "summary",
            &["samples", "mean", "scintillation_index", "fit_mean", "fit_std_dev", "ks_distance"],
        );
        r.row(vec![
            self.samples.into(),
            self.mean.into(),
            self.scintillation_index.into(),
            self.fit.mean.into(),
            self.fit.std_dev.into(),
            self.ks.into(),
        ]);
        r.section("histogram", &["normalized_signal", "density", "gaussian_fit"]);
        let (m, s) = (self.fit.mean, self.fit.std_dev);
        for (x, &d) in self.histogram.centers().zip(&self.histogram.density) {
            let g = if s > f64::MIN_POSITIVE {
                (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            } else {
                f64::NAN
            };
            r.row(vec![x.into(), d.into(), g.into()]);
        }
        r
    }
}
