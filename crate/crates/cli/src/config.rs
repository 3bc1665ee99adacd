//! Flat `key = value unit` scenario files.
//!
//! Every line holds one assignment; `#` starts a comment. Dimensioned values
//! must carry a unit. Keys that are absent keep their reference values.

use std::collections::HashSet;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;
use uvturb_core::atmosphere::{AtmosphereModel, ScatteringParams, TurbulenceOpticalParams};
use uvturb_core::engine::{PdfMode, PdfSettings, RunSettings, Scenario};
use uvturb_core::geometry::GeometryConfig;
use uvturb_core::sampler::DEFAULT_CDF_RESOLUTION;
use uvturb_core::turbulence::{FadingFamily, LnConvention, TurbulenceModel};
use uvturb_core::ChannelError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: `{key}` is set more than once")]
    Duplicate { line: usize, key: String },

    #[error("invalid scenario: {0}")]
    Invalid(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Length,
    Angle,
    Area,
    InvLength,
    Cn2,
    Number,
    Count,
    Flag,
    Word,
}

const LENGTH_UNITS: &[(&str, f64)] = &[("m", 1.0), ("km", 1e3), ("mm", 1e-3), ("um", 1e-6), ("nm", 1e-9)];
const ANGLE_UNITS: &[(&str, f64)] = &[("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)];
const AREA_UNITS: &[(&str, f64)] = &[("m2", 1.0), ("cm2", 1e-4), ("mm2", 1e-6)];
const INV_LENGTH_UNITS: &[(&str, f64)] = &[("per_m", 1.0), ("per_km", 1e-3)];
const CN2_UNITS: &[(&str, f64)] = &[("m^-2/3", 1.0)];

impl Kind {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Kind::Length => LENGTH_UNITS,
            Kind::Angle => ANGLE_UNITS,
            Kind::Area => AREA_UNITS,
            Kind::InvLength => INV_LENGTH_UNITS,
            Kind::Cn2 => CN2_UNITS,
            _ => &[],
        }
    }
}

const KEYS: &[(&str, Kind)] = &[
    ("baseline", Kind::Length),
    ("tx_zenith", Kind::Angle),
    ("tx_azimuth", Kind::Angle),
    ("rx_zenith", Kind::Angle),
    ("rx_azimuth", Kind::Angle),
    ("tx_divergence", Kind::Angle),
    ("rx_fov", Kind::Angle),
    ("aperture_area", Kind::Area),
    ("k_a_par", Kind::InvLength),
    ("k_s_ray", Kind::InvLength),
    ("k_s_mie", Kind::InvLength),
    ("rayleigh_gamma", Kind::Number),
    ("mie_g", Kind::Number),
    ("mie_f", Kind::Number),
    ("include_turbulence_scattering", Kind::Flag),
    ("cn2", Kind::Cn2),
    ("outer_scale", Kind::Length),
    ("eddy_size", Kind::Length),
    ("wavelength", Kind::Length),
    ("regime", Kind::Word),
    ("ln_convention", Kind::Word),
    ("samples", Kind::Count),
    ("orders", Kind::Count),
    ("seed", Kind::Count),
    ("workers", Kind::Count),
    ("eta_max", Kind::Number),
    ("eta_points", Kind::Count),
    ("pdf_mode", Kind::Word),
    ("pdf_bins", Kind::Count),
    ("cdf_resolution", Kind::Count),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Auto,
    LogNormal,
    GammaGamma,
    Hybrid,
}

impl Regime {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Self::Auto),
            "ln" => Some(Self::LogNormal),
            "gg" => Some(Self::GammaGamma),
            "hybrid" => Some(Self::Hybrid),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::LogNormal => "ln",
            Self::GammaGamma => "gg",
            Self::Hybrid => "hybrid",
        }
    }

    pub fn family(self) -> FadingFamily {
        match self {
            Self::Auto => FadingFamily::Auto,
            Self::LogNormal => FadingFamily::LogNormal,
            Self::GammaGamma => FadingFamily::GammaGamma,
            Self::Hybrid => FadingFamily::Hybrid,
        }
    }
}

/// A complete scenario with all quantities in SI units and radians.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub baseline: f64,
    pub tx_zenith: f64,
    pub tx_azimuth: f64,
    pub rx_zenith: f64,
    pub rx_azimuth: f64,
    pub tx_divergence: f64,
    pub rx_fov: f64,
    pub aperture_area: f64,
    pub k_a_par: f64,
    pub k_s_ray: f64,
    pub k_s_mie: f64,
    pub rayleigh_gamma: f64,
    pub mie_g: f64,
    pub mie_f: f64,
    pub include_turbulence_scattering: bool,
    pub cn2: f64,
    pub outer_scale: f64,
    pub eddy_size: f64,
    pub wavelength: f64,
    pub regime: Regime,
    pub ln_convention: LnConvention,
    pub samples: u64,
    pub orders: u64,
    pub seed: u64,
    pub workers: u64,
    pub eta_max: f64,
    pub eta_points: u64,
    pub pdf_mode: PdfMode,
    pub cdf_resolution: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let g = GeometryConfig::reference();
        Self {
            baseline: g.baseline,
            tx_zenith: g.tx_zenith,
            tx_azimuth: g.tx_azimuth,
            rx_zenith: g.rx_zenith,
            rx_azimuth: g.rx_azimuth,
            tx_divergence: g.tx_divergence,
            rx_fov: g.rx_fov,
            aperture_area: g.aperture_area,
            k_a_par: 0.802e-3,
            k_s_ray: 0.266e-3,
            k_s_mie: 0.284e-3,
            rayleigh_gamma: 0.017,
            mie_g: 0.72,
            mie_f: 0.5,
            include_turbulence_scattering: false,
            cn2: 1e-15,
            outer_scale: 100.0,
            eddy_size: 1e-3,
            wavelength: 260e-9,
            regime: Regime::Auto,
            ln_convention: LnConvention::MomentMatched,
            samples: 1_000_000,
            orders: 3,
            seed: 1,
            workers: 1,
            eta_max: 4.0,
            eta_points: 4096,
            pdf_mode: PdfMode::Histogram { bins: 512 },
            cdf_resolution: DEFAULT_CDF_RESOLUTION as u64,
        }
    }
}

enum Value<'a> {
    Real(f64),
    Count(u64),
    Flag(bool),
    Word(&'a str),
}

fn parse_value<'a>(kind: Kind, rest: &'a str) -> Result<Value<'a>, String> {
    let mut parts = rest.split_whitespace();
    let number = parts.next().ok_or("missing value")?;
    let unit = parts.next();
    if let Some(extra) = parts.next() {
        return Err(format!("unexpected trailing `{extra}`"));
    }
    let no_unit = |v| match unit {
        Some(u) => Err(format!("`{u}`: this key takes no unit")),
        None => Ok(v),
    };
    match kind {
        Kind::Number => no_unit(Value::Real(parse_real(number)?)),
        Kind::Count => {
            let n = number.replace('_', "");
            let v = n.parse::<u64>().map_err(|_| format!("`{number}` is not a non-negative integer"))?;
            no_unit(Value::Count(v))
        }
        Kind::Flag => match number {
            "true" => no_unit(Value::Flag(true)),
            "false" => no_unit(Value::Flag(false)),
            _ => Err(format!("`{number}` is not true or false")),
        },
        Kind::Word => no_unit(Value::Word(number)),
        dimensioned => {
            let units = dimensioned.units();
            let names = || units.iter().map(|u| u.0).collect::<Vec<_>>().join(", ");
            let unit = unit.ok_or_else(|| format!("missing unit (one of {})", names()))?;
            let scale = units
                .iter()
                .find(|u| u.0 == unit)
                .map(|u| u.1)
                .ok_or_else(|| format!("unknown unit `{unit}` (one of {})", names()))?;
            let v = parse_real(number)?;
            // exact for the canonical unit, so a serialized file reparses identically
            Ok(Value::Real(if scale == 1.0 { v } else { v * scale }))
        }
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

impl ScenarioConfig {
    /// Parses a scenario file. Absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let mut pdf_mode = "histogram".to_string();
        let mut pdf_bins = match cfg.pdf_mode {
            PdfMode::Histogram { bins } => bins as u64,
            PdfMode::Exact => 512,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |msg: String| ConfigError::Syntax { line, msg };
            let (key, rest) = content
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, found `{content}`")))?;
            let key = key.trim();
            let kind = KEYS
                .iter()
                .find(|k| k.0 == key)
                .map(|k| k.1)
                .ok_or_else(|| ConfigError::UnknownKey { line, key: key.into() })?;
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate { line, key: key.into() });
            }
            let value = parse_value(kind, rest).map_err(|m| syntax(format!("{key}: {m}")))?;
            match (key, value) {
                ("regime", Value::Word(w)) => {
                    cfg.regime = Regime::parse(w)
                        .ok_or_else(|| syntax(format!("regime: `{w}` is not one of auto, ln, gg, hybrid")))?;
                }
                ("ln_convention", Value::Word(w)) => {
                    cfg.ln_convention = match w {
                        "moment" => LnConvention::MomentMatched,
                        "literal" => LnConvention::Literal,
                        _ => return Err(syntax(format!("ln_convention: `{w}` is not moment or literal"))),
                    };
                }
                ("pdf_mode", Value::Word(w)) => {
                    if w != "histogram" && w != "exact" {
                        return Err(syntax(format!("pdf_mode: `{w}` is not histogram or exact")));
                    }
                    pdf_mode = w.to_string();
                }
                ("include_turbulence_scattering", Value::Flag(b)) => cfg.include_turbulence_scattering = b,
                ("pdf_bins", Value::Count(n)) => pdf_bins = n,
                (key, Value::Count(n)) => *cfg.count_mut(key) = n,
                (key, Value::Real(v)) => *cfg.real_mut(key) = v,
                _ => unreachable!("value kind matches key table"),
            }
        }
        cfg.pdf_mode = if pdf_mode == "exact" {
            PdfMode::Exact
        } else {
            PdfMode::Histogram { bins: pdf_bins as usize }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn real_mut(&mut self, key: &str) -> &mut f64 {
        match key {
            "baseline" => &mut self.baseline,
            "tx_zenith" => &mut self.tx_zenith,
            "tx_azimuth" => &mut self.tx_azimuth,
            "rx_zenith" => &mut self.rx_zenith,
            "rx_azimuth" => &mut self.rx_azimuth,
            "tx_divergence" => &mut self.tx_divergence,
            "rx_fov" => &mut self.rx_fov,
            "aperture_area" => &mut self.aperture_area,
            "k_a_par" => &mut self.k_a_par,
            "k_s_ray" => &mut self.k_s_ray,
            "k_s_mie" => &mut self.k_s_mie,
            "rayleigh_gamma" => &mut self.rayleigh_gamma,
            "mie_g" => &mut self.mie_g,
            "mie_f" => &mut self.mie_f,
            "cn2" => &mut self.cn2,
            "outer_scale" => &mut self.outer_scale,
            "eddy_size" => &mut self.eddy_size,
            "wavelength" => &mut self.wavelength,
            "eta_max" => &mut self.eta_max,
            _ => unreachable!("`{key}` is not a real-valued key"),
        }
    }

    fn count_mut(&mut self, key: &str) -> &mut u64 {
        match key {
            "samples" => &mut self.samples,
            "orders" => &mut self.orders,
            "seed" => &mut self.seed,
            "workers" => &mut self.workers,
            "eta_points" => &mut self.eta_points,
            "cdf_resolution" => &mut self.cdf_resolution,
            _ => unreachable!("`{key}` is not an integer key"),
        }
    }

    /// Checks every physical and run parameter.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario()?;
        self.run_settings()?;
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, ChannelError> {
        let geometry = GeometryConfig {
            baseline: self.baseline,
            tx_zenith: self.tx_zenith,
            tx_azimuth: self.tx_azimuth,
            rx_zenith: self.rx_zenith,
            rx_azimuth: self.rx_azimuth,
            tx_divergence: self.tx_divergence,
            rx_fov: self.rx_fov,
            aperture_area: self.aperture_area,
        };
        geometry.validate()?;
        let optical = TurbulenceOpticalParams::new(self.eddy_size, self.outer_scale, self.cn2, self.wavelength)?;
        let scattering = ScatteringParams::new(self.rayleigh_gamma, self.mie_g, self.mie_f)?;
        let mut atmosphere = AtmosphereModel::new(self.k_s_ray, self.k_s_mie, self.k_a_par, scattering)?;
        if self.include_turbulence_scattering {
            atmosphere = atmosphere.with_turbulence_scattering(optical);
            atmosphere.validate()?;
        }
        let turbulence = TurbulenceModel::new(optical, self.regime.family())?.with_ln_convention(self.ln_convention);
        Ok(Scenario {
            geometry,
            atmosphere,
            turbulence,
        })
    }

    pub fn run_settings(&self) -> Result<RunSettings, ChannelError> {
        let settings = RunSettings {
            samples: self.samples,
            orders: self.orders as usize,
            seed: self.seed,
            workers: self.workers as usize,
            cdf_resolution: self.cdf_resolution as usize,
            pdf: PdfSettings {
                eta_max: self.eta_max,
                eta_points: self.eta_points as usize,
                mode: self.pdf_mode,
            },
        };
        settings.validate()?;
        Ok(settings)
    }

    /// Canonical form: every key, SI units, shortest round-trip numbers.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        let mut real = |k: &str, v: f64, unit: &str| {
            if unit.is_empty() {
                writeln!(out, "{k} = {v:?}").unwrap();
            } else {
                writeln!(out, "{k} = {v:?} {unit}").unwrap();
            }
        };
        real("baseline", self.baseline, "m");
        real("tx_zenith", self.tx_zenith, "rad");
        real("tx_azimuth", self.tx_azimuth, "rad");
        real("rx_zenith", self.rx_zenith, "rad");
        real("rx_azimuth", self.rx_azimuth, "rad");
        real("tx_divergence", self.tx_divergence, "rad");
        real("rx_fov", self.rx_fov, "rad");
        real("aperture_area", self.aperture_area, "m2");
        real("k_a_par", self.k_a_par, "per_m");
        real("k_s_ray", self.k_s_ray, "per_m");
        real("k_s_mie", self.k_s_mie, "per_m");
        real("rayleigh_gamma", self.rayleigh_gamma, "");
        real("mie_g", self.mie_g, "");
        real("mie_f", self.mie_f, "");
        real("cn2", self.cn2, "m^-2/3");
        real("outer_scale", self.outer_scale, "m");
        real("eddy_size", self.eddy_size, "m");
        real("wavelength", self.wavelength, "m");
        real("eta_max", self.eta_max, "");
        let (mode, bins) = match self.pdf_mode {
            PdfMode::Histogram { bins } => ("histogram", bins),
            PdfMode::Exact => ("exact", 0),
        };
        let convention = match self.ln_convention {
            LnConvention::MomentMatched => "moment",
            LnConvention::Literal => "literal",
        };
        let _ = writeln!(out, "include_turbulence_scattering = {}", self.include_turbulence_scattering);
        let _ = writeln!(out, "regime = {}", self.regime.name());
        let _ = writeln!(out, "ln_convention = {convention}");
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "orders = {}", self.orders);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "eta_points = {}", self.eta_points);
        let _ = writeln!(out, "pdf_mode = {mode}");
        if bins > 0 {
            let _ = writeln!(out, "pdf_bins = {bins}");
        }
        let _ = writeln!(out, "cdf_resolution = {}", self.cdf_resolution);
        out
    }

    /// Hex SHA-256 of the canonical form.
    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_canonical_string().as_bytes()))
    }
}
