//! Experiment configuration: flat `key = value` text.
//!
//! ```text
//! # tilted double well, two temperatures
//! potential = tilted_quartic
//! gamma = 1
//! nu = 1
//! h = 0.2, 0.1
//! pipelines = wkb, spectra
//! resolution.nx = 97
//! ```
//!
//! Blank lines and `#` comments are ignored. Every key is typed; unknown
//! keys, duplicates and malformed values are errors naming the field.
//! Defaults are filled in and reported by [`ExperimentConfig::echo`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::potential::{Potential, PRESETS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown field `{field}`")]
    UnknownField { line: usize, field: String },
    #[error("line {line}: field `{field}` given twice")]
    Duplicate { line: usize, field: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Wkb,
    Spectra,
    Hypo,
    Sde,
    Quasimode,
}

impl Pipeline {
    pub const ALL: [Pipeline; 5] =
        [Pipeline::Wkb, Pipeline::Spectra, Pipeline::Hypo, Pipeline::Sde, Pipeline::Quasimode];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Wkb => "wkb",
            Pipeline::Spectra => "spectra",
            Pipeline::Hypo => "hypo",
            Pipeline::Sde => "sde",
            Pipeline::Quasimode => "quasimode",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Either a named preset or explicit quartic coefficients
/// `a x⁴ + b x³ + c x² + e x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    Preset(String),
    Quartic([f64; 4]),
}

impl PotentialSpec {
    pub fn build(&self) -> Potential {
        match self {
            PotentialSpec::Preset(name) => Potential::preset(name).expect("validated preset"),
            PotentialSpec::Quartic([a, b, c, e]) => Potential::quartic(*a, *b, *c, *e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    /// `None` keeps the per-pipeline default.
    pub nx: Option<usize>,
    pub nv: Option<usize>,
    pub ny: Option<usize>,
    pub l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdeSettings {
    pub dt: f64,
    pub transitions: usize,
    /// Per-trajectory time budget, model time units.
    pub horizon: f64,
    pub trajectories: usize,
    /// Length of each equilibrium trajectory, model time units.
    pub equilibrium_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub gamma: f64,
    pub nu: f64,
    /// Semiclassical parameters, strictly decreasing.
    pub h: Vec<f64>,
    pub pipelines: Vec<Pipeline>,
    pub seed: u64,
    pub out: PathBuf,
    pub resolution: Resolution,
    pub krylov_dim: usize,
    pub tol: f64,
    pub sde: SdeSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::Preset("tilted_quartic".into()),
            gamma: 1.0,
            nu: 1.0,
            h: vec![0.2, 0.1],
            pipelines: Pipeline::ALL.to_vec(),
            seed: 0,
            out: PathBuf::from("results"),
            resolution: Resolution { nx: None, nv: None, ny: None, l: None },
            krylov_dim: 40,
            tol: 1e-8,
            sde: SdeSettings {
                dt: 0.01,
                transitions: 2000,
                horizon: 1e4,
                trajectories: 32,
                equilibrium_time: 2000.0,
            },
        }
    }
}

/// Recognised keys, in echo order.
pub const FIELDS: &[&str] = &[
    "potential",
    "gamma",
    "nu",
    "h",
    "pipelines",
    "seed",
    "out",
    "resolution.nx",
    "resolution.nv",
    "resolution.ny",
    "resolution.l",
    "spectra.krylov_dim",
    "spectra.tol",
    "sde.dt",
    "sde.transitions",
    "sde.horizon",
    "sde.trajectories",
    "sde.equilibrium_time",
];

fn parse_f64(field: &str, s: &str) -> Result<f64, ConfigError> {
    let x: f64 = s.parse().map_err(|_| invalid(field, format!("`{s}` is not a number")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(field, format!("`{s}` is not finite")))
    }
}

fn parse_positive(field: &str, s: &str) -> Result<f64, ConfigError> {
    let x = parse_f64(field, s)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(field, format!("{x} must be positive")))
    }
}

fn parse_count(field: &str, s: &str, min: usize) -> Result<usize, ConfigError> {
    let n: usize = s.parse().map_err(|_| invalid(field, format!("`{s}` is not a non-negative integer")))?;
    if n < min {
        return Err(invalid(field, format!("{n} is below the minimum {min}")));
    }
    Ok(n)
}

fn list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect()
}

fn parse_potential(s: &str) -> Result<PotentialSpec, ConfigError> {
    if let Some(inner) = s.strip_prefix("quartic(").and_then(|r| r.strip_suffix(')')) {
        let c: Vec<f64> = list(inner)
            .into_iter()
            .map(|t| parse_f64("potential", t))
            .collect::<Result<_, _>>()?;
        let c: [f64; 4] = c
            .try_into()
            .map_err(|_| invalid("potential", "quartic(...) takes four coefficients a, b, c, e"))?;
        if !(c[0] > 0.0) {
            return Err(invalid("potential", "the quartic coefficient must be positive (confining)"));
        }
        return Ok(PotentialSpec::Quartic(c));
    }
    if PRESETS.contains(&s) {
        Ok(PotentialSpec::Preset(s.to_string()))
    } else {
        Err(invalid("potential", format!("unknown preset `{s}` (known: {})", PRESETS.join(", "))))
    }
}

impl ExperimentConfig {
    /// Parse configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: body.to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line, text: body.to_string() });
            }
            if !FIELDS.contains(&key) {
                return Err(ConfigError::UnknownField { line, field: key.to_string() });
            }
            if seen.insert(key.to_string(), line).is_some() {
                return Err(ConfigError::Duplicate { line, field: key.to_string() });
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "potential" => self.potential = parse_potential(value)?,
            "gamma" => self.gamma = parse_positive(key, value)?,
            "nu" => self.nu = parse_positive(key, value)?,
            "h" => {
                self.h = list(value)
                    .into_iter()
                    .map(|t| parse_positive(key, t))
                    .collect::<Result<_, _>>()?
            }
            "pipelines" => {
                self.pipelines = list(value)
                    .into_iter()
                    .map(|t| Pipeline::parse(t).ok_or_else(|| invalid(key, format!("unknown pipeline `{t}`"))))
                    .collect::<Result<_, _>>()?
            }
            "seed" => {
                self.seed = value.parse().map_err(|_| invalid(key, format!("`{value}` is not a u64")))?
            }
            "out" => {
                if value.is_empty() {
                    return Err(invalid(key, "empty path"));
                }
                self.out = PathBuf::from(value)
            }
            "resolution.nx" => self.resolution.nx = Some(parse_count(key, value, 5)?),
            "resolution.nv" => self.resolution.nv = Some(parse_count(key, value, 4)?),
            "resolution.ny" => self.resolution.ny = Some(parse_count(key, value, 4)?),
            "resolution.l" => self.resolution.l = Some(parse_positive(key, value)?),
            "spectra.krylov_dim" => self.krylov_dim = parse_count(key, value, 4)?,
            "spectra.tol" => self.tol = parse_positive(key, value)?,
            "sde.dt" => self.sde.dt = parse_positive(key, value)?,
            "sde.transitions" => self.sde.transitions = parse_count(key, value, 2)?,
            "sde.horizon" => self.sde.horizon = parse_positive(key, value)?,
            "sde.trajectories" => self.sde.trajectories = parse_count(key, value, 2)?,
            "sde.equilibrium_time" => self.sde.equilibrium_time = parse_positive(key, value)?,
            _ => unreachable!("key checked against FIELDS"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.h.is_empty() {
            return Err(invalid("h", "at least one value is required"));
        }
        if self.h.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(invalid("h", "values must be positive"));
        }
        if self.h.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("h", "values must be strictly decreasing"));
        }
        if self.pipelines.is_empty() {
            return Err(invalid("pipelines", "at least one pipeline must be selected"));
        }
        let mut sorted = self.pipelines.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.pipelines.len() {
            return Err(invalid("pipelines", "pipelines listed more than once"));
        }
        Ok(())
    }

    pub fn runs(&self, p: Pipeline) -> bool {
        self.pipelines.contains(&p)
    }

    /// Every field with its effective value, in [`FIELDS`] order.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let opt = |x: Option<usize>| x.map_or("default".to_string(), |n| n.to_string());
        let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        FIELDS
            .iter()
            .map(|&k| {
                let v = match k {
                    "potential" => match &self.potential {
                        PotentialSpec::Preset(n) => n.clone(),
                        PotentialSpec::Quartic(c) => format!("quartic({})", join(c)),
                    },
                    "gamma" => self.gamma.to_string(),
                    "nu" => self.nu.to_string(),
                    "h" => join(&self.h),
                    "pipelines" => {
                        self.pipelines.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")
                    }
                    "seed" => self.seed.to_string(),
                    "out" => self.out.display().to_string(),
                    "resolution.nx" => opt(self.resolution.nx),
                    "resolution.nv" => opt(self.resolution.nv),
                    "resolution.ny" => opt(self.resolution.ny),
                    "resolution.l" => self.resolution.l.map_or("default".into(), |l| l.to_string()),
                    "spectra.krylov_dim" => self.krylov_dim.to_string(),
                    "spectra.tol" => self.tol.to_string(),
                    "sde.dt" => self.sde.dt.to_string(),
                    "sde.transitions" => self.sde.transitions.to_string(),
                    "sde.horizon" => self.sde.horizon.to_string(),
                    "sde.trajectories" => self.sde.trajectories.to_string(),
                    "sde.equilibrium_time" => self.sde.equilibrium_time.to_string(),
                    _ => unreachable!(),
                };
                (k, v)
            })
            .collect()
    }

    /// The echo rendered back as configuration text.
    pub fn to_text(&self) -> String {
        self.echo()
            .into_iter()
            .filter(|(_, v)| v != "default")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_full_example() {
        let cfg = ExperimentConfig::parse(
            "# demo\npotential = quartic(0.25, 0, -0.5, 0.1)\n gamma=2\nh = 0.3, 0.2 # two\n\
             pipelines = spectra, sde\nresolution.nx = 65\nsde.dt = 0.005\n",
        )
        .unwrap();
        assert_eq!(cfg.potential, PotentialSpec::Quartic([0.25, 0.0, -0.5, 0.1]));
        assert_eq!(cfg.gamma, 2.0);
        assert_eq!(cfg.h, vec![0.3, 0.2]);
        assert_eq!(cfg.pipelines, vec![Pipeline::Spectra, Pipeline::Sde]);
        assert_eq!(cfg.resolution.nx, Some(65));
        assert_eq!(cfg.sde.dt, 0.005);
        assert_eq!(cfg.nu, 1.0);
    }

    #[test]
    fn empty_pipeline_list_is_rejected() {
        let e = ExperimentConfig::parse("pipelines =\n").unwrap_err();
        assert_eq!(e, invalid("pipelines", "at least one pipeline must be selected"));
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("h = 0.1, 0.2", "h"),
            ("h = -1", "h"),
            ("gamma = x", "gamma"),
            ("potential = nope", "potential"),
            ("potential = quartic(1, 2)", "potential"),
            ("resolution.nx = 3", "resolution.nx"),
            ("pipelines = wkb, wkb", "pipelines"),
            ("sde.transitions = -4", "sde.transitions"),
        ];
        for (text, field) in cases {
            match ExperimentConfig::parse(text) {
                Err(ConfigError::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            ExperimentConfig::parse("seed = 1\nbogus.key = 2"),
            Err(ConfigError::UnknownField { line: 2, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("seed = 1\nseed = 2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(ExperimentConfig::parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn echo_lists_every_field() {
        let cfg = ExperimentConfig::default();
        let echo = cfg.echo();
        assert_eq!(echo.len(), FIELDS.len());
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn round_trips(
            hs in proptest::collection::btree_set(1u32..1000, 1..5),
            gamma in 0.01f64..10.0,
            seed in any::<u64>(),
            mask in 1u8..32,
        ) {
            let mut cfg = ExperimentConfig::default();
            cfg.h = hs.into_iter().rev().map(|k| k as f64 / 1000.0).collect();
            cfg.gamma = gamma;
            cfg.seed = seed;
            cfg.pipelines = Pipeline::ALL.into_iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, p)| p).collect();
            prop_assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }

        #[test]
        fn never_panics(text in "\\PC{0,200}") {
            let _ = ExperimentConfig::parse(&text);
        }
    }
}
