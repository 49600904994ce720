//! INI-style run configuration.
//!
//! ```ini
//! [grid]
//! n = 32
//! l = 6.283185307179586
//!
//! [frank]
//! k1 = 1.0
//! k4 = 0.0
//!
//! [scheme]
//! cfl = 0.5          # or: dt = 0.001
//! scheme = imex_a_split
//! ```
//!
//! Every omitted key takes the value of [`RunConfig::default`]; unknown
//! sections and keys are rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use ini::Ini;
use thiserror::Error;

use crate::frank::FrankConstants;
use crate::grid::{DerivativeMode, Grid};
use crate::initial::{InitialKind, InitialSpec};
use crate::solver::{Scheme, SchemeConfig, TimeStep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for '{key}': {reason}")]
    Validation { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { key: key.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagSettings {
    pub cadence: u64,
    pub radii: Vec<f64>,
    pub center_stride: usize,
    /// Critical-norm ceiling; runs halt once any radius exceeds it.
    pub ceiling: f64,
    /// Plateau width of the local-energy cutoff; defaults to the first radius.
    pub cutoff_width: Option<f64>,
    pub derivatives: DerivativeMode,
}

impl Default for DiagSettings {
    fn default() -> Self {
        Self {
            cadence: 10,
            radii: vec![1.0],
            center_stride: 4,
            ceiling: f64::INFINITY,
            cutoff_width: None,
            derivatives: DerivativeMode::Spectral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Extra snapshots every this many steps; 0 keeps only the first and last.
    pub snapshot_every: u64,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: PathBuf::from("elsim_output"), snapshot_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub l: f64,
    pub frank: FrankConstants,
    pub scheme: SchemeConfig,
    pub director: InitialSpec,
    pub velocity: InitialSpec,
    pub diag: DiagSettings,
    pub output: OutputSettings,
    pub t_end: f64,
    pub max_steps: u64,
    /// Rescale the initial data so its critical norm equals this value.
    pub calibrate: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 32,
            l: 2.0 * PI,
            frank: FrankConstants::default(),
            scheme: SchemeConfig::default(),
            director: InitialSpec {
                kind: InitialKind::PerturbedConstant,
                amplitude: 0.1,
                ..InitialSpec::default()
            },
            velocity: InitialSpec { amplitude: 0.1, seed: 1, ..InitialSpec::default() },
            diag: DiagSettings::default(),
            output: OutputSettings::default(),
            t_end: 0.1,
            max_steps: 1_000_000,
            calibrate: None,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Grid {
        Grid::new(self.n, self.l).expect("validated grid")
    }

    pub fn cutoff_width(&self) -> f64 {
        self.diag.cutoff_width.unwrap_or(self.diag.radii[0])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = Grid::new(self.n, self.l).map_err(|e| invalid("grid", e.to_string()))?;
        self.scheme.validate().map_err(|e| invalid("scheme", e.to_string()))?;
        for (name, spec) in [("director", &self.director), ("velocity", &self.velocity)] {
            spec.validate().map_err(|e| invalid(name, e.to_string()))?;
            if 2 * spec.mode_count as usize >= self.n {
                return Err(invalid(&format!("{name}.modes"), format!("{} modes are not resolved at n = {}", spec.mode_count, self.n)));
            }
        }
        if self.diag.cadence == 0 {
            return Err(invalid("diag.cadence", "must be at least 1"));
        }
        if self.diag.radii.is_empty() {
            return Err(invalid("diag.radii", "at least one radius is required"));
        }
        let cap = grid.max_ball_radius();
        for &r in &self.diag.radii {
            if !(r > 0.0 && r <= cap) {
                return Err(invalid("diag.radii", format!("radius {r} must lie in (0, {cap}]")));
            }
        }
        if self.diag.center_stride == 0 {
            return Err(invalid("diag.center_stride", "must be at least 1"));
        }
        if !(self.diag.ceiling > 0.0) {
            return Err(invalid("diag.ceiling", "must be positive"));
        }
        let w = self.cutoff_width();
        if !(w > 0.0 && w <= self.diag.radii[0]) {
            return Err(invalid("diag.cutoff_width", format!("must lie in (0, {}]", self.diag.radii[0])));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid("run.t_end", "must be finite and non-negative"));
        }
        if let Some(c) = self.calibrate {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(invalid("run.calibrate", "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Parse { line: e.line, message: e.msg.to_string() })?;
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(invalid(key, "keys must appear inside a [section]"));
                }
                continue;
            };
            let entry = sections.entry(name.to_string()).or_default();
            for (k, v) in props.iter() {
                if entry.insert(k.to_string(), v.to_string()).is_some() {
                    return Err(invalid(&format!("{name}.{k}"), "duplicate key"));
                }
            }
        }
        let mut cfg = RunConfig::default();
        let mut k = cfg.frank.as_array();
        for (section, props) in &sections {
            for (key, value) in props {
                cfg.apply(&mut k, section, key, value)?;
            }
        }
        let [k1, k2, k3, k4] = k;
        cfg.frank = FrankConstants::new(k1, k2, k3, k4).map_err(|e| invalid("frank", e.to_string()))?;
        if let (Some(s), Some(_)) = (sections.get("scheme"), sections.get("scheme").and_then(|s| s.get("dt"))) {
            if s.contains_key("cfl") {
                return Err(invalid("scheme.dt", "give either dt or cfl, not both"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, k: &mut [f64; 4], section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let full = format!("{section}.{key}");
        let num = || value.parse::<f64>().map_err(|_| invalid(&full, format!("'{value}' is not a number")));
        let int = || value.parse::<u64>().map_err(|_| invalid(&full, format!("'{value}' is not a non-negative integer")));
        let flag = || match value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(invalid(&full, format!("'{value}' is not a boolean"))),
        };
        let list = || -> Result<Vec<f64>, ConfigError> {
            value
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| invalid(&full, format!("'{value}' is not a list of numbers"))))
                .collect()
        };
        match (section, key) {
            ("grid", "n") => self.n = int()? as usize,
            ("grid", "l") => self.l = num()?,
            ("frank", "k1" | "k2" | "k3" | "k4") => {
                let i = key[1..].parse::<usize>().expect("k1..k4") - 1;
                k[i] = num()?;
            }
            ("scheme", "dt") => self.scheme.time_step = TimeStep::Fixed(num()?),
            ("scheme", "cfl") => self.scheme.time_step = TimeStep::Cfl(num()?),
            ("scheme", "scheme") => self.scheme.scheme = value.parse::<Scheme>().map_err(|e| invalid(&full, e.to_string()))?,
            ("scheme", "renormalize_every") => {
                self.scheme.renormalize_every = u32::try_from(int()?).map_err(|_| invalid(&full, "too large"))?
            }
            ("scheme", "dealias") => self.scheme.dealias = flag()?,
            ("scheme", "check_cfl") => self.scheme.check_cfl = flag()?,
            ("director" | "velocity", _) => {
                let spec = if section == "director" { &mut self.director } else { &mut self.velocity };
                match key {
                    "kind" if section == "director" => {
                        spec.kind = value.parse::<InitialKind>().map_err(|e| invalid(&full, e.to_string()))?
                    }
                    "b" if section == "director" => {
                        let v = list()?;
                        if v.len() != 3 {
                            return Err(invalid(&full, "expected three components"));
                        }
                        spec.b = [v[0], v[1], v[2]];
                    }
                    "amplitude" => spec.amplitude = num()?,
                    "modes" => spec.mode_count = u32::try_from(int()?).map_err(|_| invalid(&full, "too large"))?,
                    "width" => spec.spectral_width = num()?,
                    "seed" => spec.seed = int()?,
                    _ => return Err(invalid(&full, "unknown key")),
                }
            }
            ("diag", "cadence") => self.diag.cadence = int()?,
            ("diag", "radii") => self.diag.radii = list()?,
            ("diag", "center_stride") => self.diag.center_stride = int()? as usize,
            ("diag", "ceiling") => self.diag.ceiling = num()?,
            ("diag", "cutoff_width") => self.diag.cutoff_width = Some(num()?),
            ("diag", "derivatives") => {
                self.diag.derivatives = match value {
                    "spectral" => DerivativeMode::Spectral,
                    "central_difference" => DerivativeMode::CentralDifference,
                    _ => return Err(invalid(&full, "expected 'spectral' or 'central_difference'")),
                }
            }
            ("output", "dir") => self.output.dir = PathBuf::from(value),
            ("output", "snapshot_every") => self.output.snapshot_every = int()?,
            ("run", "t_end") => self.t_end = num()?,
            ("run", "max_steps") => self.max_steps = int()?,
            ("run", "calibrate") => self.calibrate = Some(num()?),
            ("grid" | "frank" | "scheme" | "diag" | "output" | "run", _) => return Err(invalid(&full, "unknown key")),
            _ => return Err(invalid(section, "unknown section")),
        }
        Ok(())
    }

    /// Text form that parses back to an equal configuration.
    pub fn serialize(&self) -> String {
        let k = self.frank.as_array();
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line("[grid]".into());
        line(format!("n = {}", self.n));
        line(format!("l = {:?}", self.l));
        line(String::new());
        line("[frank]".into());
        for (i, v) in k.iter().enumerate() {
            line(format!("k{} = {:?}", i + 1, v));
        }
        line(String::new());
        line("[scheme]".into());
        match self.scheme.time_step {
            TimeStep::Fixed(dt) => line(format!("dt = {dt:?}")),
            TimeStep::Cfl(c) => line(format!("cfl = {c:?}")),
        }
        line(format!("scheme = {}", self.scheme.scheme));
        line(format!("renormalize_every = {}", self.scheme.renormalize_every));
        line(format!("dealias = {}", self.scheme.dealias));
        line(format!("check_cfl = {}", self.scheme.check_cfl));
        for (name, spec) in [("director", &self.director), ("velocity", &self.velocity)] {
            line(String::new());
            line(format!("[{name}]"));
            if name == "director" {
                line(format!("kind = {}", spec.kind));
                line(format!("b = {:?}, {:?}, {:?}", spec.b[0], spec.b[1], spec.b[2]));
            }
            line(format!("amplitude = {:?}", spec.amplitude));
            line(format!("modes = {}", spec.mode_count));
            line(format!("width = {:?}", spec.spectral_width));
            line(format!("seed = {}", spec.seed));
        }
        line(String::new());
        line("[diag]".into());
        line(format!("cadence = {}", self.diag.cadence));
        line(format!("radii = {}", self.diag.radii.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>().join(", ")));
        line(format!("center_stride = {}", self.diag.center_stride));
        line(format!("ceiling = {:?}", self.diag.ceiling));
        if let Some(w) = self.diag.cutoff_width {
            line(format!("cutoff_width = {w:?}"));
        }
        line(format!(
            "derivatives = {}",
            match self.diag.derivatives {
                DerivativeMode::Spectral => "spectral",
                DerivativeMode::CentralDifference => "central_difference",
            }
        ));
        line(String::new());
        line("[output]".into());
        line(format!("dir = {}", self.output.dir.display()));
        line(format!("snapshot_every = {}", self.output.snapshot_every));
        line(String::new());
        line("[run]".into());
        line(format!("t_end = {:?}", self.t_end));
        line(format!("max_steps = {}", self.max_steps));
        if let Some(c) = self.calibrate {
            line(format!("calibrate = {c:?}"));
        }
        out
    }
}
