//! Sweep configuration: parsing, defaults, validation and the normalized echo.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::quench::{GridKind, TimeGrid, DEFAULT_HOLE_WINDOW, DEFAULT_SMOOTHING_WINDOW};
use crate::spectrum::DEFAULT_EDGE_DISCARD;

pub const SOFTWARE: &str = "tbh";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    GapRatio,
    Pr,
    Entropy,
    Imbalance,
    Survival,
    EntropyDynamics,
    ImbalanceDynamics,
}

impl Diagnostic {
    pub fn needs_vectors(self) -> bool {
        self != Diagnostic::GapRatio
    }

    pub fn is_dynamical(self) -> bool {
        matches!(self, Diagnostic::Survival | Diagnostic::EntropyDynamics | Diagnostic::ImbalanceDynamics)
    }
}

/// Which parameter a cut holds fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedAxis {
    /// `U` held, tilt varies.
    U,
    /// `D` held, interaction varies.
    D,
    /// Full `U x D` grid.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridConfig {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_grid_kind")]
    pub kind: GridKind,
}

fn default_t_min() -> f64 {
    0.1
}
fn default_t_max() -> f64 {
    1.0e4
}
fn default_points() -> usize {
    400
}
fn default_grid_kind() -> GridKind {
    GridKind::Logarithmic
}

impl Default for TimeGridConfig {
    fn default() -> Self {
        TimeGridConfig { t_min: default_t_min(), t_max: default_t_max(), points: default_points(), kind: default_grid_kind() }
    }
}

impl TimeGridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        match self.kind {
            GridKind::Logarithmic => TimeGrid::logarithmic(self.t_min, self.t_max, self.points),
            GridKind::Linear => TimeGrid::linear(self.t_min, self.t_max, self.points),
            GridKind::Custom => Err(Error::InvalidTimeGrid("custom grids cannot be configured".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default = "default_survival_states")]
    pub survival_states: usize,
    /// 50 for N <= 9 and 20 above when unset.
    #[serde(default)]
    pub entropy_states: Option<usize>,
    /// All qualifying states for N <= 9 and 20 above when unset.
    #[serde(default)]
    pub imbalance_states: Option<usize>,
    #[serde(default = "default_reference_u")]
    pub reference_u: f64,
    #[serde(default = "default_reference_d")]
    pub reference_d: f64,
    #[serde(default = "default_halfwidth")]
    pub window_halfwidth: f64,
    #[serde(default = "default_cap")]
    pub occupation_cap: u32,
    #[serde(default)]
    pub time_grid: TimeGridConfig,
    #[serde(default = "default_smoothing")]
    pub smoothing_window: usize,
    #[serde(default = "default_hole_window")]
    pub hole_window: (f64, f64),
    #[serde(default = "default_central")]
    pub central_window: f64,
    #[serde(default = "default_edge")]
    pub edge_discard: f64,
}

fn default_survival_states() -> usize {
    200
}
fn default_reference_u() -> f64 {
    0.5
}
fn default_reference_d() -> f64 {
    0.8
}
fn default_halfwidth() -> f64 {
    0.4
}
fn default_cap() -> u32 {
    3
}
fn default_smoothing() -> usize {
    DEFAULT_SMOOTHING_WINDOW
}
fn default_hole_window() -> (f64, f64) {
    DEFAULT_HOLE_WINDOW
}
fn default_central() -> f64 {
    0.8
}
fn default_edge() -> f64 {
    DEFAULT_EDGE_DISCARD
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            survival_states: default_survival_states(),
            entropy_states: None,
            imbalance_states: None,
            reference_u: default_reference_u(),
            reference_d: default_reference_d(),
            window_halfwidth: default_halfwidth(),
            occupation_cap: default_cap(),
            time_grid: TimeGridConfig::default(),
            smoothing_window: default_smoothing(),
            hole_window: default_hole_window(),
            central_window: default_central(),
            edge_discard: default_edge(),
        }
    }
}

impl ProtocolConfig {
    pub fn entropy_states_for(&self, n_bosons: usize) -> usize {
        self.entropy_states.unwrap_or(if n_bosons <= 9 { 50 } else { 20 })
    }

    pub fn imbalance_states_for(&self, n_bosons: usize) -> Option<usize> {
        self.imbalance_states.or(if n_bosons <= 9 { None } else { Some(20) })
    }
}

/// A system size `(N, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemSize(pub usize, pub usize);

impl SystemSize {
    pub fn spec(self) -> Result<BasisSpec> {
        BasisSpec::new(self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sizes")]
    pub system_sizes: Vec<SystemSize>,
    /// Hopping amplitude; other energies are divided by it on normalization.
    #[serde(default = "default_hopping")]
    pub hopping: f64,
    pub u_values: Vec<f64>,
    pub d_values: Vec<f64>,
    #[serde(default)]
    pub fixed_axis: Option<FixedAxis>,
    #[serde(default = "default_diagnostics")]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub protocols: ProtocolConfig,
    #[serde(default)]
    pub export_hamiltonian: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub worker_count: usize,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_sizes() -> Vec<SystemSize> {
    vec![SystemSize(8, 8)]
}
fn default_hopping() -> f64 {
    1.0
}
fn default_diagnostics() -> Vec<Diagnostic> {
    vec![Diagnostic::GapRatio]
}
fn default_output() -> PathBuf {
    PathBuf::from("output")
}
fn default_workers() -> usize {
    1
}

fn field(path: &str, message: impl Into<String>) -> Error {
    Error::config(path, message)
}

fn check_values(path: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(field(path, "must not be empty"));
    }
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(field(&format!("{path}[{i}]"), format!("must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

impl SweepConfig {
    /// Parses TOML, or JSON when the path ends in `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let display = path.display().to_string();
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| field(&display, e.to_string()))
        } else {
            Self::from_toml(&text).map_err(|e| match e {
                Error::Config { path, message } if path.is_empty() => field(&display, message),
                other => other,
            })
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| field("", e.to_string()))
    }

    /// Checks every field, fills derived defaults and rescales energies so
    /// that `J = 1`. Idempotent.
    pub fn validate(mut self) -> Result<Self> {
        if !(self.hopping.is_finite() && self.hopping > 0.0) {
            return Err(field("hopping", format!("must be finite and > 0, got {}", self.hopping)));
        }
        check_values("u_values", &self.u_values)?;
        check_values("d_values", &self.d_values)?;
        let p = &mut self.protocols;
        for (name, v) in [("protocols.reference_u", p.reference_u), ("protocols.reference_d", p.reference_d)] {
            if !v.is_finite() || v < 0.0 {
                return Err(field(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        let j = self.hopping;
        if j != 1.0 {
            self.u_values.iter_mut().for_each(|u| *u /= j);
            self.d_values.iter_mut().for_each(|d| *d /= j);
            p.reference_u /= j;
            p.reference_d /= j;
            // Times are measured in units of 1/J.
            self.hopping = 1.0;
        }

        if self.system_sizes.is_empty() {
            return Err(field("system_sizes", "must not be empty"));
        }
        for (i, s) in self.system_sizes.iter().enumerate() {
            s.spec().map_err(|e| field(&format!("system_sizes[{i}]"), e.to_string()))?;
        }
        if self.diagnostics.is_empty() {
            return Err(field("diagnostics", "must name at least one diagnostic"));
        }
        self.diagnostics.sort_unstable();
        self.diagnostics.dedup();

        let axis = match self.fixed_axis {
            Some(a) => a,
            None if self.u_values.len() == 1 && self.d_values.len() > 1 => FixedAxis::U,
            None if self.d_values.len() == 1 && self.u_values.len() > 1 => FixedAxis::D,
            None if self.u_values.len() == 1 => FixedAxis::U,
            None => FixedAxis::None,
        };
        match axis {
            FixedAxis::U if self.u_values.len() != 1 => {
                return Err(field("u_values", "fixed_axis = \"u\" requires exactly one U value"));
            }
            FixedAxis::D if self.d_values.len() != 1 => {
                return Err(field("d_values", "fixed_axis = \"d\" requires exactly one D value"));
            }
            _ => {}
        }
        self.fixed_axis = Some(axis);

        if self.worker_count == 0 {
            return Err(field("worker_count", "must be >= 1"));
        }
        let p = &self.protocols;
        if p.survival_states == 0 {
            return Err(field("protocols.survival_states", "must be >= 1"));
        }
        if p.entropy_states == Some(0) {
            return Err(field("protocols.entropy_states", "must be >= 1"));
        }
        if p.imbalance_states == Some(0) {
            return Err(field("protocols.imbalance_states", "must be >= 1"));
        }
        if !(p.window_halfwidth > 0.0 && p.window_halfwidth.is_finite()) {
            return Err(field("protocols.window_halfwidth", "must be finite and > 0"));
        }
        if p.occupation_cap == 0 {
            return Err(field("protocols.occupation_cap", "must be >= 1"));
        }
        p.time_grid.build().map_err(|e| field("protocols.time_grid", e.to_string()))?;
        if p.smoothing_window == 0 || p.smoothing_window % 2 == 0 {
            return Err(field("protocols.smoothing_window", "must be odd and >= 1"));
        }
        let (a, b) = p.hole_window;
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && a <= b) {
            return Err(field("protocols.hole_window", format!("invalid interval [{a}, {b}]")));
        }
        if !(p.central_window > 0.0 && p.central_window <= 1.0) {
            return Err(field("protocols.central_window", "must lie in (0, 1]"));
        }
        if !(p.edge_discard >= 0.0 && p.edge_discard < 0.5) {
            return Err(field("protocols.edge_discard", "must lie in [0, 0.5)"));
        }
        Ok(self)
    }

    pub fn axis(&self) -> FixedAxis {
        self.fixed_axis.unwrap_or(FixedAxis::None)
    }

    pub fn needs_vectors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.needs_vectors())
    }

    pub fn wants(&self, d: Diagnostic) -> bool {
        self.diagnostics.contains(&d)
    }

    /// Hash of everything that determines the physics. Output location and
    /// worker count are left out so relocated or re-threaded runs agree.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.worker_count = 1;
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// One-line provenance header used in every output file.
    pub fn provenance(&self) -> String {
        format!("{SOFTWARE} {VERSION} config_hash={} rng_seed={}", self.hash(), self.rng_seed)
    }

    /// Writes the normalized config as `config.toml` in the output directory.
    pub fn echo(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| Error::io(&self.output_dir, e))?;
        let path = self.output_dir.join("config.toml");
        let text = format!("# {}\n{}", self.provenance(), self.to_toml());
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Loads, validates and echoes a config file.
pub fn validate_and_echo_config(path: &Path) -> Result<SweepConfig> {
    let cfg = SweepConfig::from_path(path)?.validate()?;
    cfg.echo()?;
    Ok(cfg)
}
