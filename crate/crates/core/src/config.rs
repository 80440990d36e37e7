//! Scenario files.
//!
//! A scenario is a TOML document with the sections below. Every key is
//! optional; an empty file describes the default scenario (a 75 m square
//! search region, a 30 x 30 grid over a 100 m square, four agents, the
//! Friis/Q-function model with unit powers and areas).
//!
//! ```toml
//! [region]
//! search = [-37.5, 37.5, -37.5, 37.5]   # x_min, x_max, y_min, y_max (m)
//! grid = [-50.0, 50.0, -50.0, 50.0]
//! grid_side = 30                         # M = grid_side^2
//!
//! [agents]
//! count = 4
//! initial = [[-37.5, -37.5], [37.5, -37.5], [-37.5, 37.5], [37.5, 37.5]]
//!
//! [model]                                # readings are drawn from this model
//! kind = "friis_q"                       # friis_q | gaussian | logistic | constant | tabulated
//! p_t = 1.0
//!
//! [envelope]                             # optional; the estimator uses it instead of [model]
//! kind = "friis_q"
//! p_t = 5.0
//!
//! [timing]
//! period = 0.04                          # T (s)
//! delay = 0.02                           # tau (s), round trip
//! # dt = 0.005                           # Euler step (s)
//!
//! [control]
//! enabled = true
//! guidance = "posterior_mean"            # posterior_mean | map_estimate
//! # radius = 7.35                        # default: optimal radius over [radius_min, radius_max]
//! radius_min = 1.0
//! radius_max = 30.0
//! # angles = [0.0, 1.5708, 3.1416, 4.7124]
//!
//! [simulation]
//! measurements = 1000
//! # source = [3.0, -4.0]                 # default: uniform over the search region
//!
//! [prior]
//! kind = "uniform"                       # uniform | gaussian
//! # mean = [0.0, 0.0]
//! # std = 10.0
//! ```

use serde::{Deserialize, Serialize};

use crate::detect_model::{AnalyticProfile, DetectionModel, FriisParams, TabulatedProfile};
use crate::estimator::CentreSet;
use crate::fisher_design::{default_angles, optimal_radius};
use crate::{pt, Error, Point, Rect, Result};

fn cfg_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

/// A full scenario description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub region: RegionSection,
    pub agents: AgentsSection,
    pub model: ModelSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<ModelSection>,
    pub timing: TimingSection,
    pub control: ControlSection,
    pub simulation: SimulationSection,
    pub prior: PriorSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSection {
    pub search: [f64; 4],
    pub grid: [f64; 4],
    pub grid_side: usize,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self { search: [-37.5, 37.5, -37.5, 37.5], grid: [-50.0, 50.0, -50.0, 50.0], grid_side: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsSection {
    pub count: usize,
    /// Defaults to an even lattice spanning the search region.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<[f64; 2]>>,
}

impl Default for AgentsSection {
    fn default() -> Self {
        Self { count: 4, initial: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    FriisQ,
    Gaussian,
    Logistic,
    Constant,
    Tabulated,
}

/// Flat parameter list for any detection model; only the keys of `kind` may be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub altitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub near: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub far: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub midpoint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

impl ModelSection {
    pub fn friis(p: &FriisParams) -> Self {
        Self {
            kind: ModelKind::FriisQ,
            a_r: Some(p.a_r),
            a_t: Some(p.a_t),
            p_t: Some(p.p_t),
            wavelength: Some(p.wavelength),
            altitude: Some(p.altitude),
            threshold: Some(p.threshold),
            noise_sigma: Some(p.noise_sigma),
            ..Default::default()
        }
    }

    fn set_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        macro_rules! probe {
            ($($f:ident),*) => { $( if self.$f.is_some() { keys.push(stringify!($f)); } )* };
        }
        probe!(a_r, a_t, p_t, wavelength, altitude, threshold, noise_sigma, floor, peak, width, near, far,
               midpoint, scale, p, distances, probabilities);
        keys
    }

    /// Builds and validates the model; `path` prefixes diagnostics.
    pub fn build(&self, path: &str) -> Result<DetectionModel> {
        let allowed: &[&str] = match self.kind {
            ModelKind::FriisQ => &["a_r", "a_t", "p_t", "wavelength", "altitude", "threshold", "noise_sigma"],
            ModelKind::Gaussian => &["floor", "peak", "width"],
            ModelKind::Logistic => &["near", "far", "midpoint", "scale"],
            ModelKind::Constant => &["p"],
            ModelKind::Tabulated => &["distances", "probabilities"],
        };
        if let Some(k) = self.set_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(cfg_err(&format!("{path}.{k}"), format!("not a parameter of kind {:?}", self.kind)));
        }
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| cfg_err(&format!("{path}.{key}"), "required"));
        let model = match self.kind {
            ModelKind::FriisQ => {
                let d = FriisParams::default();
                DetectionModel::FriisQ(FriisParams {
                    a_r: self.a_r.unwrap_or(d.a_r),
                    a_t: self.a_t.unwrap_or(d.a_t),
                    p_t: self.p_t.unwrap_or(d.p_t),
                    wavelength: self.wavelength.unwrap_or(d.wavelength),
                    altitude: self.altitude.unwrap_or(d.altitude),
                    threshold: self.threshold.unwrap_or(d.threshold),
                    noise_sigma: self.noise_sigma.unwrap_or(d.noise_sigma),
                })
            }
            ModelKind::Gaussian => DetectionModel::GenericRange(AnalyticProfile::Gaussian {
                floor: need(self.floor, "floor")?,
                peak: need(self.peak, "peak")?,
                width: need(self.width, "width")?,
            }),
            ModelKind::Logistic => DetectionModel::GenericRange(AnalyticProfile::Logistic {
                near: need(self.near, "near")?,
                far: need(self.far, "far")?,
                midpoint: need(self.midpoint, "midpoint")?,
                scale: need(self.scale, "scale")?,
            }),
            ModelKind::Constant => DetectionModel::constant(need(self.p, "p")?),
            ModelKind::Tabulated => DetectionModel::Tabulated(TabulatedProfile {
                distances: self.distances.clone().ok_or_else(|| cfg_err(&format!("{path}.distances"), "required"))?,
                probabilities: self
                    .probabilities
                    .clone()
                    .ok_or_else(|| cfg_err(&format!("{path}.probabilities"), "required"))?,
            }),
        };
        model.validate().map_err(|e| cfg_err(path, e))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSection {
    pub period: f64,
    pub delay: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl Default for TimingSection {
    fn default() -> Self {
        Self { period: 0.04, delay: 0.02, dt: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    #[default]
    PosteriorMean,
    MapEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub enabled: bool,
    pub guidance: GuidanceMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub radius_min: f64,
    pub radius_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<Vec<f64>>,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { enabled: true, guidance: GuidanceMode::PosteriorMean, radius: None, radius_min: 1.0, radius_max: 30.0, angles: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Total readings `k_max`; agents measure in epochs of `agents.count`.
    pub measurements: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<[f64; 2]>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { measurements: 1000, source: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    #[default]
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub kind: PriorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

fn rect_of(a: &[f64; 4], path: &str) -> Result<Rect> {
    let r = Rect::new(a[0], a[1], a[2], a[3]);
    if !r.is_valid() {
        return Err(cfg_err(path, "expected [x_min, x_max, y_min, y_max] with x_min < x_max, y_min < y_max"));
    }
    Ok(r)
}

fn finite_positive(v: f64, path: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(path, format!("must be finite and > 0, got {v}")))
    }
}

/// `n` points on an even lattice spanning `r` edge to edge (the corners for
/// four points); a single point sits at the centre.
pub fn even_positions(r: &Rect, n: usize) -> Vec<Point> {
    if n == 0 {
        return Vec::new();
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let coord = |lo: f64, hi: f64, i: usize, m: usize| {
        if m == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (m - 1) as f64
        }
    };
    (0..n)
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            pt(coord(r.x_min, r.x_max, col, cols), coord(r.y_min, r.y_max, row, rows))
        })
        .collect()
}

impl ScenarioConfig {
    /// Parses and validates scenario text.
    pub fn parse_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Serialises to scenario text that parses back to an equal config.
    pub fn emit(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let search = self.search_region()?;
        let grid = self.grid_region()?;
        if !grid.contains_rect(&search) {
            return Err(cfg_err("region.grid", "grid box must contain the search region"));
        }
        if self.region.grid_side == 0 {
            return Err(cfg_err("region.grid_side", "must be >= 1"));
        }
        if self.agents.count == 0 {
            return Err(cfg_err("agents.count", "must be >= 1"));
        }
        if let Some(init) = &self.agents.initial {
            if init.len() != self.agents.count {
                return Err(cfg_err(
                    "agents.initial",
                    format!("{} positions given for {} agents", init.len(), self.agents.count),
                ));
            }
            if init.iter().flatten().any(|v| !v.is_finite()) {
                return Err(cfg_err("agents.initial", "positions must be finite"));
            }
        }
        self.model.build("model")?;
        if let Some(env) = &self.envelope {
            env.build("envelope")?;
        }
        let t = &self.timing;
        finite_positive(t.period, "timing.period")?;
        if !(t.delay >= 0.0 && t.delay.is_finite()) {
            return Err(cfg_err("timing.delay", format!("must be finite and >= 0, got {}", t.delay)));
        }
        if t.delay >= t.period {
            return Err(cfg_err(
                "timing.delay",
                format!("delay {} must be smaller than the measurement period {}", t.delay, t.period),
            ));
        }
        if let Some(dt) = t.dt {
            finite_positive(dt, "timing.dt")?;
        }
        let c = &self.control;
        if let Some(r) = c.radius {
            finite_positive(r, "control.radius")?;
        }
        finite_positive(c.radius_min, "control.radius_min")?;
        if !(c.radius_max >= c.radius_min && c.radius_max.is_finite()) {
            return Err(cfg_err("control.radius_max", "must be finite and >= control.radius_min"));
        }
        if let Some(a) = &c.angles {
            if a.len() != self.agents.count {
                return Err(cfg_err("control.angles", format!("{} angles given for {} agents", a.len(), self.agents.count)));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(cfg_err("control.angles", "angles must be finite"));
            }
        }
        if self.simulation.measurements == 0 {
            return Err(cfg_err("simulation.measurements", "must be >= 1"));
        }
        if let Some(s) = self.simulation.source {
            if !search.contains(&pt(s[0], s[1])) {
                return Err(cfg_err("simulation.source", "source must lie in the search region"));
            }
        }
        match self.prior.kind {
            PriorKind::Uniform => {
                if self.prior.mean.is_some() || self.prior.std.is_some() {
                    return Err(cfg_err("prior", "uniform prior takes no mean or std"));
                }
            }
            PriorKind::Gaussian => {
                let m = self.prior.mean.ok_or_else(|| cfg_err("prior.mean", "required"))?;
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(cfg_err("prior.mean", "must be finite"));
                }
                finite_positive(self.prior.std.ok_or_else(|| cfg_err("prior.std", "required"))?, "prior.std")?;
            }
        }
        Ok(())
    }

    pub fn search_region(&self) -> Result<Rect> {
        rect_of(&self.region.search, "region.search")
    }

    pub fn grid_region(&self) -> Result<Rect> {
        rect_of(&self.region.grid, "region.grid")
    }

    pub fn centres(&self) -> Result<CentreSet> {
        CentreSet::uniform_grid(self.grid_region()?, self.region.grid_side)
    }

    /// The model readings are drawn from.
    pub fn true_model(&self) -> Result<DetectionModel> {
        self.model.build("model")
    }

    /// The model the estimator assumes: the envelope if one is given.
    pub fn assumed_model(&self) -> Result<DetectionModel> {
        match &self.envelope {
            Some(env) => env.build("envelope"),
            None => self.true_model(),
        }
    }

    pub fn initial_positions(&self) -> Result<Vec<Point>> {
        Ok(match &self.agents.initial {
            Some(v) => v.iter().map(|p| pt(p[0], p[1])).collect(),
            None => even_positions(&self.search_region()?, self.agents.count),
        })
    }

    /// Formation radius: configured, or optimal for the assumed model.
    pub fn radius(&self) -> Result<f64> {
        match self.control.radius {
            Some(r) => Ok(r),
            None => optimal_radius(&self.assumed_model()?, self.control.radius_min, self.control.radius_max),
        }
    }

    pub fn angles(&self) -> Vec<f64> {
        self.control.angles.clone().unwrap_or_else(|| default_angles(self.agents.count))
    }

    /// Prior log-weights over [`Self::centres`], unnormalised.
    pub fn prior_log_weights(&self, centres: &CentreSet) -> Vec<f64> {
        match self.prior.kind {
            PriorKind::Uniform => vec![0.0; centres.len()],
            PriorKind::Gaussian => {
                let m = self.prior.mean.unwrap_or([0.0, 0.0]);
                let s = self.prior.std.unwrap_or(1.0);
                centres.centres().iter().map(|c| -(c - pt(m[0], m[1])).norm_squared() / (2.0 * s * s)).collect()
            }
        }
    }
}
