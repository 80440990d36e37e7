//! Closed-loop simulation: agents measuring in synchronous epochs, a fusion
//! centre running the Bayes recursion, and a delayed broadcast of the estimate
//! that drives each agent toward its slot in a D-optimal formation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crate::config::GuidanceMode;
use crate::config::ScenarioConfig;
use crate::detect_model::{sample_measurement, DetectionModel};
use crate::estimator::{CentreSet, GridPosterior, MeasurementRecord};
use crate::{pt, Error, Point, Rect, Result};

/// Kinematic state of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Point,
    /// Local copy of the broadcast estimate.
    pub estimate: Point,
    /// Formation offset `r (cos theta_i, sin theta_i)`.
    pub offset: Point,
}

/// `u = -(x - s_hat - d)`.
#[inline]
pub fn control(x: &Point, s_hat: &Point, d: &Point) -> Point {
    -(x - s_hat - d)
}

/// One explicit Euler step `x <- x + u dt`.
pub fn step_dynamics(a: &AgentState, u: &Point, dt: f64) -> Result<AgentState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("integration step must be > 0, got {dt}")));
    }
    Ok(AgentState { position: a.position + u * dt, ..*a })
}

/// Measurement period, broadcast delay and integration step, seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    pub period: f64,
    pub delay: f64,
    pub dt: f64,
}

impl TimingModel {
    /// `dt` defaults to `min(T / 8, tau / 4)` (or `T / 8` with no delay).
    pub fn new(period: f64, delay: f64, dt: Option<f64>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Config(format!("timing.period: must be > 0, got {period}")));
        }
        if !(delay >= 0.0 && delay < period) {
            return Err(Error::Config(format!("timing.delay: need 0 <= delay < period, got {delay}")));
        }
        let cap = if delay > 0.0 { (period / 8.0).min(delay / 4.0) } else { period / 8.0 };
        let dt = dt.unwrap_or(cap);
        if !(dt > 0.0 && dt <= cap) {
            return Err(Error::Config(format!("timing.dt: need 0 < dt <= {cap}, got {dt}")));
        }
        Ok(Self { period, delay, dt })
    }
}

/// Summary of the fused estimate after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: Point,
    pub map: Point,
    pub entropy: f64,
}

impl Estimate {
    pub fn guidance(&self, mode: GuidanceMode) -> Point {
        match mode {
            GuidanceMode::PosteriorMean => self.mean,
            GuidanceMode::MapEstimate => self.map,
        }
    }
}

/// What the fusion centre runs on incoming readings.
pub trait Fusion {
    fn assimilate(&mut self, rec: &MeasurementRecord) -> Result<()>;

    /// Called once all readings of an epoch are in.
    fn end_epoch(&mut self) -> Result<()> {
        Ok(())
    }

    fn estimate(&self) -> Estimate;

    /// Posterior log-weights, for backends that keep them.
    fn log_weights(&self) -> Option<&[f64]> {
        None
    }
}

/// The discretised Bayesian estimator as a fusion backend.
#[derive(Debug, Clone)]
pub struct GridFusion<'a> {
    pub posterior: GridPosterior,
    centres: &'a CentreSet,
    model: &'a DetectionModel,
}

impl<'a> GridFusion<'a> {
    pub fn new(posterior: GridPosterior, centres: &'a CentreSet, model: &'a DetectionModel) -> Self {
        Self { posterior, centres, model }
    }
}

impl Fusion for GridFusion<'_> {
    fn assimilate(&mut self, rec: &MeasurementRecord) -> Result<()> {
        self.posterior.update(rec, self.centres, self.model)
    }

    fn estimate(&self) -> Estimate {
        summarise(self.posterior.log_weights(), self.centres.centres())
    }

    fn log_weights(&self) -> Option<&[f64]> {
        Some(self.posterior.log_weights())
    }
}

/// Mean, first maximiser and entropy of normalised log-weights.
pub(crate) fn summarise(log_weights: &[f64], points: &[Point]) -> Estimate {
    let mut mean = Point::zeros();
    let mut h = 0.0;
    let mut best = 0;
    for (i, (&lw, c)) in log_weights.iter().zip(points).enumerate() {
        let w = lw.exp();
        mean += c * w;
        if w > 0.0 {
            h -= w * lw;
        }
        if lw > log_weights[best] {
            best = i;
        }
    }
    Estimate { mean, map: points[best], entropy: h }
}

/// One fusion epoch as seen after its readings are absorbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Readings absorbed so far.
    pub k: usize,
    /// Measurement time of the epoch, s.
    pub t: f64,
    pub mean: Point,
    pub map: Point,
    pub entropy: f64,
    /// `||mean - s||`, m.
    pub error: f64,
    /// Epoch whose broadcast the agents were steering by when measuring.
    pub guidance_epoch: Option<usize>,
}

/// One reading in fusion-centre arrival order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRow {
    pub k: usize,
    pub t: f64,
    pub agent: usize,
    pub location: Point,
    pub reading: bool,
}

/// A broadcast reaching the agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastRecord {
    pub epoch: usize,
    /// Arrival time at the agents, s.
    pub t: f64,
    pub value: Point,
}

/// Everything recorded during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub source: Point,
    pub radius: f64,
    pub epochs: Vec<EpochRecord>,
    pub measurements: Vec<MeasurementRow>,
    pub broadcasts: Vec<BroadcastRecord>,
    pub final_agents: Vec<AgentState>,
    /// Final posterior log-weights (empty for backends without a grid).
    pub final_log_weights: Vec<f64>,
}

impl SimTrace {
    /// Error after the last epoch that had absorbed at most `k` readings.
    pub fn error_at(&self, k: usize) -> Option<f64> {
        self.epochs.iter().take_while(|e| e.k <= k).last().map(|e| e.error)
    }

    pub fn final_epoch(&self) -> &EpochRecord {
        self.epochs.last().expect("a run has at least one epoch")
    }
}

/// Per-trial random stream: `master` picks the generator, `trial` the stream.
pub fn trial_rng(master: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng
}

/// The estimate fed to the control law.
pub fn guidance_mode(cfg: &ScenarioConfig) -> GuidanceMode {
    cfg.control.guidance
}

/// A scenario with every derived quantity resolved, ready to run many times.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub search: Rect,
    pub centres: CentreSet,
    pub true_model: DetectionModel,
    pub assumed_model: DetectionModel,
    pub prior: GridPosterior,
    pub initial: Vec<Point>,
    pub offsets: Vec<Point>,
    pub radius: f64,
    pub timing: TimingModel,
    pub control_enabled: bool,
    pub guidance: GuidanceMode,
    pub measurements: usize,
    pub source: Option<Point>,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let centres = cfg.centres()?;
        let radius = cfg.radius()?;
        let offsets = cfg.angles().iter().map(|t| pt(radius * t.cos(), radius * t.sin())).collect();
        Ok(Self {
            search: cfg.search_region()?,
            prior: GridPosterior::from_log_weights(&cfg.prior_log_weights(&centres))?,
            centres,
            true_model: cfg.true_model()?,
            assumed_model: cfg.assumed_model()?,
            initial: cfg.initial_positions()?,
            offsets,
            radius,
            timing: TimingModel::new(cfg.timing.period, cfg.timing.delay, cfg.timing.dt)?,
            control_enabled: cfg.control.enabled,
            guidance: cfg.control.guidance,
            measurements: cfg.simulation.measurements,
            source: cfg.simulation.source.map(|s| pt(s[0], s[1])),
        })
    }

    pub fn agent_count(&self) -> usize {
        self.initial.len()
    }

    /// Agents steer by the prior mean until the first broadcast arrives.
    pub fn prior_mean(&self) -> Point {
        summarise(self.prior.log_weights(), self.centres.centres()).mean
    }

    /// The configured source, or a uniform draw over the search region.
    pub fn draw_source<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.source.unwrap_or_else(|| self.search.sample(rng))
    }

    /// One run with the grid estimator; the source is drawn first from `rng`.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimTrace> {
        let source = self.draw_source(rng);
        let mut fusion = GridFusion::new(self.prior.clone(), &self.centres, &self.assumed_model);
        self.run_with(source, rng, &mut fusion)
    }

    fn advance(&self, agents: &mut [AgentState], from: f64, to: f64) {
        let span = to - from;
        if !self.control_enabled || span <= 0.0 {
            return;
        }
        let steps = ((span / self.timing.dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for a in agents.iter_mut() {
            for _ in 0..steps {
                a.position += control(&a.position, &a.estimate, &a.offset) * h;
            }
        }
    }

    /// The event loop. Epoch `e` is measured at `e T`; its readings are fused in
    /// agent order and the resulting estimate reaches every agent at `e T + tau`.
    pub fn run_with<F: Fusion, R: Rng + ?Sized>(&self, source: Point, rng: &mut R, fusion: &mut F) -> Result<SimTrace> {
        let n = self.agent_count();
        let start = self.prior_mean();
        let mut agents: Vec<AgentState> = self
            .initial
            .iter()
            .zip(&self.offsets)
            .map(|(x, d)| AgentState { position: *x, estimate: start, offset: *d })
            .collect();
        let n_epochs = self.measurements.div_ceil(n);
        let mut epochs = Vec::with_capacity(n_epochs);
        let mut rows = Vec::with_capacity(self.measurements);
        let mut broadcasts = Vec::with_capacity(n_epochs);
        let mut guidance_epoch = None;
        let mut t = 0.0;
        let mut k = 0;
        for e in 0..n_epochs {
            let te = e as f64 * self.timing.period;
            self.advance(&mut agents, t, te);
            t = te;
            for (i, a) in agents.iter().enumerate().take((self.measurements - k).min(n)) {
                let reading = sample_measurement(rng, &source, &a.position, &self.true_model)?;
                let rec = MeasurementRecord { location: a.position, reading, time: te, agent_id: i };
                fusion.assimilate(&rec)?;
                rows.push(MeasurementRow { k: k + 1, t: te, agent: i, location: a.position, reading });
                k += 1;
            }
            fusion.end_epoch()?;
            let est = fusion.estimate();
            epochs.push(EpochRecord {
                epoch: e,
                k,
                t: te,
                mean: est.mean,
                map: est.map,
                entropy: est.entropy,
                error: (est.mean - source).norm(),
                guidance_epoch,
            });
            let arrival = te + self.timing.delay;
            self.advance(&mut agents, t, arrival);
            t = arrival;
            let value = est.guidance(self.guidance);
            for a in agents.iter_mut() {
                a.estimate = value;
            }
            guidance_epoch = Some(e);
            broadcasts.push(BroadcastRecord { epoch: e, t: arrival, value });
        }
        Ok(SimTrace {
            source,
            radius: self.radius,
            epochs,
            measurements: rows,
            broadcasts,
            final_agents: agents,
            final_log_weights: fusion.log_weights().map(<[f64]>::to_vec).unwrap_or_default(),
        })
    }
}

/// Resolves `cfg` and runs it once on stream 0 of `seed`.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<SimTrace> {
    Scenario::from_config(cfg)?.run(&mut trial_rng(seed, 0))
}
