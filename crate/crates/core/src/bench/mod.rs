//! Monte Carlo harness: RMS error curves over many seeded trials, the
//! asymptotic-error table, the SIR comparison and the model-mismatch sweep.

mod sir;

pub use sir::SirFusion;

use rayon::prelude::*;

use crate::config::{GuidanceMode, ModelSection, ScenarioConfig};
use crate::detect_model::{DetectionModel, FriisParams};
use crate::info_geometry::{check_envelope, ENVELOPE_CHECK_SAMPLES};
use crate::sim_engine::{trial_rng, Scenario, SimTrace};
use crate::{Error, Result};

/// Entropy threshold, nats, below which a trial counts as converged.
pub const DEFAULT_ENTROPY_THRESHOLD: f64 = 1.0;
/// Formation radius used with MAP guidance in the mismatch sweep, m.
pub const ENVELOPE_RADIUS: f64 = 2.5;
/// Offsets the SIR resampling streams from the measurement streams.
const SIR_STREAM_SALT: u64 = 0x5349_525f_7265_7331;

/// Which estimator the fusion centre runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Grid,
    /// SIR with this many particles; `None` matches the grid size.
    Sir(Option<usize>),
}

/// A Monte Carlo batch over one or more grid sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Everything except grid size, horizon and controller switch.
    pub scenario: ScenarioConfig,
    /// Grid sides; `M = side^2`.
    pub grids: Vec<usize>,
    pub trials: usize,
    pub k_max: usize,
    pub threshold: f64,
    pub seed: u64,
    pub controller: bool,
    pub backend: Backend,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            grids: vec![10, 20, 30, 40, 50],
            trials: 100,
            k_max: 1000,
            threshold: DEFAULT_ENTROPY_THRESHOLD,
            seed: 0,
            controller: true,
            backend: Backend::Grid,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() || self.grids.contains(&0) {
            return Err(Error::Config("grids: need at least one grid side, all >= 1".into()));
        }
        if self.trials == 0 || self.k_max == 0 {
            return Err(Error::Config("trials and k_max must be >= 1".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be > 0, got {}", self.threshold)));
        }
        Ok(())
    }

    /// The scenario run for grid side `side`.
    pub fn scenario_for(&self, side: usize) -> ScenarioConfig {
        let mut c = self.scenario.clone();
        c.region.grid_side = side;
        c.simulation.measurements = self.k_max;
        c.control.enabled = self.controller;
        c
    }
}

/// What one trial contributes to the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub errors: Vec<f64>,
    pub final_entropy: f64,
}

impl TrialSummary {
    fn from_trace(tr: &SimTrace) -> Self {
        Self { errors: tr.epochs.iter().map(|e| e.error).collect(), final_entropy: tr.final_epoch().entropy }
    }

    pub fn final_error(&self) -> f64 {
        *self.errors.last().expect("non-empty run")
    }
}

/// Aggregate over the trials of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub tag: String,
    pub grid_side: usize,
    /// Grid spacing along x, m.
    pub spacing: f64,
    /// Readings absorbed at each curve point.
    pub ks: Vec<usize>,
    /// RMS error across trials at each curve point, m.
    pub rms: Vec<f64>,
    pub trials: Vec<TrialSummary>,
}

impl CellResult {
    /// RMS error after the last epoch with at most `k` readings.
    pub fn rms_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().rposition(|&kk| kk <= k).map(|i| self.rms[i])
    }

    pub fn final_rms(&self) -> f64 {
        *self.rms.last().expect("non-empty curve")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub cells: Vec<CellResult>,
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n as f64).sqrt()
}

/// Runs `trials` seeded trials of `scenario` and aggregates them.
///
/// Trial `t` draws its source and readings from stream `t` of `seed`, so the
/// same trial index sees the same source in every configuration.
pub fn run_cell(
    scenario: &Scenario,
    tag: &str,
    trials: usize,
    seed: u64,
    backend: Backend,
) -> Result<CellResult> {
    let summaries = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let trace = match backend {
                Backend::Grid => scenario.run(&mut rng)?,
                Backend::Sir(p) => {
                    let particles = p.unwrap_or(scenario.centres.len());
                    sir_trial(scenario, particles, &mut rng, trial_rng(seed ^ SIR_STREAM_SALT, t as u64))?
                }
            };
            Ok(TrialSummary::from_trace(&trace))
        })
        .collect::<Result<Vec<_>>>()?;
    let ks: Vec<usize> = {
        let n = scenario.agent_count();
        (1..=scenario.measurements.div_ceil(n)).map(|e| (e * n).min(scenario.measurements)).collect()
    };
    let rms_curve = (0..ks.len()).map(|e| rms(summaries.iter().map(|s| s.errors[e]))).collect();
    let side = (scenario.centres.len() as f64).sqrt().round() as usize;
    Ok(CellResult {
        tag: tag.to_string(),
        grid_side: side,
        spacing: scenario.centres.region().width() / side as f64,
        ks,
        rms: rms_curve,
        trials: summaries,
    })
}

/// One cell per grid size; a failing trial aborts the batch.
pub fn monte_carlo(cfg: &BenchConfig) -> Result<BenchResult> {
    cfg.validate()?;
    let cells = cfg
        .grids
        .iter()
        .map(|&side| {
            let scenario = Scenario::from_config(&cfg.scenario_for(side))?;
            let tag = format!("M{}", side * side);
            run_cell(&scenario, &tag, cfg.trials, cfg.seed, cfg.backend)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchResult { cells })
}

/// RMS final error over converged trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticError {
    pub e_inf: f64,
    pub qualifying: usize,
    pub qualifying_fraction: f64,
}

/// RMS of final errors over trials whose final entropy is below `threshold`.
pub fn asymptotic_error(cell: &CellResult, threshold: f64) -> Result<AsymptoticError> {
    let finals: Vec<f64> =
        cell.trials.iter().filter(|t| t.final_entropy < threshold).map(TrialSummary::final_error).collect();
    if finals.is_empty() {
        return Err(Error::NoQualifyingTrials { threshold });
    }
    Ok(AsymptoticError {
        e_inf: rms(finals.iter().copied()),
        qualifying: finals.len(),
        qualifying_fraction: finals.len() as f64 / cell.trials.len() as f64,
    })
}

/// One row of the asymptotic-error table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub m: usize,
    pub spacing: f64,
    pub e_inf: f64,
    pub qualifying_fraction: f64,
}

pub fn table_rows(res: &BenchResult, threshold: f64) -> Result<Vec<TableRow>> {
    res.cells
        .iter()
        .map(|c| {
            let a = asymptotic_error(c, threshold)?;
            Ok(TableRow {
                m: c.grid_side * c.grid_side,
                spacing: c.spacing,
                e_inf: a.e_inf,
                qualifying_fraction: a.qualifying_fraction,
            })
        })
        .collect()
}

fn sir_trial<R: rand::Rng + ?Sized>(
    scenario: &Scenario,
    particles: usize,
    rng: &mut R,
    mut resample_rng: rand_chacha::ChaCha8Rng,
) -> Result<SimTrace> {
    let source = scenario.draw_source(rng);
    let region = *scenario.centres.region();
    let mut fusion = SirFusion::new(particles, &region, &scenario.assumed_model, &mut resample_rng)?;
    scenario.run_with(source, rng, &mut fusion)
}

/// One SIR run of `cfg` with the grid replaced by `particles` particles drawn
/// uniformly over the grid box.
pub fn sir_baseline(cfg: &ScenarioConfig, particles: usize, seed: u64) -> Result<SimTrace> {
    if particles == 0 {
        return Err(Error::Domain("SIR needs at least one particle".into()));
    }
    let scenario = Scenario::from_config(cfg)?;
    sir_trial(&scenario, particles, &mut trial_rng(seed, 0), trial_rng(seed ^ SIR_STREAM_SALT, 0))
}

fn friis_of(cfg: &ScenarioConfig) -> Result<FriisParams> {
    match cfg.true_model()? {
        DetectionModel::FriisQ(p) => Ok(p),
        _ => Err(Error::Config("model: the transmit-power sweep needs kind = \"friis_q\"".into())),
    }
}

/// Error curves when the estimator assumes transmit power `assumed_pt` while
/// readings are generated at each of `true_pts`.
///
/// Agents steer toward the MAP estimate on a formation of radius 2.5 m.
pub fn envelope_sweep(cfg: &BenchConfig, assumed_pt: f64, true_pts: &[f64]) -> Result<Vec<(f64, CellResult)>> {
    cfg.validate()?;
    let base = friis_of(&cfg.scenario)?;
    let assumed = FriisParams { p_t: assumed_pt, ..base };
    let side = cfg.grids[0];
    true_pts
        .iter()
        .map(|&pt_true| {
            let truth = FriisParams { p_t: pt_true, ..base };
            let mut sc = cfg.scenario_for(side);
            sc.model = ModelSection::friis(&truth);
            sc.envelope = Some(ModelSection::friis(&assumed));
            sc.control.guidance = GuidanceMode::MapEstimate;
            sc.control.radius = Some(ENVELOPE_RADIUS);
            let scenario = Scenario::from_config(&sc)?;
            check_envelope(
                &scenario.true_model,
                &scenario.assumed_model,
                &scenario.centres.region().inflate(ENVELOPE_RADIUS),
                &[],
                ENVELOPE_CHECK_SAMPLES,
            )?;
            let tag = format!("PT{pt_true}");
            Ok((pt_true, run_cell(&scenario, &tag, cfg.trials, cfg.seed, cfg.backend)?))
        })
        .collect()
}
