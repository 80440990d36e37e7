//! Sequential importance resampling with a stationary state.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;

use crate::detect_model::DetectionModel;
use crate::estimator::{log_sum_exp, MeasurementRecord, MIN_NORMALISER};
use crate::sim_engine::{Estimate, Fusion};
use crate::{Error, Point, Rect, Result};

/// SIR particle filter: weight by the likelihood, resample every epoch.
///
/// With zero process noise resampling can only duplicate particles, so the
/// cloud thins out over time. Entropy is taken over distinct original
/// particles.
#[derive(Debug)]
pub struct SirFusion<'a> {
    particles: Vec<Point>,
    origin: Vec<usize>,
    log_weights: Vec<f64>,
    model: &'a DetectionModel,
    rng: &'a mut ChaCha8Rng,
    step: usize,
    scratch: Vec<f64>,
}

impl<'a> SirFusion<'a> {
    /// Draws `n` particles uniformly over `region`.
    pub fn new(n: usize, region: &Rect, model: &'a DetectionModel, rng: &'a mut ChaCha8Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("SIR needs at least one particle".into()));
        }
        let particles: Vec<Point> = (0..n).map(|_| region.sample(rng)).collect();
        Ok(Self::from_particles(particles, model, rng))
    }

    pub fn from_particles(particles: Vec<Point>, model: &'a DetectionModel, rng: &'a mut ChaCha8Rng) -> Self {
        let n = particles.len();
        Self {
            origin: (0..n).collect(),
            log_weights: vec![-(n as f64).ln(); n],
            particles,
            model,
            rng,
            step: 0,
            scratch: Vec::with_capacity(n),
        }
    }

    pub fn particles(&self) -> &[Point] {
        &self.particles
    }

    /// Number of distinct original particles still alive.
    pub fn distinct(&self) -> usize {
        let mut o = self.origin.clone();
        o.sort_unstable();
        o.dedup();
        o.len()
    }

    /// Multinomial resampling to equal weights.
    fn resample(&mut self) -> Result<()> {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let dist = WeightedIndex::new(&w).map_err(|_| Error::ParticleDegeneracy { step: self.step })?;
        let n = self.particles.len();
        let picks: Vec<usize> = (0..n).map(|_| dist.sample(&mut *self.rng)).collect();
        self.particles = picks.iter().map(|&i| self.particles[i]).collect();
        self.origin = picks.iter().map(|&i| self.origin[i]).collect();
        self.log_weights.fill(-(n as f64).ln());
        Ok(())
    }
}

impl Fusion for SirFusion<'_> {
    fn assimilate(&mut self, rec: &MeasurementRecord) -> Result<()> {
        self.scratch.clear();
        for (p, lw) in self.particles.iter().zip(&self.log_weights) {
            self.scratch.push(lw + self.model.ln_likelihood(rec.reading, p, &rec.location)?);
        }
        let lse = log_sum_exp(&self.scratch);
        if !(lse >= MIN_NORMALISER.ln()) {
            return Err(Error::ParticleDegeneracy { step: self.step + 1 });
        }
        for (dst, src) in self.log_weights.iter_mut().zip(&self.scratch) {
            *dst = src - lse;
        }
        self.step += 1;
        Ok(())
    }

    fn end_epoch(&mut self) -> Result<()> {
        self.resample()
    }

    fn estimate(&self) -> Estimate {
        let n = self.particles.len();
        let mut mass = vec![0.0; n];
        let mut mean = Point::zeros();
        for ((p, lw), &o) in self.particles.iter().zip(&self.log_weights).zip(&self.origin) {
            let w = lw.exp();
            mean += p * w;
            mass[o] += w;
        }
        let mut best = 0;
        let mut h = 0.0;
        for (o, &m) in mass.iter().enumerate() {
            if m > 0.0 {
                h -= m * m.ln();
            }
            if m > mass[best] {
                best = o;
            }
        }
        let map = self.particles[self.origin.iter().position(|&o| o == best).expect("best origin is alive")];
        Estimate { mean, map, entropy: h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::pt;
    use crate::sim_engine::trial_rng;

    #[test]
    fn uninformative_model_keeps_cloud() {
        let model = DetectionModel::constant(0.3);
        let mut rng = trial_rng(1, 0);
        let region = Rect::centred_square(50.0);
        let mut f = SirFusion::new(5000, &region, &model, &mut rng).unwrap();
        let before = f.estimate().mean;
        for _ in 0..4 {
            f.assimilate(&MeasurementRecord::new(pt(3.0, 3.0), true)).unwrap();
        }
        // Weights stay equal before resampling.
        assert!((f.estimate().mean - before).norm() < 1e-9);
        f.end_epoch().unwrap();
        // Resampling noise on the mean: sd ~ 29 / sqrt(5000) ~ 0.4 m per axis.
        assert!((f.estimate().mean - before).norm() < 2.5);
    }

    #[test]
    fn same_seed_same_trace() {
        let mut c = ScenarioConfig::default();
        c.simulation.measurements = 120;
        let a = super::super::sir_baseline(&c, 300, 4).unwrap();
        let b = super::super::sir_baseline(&c, 300, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.final_log_weights.is_empty());
    }

    #[test]
    fn resampling_thins_distinct_particles() {
        let model = DetectionModel::default();
        let mut rng = trial_rng(2, 0);
        let region = Rect::centred_square(50.0);
        let mut f = SirFusion::new(400, &region, &model, &mut rng).unwrap();
        for _ in 0..10 {
            f.assimilate(&MeasurementRecord::new(pt(0.0, 0.0), true)).unwrap();
            f.end_epoch().unwrap();
        }
        assert!(f.distinct() < 400);
    }
}
