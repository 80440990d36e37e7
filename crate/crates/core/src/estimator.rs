//! Discretised Bayesian posterior over a finite set of centres.
//!
//! Weights are stored as natural logs and renormalised after every reading.
//! Over a thousand informative readings the ratio between the best and worst
//! centre easily passes `1e-300`, so a linear store would round some weights to
//! zero; logs keep every weight strictly positive.

use crate::detect_model::DetectionModel;
use crate::{Error, Point, Rect, Result};

/// Normalisers below this value are treated as a broken model.
pub const MIN_NORMALISER: f64 = 1e-300;

/// Discretisation points `c_1..c_M` of the search region.
#[derive(Debug, Clone, PartialEq)]
pub struct CentreSet {
    centres: Vec<Point>,
    region: Rect,
}

impl CentreSet {
    /// Validates `M >= 1`, distinctness and containment in `region`.
    pub fn new(centres: Vec<Point>, region: Rect) -> Result<Self> {
        if centres.is_empty() {
            return Err(Error::Domain("centre set must not be empty".into()));
        }
        if let Some(c) = centres.iter().find(|c| !region.contains(c)) {
            return Err(Error::Domain(format!("centre ({}, {}) outside region", c.x, c.y)));
        }
        let mut keys: Vec<(u64, u64)> =
            centres.iter().map(|c| ((c.x + 0.0).to_bits(), (c.y + 0.0).to_bits())).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("centres must be pairwise distinct".into()));
        }
        Ok(Self { centres, region })
    }

    /// `side x side` cell-centred grid over `region`; index `row * side + col`, x varying fastest.
    pub fn uniform_grid(region: Rect, side: usize) -> Result<Self> {
        if side == 0 || !region.is_valid() {
            return Err(Error::Domain("grid needs side >= 1 and a non-empty region".into()));
        }
        let (dx, dy) = (region.width() / side as f64, region.height() / side as f64);
        let centres = (0..side)
            .flat_map(|row| {
                (0..side).map(move |col| {
                    Point::new(
                        region.x_min + (col as f64 + 0.5) * dx,
                        region.y_min + (row as f64 + 0.5) * dy,
                    )
                })
            })
            .collect();
        Self::new(centres, region)
    }

    pub fn len(&self) -> usize {
        self.centres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centres.is_empty()
    }

    pub fn centres(&self) -> &[Point] {
        &self.centres
    }

    pub fn get(&self, i: usize) -> Point {
        self.centres[i]
    }

    pub fn region(&self) -> &Rect {
        &self.region
    }

    /// Index of the centre closest to `p`, lowest index on ties.
    pub fn nearest(&self, p: &Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centres.iter().enumerate() {
            let d = (c - p).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// One reading as processed by the fusion centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub location: Point,
    pub reading: bool,
    /// Time the reading was taken, seconds.
    pub time: f64,
    /// Reporting agent. The estimator ignores it.
    pub agent_id: usize,
}

impl MeasurementRecord {
    pub fn new(location: Point, reading: bool) -> Self {
        Self { location, reading, time: 0.0, agent_id: 0 }
    }
}

/// Posterior probabilities over centres after `step` readings.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    log_weights: Vec<f64>,
    step: usize,
    scratch: Vec<f64>,
}

impl PartialEq for GridPosterior {
    fn eq(&self, other: &Self) -> bool {
        self.step == other.step && self.log_weights == other.log_weights
    }
}

impl GridPosterior {
    pub fn uniform(m: usize) -> Self {
        let lw = -(m as f64).ln();
        Self { log_weights: vec![lw; m], step: 0, scratch: Vec::with_capacity(m) }
    }

    /// Normalises strictly positive prior weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Domain("prior weights must be finite and strictly positive".into()));
        }
        let logs: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        Self::from_log_weights(&logs)
    }

    /// Normalises finite log-weights.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        if log_weights.is_empty() || log_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("log-weights must be finite".into()));
        }
        let lse = log_sum_exp(log_weights);
        Ok(Self {
            log_weights: log_weights.iter().map(|w| w - lse).collect(),
            step: 0,
            scratch: Vec::with_capacity(log_weights.len()),
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Number of readings absorbed so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.log_weights[i].exp()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// `ln(p_i / p_j)`.
    pub fn log_ratio(&self, i: usize, j: usize) -> f64 {
        self.log_weights[i] - self.log_weights[j]
    }

    /// Absorbs one reading: `p_i <- g(d | c_i; x) p_i / sum_j g(d | c_j; x) p_j`.
    ///
    /// On error the posterior is left untouched.
    pub fn update(
        &mut self,
        rec: &MeasurementRecord,
        centres: &CentreSet,
        model: &DetectionModel,
    ) -> Result<()> {
        if !(rec.location.x.is_finite() && rec.location.y.is_finite()) {
            return Err(Error::Domain("measurement location must be finite".into()));
        }
        debug_assert_eq!(centres.len(), self.len());
        self.scratch.clear();
        for (c, lw) in centres.centres().iter().zip(&self.log_weights) {
            self.scratch.push(lw + model.ln_likelihood(rec.reading, c, &rec.location)?);
        }
        let lse = log_sum_exp(&self.scratch);
        if !(lse >= MIN_NORMALISER.ln()) {
            return Err(Error::NumericalUnderflow { step: self.step + 1 });
        }
        for (dst, src) in self.log_weights.iter_mut().zip(&self.scratch) {
            *dst = src - lse;
        }
        self.step += 1;
        Ok(())
    }

    /// Indices whose weight is below `eps` now. A finite-horizon stand-in for
    /// the set of indices whose weight decays to zero; it is not that limit set.
    pub fn indices_below(&self, eps: f64) -> Vec<usize> {
        let le = eps.ln();
        (0..self.len()).filter(|&i| self.log_weights[i] < le).collect()
    }
}

/// Functional form of [`GridPosterior::update`].
pub fn bayes_update(
    p: &GridPosterior,
    rec: &MeasurementRecord,
    centres: &CentreSet,
    model: &DetectionModel,
) -> Result<GridPosterior> {
    let mut next = p.clone();
    next.update(rec, centres, model)?;
    Ok(next)
}

/// `sum_i p_i c_i`.
pub fn posterior_mean(p: &GridPosterior, centres: &CentreSet) -> Point {
    centres
        .centres()
        .iter()
        .zip(p.log_weights())
        .fold(Point::zeros(), |acc, (c, lw)| acc + c * lw.exp())
}

/// 0-based index of the largest weight; the lowest index wins ties.
pub fn map_index(p: &GridPosterior) -> usize {
    let mut best = 0;
    for (i, &lw) in p.log_weights().iter().enumerate() {
        if lw > p.log_weights()[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &GridPosterior) -> f64 {
    -p.log_weights()
        .iter()
        .map(|&lw| {
            let w = lw.exp();
            if w == 0.0 {
                0.0
            } else {
                w * lw
            }
        })
        .sum::<f64>()
}

/// Posterior over particles drawn from an importance density `phi`.
///
/// Weights start at `p0(c_i) / phi(c_i)`, normalised; the Bayes recursion then
/// reproduces importance-sampling weights exactly. Particles where the prior
/// density vanishes carry no mass and are dropped.
pub fn importance_init(
    particles: &[Point],
    phi_values: &[f64],
    prior_density: impl Fn(&Point) -> f64,
    region: Rect,
) -> Result<(CentreSet, GridPosterior)> {
    if particles.len() != phi_values.len() {
        return Err(Error::Domain("one importance density value per particle required".into()));
    }
    if let Some(phi) = phi_values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("importance density must be positive, got {phi}")));
    }
    let mut kept = Vec::with_capacity(particles.len());
    let mut logs = Vec::with_capacity(particles.len());
    for (c, phi) in particles.iter().zip(phi_values) {
        let p0 = prior_density(c);
        if !(p0 >= 0.0 && p0.is_finite()) {
            return Err(Error::Domain(format!("prior density must be finite and >= 0, got {p0}")));
        }
        if p0 > 0.0 {
            kept.push(*c);
            logs.push(p0.ln() - phi.ln());
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateWeights);
    }
    Ok((CentreSet::new(kept, region)?, GridPosterior::from_log_weights(&logs)?))
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect_model::{AnalyticProfile, FriisParams};
    use crate::pt;
    use proptest::prelude::*;

    /// Two centres with l(c1, x) = 0.8 and l(c2, x) = 0.2 for an agent at the origin.
    fn two_centre_setup() -> (CentreSet, DetectionModel) {
        let model = DetectionModel::Tabulated(
            crate::detect_model::TabulatedProfile::new(vec![0.0, 20.0], vec![0.8, 0.2]).unwrap(),
        );
        let cs = CentreSet::new(vec![pt(0.0, 0.0), pt(20.0, 0.0)], Rect::centred_square(30.0)).unwrap();
        (cs, model)
    }

    #[test]
    fn update_examples() {
        let (cs, m) = two_centre_setup();
        let prior = GridPosterior::uniform(2);
        let hit = bayes_update(&prior, &MeasurementRecord::new(pt(0.0, 0.0), true), &cs, &m).unwrap();
        assert!((hit.weight(0) - 0.8).abs() < 1e-15 && (hit.weight(1) - 0.2).abs() < 1e-15);
        assert_eq!(hit.step(), 1);
        let miss = bayes_update(&prior, &MeasurementRecord::new(pt(0.0, 0.0), false), &cs, &m).unwrap();
        assert!((miss.weight(0) - 0.2).abs() < 1e-15 && (miss.weight(1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn equal_likelihoods_leave_posterior_unchanged() {
        let cs = CentreSet::uniform_grid(Rect::centred_square(10.0), 3).unwrap();
        let prior = GridPosterior::from_weights(&[1., 2., 3., 4., 5., 6., 7., 8., 9.]).unwrap();
        let m = DetectionModel::constant(0.37);
        for d in [true, false] {
            let post = bayes_update(&prior, &MeasurementRecord::new(pt(3.0, -1.0), d), &cs, &m).unwrap();
            for i in 0..9 {
                assert!((post.weight(i) - prior.weight(i)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn underflowing_normaliser_is_reported_and_state_kept() {
        // Every centre sits 1000 sigma past threshold: ln g ~ -5e5 for a miss.
        let m = DetectionModel::FriisQ(FriisParams { p_t: 1e6, noise_sigma: 1e-6, ..Default::default() });
        let cs = CentreSet::uniform_grid(Rect::centred_square(1.0), 2).unwrap();
        let mut p = GridPosterior::uniform(4);
        let before = p.clone();
        let err = p.update(&MeasurementRecord::new(pt(0.0, 0.0), false), &cs, &m).unwrap_err();
        assert_eq!(err, Error::NumericalUnderflow { step: 1 });
        assert_eq!(p, before);
    }

    #[test]
    fn mean_examples() {
        let cs = CentreSet::uniform_grid(Rect::centred_square(50.0), 10).unwrap();
        let u = posterior_mean(&GridPosterior::uniform(100), &cs);
        assert!(u.norm() < 1e-12);

        let mut w = vec![1e-300; 100];
        w[37] = 1.0;
        let p = GridPosterior::from_weights(&w).unwrap();
        assert!(p.weight(37) >= 1.0 - 1e-12);
        assert!((posterior_mean(&p, &cs) - cs.get(37)).norm() < 1e-9);

        let cs2 = CentreSet::new(vec![pt(0.0, 0.0), pt(10.0, 0.0)], Rect::centred_square(20.0)).unwrap();
        let p2 = GridPosterior::from_weights(&[0.8, 0.2]).unwrap();
        assert!((posterior_mean(&p2, &cs2) - pt(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn map_examples() {
        assert_eq!(map_index(&GridPosterior::from_weights(&[0.2, 0.5, 0.3]).unwrap()), 1);
        assert_eq!(map_index(&GridPosterior::from_weights(&[0.5, 0.5]).unwrap()), 0);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&GridPosterior::uniform(400)) - 400f64.ln()).abs() < 1e-12);
        assert!((entropy(&GridPosterior::uniform(400)) - 5.9915).abs() < 1e-4);
        assert!((entropy(&GridPosterior::from_weights(&[0.5, 0.5]).unwrap()) - 0.693_147_180_559_945_3).abs() < 1e-15);
        let point = GridPosterior::from_log_weights(&[0.0, -1e6, -1e6]).unwrap();
        assert!(entropy(&point).abs() < 1e-12);
    }

    #[test]
    fn importance_init_examples() {
        let region = Rect::centred_square(10.0);
        let particles = [pt(1.0, 1.0), pt(-2.0, 3.0)];
        let (_, p) = importance_init(&particles, &[0.2, 0.2], |c| if c.x > 0.0 { 0.4 } else { 0.1 }, region).unwrap();
        assert!((p.weight(0) - 0.8).abs() < 1e-15 && (p.weight(1) - 0.2).abs() < 1e-15);

        // phi = p0 gives uniform weights.
        let dens = |c: &Point| 0.01 + 0.001 * c.x.abs();
        let many: Vec<Point> = (0..7).map(|i| pt(i as f64 - 3.0, 0.5)).collect();
        let phis: Vec<f64> = many.iter().map(dens).collect();
        let (_, q) = importance_init(&many, &phis, dens, region).unwrap();
        for i in 0..7 {
            assert!((q.weight(i) - 1.0 / 7.0).abs() < 1e-15);
        }

        let err = importance_init(&particles, &[0.2, 0.2], |_| 0.0, region).unwrap_err();
        assert_eq!(err, Error::DegenerateWeights);
    }

    #[test]
    fn centre_set_validation() {
        let r = Rect::centred_square(1.0);
        assert!(CentreSet::new(vec![], r).is_err());
        assert!(CentreSet::new(vec![pt(0.0, 0.0), pt(0.0, 0.0)], r).is_err());
        assert!(CentreSet::new(vec![pt(2.0, 0.0)], r).is_err());
        let g = CentreSet::uniform_grid(Rect::centred_square(50.0), 10).unwrap();
        assert_eq!(g.get(0), pt(-45.0, -45.0));
        assert_eq!(g.get(1), pt(-35.0, -45.0));
        assert_eq!(g.get(99), pt(45.0, 45.0));
    }

    fn arb_stream() -> impl Strategy<Value = Vec<(f64, f64, bool)>> {
        prop::collection::vec((-40.0..40.0f64, -40.0..40.0f64, any::<bool>()), 1..60)
    }

    proptest! {
        #[test]
        fn normalised_and_positive(stream in arb_stream()) {
            let cs = CentreSet::uniform_grid(Rect::centred_square(50.0), 8).unwrap();
            let m = DetectionModel::default();
            let mut p = GridPosterior::uniform(cs.len());
            for (x, y, d) in stream {
                p.update(&MeasurementRecord::new(pt(x, y), d), &cs, &m).unwrap();
                let total: f64 = p.weights().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(p.log_weights().iter().all(|w| w.is_finite()));
            }
        }

        #[test]
        fn permutation_within_batch_is_invariant(stream in arb_stream(), rot in 0usize..60) {
            let cs = CentreSet::uniform_grid(Rect::centred_square(50.0), 6).unwrap();
            let m = DetectionModel::GenericRange(AnalyticProfile::Gaussian { floor: 0.05, peak: 0.9, width: 12.0 });
            let run = |recs: &[(f64, f64, bool)]| {
                let mut p = GridPosterior::uniform(cs.len());
                for &(x, y, d) in recs {
                    p.update(&MeasurementRecord::new(pt(x, y), d), &cs, &m).unwrap();
                }
                p.weights()
            };
            let mut perm = stream.clone();
            perm.rotate_left(rot % stream.len());
            perm.reverse();
            for (a, b) in run(&stream).iter().zip(run(&perm)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn ratio_identity(stream in arb_stream(), i in 0usize..25, j in 0usize..25) {
            let cs = CentreSet::uniform_grid(Rect::centred_square(50.0), 5).unwrap();
            let m = DetectionModel::default();
            let prior: Vec<f64> = (0..25).map(|k| 1.0 + k as f64).collect();
            let mut p = GridPosterior::from_weights(&prior).unwrap();
            let mut log_z = 0.0;
            for &(x, y, d) in &stream {
                let rec = MeasurementRecord::new(pt(x, y), d);
                p.update(&rec, &cs, &m).unwrap();
                let gi = likelihood_direct(d, &cs.get(i), &rec.location);
                let gj = likelihood_direct(d, &cs.get(j), &rec.location);
                log_z += (gi / gj).ln();
            }
            let expected = (prior[i] / prior[j]).ln() + log_z;
            let got = p.log_ratio(i, j);
            // Relative 1e-9 on the ratio itself.
            prop_assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    /// Friis + Q likelihood written out directly from the formulas.
    fn likelihood_direct(d: bool, s: &Point, x: &Point) -> f64 {
        let pr = 1.0 / ((s - x).norm_squared() + 100.0);
        let l = 0.5 * libm::erfc((0.005 - pr) / 0.0025 / std::f64::consts::SQRT_2);
        if d {
            l
        } else {
            1.0 - l
        }
    }
}
