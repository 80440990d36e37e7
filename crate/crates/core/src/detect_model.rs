//! Probability-of-detection functions and the Bernoulli reading likelihood.
//!
//! Every model here depends on the source/agent pair only through their planar
//! distance, so each one is also a [`RangeProfile`]. Probabilities are carried
//! as a [`Detection`] holding `ln p` and `ln (1 - p)` separately: for strong
//! signals `p` rounds to `1.0` in double precision while `1 - p` is still a
//! perfectly good positive number, and the estimator needs both.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

/// Step for central differences of tabulated profiles, in metres.
pub const TABLE_DERIVATIVE_STEP: f64 = 1e-4;

/// Upper-tail probability of the standard normal distribution.
pub fn q_function(u: f64) -> f64 {
    0.5 * libm::erfc(u / std::f64::consts::SQRT_2)
}

/// Natural log of [`q_function`], finite for every finite argument.
pub fn ln_q_function(u: f64) -> f64 {
    if u < 0.0 {
        // Q(u) = 1 - Q(-u); ln_1p keeps precision when Q(-u) is tiny.
        (-q_function(-u)).ln_1p()
    } else if u < 30.0 {
        q_function(u).ln()
    } else {
        // Asymptotic expansion of the Mills ratio; erfc would underflow near u = 37.5.
        let inv2 = 1.0 / (u * u);
        let series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2 * (1.0 - 7.0 * inv2)));
        -0.5 * u * u - u.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}

/// A detection probability stored as the log-probabilities of both outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    ln_hit: f64,
    ln_miss: f64,
}

impl Detection {
    /// Builds from a plain probability in `(0, 1)`.
    pub fn from_probability(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("detection probability {p} outside (0, 1)")));
        }
        Ok(Self { ln_hit: p.ln(), ln_miss: (-p).ln_1p() })
    }

    /// `Q(u)` for a hit and `Q(-u)` for a miss.
    pub fn from_q_argument(u: f64) -> Self {
        Self { ln_hit: ln_q_function(u), ln_miss: ln_q_function(-u) }
    }

    /// Probability of a reading of 1.
    #[inline]
    pub fn hit(&self) -> f64 {
        self.ln_hit.exp()
    }

    /// Probability of a reading of 0, accurate even when `hit()` rounds to one.
    #[inline]
    pub fn miss(&self) -> f64 {
        self.ln_miss.exp()
    }

    #[inline]
    pub fn ln_hit(&self) -> f64 {
        self.ln_hit
    }

    #[inline]
    pub fn ln_miss(&self) -> f64 {
        self.ln_miss
    }

    /// `ln g(d)` for the Bernoulli reading likelihood.
    #[inline]
    pub fn ln_likelihood(&self, reading: bool) -> f64 {
        if reading {
            self.ln_hit
        } else {
            self.ln_miss
        }
    }

    /// `g(d) = p^d (1 - p)^(1 - d)`.
    #[inline]
    pub fn likelihood(&self, reading: bool) -> f64 {
        self.ln_likelihood(reading).exp()
    }
}

/// Detection probability and its derivative as functions of range.
pub trait RangeProfile {
    /// `rho(r)` for `r >= 0`.
    fn rho(&self, r: f64) -> Result<Detection>;

    /// `rho'(r)`.
    fn rho_prime(&self, r: f64) -> Result<f64>;

    /// The D-optimal radius objective `rho'(r)^2 / (rho(r) (1 - rho(r)))`.
    fn information_density(&self, r: f64) -> Result<f64> {
        let d = self.rho(r)?;
        let slope = self.rho_prime(r)?;
        Ok(slope * slope / (d.hit() * d.miss()))
    }

    /// Whether `rho` is strictly monotone over the given sorted radii.
    ///
    /// A step counts when either tail resolves it: near `p = 1` only
    /// `ln (1 - p)` still moves.
    fn is_strictly_monotone(&self, radii: &[f64]) -> Result<bool> {
        let values = radii.iter().map(|&r| self.rho(r)).collect::<Result<Vec<_>>>()?;
        let up = |a: &Detection, b: &Detection| b.ln_hit() > a.ln_hit() || b.ln_miss() < a.ln_miss();
        let increasing = values.windows(2).all(|w| up(&w[0], &w[1]) && !up(&w[1], &w[0]));
        let decreasing = values.windows(2).all(|w| up(&w[1], &w[0]) && !up(&w[0], &w[1]));
        Ok(increasing || decreasing)
    }
}

/// Friis transmission with a Gaussian-noise power threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FriisParams {
    /// Receiving antenna effective area, m².
    pub a_r: f64,
    /// Transmitting antenna effective area, m².
    pub a_t: f64,
    /// Transmitted power, W.
    pub p_t: f64,
    /// Wavelength, m.
    pub wavelength: f64,
    /// Agent altitude above the source plane, m.
    pub altitude: f64,
    /// Detection threshold on received power, W.
    pub threshold: f64,
    /// Standard deviation of additive sensor noise, W.
    pub noise_sigma: f64,
}

impl Default for FriisParams {
    fn default() -> Self {
        Self {
            a_r: 1.0,
            a_t: 1.0,
            p_t: 1.0,
            wavelength: 1.0,
            altitude: 10.0,
            threshold: 5e-3,
            noise_sigma: 2.5e-3,
        }
    }
}

impl FriisParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a_r", self.a_r),
            ("a_t", self.a_t),
            ("p_t", self.p_t),
            ("wavelength", self.wavelength),
            ("altitude", self.altitude),
            ("threshold", self.threshold),
            ("noise_sigma", self.noise_sigma),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("model.{name}: must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    fn gain(&self) -> f64 {
        self.a_r * self.a_t * self.p_t / (self.wavelength * self.wavelength)
    }

    /// Received power at squared horizontal distance `r2`.
    #[inline]
    fn power_at_sq(&self, r2: f64) -> f64 {
        self.gain() / (r2 + self.altitude * self.altitude)
    }

    #[inline]
    fn q_argument_sq(&self, r2: f64) -> f64 {
        (self.threshold - self.power_at_sq(r2)) / self.noise_sigma
    }

    /// Horizontal distance at which the received power equals the threshold, if any.
    pub fn threshold_range(&self) -> Option<f64> {
        let r2 = self.gain() / self.threshold - self.altitude * self.altitude;
        (r2 >= 0.0).then(|| r2.sqrt())
    }
}

impl RangeProfile for FriisParams {
    fn rho(&self, r: f64) -> Result<Detection> {
        Ok(Detection::from_q_argument(self.q_argument_sq(r * r)))
    }

    fn rho_prime(&self, r: f64) -> Result<f64> {
        let u = self.q_argument_sq(r * r);
        let denom = r * r + self.altitude * self.altitude;
        // du/dr = 2 r G / (denom^2 sigma); Q'(u) = -phi(u)
        let du_dr = 2.0 * r * self.gain() / (denom * denom * self.noise_sigma);
        let phi = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        Ok(-phi * du_dr)
    }
}

/// Received power `A_R A_T P_T / (lambda^2 (|s - x|^2 + z^2))`.
pub fn friis_received_power(source: &Point, agent: &Point, p: &FriisParams) -> f64 {
    p.power_at_sq((source - agent).norm_squared())
}

/// Closed-form range profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AnalyticProfile {
    /// `rho(r) = p`; uninformative.
    Constant { p: f64 },
    /// `floor + (peak - floor) exp(-r^2 / (2 width^2))`.
    Gaussian { floor: f64, peak: f64, width: f64 },
    /// `far + (near - far) / (1 + exp((r - midpoint) / scale))`.
    Logistic { near: f64, far: f64, midpoint: f64, scale: f64 },
}

impl AnalyticProfile {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("model.{name}: must lie in (0, 1), got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("model.{name}: must be finite and > 0, got {v}")))
            }
        };
        match *self {
            Self::Constant { p } => in_unit("p", p),
            Self::Gaussian { floor, peak, width } => {
                in_unit("floor", floor)?;
                in_unit("peak", peak)?;
                positive("width", width)
            }
            Self::Logistic { near, far, midpoint, scale } => {
                in_unit("near", near)?;
                in_unit("far", far)?;
                if !midpoint.is_finite() {
                    return Err(Error::Config("model.midpoint: must be finite".into()));
                }
                positive("scale", scale)
            }
        }
    }

    fn value(&self, r: f64) -> f64 {
        match *self {
            Self::Constant { p } => p,
            Self::Gaussian { floor, peak, width } => {
                floor + (peak - floor) * (-0.5 * r * r / (width * width)).exp()
            }
            Self::Logistic { near, far, midpoint, scale } => {
                far + (near - far) / (1.0 + ((r - midpoint) / scale).exp())
            }
        }
    }
}

impl RangeProfile for AnalyticProfile {
    fn rho(&self, r: f64) -> Result<Detection> {
        Detection::from_probability(self.value(r))
    }

    fn rho_prime(&self, r: f64) -> Result<f64> {
        Ok(match *self {
            Self::Constant { .. } => 0.0,
            Self::Gaussian { floor, peak, width } => {
                -(peak - floor) * r / (width * width) * (-0.5 * r * r / (width * width)).exp()
            }
            Self::Logistic { near, far, midpoint, scale } => {
                let e = ((r - midpoint) / scale).exp();
                if e.is_infinite() {
                    0.0
                } else {
                    -(near - far) * e / (scale * (1.0 + e) * (1.0 + e))
                }
            }
        })
    }
}

/// Piecewise-linear profile through `(distance, probability)` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedProfile {
    pub distances: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl TabulatedProfile {
    pub fn new(distances: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        let t = Self { distances, probabilities };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.distances.len() < 2 || self.distances.len() != self.probabilities.len() {
            return Err(Error::Config(
                "model.distances/probabilities: need two or more samples of equal length".into(),
            ));
        }
        if self.distances[0] < 0.0 || self.distances.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "model.distances: must be non-negative and strictly increasing".into(),
            ));
        }
        if let Some(p) = self.probabilities.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Config(format!("model.probabilities: {p} outside (0, 1)")));
        }
        Ok(())
    }

    fn min_range(&self) -> f64 {
        self.distances[0]
    }

    fn max_range(&self) -> f64 {
        *self.distances.last().unwrap()
    }

    fn value(&self, r: f64) -> Result<f64> {
        let (lo, hi) = (self.min_range(), self.max_range());
        if !(r >= lo && r <= hi) {
            return Err(Error::ModelDomain { distance: r, min: lo, max: hi });
        }
        let k = self.distances.partition_point(|&d| d <= r).clamp(1, self.distances.len() - 1);
        let (d0, d1) = (self.distances[k - 1], self.distances[k]);
        let (p0, p1) = (self.probabilities[k - 1], self.probabilities[k]);
        Ok(p0 + (p1 - p0) * (r - d0) / (d1 - d0))
    }
}

impl RangeProfile for TabulatedProfile {
    fn rho(&self, r: f64) -> Result<Detection> {
        Detection::from_probability(self.value(r)?)
    }

    fn rho_prime(&self, r: f64) -> Result<f64> {
        let h = TABLE_DERIVATIVE_STEP;
        let lo = (r - h).max(self.min_range());
        let hi = (r + h).min(self.max_range());
        if !(hi > lo) {
            return Err(Error::ModelDomain { distance: r, min: self.min_range(), max: self.max_range() });
        }
        Ok((self.value(hi)? - self.value(lo)?) / (hi - lo))
    }
}

/// The probability-of-detection function `l(s, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectionModel {
    FriisQ(FriisParams),
    GenericRange(AnalyticProfile),
    Tabulated(TabulatedProfile),
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self::FriisQ(FriisParams::default())
    }
}

impl DetectionModel {
    /// Uninformative model with `l = p` everywhere.
    pub fn constant(p: f64) -> Self {
        Self::GenericRange(AnalyticProfile::Constant { p })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::FriisQ(p) => p.validate(),
            Self::GenericRange(p) => p.validate(),
            Self::Tabulated(t) => t.validate(),
        }
    }

    /// Detection probability for a source at `source` and an agent at `agent`.
    #[inline]
    pub fn detection(&self, source: &Point, agent: &Point) -> Result<Detection> {
        match self {
            Self::FriisQ(p) => {
                Ok(Detection::from_q_argument(p.q_argument_sq((source - agent).norm_squared())))
            }
            Self::GenericRange(p) => p.rho((source - agent).norm()),
            Self::Tabulated(t) => t.rho((source - agent).norm()),
        }
    }

    /// `ln g(d | s; x)`, computing only the branch the reading selects.
    #[inline]
    pub fn ln_likelihood(&self, reading: bool, source: &Point, agent: &Point) -> Result<f64> {
        match self {
            Self::FriisQ(p) => {
                let u = p.q_argument_sq((source - agent).norm_squared());
                Ok(ln_q_function(if reading { u } else { -u }))
            }
            _ => Ok(self.detection(source, agent)?.ln_likelihood(reading)),
        }
    }

    /// Gradient of `l(s, x)` with respect to the source location.
    ///
    /// Zero when the agent sits on the source, where the range gradient is undefined.
    pub fn gradient_wrt_source(&self, source: &Point, agent: &Point) -> Result<Point> {
        let diff = source - agent;
        let r = diff.norm();
        if r == 0.0 {
            return Ok(Point::zeros());
        }
        Ok(diff * (self.rho_prime(r)? / r))
    }
}

impl RangeProfile for DetectionModel {
    fn rho(&self, r: f64) -> Result<Detection> {
        match self {
            Self::FriisQ(p) => p.rho(r),
            Self::GenericRange(p) => p.rho(r),
            Self::Tabulated(t) => t.rho(r),
        }
    }

    fn rho_prime(&self, r: f64) -> Result<f64> {
        match self {
            Self::FriisQ(p) => p.rho_prime(r),
            Self::GenericRange(p) => p.rho_prime(r),
            Self::Tabulated(t) => t.rho_prime(r),
        }
    }
}

/// `l(s, x)` as a plain probability.
pub fn detection_probability(source: &Point, agent: &Point, model: &DetectionModel) -> Result<f64> {
    Ok(model.detection(source, agent)?.hit())
}

/// `g(d | s; x) = l^d (1 - l)^(1 - d)`.
pub fn likelihood(reading: bool, source: &Point, agent: &Point, model: &DetectionModel) -> Result<f64> {
    Ok(model.detection(source, agent)?.likelihood(reading))
}

/// Draws one binary reading with success probability `l(s, x)`.
///
/// Equivalent in distribution to thresholding `P_R + W` with Gaussian `W`.
pub fn sample_measurement<R: Rng + ?Sized>(
    rng: &mut R,
    source: &Point,
    agent: &Point,
    model: &DetectionModel,
) -> Result<bool> {
    let det = model.detection(source, agent)?;
    let u: f64 = rng.random();
    // Compare against whichever tail is smaller so both ends keep their resolution.
    Ok(if det.ln_hit() <= det.ln_miss() { u < det.hit() } else { u >= det.miss() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn friis() -> DetectionModel {
        DetectionModel::default()
    }

    #[test]
    fn received_power_examples() {
        let p = FriisParams::default();
        assert!((friis_received_power(&pt(3.0, 4.0), &pt(3.0, 4.0), &p) - 0.01).abs() < 1e-15);
        assert!((friis_received_power(&pt(0.0, 0.0), &pt(10.0, 0.0), &p) - 0.005).abs() < 1e-15);
        let custom = FriisParams { p_t: 2.0, wavelength: 0.5, altitude: 5.0, ..p };
        let s = pt(1.0, 2.0);
        let x = pt(-3.0, 7.0);
        let oracle = 1.0 * 1.0 * 2.0 / (0.25 * (16.0 + 25.0 + 25.0));
        assert!((friis_received_power(&s, &x, &custom) - oracle).abs() < 1e-15);
    }

    #[test]
    fn q_function_examples() {
        assert_eq!(q_function(0.0), 0.5);
        assert!(q_function(40.0) < 1e-300);
        // mpmath, 40 digits
        assert!((q_function(-2.0) - 0.977_249_868_051_820_8).abs() < 1e-6);
        assert!((q_function(-2.0) / 0.977_249_868_051_820_8 - 1.0).abs() < 1e-12);
        assert!((q_function(2.0) / 0.022_750_131_948_179_207 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ln_q_is_continuous_across_branches() {
        for &u in &[-1e-9, 29.999_999, 30.0, 30.000_001] {
            let a = ln_q_function(u - 1e-7);
            let b = ln_q_function(u + 1e-7);
            assert!((a - b).abs() < 1e-5 * (1.0 + a.abs()), "jump at {u}: {a} vs {b}");
        }
        assert!(ln_q_function(100.0).is_finite());
        assert!(ln_q_function(-100.0) == 0.0 || ln_q_function(-100.0) < 0.0);
        // Asymptotic branch against erfc where both are representable.
        assert!((ln_q_function(30.0) - q_function(30.0).ln()).abs() < 1e-10);
    }

    #[test]
    fn detection_probability_examples() {
        let m = friis();
        let p0 = detection_probability(&pt(0.0, 0.0), &pt(0.0, 0.0), &m).unwrap();
        assert!((p0 - 0.977_249_868_051_820_8).abs() < 1e-12);
        let p10 = detection_probability(&pt(0.0, 0.0), &pt(10.0, 0.0), &m).unwrap();
        assert!((p10 - 0.5).abs() < 1e-15);
        assert_eq!(FriisParams::default().threshold_range(), Some(10.0));
        let c = DetectionModel::constant(0.3);
        for r in [0.0, 1.0, 50.0, 1e6] {
            assert!((detection_probability(&pt(0.0, 0.0), &pt(r, 0.0), &c).unwrap() - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn tabulated_outside_table_is_a_domain_error() {
        let t = DetectionModel::Tabulated(
            TabulatedProfile::new(vec![0.0, 10.0, 20.0], vec![0.9, 0.5, 0.1]).unwrap(),
        );
        let err = detection_probability(&pt(0.0, 0.0), &pt(25.0, 0.0), &t).unwrap_err();
        assert!(matches!(err, Error::ModelDomain { .. }));
        let mid = detection_probability(&pt(0.0, 0.0), &pt(15.0, 0.0), &t).unwrap();
        assert!((mid - 0.3).abs() < 1e-12);
        // Central difference inside, one-sided at the edge.
        assert!((t.rho_prime(5.0).unwrap() + 0.04).abs() < 1e-9);
        assert!((t.rho_prime(0.0).unwrap() + 0.04).abs() < 1e-9);
    }

    #[test]
    fn likelihood_examples() {
        let m = DetectionModel::constant(0.8);
        let (s, x) = (pt(1.0, 1.0), pt(2.0, 2.0));
        assert!((likelihood(true, &s, &x, &m).unwrap() - 0.8).abs() < 1e-15);
        assert!((likelihood(false, &s, &x, &m).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn strong_signal_keeps_miss_probability_positive() {
        let m = DetectionModel::FriisQ(FriisParams { p_t: 5.0, ..Default::default() });
        let d = m.detection(&pt(0.0, 0.0), &pt(0.0, 0.0)).unwrap();
        assert_eq!(d.hit(), 1.0);
        assert!(d.miss() > 0.0 && d.miss() < 1e-60);
        assert!(m.ln_likelihood(false, &pt(0.0, 0.0), &pt(0.0, 0.0)).unwrap().is_finite());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = friis();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200)
                .map(|i| sample_measurement(&mut rng, &pt(0.0, 0.0), &pt(i as f64 * 0.1, 0.0), &m).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn sampling_frequency_at_half() {
        let m = DetectionModel::constant(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..100_000)
            .filter(|_| sample_measurement(&mut rng, &pt(0.0, 0.0), &pt(1.0, 0.0), &m).unwrap())
            .count();
        let mean = hits as f64 / 1e5;
        assert!((0.49..=0.51).contains(&mean), "{mean}");
    }

    #[test]
    fn sampling_near_certain_detection() {
        let m = DetectionModel::constant(0.9999);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zeros = (0..10_000)
            .filter(|_| !sample_measurement(&mut rng, &pt(0.0, 0.0), &pt(1.0, 0.0), &m).unwrap())
            .count();
        // Binomial(1e4, 1e-4): P(X > 8) < 1e-5.
        assert!(zeros <= 8, "{zeros}");
    }
}
