//! Expected log-likelihood ratios, KL divergences between reading
//! distributions, and the sets that describe where the posterior can settle.
//!
//! All logarithms are natural; divergences are in nats.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detect_model::{Detection, DetectionModel};
use crate::estimator::CentreSet;
use crate::{Error, Point, Rect, Result};

/// Default tie tolerance for KL minimiser sets, nats.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;
/// Default tolerance for the indistinguishable-set proxy, probability units.
pub const DEFAULT_AMBIGUITY_TOL: f64 = 1e-6;
/// Sampled (source, agent) pairs used to verify an envelope.
pub const ENVELOPE_CHECK_SAMPLES: usize = 10_000;

/// `mu(x, y, z) = z ln(x / y) + (1 - z) ln((1 - x) / (1 - y))`.
pub fn mu(x: f64, y: f64, z: f64) -> Result<f64> {
    for (name, v) in [("x", x), ("y", y), ("z", z)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("mu: {name} = {v} outside (0, 1)")));
        }
    }
    Ok(z * (x / y).ln() + (1.0 - z) * ((1.0 - x) / (1.0 - y)).ln())
}

/// [`mu`] on log-carried probabilities; exact where `1 - p` would round.
#[inline]
pub fn mu_detection(x: &Detection, y: &Detection, z: &Detection) -> f64 {
    z.hit() * (x.ln_hit() - y.ln_hit()) + z.miss() * (x.ln_miss() - y.ln_miss())
}

/// Expected value, under a source at `s`, of `ln Z` for centres `i`, `j` and agent `x_k`.
pub fn expected_log_ratio(
    i: usize,
    j: usize,
    s: &Point,
    x_k: &Point,
    cs: &CentreSet,
    m: &DetectionModel,
) -> Result<f64> {
    Ok(mu_detection(
        &m.detection(&cs.get(i), x_k)?,
        &m.detection(&cs.get(j), x_k)?,
        &m.detection(s, x_k)?,
    ))
}

/// Sum of [`expected_log_ratio`] over one period of measurement locations.
pub fn period_drift(
    i: usize,
    j: usize,
    s: &Point,
    xs: &[Point],
    cs: &CentreSet,
    m: &DetectionModel,
) -> Result<f64> {
    xs.iter().map(|x| expected_log_ratio(i, j, s, x, cs, m)).sum()
}

/// Likelihood ratio `Z = g(d | c_i; x) / g(d | c_j; x)`.
pub fn likelihood_ratio(
    reading: bool,
    i: usize,
    j: usize,
    x: &Point,
    cs: &CentreSet,
    m: &DetectionModel,
) -> Result<f64> {
    Ok((m.ln_likelihood(reading, &cs.get(i), x)? - m.ln_likelihood(reading, &cs.get(j), x)?).exp())
}

/// KL divergence from the reading distribution with the source at `s` to the
/// one with the source at `x`, for a single agent location `x_k`.
pub fn kl_single(s: &Point, x: &Point, x_k: &Point, m: &DetectionModel) -> Result<f64> {
    let truth = m.detection(s, x_k)?;
    Ok((-mu_detection(&m.detection(x, x_k)?, &truth, &truth)).max(0.0))
}

/// KL divergence over a list of independent readings; additive in `xs`.
pub fn kl_sequence(s: &Point, x: &Point, xs: &[Point], m: &DetectionModel) -> Result<f64> {
    envelope_kl(s, x, xs, m, m)
}

/// KL divergence from the true reading distribution (source `s`, model
/// `true_m`) to the assumed one (source `x`, model `env_m`).
pub fn envelope_kl(
    s: &Point,
    x: &Point,
    xs: &[Point],
    true_m: &DetectionModel,
    env_m: &DetectionModel,
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Domain("measurement location list must not be empty".into()));
    }
    let mut total = 0.0;
    for x_k in xs {
        let truth = true_m.detection(s, x_k)?;
        total += -mu_detection(&env_m.detection(x, x_k)?, &truth, &truth);
    }
    Ok(total.max(0.0))
}

/// Per-centre KL values and the indices attaining the minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct KlReport {
    pub kl: Vec<f64>,
    /// Sorted indices within the tie tolerance of the minimum.
    pub minimisers: Vec<usize>,
    pub minimum: f64,
}

impl KlReport {
    fn from_values(kl: Vec<f64>, tie_tol: f64) -> Self {
        let minimum = kl.iter().copied().fold(f64::INFINITY, f64::min);
        let minimisers = (0..kl.len()).filter(|&i| kl[i] - minimum <= tie_tol).collect();
        Self { kl, minimisers, minimum }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.minimisers.binary_search(&i).is_ok()
    }
}

/// Centres minimising the KL divergence over one period `xs`.
///
/// Outside this set the posterior decays to zero under periodic sampling.
pub fn minimiser_set_b(
    s: &Point,
    xs: &[Point],
    cs: &CentreSet,
    m: &DetectionModel,
    tie_tol: f64,
) -> Result<KlReport> {
    let kl = cs.centres().iter().map(|c| kl_sequence(s, c, xs, m)).collect::<Result<Vec<_>>>()?;
    Ok(KlReport::from_values(kl, tie_tol))
}

/// Candidates whose detection probability matches the source's at every
/// measurement location within `tol`.
///
/// The exact set is a continuum; this evaluates it on an explicit candidate list.
pub fn ambiguity_set_a(
    s: &Point,
    xs: &[Point],
    candidates: &[Point],
    m: &DetectionModel,
    tol: f64,
) -> Result<Vec<Point>> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("ambiguity tolerance must be > 0, got {tol}")));
    }
    let truth = xs.iter().map(|x| m.detection(s, x)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    'cand: for c in candidates {
        for (x, t) in xs.iter().zip(&truth) {
            let d = m.detection(c, x)?;
            // Compare on the smaller tail to keep resolution near 0 and 1.
            let gap = if t.ln_hit() <= t.ln_miss() { d.hit() - t.hit() } else { d.miss() - t.miss() };
            if gap.abs() > tol {
                continue 'cand;
            }
        }
        out.push(*c);
    }
    Ok(out)
}

/// Extreme detection probabilities and the likelihood-ratio bounds they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioBounds {
    pub l0: f64,
    pub l1: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl RatioBounds {
    /// `alpha = min(l0 / l1, (1 - l1) / (1 - l0))`, `beta = 1 / alpha`.
    pub fn from_extremes(l0: f64, l1: f64) -> Result<Self> {
        let lo = Detection::from_probability(l0)?;
        let hi = Detection::from_probability(l1)?;
        if l0 > l1 {
            return Err(Error::Domain(format!("l0 = {l0} exceeds l1 = {l1}")));
        }
        Ok(Self::from_detections(&lo, &hi))
    }

    fn from_detections(lo: &Detection, hi: &Detection) -> Self {
        let ln_alpha = (lo.ln_hit() - hi.ln_hit()).min(hi.ln_miss() - lo.ln_miss());
        Self { l0: lo.hit(), l1: hi.hit(), alpha: ln_alpha.exp(), beta: (-ln_alpha).exp() }
    }

    /// Whether `z` lies in `[alpha, beta]` up to relative rounding `rel`.
    pub fn contains(&self, z: f64, rel: f64) -> bool {
        z >= self.alpha * (1.0 - rel) && z <= self.beta * (1.0 + rel)
    }
}

/// Bounds over every pair in `(centres + {s}) x xs`.
pub fn ratio_bounds(cs: &CentreSet, xs: &[Point], s: &Point, m: &DetectionModel) -> Result<RatioBounds> {
    if xs.is_empty() {
        return Err(Error::Domain("measurement location list must not be empty".into()));
    }
    let mut lo: Option<Detection> = None;
    let mut hi: Option<Detection> = None;
    for c in cs.centres().iter().chain(std::iter::once(s)) {
        for x in xs {
            let d = m.detection(c, x)?;
            if lo.is_none_or(|l| d.ln_hit() < l.ln_hit()) {
                lo = Some(d);
            }
            if hi.is_none_or(|h| d.ln_hit() > h.ln_hit()) {
                hi = Some(d);
            }
        }
    }
    Ok(RatioBounds::from_detections(&lo.unwrap(), &hi.unwrap()))
}

/// Verifies `env_m >= true_m` on `samples` uniform pairs over `region x region`
/// plus every explicitly listed pair.
pub fn check_envelope(
    true_m: &DetectionModel,
    env_m: &DetectionModel,
    region: &Rect,
    extra_pairs: &[(Point, Point)],
    samples: usize,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x656e_7665_6c6f_7065);
    let sampled = (0..samples).map(|_| (region.sample(&mut rng), region.sample(&mut rng)));
    for (s, x) in extra_pairs.iter().copied().chain(sampled) {
        let truth = true_m.detection(&s, &x)?;
        let env = env_m.detection(&s, &x)?;
        if env.ln_hit() < truth.ln_hit() {
            return Err(Error::EnvelopeViolation {
                assumed: env.hit(),
                truth: truth.hit(),
                source_xy: [s.x, s.y],
                agent_xy: [x.x, x.y],
            });
        }
    }
    Ok(())
}

/// KL minimisers when the estimator runs on `env_m` while readings follow `true_m`.
pub fn envelope_minimiser_set(
    s: &Point,
    xs: &[Point],
    cs: &CentreSet,
    true_m: &DetectionModel,
    env_m: &DetectionModel,
    tie_tol: f64,
) -> Result<KlReport> {
    let pairs: Vec<(Point, Point)> = cs
        .centres()
        .iter()
        .chain(std::iter::once(s))
        .flat_map(|c| xs.iter().map(move |x| (*c, *x)))
        .collect();
    check_envelope(true_m, env_m, cs.region(), &pairs, ENVELOPE_CHECK_SAMPLES)?;
    let kl = cs
        .centres()
        .iter()
        .map(|c| envelope_kl(s, c, xs, true_m, env_m))
        .collect::<Result<Vec<_>>>()?;
    Ok(KlReport::from_values(kl, tie_tol))
}
