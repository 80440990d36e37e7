//! Finite-sample checks on products and averages of independent random
//! variables, the machinery behind posterior decay: a product of bounded
//! factors with negative log-drift sinks below any threshold, at a rate
//! controlled by Hoeffding's inequality.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim_engine::trial_rng;
use crate::{Error, Result};

/// Distribution of one positive factor `Z_k`, supported in `[alpha, beta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FactorDist {
    /// `low` with probability `p_low`, otherwise `high`.
    TwoPoint { low: f64, high: f64, p_low: f64 },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl FactorDist {
    /// Support bounds `(alpha, beta)`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::TwoPoint { low, high, .. } | Self::Uniform { low, high } => (low, high),
            Self::Constant { value } => (value, value),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.bounds();
        if !(a > 0.0 && a <= b && b.is_finite()) {
            return Err(Error::Domain(format!("factor support [{a}, {b}] must satisfy 0 < alpha <= beta")));
        }
        if let Self::TwoPoint { p_low, .. } = self {
            if !(0.0..=1.0).contains(p_low) {
                return Err(Error::Domain(format!("p_low = {p_low} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// `E[ln Z]`.
    pub fn mean_log(&self) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_low } => p_low * low.ln() + (1.0 - p_low) * high.ln(),
            Self::Uniform { low, high } if high > low => {
                let f = |x: f64| x * x.ln() - x;
                (f(high) - f(low)) / (high - low)
            }
            Self::Uniform { low, .. } => low.ln(),
            Self::Constant { value } => value.ln(),
        }
    }

    /// Draws `ln Z`.
    pub fn sample_log<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::TwoPoint { low, high, p_low } => {
                if rng.random::<f64>() < p_low {
                    low.ln()
                } else {
                    high.ln()
                }
            }
            Self::Uniform { low, high } => (low + (high - low) * rng.random::<f64>()).ln(),
            Self::Constant { value } => value.ln(),
        }
    }
}

/// Repeated products `prod_{k <= n} Z_k` compared with a threshold `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductExperiment {
    pub factor: FactorDist,
    pub horizon: usize,
    pub trials: usize,
    pub eps: f64,
}

impl ProductExperiment {
    pub fn validate(&self) -> Result<()> {
        self.factor.validate()?;
        if self.horizon == 0 || self.trials == 0 {
            return Err(Error::Domain("horizon and trials must be >= 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Domain(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }

    /// `gamma_n = sum_k E[ln Z_k]` for i.i.d. factors.
    pub fn gamma(&self) -> f64 {
        self.horizon as f64 * self.factor.mean_log()
    }

    /// [`hoeffding_bound`] at this experiment's parameters.
    pub fn hoeffding(&self) -> Result<f64> {
        let (a, b) = self.factor.bounds();
        hoeffding_bound(self.gamma(), self.horizon, a, b, self.eps)
    }
}

/// `P(prod Z_k >= eps) <= exp(-2 (ln eps - gamma_n)^2 / (n (ln beta - ln alpha)^2))`.
///
/// Only meaningful once `ln eps > gamma_n`.
pub fn hoeffding_bound(gamma_n: f64, n: usize, alpha: f64, beta: f64, eps: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < beta && beta.is_finite()) {
        return Err(Error::Domain(format!("need 0 < alpha < beta, got [{alpha}, {beta}]")));
    }
    if n == 0 || !(eps > 0.0) {
        return Err(Error::Domain("need n >= 1 and eps > 0".into()));
    }
    let gap = eps.ln() - gamma_n;
    if !(gap > 0.0) {
        return Err(Error::Domain(format!("bound needs ln eps > gamma_n; ln eps = {}, gamma_n = {gamma_n}", eps.ln())));
    }
    let width = (beta / alpha).ln();
    Ok((-2.0 * gap * gap / (n as f64 * width * width)).exp())
}

/// `sum ln Z_k`; stays finite where the plain product would not.
pub fn log_product(factors: impl IntoIterator<Item = f64>) -> f64 {
    factors.into_iter().map(f64::ln).sum()
}

/// Fraction of trials whose product reaches `eps`. Trial `t` uses stream `t` of `seed`.
pub fn empirical_product_tail(exp: &ProductExperiment, seed: u64) -> Result<f64> {
    exp.validate()?;
    let ln_eps = exp.eps.ln();
    let hits = (0..exp.trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = trial_rng(seed, t as u64);
            let s: f64 = (0..exp.horizon).map(|_| exp.factor.sample_log(&mut rng)).sum();
            s >= ln_eps
        })
        .count();
    Ok(hits as f64 / exp.trials as f64)
}

/// One row of the tail-versus-bound table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub n: usize,
    pub eps: f64,
    pub empirical: f64,
    /// `None` outside the bound regime.
    pub bound: Option<f64>,
    pub trials: usize,
}

impl TailRow {
    /// Binomial standard error of the empirical frequency, using the bound as `p`.
    pub fn standard_error(&self) -> Option<f64> {
        self.bound.map(|p| (p * (1.0 - p) / self.trials as f64).sqrt())
    }

    /// `empirical <= bound + 3 SE`; vacuous outside the regime.
    pub fn within_bound(&self) -> bool {
        match (self.bound, self.standard_error()) {
            (Some(b), Some(se)) => self.empirical <= b + 3.0 * se,
            _ => true,
        }
    }
}

/// Empirical tails and bounds over a grid of horizons and thresholds.
pub fn product_tail_table(
    factor: FactorDist,
    horizons: &[usize],
    thresholds: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<TailRow>> {
    let mut rows = Vec::new();
    for &n in horizons {
        for &eps in thresholds {
            let exp = ProductExperiment { factor, horizon: n, trials, eps };
            let bound = match exp.hoeffding() {
                Ok(b) => Some(b),
                Err(Error::Domain(_)) => None,
                Err(e) => return Err(e),
            };
            rows.push(TailRow { n, eps, empirical: empirical_product_tail(&exp, seed)?, bound, trials });
        }
    }
    Ok(rows)
}

/// Bounded zero-mean sequences for the normalised-sum test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DriftSamples {
    Zero,
    /// `+-scale` with equal probability.
    Rademacher { scale: f64 },
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
}

impl DriftSamples {
    pub fn std_dev(&self) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Rademacher { scale } => scale.abs(),
            Self::Uniform { half_width } => half_width.abs() / 3f64.sqrt(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Rademacher { scale } => {
                if rng.random::<bool>() {
                    scale
                } else {
                    -scale
                }
            }
            Self::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

/// `n^{-p} sum_{k <= n} W_k` along one seeded path.
pub fn cesaro_drift(samples: &DriftSamples, p: f64, n: usize, seed: u64) -> Result<f64> {
    Ok(cesaro_path(samples, p, &[n], seed)?[0])
}

/// [`cesaro_drift`] read off one path at several horizons (sorted ascending).
pub fn cesaro_path(samples: &DriftSamples, p: f64, horizons: &[usize], seed: u64) -> Result<Vec<f64>> {
    if !(p > 0.5) {
        return Err(Error::Domain(format!("exponent p must exceed 0.5, got {p}")));
    }
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] > w[1]) || horizons[0] == 0 {
        return Err(Error::Domain("horizons must be ascending and >= 1".into()));
    }
    let mut rng = trial_rng(seed, 0);
    let mut sum = 0.0;
    let mut k = 0;
    let mut out = Vec::with_capacity(horizons.len());
    for &n in horizons {
        while k < n {
            sum += samples.sample(&mut rng);
            k += 1;
        }
        out.push(sum / (n as f64).powf(p));
    }
    Ok(out)
}
