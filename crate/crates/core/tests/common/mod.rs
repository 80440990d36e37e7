//! Reference formulas written directly from the model definitions, without
//! going through the library's likelihood code.

#![allow(dead_code)]

use bitloc::detect_model::{AnalyticProfile, DetectionModel, FriisParams};
use bitloc::Point;

/// `(l, 1 - l)` straight from the definitions.
pub fn hit_miss(m: &DetectionModel, s: &Point, x: &Point) -> (f64, f64) {
    let r2 = (s.x - x.x).powi(2) + (s.y - x.y).powi(2);
    match m {
        DetectionModel::FriisQ(p) => friis_hit_miss(p, r2),
        DetectionModel::GenericRange(AnalyticProfile::Gaussian { floor, peak, width }) => {
            let l = floor + (peak - floor) * (-r2 / (2.0 * width * width)).exp();
            (l, 1.0 - l)
        }
        DetectionModel::GenericRange(AnalyticProfile::Logistic { near, far, midpoint, scale }) => {
            let l = far + (near - far) / (1.0 + ((r2.sqrt() - midpoint) / scale).exp());
            (l, 1.0 - l)
        }
        DetectionModel::GenericRange(AnalyticProfile::Constant { p }) => (*p, 1.0 - p),
        _ => panic!("no reference formula for {m:?}"),
    }
}

pub fn friis_hit_miss(p: &FriisParams, r2: f64) -> (f64, f64) {
    let power = p.a_r * p.a_t * p.p_t / (p.wavelength * p.wavelength * (r2 + p.altitude * p.altitude));
    let u = (p.threshold - power) / p.noise_sigma;
    let q = |v: f64| 0.5 * libm::erfc(v / std::f64::consts::SQRT_2);
    (q(u), q(-u))
}

pub fn ln_g(m: &DetectionModel, reading: bool, s: &Point, x: &Point) -> f64 {
    let (h, mi) = hit_miss(m, s, x);
    if reading {
        h.ln()
    } else {
        mi.ln()
    }
}

/// `-E[hess_s ln g(d | s; x)]` over `d ~ g(. | s; x)`, by fourth-order central
/// differences with step `h`.
pub fn expected_neg_hessian(m: &DetectionModel, s: &Point, x: &Point, h: f64) -> [[f64; 2]; 2] {
    let weights = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    let (hit, miss) = hit_miss(m, s, x);
    let mut out = [[0.0; 2]; 2];
    for (reading, p) in [(true, hit), (false, miss)] {
        let f = |dx: f64, dy: f64| ln_g(m, reading, &Point::new(s.x + dx, s.y + dy), x);
        let pure = |axis: usize| {
            let e = |t: f64| if axis == 0 { f(t, 0.0) } else { f(0.0, t) };
            (-e(2.0 * h) + 16.0 * e(h) - 30.0 * e(0.0) + 16.0 * e(-h) - e(-2.0 * h)) / (12.0 * h * h)
        };
        let mut mixed = 0.0;
        for (i, wi) in weights {
            for (j, wj) in weights {
                mixed += wi * wj * f(i * h, j * h);
            }
        }
        mixed /= 144.0 * h * h;
        let hess = [[pure(0), mixed], [mixed, pure(1)]];
        for a in 0..2 {
            for b in 0..2 {
                out[a][b] -= p * hess[a][b];
            }
        }
    }
    out
}

/// KL divergence between the joint reading distributions, summed over all
/// `2^n` outcomes.
pub fn exhaustive_kl(m: &DetectionModel, s: &Point, x: &Point, xs: &[Point]) -> f64 {
    let n = xs.len();
    let ps: Vec<(f64, f64)> = xs.iter().map(|a| hit_miss(m, s, a)).collect();
    let qs: Vec<(f64, f64)> = xs.iter().map(|a| hit_miss(m, x, a)).collect();
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let (mut p, mut q) = (1.0, 1.0);
        for k in 0..n {
            if mask >> k & 1 == 1 {
                p *= ps[k].0;
                q *= qs[k].0;
            } else {
                p *= ps[k].1;
                q *= qs[k].1;
            }
        }
        total += p * (p / q).ln();
    }
    total
}

/// Sequential importance sampling: particles carry `p0 / phi` and are
/// multiplied by each likelihood, with rescaling to avoid underflow.
/// Returns the normalised weights after every reading.
pub fn sis_weights(
    m: &DetectionModel,
    particles: &[Point],
    initial: &[f64],
    readings: &[(Point, bool)],
) -> Vec<Vec<f64>> {
    let mut w: Vec<f64> = initial.to_vec();
    let mut out = Vec::with_capacity(readings.len());
    for (x, d) in readings {
        for (wi, c) in w.iter_mut().zip(particles) {
            let (h, mi) = hit_miss(m, c, x);
            *wi *= if *d { h } else { mi };
        }
        let total: f64 = w.iter().sum();
        for wi in w.iter_mut() {
            *wi /= total;
        }
        out.push(w.clone());
    }
    out
}

/// A random detection model from one of the closed-form families, with
/// probabilities kept clear of 0 and 1.
pub fn random_model<R: rand::Rng>(rng: &mut R) -> DetectionModel {
    match rng.random_range(0..3) {
        0 => DetectionModel::FriisQ(FriisParams {
            p_t: rng.random_range(0.5..5.0),
            altitude: rng.random_range(5.0..15.0),
            noise_sigma: rng.random_range(1e-3..5e-3),
            ..FriisParams::default()
        }),
        1 => DetectionModel::GenericRange(AnalyticProfile::Gaussian {
            floor: rng.random_range(0.01..0.2),
            peak: rng.random_range(0.6..0.99),
            width: rng.random_range(3.0..20.0),
        }),
        _ => DetectionModel::GenericRange(AnalyticProfile::Logistic {
            near: rng.random_range(0.6..0.99),
            far: rng.random_range(0.01..0.2),
            midpoint: rng.random_range(5.0..30.0),
            scale: rng.random_range(1.0..8.0),
        }),
    }
}

pub fn random_point<R: rand::Rng>(rng: &mut R, half_width: f64) -> Point {
    Point::new(rng.random_range(-half_width..half_width), rng.random_range(-half_width..half_width))
}
