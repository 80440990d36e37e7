//! Fisher information for binary readings and D-optimal formation design.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::detect_model::{DetectionModel, RangeProfile};
use crate::{pt, Error, Point, Result};

/// Grid points used before golden-section refinement of the radius.
pub const RADIUS_GRID_POINTS: usize = 1000;
/// Absolute tolerance of the refined radius, m.
pub const RADIUS_TOL: f64 = 1e-4;

/// Symmetric 2x2 Fisher information matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMatrix2(pub Matrix2<f64>);

impl Default for InfoMatrix2 {
    fn default() -> Self {
        Self::zeros()
    }
}

impl InfoMatrix2 {
    pub fn zeros() -> Self {
        Self(Matrix2::zeros())
    }

    /// `g g^T / v`.
    pub fn outer(g: &Point, scale: f64) -> Self {
        Self(g * g.transpose() * scale)
    }

    pub fn from_entries(a: f64, b: f64, d: f64) -> Self {
        Self(Matrix2::new(a, b, b, d))
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let half_tr = 0.5 * self.trace();
        let disc = (half_tr * half_tr - self.det()).max(0.0).sqrt();
        [half_tr - disc, half_tr + disc]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.0[(0, 1)] - self.0[(1, 0)]).abs() <= tol
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.eigenvalues()[0] >= -tol
    }

    /// Numerical rank with relative threshold `rel` on the eigenvalues.
    pub fn rank(&self, rel: f64) -> usize {
        let [lo, hi] = self.eigenvalues();
        if hi <= 0.0 {
            0
        } else if lo.abs() <= rel * hi {
            1
        } else {
            2
        }
    }

    /// `R M R^T` for a rotation by `phi`.
    pub fn rotated(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let r = Matrix2::new(c, -s, s, c);
        Self(r * self.0 * r.transpose())
    }
}

impl std::ops::Add for InfoMatrix2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for InfoMatrix2 {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

/// Information carried by one reading, with a flag for a vanishing gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadingInfo {
    pub info: InfoMatrix2,
    pub singular_gradient: bool,
}

/// `grad l grad l^T / (l (1 - l))` for one reading at `x`.
///
/// The gradient is analytic for Friis and closed-form profiles and a central
/// difference for tabulated ones. A zero gradient yields the zero matrix.
pub fn fim_single(s: &Point, x: &Point, m: &DetectionModel) -> Result<ReadingInfo> {
    let g = m.gradient_wrt_source(s, x)?;
    if g.norm_squared() == 0.0 {
        return Ok(ReadingInfo { info: InfoMatrix2::zeros(), singular_gradient: true });
    }
    let d = m.detection(s, x)?;
    Ok(ReadingInfo { info: InfoMatrix2::outer(&g, 1.0 / (d.hit() * d.miss())), singular_gradient: false })
}

/// Sum of [`fim_single`] over the measurement locations.
pub fn fim_total(s: &Point, xs: &[Point], m: &DetectionModel) -> Result<InfoMatrix2> {
    if xs.is_empty() {
        return Err(Error::Domain("measurement location list must not be empty".into()));
    }
    let mut total = InfoMatrix2::zeros();
    for x in xs {
        total += fim_single(s, x, m)?.info;
    }
    Ok(total)
}

/// The range-model closed form: a sum of `rho'^2 / (rho (1 - rho))` times the
/// bearing projector of each agent.
pub fn fim_closed_form<P: RangeProfile + ?Sized>(s: &Point, xs: &[Point], profile: &P) -> Result<InfoMatrix2> {
    let mut total = InfoMatrix2::zeros();
    for x in xs {
        let diff = x - s;
        let r = diff.norm();
        if r == 0.0 {
            continue;
        }
        let theta = diff.y.atan2(diff.x);
        total += bearing_projector(theta, profile.information_density(r)?);
    }
    Ok(total)
}

fn bearing_projector(theta: f64, kappa: f64) -> InfoMatrix2 {
    let (s, c) = theta.sin_cos();
    let (s2, _) = (2.0 * theta).sin_cos();
    InfoMatrix2::from_entries(kappa * c * c, kappa * 0.5 * s2, kappa * s * s)
}

/// `(sum cos 2 theta_k, sum sin 2 theta_k)`; zero exactly at D-optimal bearings.
pub fn angle_condition_residual(angles: &[f64]) -> (f64, f64) {
    angles.iter().fold((0.0, 0.0), |(c, s), &t| {
        let (s2, c2) = (2.0 * t).sin_cos();
        (c + c2, s + s2)
    })
}

/// Determinant of the summed unit bearing projectors.
pub fn angle_determinant(angles: &[f64]) -> f64 {
    angles.iter().fold(InfoMatrix2::zeros(), |acc, &t| acc + bearing_projector(t, 1.0)).det()
}

/// Largest attainable [`angle_determinant`] for `n` bearings: `n^2 / 4`.
pub fn max_angle_determinant(n: usize) -> f64 {
    let n = n as f64;
    n * n / 4.0
}

/// Maximiser of `rho'^2 / (rho (1 - rho))` over `[r1, r2]`.
///
/// A 1000-point grid picks the bracket, golden section refines it; a flat
/// objective resolves toward the smaller radius.
pub fn optimal_radius<P: RangeProfile + ?Sized>(profile: &P, r1: f64, r2: f64) -> Result<f64> {
    if !(r1 > 0.0 && r1 <= r2 && r2.is_finite()) {
        return Err(Error::Domain(format!("radius interval [{r1}, {r2}] must satisfy 0 < r1 <= r2")));
    }
    if r1 == r2 {
        return Ok(r1);
    }
    let n = RADIUS_GRID_POINTS;
    let h = (r2 - r1) / (n - 1) as f64;
    let grid_r = |i: usize| if i == n - 1 { r2 } else { r1 + i as f64 * h };
    let mut best = (0, profile.information_density(r1)?);
    for i in 1..n {
        let v = profile.information_density(grid_r(i))?;
        if v > best.1 {
            best = (i, v);
        }
    }
    let (i, best_v) = best;
    let (mut a, mut b) = (grid_r(i.saturating_sub(1)), grid_r((i + 1).min(n - 1)));
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = profile.information_density(c)?;
    let mut fd = profile.information_density(d)?;
    while b - a > RADIUS_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = profile.information_density(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = profile.information_density(d)?;
        }
    }
    let refined = 0.5 * (a + b);
    if profile.information_density(refined)? > best_v {
        Ok(refined)
    } else {
        Ok(grid_r(i))
    }
}

/// Default bearings: `2 pi k / N` for `N >= 3`, `(0, pi / 2)` for `N = 2`, `0` for one agent.
pub fn default_angles(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => vec![0.0, PI / 2.0],
        _ => (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect(),
    }
}

/// Points `anchor + r (cos theta_k, sin theta_k)` on the default bearings.
pub fn doptimal_placement(anchor: &Point, n: usize, r: f64) -> Result<Vec<Point>> {
    if n < 2 {
        return Err(Error::Domain(format!("D-optimal placement needs at least 2 agents, got {n}")));
    }
    GeometrySpec { radius: r, angles: default_angles(n), anchor: [anchor.x, anchor.y] }.positions()
}

/// A formation of agents on a circle about an anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub radius: f64,
    pub angles: Vec<f64>,
    pub anchor: [f64; 2],
}

impl GeometrySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Domain(format!("formation radius must be > 0, got {}", self.radius)));
        }
        if self.angles.is_empty() {
            return Err(Error::Domain("formation needs at least one angle".into()));
        }
        Ok(())
    }

    /// Formation offsets `r (cos theta, sin theta)`.
    pub fn offsets(&self) -> Result<Vec<Point>> {
        self.validate()?;
        Ok(self.angles.iter().map(|t| pt(self.radius * t.cos(), self.radius * t.sin())).collect())
    }

    pub fn positions(&self) -> Result<Vec<Point>> {
        let a = pt(self.anchor[0], self.anchor[1]);
        Ok(self.offsets()?.into_iter().map(|d| a + d).collect())
    }
}
