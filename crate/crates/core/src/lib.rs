//! Localisation of a stationary signal source from noisy binary detections.
//!
//! A team of agents reports one-bit readings to a fusion centre, which keeps a
//! discretised Bayesian posterior over a finite set of centres. Around that
//! estimator the crate provides:
//!
//! * [`detect_model`]: probability-of-detection functions (Friis + Q-function,
//!   analytic range profiles, tabulated profiles) and the Bernoulli likelihood.
//! * [`estimator`]: the grid posterior, its recursion and summaries, and the
//!   importance-sampling initialisation.
//! * [`info_geometry`]: expected log-likelihood ratios, KL divergences and the
//!   indistinguishability / KL-minimiser sets used to reason about consistency.
//! * [`fisher_design`]: Fisher information for binary readings and D-optimal
//!   equidistant formations.
//! * [`sim_engine`]: closed-loop multi-agent simulation with a delayed fusion
//!   centre and a formation control law.
//! * [`convergence_lab`]: finite-sample checks of the product-of-ratios lemmas
//!   and the Hoeffding rate bound.
//! * [`bench`]: Monte Carlo harness, SIR baseline and model-mismatch sweeps.
//! * [`config`]: scenario files.

pub mod bench;
pub mod config;
pub mod convergence_lab;
pub mod detect_model;
pub mod error;
pub mod estimator;
pub mod fisher_design;
pub mod info_geometry;
pub mod report;
pub mod sim_engine;

pub use error::{Error, Result};

/// Planar location or displacement in metres.
pub type Point = nalgebra::Vector2<f64>;

/// Shorthand for building a [`Point`].
#[inline]
pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

/// Axis-aligned rectangle, metres.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }

    /// Square of side `2 * half_width` centred on the origin.
    pub fn centred_square(half_width: f64) -> Self {
        Self::new(-half_width, half_width, -half_width, half_width)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn centre(&self) -> Point {
        pt(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x_min >= self.x_min
            && other.x_max <= self.x_max
            && other.y_min >= self.y_min
            && other.y_max <= self.y_max
    }

    /// Grows every side by `margin`.
    pub fn inflate(&self, margin: f64) -> Self {
        Self::new(self.x_min - margin, self.x_max + margin, self.y_min - margin, self.y_max + margin)
    }

    /// Uniform draw from the rectangle.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Point {
        pt(
            self.x_min + self.width() * rng.random::<f64>(),
            self.y_min + self.height() * rng.random::<f64>(),
        )
    }
}
