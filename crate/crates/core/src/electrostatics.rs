//! Exact sphere-plate electrostatics from the bispherical image-charge series.
//!
//! The force gradient between a sphere of radius `R` held at potential
//! difference `V - V0` from a grounded plate at surface separation `a` is
//!
//! ```text
//! ∂F/∂a = 2π ε0 (V - V0)² / sqrt(a (2R + a))
//!         × Σ_{n≥1} csch(nα) { n coth(nα) [n coth(nα) - coth α] - csch²α + n² csch²(nα) }
//! ```
//!
//! with `cosh α = 1 + a/R`. All returned magnitudes are positive; the force is
//! attractive.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::VACUUM_PERMITTIVITY;
use crate::error::{Error, Result};
use crate::numerics::{sum_series, SeriesResult, DEFAULT_REL_TOL};

/// Summands with `nα` above this are below the smallest subnormal and are dropped.
const MAX_EXPONENT: f64 = 350.0;

pub const DEFAULT_MAX_TERMS: usize = 1_000_000;

/// Laurent coefficients of `coth x - 1/x = Σ c_k x^(2k-1)`.
const COTH_COEFFS: [f64; 9] = [
    1.0 / 3.0,
    -1.0 / 45.0,
    2.0 / 945.0,
    -1.0 / 4725.0,
    2.0 / 93555.0,
    -1382.0 / 638_512_875.0,
    4.0 / 18_243_225.0,
    -3617.0 / 162_820_783_125.0,
    87734.0 / 38_979_295_480_125.0,
];

const SERIES_CUTOFF: f64 = 0.5;

/// `coth x - 1/x`, accurate for small `x`.
fn coth_minus_inv(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        let x2 = x * x;
        let mut acc = 0.0;
        for c in COTH_COEFFS.iter().rev() {
            acc = acc * x2 + c;
        }
        acc * x
    } else {
        1.0 / x.tanh() - 1.0 / x
    }
}

/// `csch² x - 1/x²`, accurate for small `x`.
fn csch2_minus_inv2(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        let x2 = x * x;
        let mut acc = 0.0;
        for (k, c) in COTH_COEFFS.iter().enumerate().rev() {
            acc = acc * x2 + c * (2 * k + 1) as f64;
        }
        -acc
    } else {
        let s = 1.0 / x.sinh();
        s * s - 1.0 / (x * x)
    }
}

fn csch(x: f64) -> f64 {
    let e = (-x).exp();
    2.0 * e / (1.0 - e * e)
}

/// Sphere radius and surface separation, both in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePlateGeometry {
    radius: f64,
    separation: f64,
}

impl SpherePlateGeometry {
    /// Geometry inside the experiment's operating regime `0 < a ≤ R`.
    pub fn new(radius: f64, separation: f64) -> Result<Self> {
        let g = Self::unrestricted(radius, separation)?;
        if separation > radius {
            return Err(Error::OutOfRange(format!(
                "separation {separation:e} m larger than sphere radius {radius:e} m"
            )));
        }
        Ok(g)
    }

    /// Any positive radius and separation, e.g. for far-field checks with `a ≫ R`.
    pub fn unrestricted(radius: f64, separation: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("sphere radius must be positive, got {radius}")));
        }
        if !(separation > 0.0 && separation.is_finite()) {
            return Err(Error::invalid(format!("separation must be positive, got {separation}")));
        }
        Ok(Self { radius, separation })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn alpha(&self) -> f64 {
        alpha_of(self)
    }
}

/// Applied voltage and residual potential difference, in volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectricDrive {
    pub applied_voltage: f64,
    pub residual_potential: f64,
}

impl ElectricDrive {
    pub fn new(applied_voltage: f64, residual_potential: f64) -> Self {
        Self { applied_voltage, residual_potential }
    }

    /// Drive with the given uncompensated potential difference `V - V0`.
    pub fn from_difference(delta: f64) -> Self {
        Self { applied_voltage: delta, residual_potential: 0.0 }
    }

    pub fn difference(&self) -> f64 {
        self.applied_voltage - self.residual_potential
    }
}

/// `arccosh(1 + a/R)` in the cancellation-free form `ln(1 + x + sqrt(x² + 2x))`.
pub fn alpha_of(geometry: &SpherePlateGeometry) -> f64 {
    let x = geometry.separation / geometry.radius;
    (x + (x * (x + 2.0)).sqrt()).ln_1p()
}

/// The `n`-th bracketed summand of the force-gradient series.
///
/// `n coth(nα) - coth α` and `csch²α - n² csch²(nα)` are formed from the
/// regular parts of coth and csch² so their `1/α` poles cancel exactly.
pub fn beta_summand(n: usize, alpha: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    let x = nf * alpha;
    if x > MAX_EXPONENT {
        return 0.0;
    }
    let g_n = coth_minus_inv(x);
    let coth_n = 1.0 / x + g_n;
    let pole_free = nf * g_n - coth_minus_inv(alpha);
    let brace = nf * coth_n * pole_free - csch2_minus_inv2(alpha) + nf * nf * csch2_minus_inv2(x);
    csch(x) * brace
}

/// Settings of the electrostatic series.
#[derive(Debug, Clone, Copy)]
pub struct BetaSeries {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for BetaSeries {
    fn default() -> Self {
        Self { rel_tol: DEFAULT_REL_TOL, max_terms: DEFAULT_MAX_TERMS }
    }
}

/// Raw sum `Σ_{n≥1}` of [`beta_summand`], with truncation bookkeeping.
/// `terms_used` counts summands from `n = 2`; the `n = 1` summand vanishes identically.
///
/// Summands decay like `e^{-nα}`, so the tail after a stopping term `t` is about
/// `t / (1 - e^{-α})`; the per-term tolerance is tightened by that factor.
pub fn beta_series_sum(alpha: f64, series: &BetaSeries) -> Result<SeriesResult> {
    let tail_factor = -(-alpha).exp_m1();
    sum_series(|k| beta_summand(k + 1, alpha), series.rel_tol * tail_factor, series.max_terms)
}

/// Force gradient per unit squared potential difference, N/(m·V²).
pub fn beta_geometric(geometry: &SpherePlateGeometry) -> Result<f64> {
    beta_geometric_with(geometry, &BetaSeries::default())
}

pub fn beta_geometric_with(geometry: &SpherePlateGeometry, series: &BetaSeries) -> Result<f64> {
    let a = geometry.separation;
    let r = geometry.radius;
    let sum = beta_series_sum(alpha_of(geometry), series)?;
    if !sum.converged {
        return Err(Error::SeriesNotConverged { value: sum.value, terms: sum.terms_used });
    }
    Ok(2.0 * PI * VACUUM_PERMITTIVITY / (a * (2.0 * r + a)).sqrt() * sum.value)
}

/// Electrostatic force gradient `β_geom (V - V0)²`, N/m.
pub fn electric_force_gradient(geometry: &SpherePlateGeometry, drive: &ElectricDrive) -> Result<f64> {
    let dv = drive.difference();
    if dv == 0.0 {
        return Ok(0.0);
    }
    Ok(beta_geometric(geometry)? * dv * dv)
}

/// Leading-order small-gap gradient `π ε0 R (V - V0)² / a²`.
pub fn electric_force_gradient_asymptote(geometry: &SpherePlateGeometry, drive: &ElectricDrive) -> f64 {
    let dv = drive.difference();
    PI * VACUUM_PERMITTIVITY * geometry.radius * dv * dv / (geometry.separation * geometry.separation)
}

/// Effective parallel-plate electric pressure obtained from the gradient through
/// the proximity-force mapping `P = (∂F/∂a) / (2πR)`, Pa.
pub fn electric_pressure_pfa(geometry: &SpherePlateGeometry, drive: &ElectricDrive) -> Result<f64> {
    Ok(electric_force_gradient(geometry, drive)? / (2.0 * PI * geometry.radius))
}
