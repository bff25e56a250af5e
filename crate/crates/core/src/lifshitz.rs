//! Finite-temperature Lifshitz pressure between two identical parallel plates,
//! and the proximity-force mapping to the sphere-plate force gradient.
//!
//! ```text
//! P(a, T) = (k_B T / π) Σ'_{l≥0} ∫₀^∞ k q_l Σ_pol [e^{2 q_l a} / r_pol² - 1]⁻¹ dk
//! ```
//!
//! After `y = 2 q_l a` each Matsubara term becomes
//! `(k_B T / 8π a³) ∫_{y_l}^∞ y² Σ_pol r² e^{-y} / (1 - r² e^{-y}) dy`, `y_l = 2 ξ_l a / c`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::constants::{ev_to_rad_per_s, BOLTZMANN, HBAR, NM, SPEED_OF_LIGHT, UM};
use crate::error::{Error, Result};
use crate::numerics::{integrate_semi_infinite, sum_series, DEFAULT_REL_TOL};
use crate::optics::{matsubara_grid, Extrapolation, PermittivityModel};

pub const MIN_SEPARATION: f64 = 50.0 * NM;
pub const MAX_SEPARATION: f64 = 5.0 * UM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifshitzSettings {
    pub temperature: f64,
    /// Hard cap on the Matsubara index.
    pub l_max: usize,
    pub k_rel_tol: f64,
    pub series_rel_tol: f64,
}

impl Default for LifshitzSettings {
    fn default() -> Self {
        Self { temperature: 300.0, l_max: 5000, k_rel_tol: DEFAULT_REL_TOL, series_rel_tol: DEFAULT_REL_TOL }
    }
}

impl LifshitzSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.l_max < 1 {
            return Err(Error::invalid("l_max must be at least 1"));
        }
        for (name, v) in [("k_rel_tol", self.k_rel_tol), ("series_rel_tol", self.series_rel_tol)] {
            if !(v > 0.0 && v <= 1e-3) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1e-3], got {v}")));
            }
        }
        Ok(())
    }
}

/// Pressure magnitudes (attraction positive) on a separation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub separations: Vec<f64>,
    pub pressures: Vec<f64>,
    pub sigmas: Option<Vec<f64>>,
    pub label: String,
}

impl PressureCurve {
    pub fn new(
        separations: Vec<f64>,
        pressures: Vec<f64>,
        sigmas: Option<Vec<f64>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let curve = Self { separations, pressures, sigmas, label: label.into() };
        curve.validate()?;
        Ok(curve)
    }

    /// Lengths agree and separations strictly increase. Monotone decay of the
    /// pressures is a physical expectation checked separately by [`Self::is_decreasing`],
    /// since noisy measured curves need not satisfy it.
    pub fn validate(&self) -> Result<()> {
        if self.separations.len() != self.pressures.len() {
            return Err(Error::invalid("pressure curve: separations and pressures differ in length"));
        }
        if let Some(s) = &self.sigmas {
            if s.len() != self.separations.len() {
                return Err(Error::invalid("pressure curve: sigma length mismatch"));
            }
        }
        if self.separations.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("pressure curve: separations must strictly increase"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.separations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.separations.is_empty()
    }

    pub fn is_decreasing(&self) -> bool {
        self.pressures.windows(2).all(|w| w[1] < w[0])
    }
}

/// Fresnel coefficients at imaginary frequency `xi` (rad/s) and in-plane wave
/// vector `k_perp` (1/m) for vacuum against a medium of permittivity `eps`.
pub fn fresnel_imag(eps: f64, xi: f64, k_perp: f64) -> (f64, f64) {
    let w2 = (xi / SPEED_OF_LIGHT).powi(2);
    let q = (k_perp * k_perp + w2).sqrt();
    let km = (k_perp * k_perp + eps * w2).sqrt();
    if eps.is_infinite() {
        return (1.0, -1.0);
    }
    ((eps * q - km) / (eps * q + km), (q - km) / (q + km))
}

/// Reflection coefficients of the `ξ = 0` Matsubara term.
///
/// Drude: `(1, 0)`. Plasma: `(1, (k - sqrt(k² + ωp²/c²)) / (k + sqrt(k² + ωp²/c²)))`.
pub fn zero_frequency_reflection(variant: Extrapolation, omega_p: f64, k_perp: f64) -> (f64, f64) {
    match variant {
        Extrapolation::DrudeExtrapolated => (1.0, 0.0),
        Extrapolation::GeneralizedPlasma => {
            let kp = (k_perp * k_perp + (omega_p / SPEED_OF_LIGHT).powi(2)).sqrt();
            (1.0, (k_perp - kp) / (k_perp + kp))
        }
    }
}

/// `r² e^{-y} / (1 - r² e^{-y})` given `r²` and `1 - r²` computed without cancellation.
#[inline]
fn mode_occupation(r2: f64, one_minus_r2: f64, y: f64) -> f64 {
    if r2 == 0.0 {
        return 0.0;
    }
    let denom = one_minus_r2 - r2 * (-y).exp_m1();
    r2 * (-y).exp() / denom
}

/// `(r², 1 - r²)` for `r = (x - K)/(x + K)`.
#[inline]
fn reflectivity(x: f64, big_k: f64) -> (f64, f64) {
    let s = x + big_k;
    let r = (x - big_k) / s;
    (r * r, 4.0 * x * big_k / (s * s))
}

/// Lifshitz pressure evaluator holding a lazily filled `ε(iξ_l)` cache for one
/// model and temperature. Shareable across threads.
#[derive(Debug)]
pub struct LifshitzCalculator {
    model: PermittivityModel,
    settings: LifshitzSettings,
    xi: Vec<f64>,
    eps: Vec<OnceLock<f64>>,
}

impl LifshitzCalculator {
    pub fn new(model: PermittivityModel, settings: LifshitzSettings) -> Result<Self> {
        settings.validate()?;
        let xi = matsubara_grid(settings.temperature, settings.l_max)?;
        let eps = (0..xi.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { model, settings, xi, eps })
    }

    pub fn model(&self) -> &PermittivityModel {
        &self.model
    }

    pub fn settings(&self) -> &LifshitzSettings {
        &self.settings
    }

    fn eps_at(&self, l: usize) -> Result<f64> {
        if let Some(v) = self.eps[l].get() {
            return Ok(*v);
        }
        let v = self.model.eval(self.xi[l])?;
        Ok(*self.eps[l].get_or_init(|| v))
    }

    /// Dimensionless integral `∫ y² Σ_pol occupation dy` of Matsubara term `l`.
    fn matsubara_integral(&self, l: usize, a: f64) -> Result<f64> {
        let tol = self.settings.k_rel_tol;
        if l == 0 {
            let wp = ev_to_rad_per_s(self.model.drude().plasma_ev);
            let plasma_y = 2.0 * a * wp / SPEED_OF_LIGHT;
            let variant = self.model.variant();
            return integrate_semi_infinite(
                |y| {
                    if y == 0.0 {
                        return 0.0;
                    }
                    let tm = y * y * (-y).exp() / -(-y).exp_m1();
                    let te = match variant {
                        Extrapolation::DrudeExtrapolated => 0.0,
                        Extrapolation::GeneralizedPlasma => {
                            let (r2, c2) = reflectivity(y, (y * y + plasma_y * plasma_y).sqrt());
                            y * y * mode_occupation(r2, c2, y)
                        }
                    };
                    tm + te
                },
                tol,
            );
        }
        let eps = self.eps_at(l)?;
        let yl = 2.0 * self.xi[l] * a / SPEED_OF_LIGHT;
        let extra = (eps - 1.0) * yl * yl;
        integrate_semi_infinite(
            |t| {
                let y = yl + t;
                let big_k = (y * y + extra).sqrt();
                let (tm2, tmc) = reflectivity(eps * y, big_k);
                let (te2, tec) = reflectivity(y, big_k);
                y * y * (mode_occupation(tm2, tmc, y) + mode_occupation(te2, tec, y))
            },
            tol,
        )
    }

    /// Casimir pressure magnitude between parallel plates at separation `a` (m), Pa.
    pub fn pressure(&self, a: f64) -> Result<f64> {
        if !(MIN_SEPARATION..=MAX_SEPARATION).contains(&a) {
            return Err(Error::OutOfRange(format!(
                "separation {a:e} m (valid {MIN_SEPARATION:e}..{MAX_SEPARATION:e} m)"
            )));
        }
        // Terms fall off like e^{-l y_1}; tighten the per-term test by the tail factor.
        let y1 = 2.0 * self.xi[1] * a / SPEED_OF_LIGHT;
        let tail_factor = -(-y1).exp_m1();
        let mut failure = None;
        let sum = sum_series(
            |n| {
                let l = n - 1;
                match self.matsubara_integral(l, a) {
                    Ok(v) if l == 0 => 0.5 * v,
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            self.settings.series_rel_tol * tail_factor,
            self.xi.len(),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let sum = sum?;
        let prefactor = BOLTZMANN * self.settings.temperature / (8.0 * PI * a * a * a);
        if !sum.converged {
            return Err(Error::MatsubaraNotConverged { partial: prefactor * sum.value, terms: sum.terms_used });
        }
        Ok(prefactor * sum.value)
    }

    /// Pressures on a grid as a curve labelled with the model variant.
    pub fn curve(&self, separations: &[f64]) -> Result<PressureCurve> {
        let pressures = separations.iter().map(|a| self.pressure(*a)).collect::<Result<Vec<_>>>()?;
        PressureCurve::new(separations.to_vec(), pressures, None, self.model.variant().label())
    }
}

/// Source of a parallel-plate Casimir pressure magnitude (Pa) at separation `a` (m).
pub trait PlatePressure: Send + Sync {
    fn plate_pressure(&self, a: f64) -> Result<f64>;
    fn label(&self) -> String;
}

impl PlatePressure for LifshitzCalculator {
    fn plate_pressure(&self, a: f64) -> Result<f64> {
        self.pressure(a)
    }

    fn label(&self) -> String {
        self.model.variant().label().to_string()
    }
}

/// No Casimir contribution; isolates the electrostatic part of a model.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCasimir;

impl PlatePressure for NoCasimir {
    fn plate_pressure(&self, _a: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn label(&self) -> String {
        "none".into()
    }
}

/// Zero-temperature perfect conductors, see [`ideal_casimir_pressure`].
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealConductor;

impl PlatePressure for IdealConductor {
    fn plate_pressure(&self, a: f64) -> Result<f64> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("separation must be positive, got {a}")));
        }
        Ok(ideal_casimir_pressure(a))
    }

    fn label(&self) -> String {
        "ideal".into()
    }
}

/// One-shot pressure evaluation. Prefer [`LifshitzCalculator`] for sweeps.
pub fn casimir_pressure_plates(a: f64, model: &PermittivityModel, settings: &LifshitzSettings) -> Result<f64> {
    LifshitzCalculator::new(model.clone(), *settings)?.pressure(a)
}

/// Zero-temperature perfect-conductor pressure `π² ħ c / (240 a⁴)`.
pub fn ideal_casimir_pressure(a: f64) -> f64 {
    PI * PI * HBAR * SPEED_OF_LIGHT / (240.0 * a.powi(4))
}

/// Sphere-plate force gradient from the plate pressure, `2πR P`.
pub fn sphere_gradient_from_pressure(pressure: f64, radius: f64) -> f64 {
    2.0 * PI * radius * pressure
}

/// Relative error of the proximity-force mapping, estimated as `a / (2R)`.
pub fn pfa_correction_estimate(a: f64, radius: f64) -> f64 {
    0.5 * a / radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{load_optical_table, DrudeParameters, TableFormat};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn au(variant: Extrapolation) -> PermittivityModel {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/au_optical.csv");
        let f = std::io::BufReader::new(std::fs::File::open(path).unwrap());
        let t = Arc::new(load_optical_table(f, TableFormat::EnergyNkCsv).unwrap());
        PermittivityModel::new(variant, t, DrudeParameters::default()).unwrap()
    }

    #[test]
    fn fresnel_limits_and_closed_form() {
        let k = 1e7;
        assert_eq!(fresnel_imag(1.0, 3e15, k), (0.0, 0.0));
        let (tm, te) = fresnel_imag(1e12, 3e15, k);
        assert!((tm - 1.0).abs() < 1e-5 && (te + 1.0).abs() < 1e-5);
        let xi = k * SPEED_OF_LIGHT;
        let (tm, te) = fresnel_imag(2.0, xi, k);
        let (s2, s3) = (2f64.sqrt(), 3f64.sqrt());
        assert_relative_eq!(tm, (2.0 * s2 - s3) / (2.0 * s2 + s3), max_relative = 1e-12);
        assert_relative_eq!(te, (s2 - s3) / (s2 + s3), max_relative = 1e-12);
        assert!(te <= 0.0 && tm >= 0.0);
    }

    #[test]
    fn zero_frequency_terms() {
        let wp = ev_to_rad_per_s(9.0);
        assert_eq!(zero_frequency_reflection(Extrapolation::DrudeExtrapolated, wp, 1e6), (1.0, 0.0));
        let (_, te) = zero_frequency_reflection(Extrapolation::GeneralizedPlasma, wp, wp / SPEED_OF_LIGHT);
        assert_relative_eq!(te.abs(), (2f64.sqrt() - 1.0) / (2f64.sqrt() + 1.0), max_relative = 1e-12);
        assert_relative_eq!(te.abs(), 0.1716, max_relative = 1e-3);
        let (_, te_far) = zero_frequency_reflection(Extrapolation::GeneralizedPlasma, wp, 1e15);
        assert!(te_far.abs() < 1e-6);
        let (_, te_near) = zero_frequency_reflection(Extrapolation::GeneralizedPlasma, wp, 1.0);
        assert!(te_near.abs() > 1.0 - 1e-6);
    }

    #[test]
    fn ideal_conductor_limit() {
        let table = au(Extrapolation::GeneralizedPlasma).table().clone();
        let model = PermittivityModel::new(
            Extrapolation::GeneralizedPlasma,
            Arc::new(table),
            DrudeParameters::new(9000.0, 0.035).unwrap(),
        )
        .unwrap();
        let settings = LifshitzSettings { temperature: 1.0, l_max: 100_000, ..Default::default() };
        let p = casimir_pressure_plates(235.0 * NM, &model, &settings).unwrap();
        let ideal = ideal_casimir_pressure(235.0 * NM);
        assert_relative_eq!(ideal, 0.4263, max_relative = 1e-3);
        assert!((p / ideal - 1.0).abs() < 0.005, "{p} vs {ideal}");
    }

    #[test]
    fn plasma_exceeds_drude_and_decays() {
        let pl = LifshitzCalculator::new(au(Extrapolation::GeneralizedPlasma), Default::default()).unwrap();
        let dr = LifshitzCalculator::new(au(Extrapolation::DrudeExtrapolated), Default::default()).unwrap();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for a_nm in [235.0, 300.0, 400.0, 550.0, 700.0, 1000.0] {
            let (p, d) = (pl.pressure(a_nm * NM).unwrap(), dr.pressure(a_nm * NM).unwrap());
            assert!(p > d, "{a_nm}");
            assert!(p < prev.0 && d < prev.1);
            prev = (p, d);
        }
        let p = pl.pressure(235.0 * NM).unwrap();
        let d = dr.pressure(235.0 * NM).unwrap();
        let rel = (p - d) / p;
        assert!(rel > 0.005 && rel < 0.08, "relative gap {rel}");
    }

    #[test]
    fn truncation_and_tolerance_converged() {
        for variant in [Extrapolation::GeneralizedPlasma, Extrapolation::DrudeExtrapolated] {
            let base = LifshitzCalculator::new(au(variant), Default::default()).unwrap();
            let finer = LifshitzSettings { k_rel_tol: 0.5e-10, ..Default::default() };
            let tighter = LifshitzSettings { series_rel_tol: 1e-20, l_max: 10_000, ..Default::default() };
            let finer = LifshitzCalculator::new(au(variant), finer).unwrap();
            let tighter = LifshitzCalculator::new(au(variant), tighter).unwrap();
            for a_nm in [235.0, 400.0, 700.0] {
                let p = base.pressure(a_nm * NM).unwrap();
                assert!((finer.pressure(a_nm * NM).unwrap() / p - 1.0).abs() < 1e-6);
                assert!((tighter.pressure(a_nm * NM).unwrap() / p - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn temperature_continuity() {
        let s299 = LifshitzSettings { temperature: 299.0, ..Default::default() };
        let p300 = casimir_pressure_plates(235.0 * NM, &au(Extrapolation::GeneralizedPlasma), &Default::default()).unwrap();
        let p299 = casimir_pressure_plates(235.0 * NM, &au(Extrapolation::GeneralizedPlasma), &s299).unwrap();
        assert!(((p300 - p299) / p300).abs() < 0.01);
    }

    #[test]
    fn l_max_cap_is_reported() {
        let s = LifshitzSettings { l_max: 3, ..Default::default() };
        let err = casimir_pressure_plates(235.0 * NM, &au(Extrapolation::GeneralizedPlasma), &s).unwrap_err();
        assert!(matches!(err, Error::MatsubaraNotConverged { .. }));
    }

    #[test]
    fn range_and_settings_validation() {
        let m = au(Extrapolation::GeneralizedPlasma);
        assert!(casimir_pressure_plates(10.0 * NM, &m, &Default::default()).is_err());
        let bad = LifshitzSettings { k_rel_tol: 0.1, ..Default::default() };
        assert!(casimir_pressure_plates(300.0 * NM, &m, &bad).is_err());
    }

    #[test]
    fn pfa_mapping_and_correction() {
        let r = 60.8 * UM;
        assert_eq!(sphere_gradient_from_pressure(0.0, r), 0.0);
        assert_relative_eq!(sphere_gradient_from_pressure(0.4263, r), 1.629e-4, max_relative = 1e-3);
        assert_eq!(sphere_gradient_from_pressure(0.3, 2.0 * r), 2.0 * sphere_gradient_from_pressure(0.3, r));
        assert_eq!(format!("{:.2}", 100.0 * pfa_correction_estimate(235.0 * NM, r)), "0.19");
        assert_eq!(format!("{:.2}", 100.0 * pfa_correction_estimate(400.0 * NM, r)), "0.33");
        assert_eq!(pfa_correction_estimate(0.0, r), 0.0);
    }
}
