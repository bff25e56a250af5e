//! Tabulated optical constants and the dielectric function along the imaginary
//! frequency axis, via the Kramers-Kronig relation
//!
//! ```text
//! ε(iξ) = 1 + (2/π) ∫₀^∞ ω Im ε(ω) / (ω² + ξ²) dω
//! ```
//!
//! with Drude or generalized-plasma treatment of the conduction electrons.
//! All integrals are done in eV; the public API takes rad/s.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::BufRead;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{rad_per_s_to_ev, BOLTZMANN, HBAR};
use crate::csvio::read_numeric_csv;
use crate::error::{Error, Result};
use crate::numerics::{integrate_panels, integrate_semi_infinite, DEFAULT_REL_TOL};

pub const TABLE_HEADER: [&str; 3] = ["energy_eV", "n", "k"];
pub const MIN_ROWS_FOR_DISPERSION: usize = 50;
pub const MIN_DECADES_FOR_DISPERSION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalRow {
    pub energy_ev: f64,
    pub n: f64,
    pub k: f64,
}

/// Complex refractive index of a material versus photon energy.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalTable {
    rows: Vec<OpticalRow>,
    material: String,
    source: String,
    metadata: BTreeMap<String, String>,
    ln_energy: Vec<f64>,
    im_eps: Vec<f64>,
}

impl OpticalTable {
    pub fn new(rows: Vec<OpticalRow>, material: impl Into<String>, source: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("optical table has no rows"));
        }
        for (i, r) in rows.iter().enumerate() {
            if !(r.energy_ev > 0.0 && r.energy_ev.is_finite()) {
                return Err(Error::invalid(format!("row {i}: energy must be positive, got {}", r.energy_ev)));
            }
            if !(r.n > 0.0) {
                return Err(Error::invalid(format!("row {i}: n must be positive, got {}", r.n)));
            }
            if !(r.k >= 0.0) {
                return Err(Error::invalid(format!("row {i}: k must be non-negative, got {}", r.k)));
            }
            if i > 0 {
                let prev = rows[i - 1].energy_ev;
                if r.energy_ev == prev {
                    return Err(Error::invalid(format!("duplicate energy {} eV", r.energy_ev)));
                }
                if r.energy_ev < prev {
                    return Err(Error::invalid(format!(
                        "energies not sorted: {} eV follows {prev} eV",
                        r.energy_ev
                    )));
                }
            }
        }
        let ln_energy = rows.iter().map(|r| r.energy_ev.ln()).collect();
        let im_eps = rows.iter().map(|r| 2.0 * r.n * r.k).collect();
        Ok(Self {
            rows,
            material: material.into(),
            source: source.into(),
            metadata: BTreeMap::new(),
            ln_energy,
            im_eps,
        })
    }

    pub fn rows(&self) -> &[OpticalRow] {
        &self.rows
    }

    pub fn material(&self) -> &str {
        &self.material
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn min_energy_ev(&self) -> f64 {
        self.rows[0].energy_ev
    }

    pub fn max_energy_ev(&self) -> f64 {
        self.rows[self.rows.len() - 1].energy_ev
    }

    /// Enough rows and energy span for a meaningful Kramers-Kronig integral.
    pub fn check_dispersion_coverage(&self) -> Result<()> {
        let decades = (self.max_energy_ev() / self.min_energy_ev()).log10();
        if self.rows.len() < MIN_ROWS_FOR_DISPERSION || decades < MIN_DECADES_FOR_DISPERSION {
            return Err(Error::invalid(format!(
                "optical table has {} rows spanning {decades:.2} decades; need >= {MIN_ROWS_FOR_DISPERSION} rows over >= {MIN_DECADES_FOR_DISPERSION} decades",
                self.rows.len()
            )));
        }
        Ok(())
    }

    /// `Im ε = 2nk` at photon energy `energy_ev`, log-log interpolated between rows
    /// (linear on segments touching a zero).
    pub fn im_eps_at_ev(&self, energy_ev: f64) -> Result<f64> {
        let (lo, hi) = (self.min_energy_ev(), self.max_energy_ev());
        if !(energy_ev >= lo && energy_ev <= hi) {
            return Err(Error::OutOfRange(format!(
                "photon energy {energy_ev} eV (table covers {lo}..{hi} eV)"
            )));
        }
        let i = match self.rows.binary_search_by(|r| r.energy_ev.total_cmp(&energy_ev)) {
            Ok(i) => return Ok(self.im_eps[i]),
            Err(i) => i - 1,
        };
        Ok(self.segment_value(i, energy_ev.ln()))
    }

    /// Interpolated Im ε on segment `i` at `u = ln E`.
    fn segment_value(&self, i: usize, u: f64) -> f64 {
        let (y0, y1) = (self.im_eps[i], self.im_eps[i + 1]);
        let (u0, u1) = (self.ln_energy[i], self.ln_energy[i + 1]);
        let t = (u - u0) / (u1 - u0);
        if y0 > 0.0 && y1 > 0.0 {
            (y0.ln() + t * (y1.ln() - y0.ln())).exp()
        } else {
            let (e0, e1, e) = (u0.exp(), u1.exp(), u.exp());
            y0 + (y1 - y0) * (e - e0) / (e1 - e0)
        }
    }
}

/// Only one on-disk layout exists today; the descriptor keeps the call sites explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    /// `energy_eV,n,k` with `#key=value` provenance comments.
    #[default]
    EnergyNkCsv,
}

/// Parses an optical table. Metadata keys `material` and `source` are picked up
/// from the comment block when present.
pub fn load_optical_table<R: BufRead>(reader: R, format: TableFormat) -> Result<OpticalTable> {
    let TableFormat::EnergyNkCsv = format;
    let csv = read_numeric_csv(reader, &TABLE_HEADER)?;
    let mut seen: Option<(usize, f64)> = None;
    let mut rows = Vec::with_capacity(csv.rows.len());
    for (line, v) in &csv.rows {
        if let Some((_, prev)) = seen {
            if v[0] == prev {
                return Err(Error::Parse { line: *line, message: format!("duplicate energy {} eV", v[0]) });
            }
            if v[0] < prev {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("energy {} eV is not above the previous {prev} eV", v[0]),
                });
            }
        }
        seen = Some((*line, v[0]));
        rows.push(OpticalRow { energy_ev: v[0], n: v[1], k: v[2] });
    }
    let material = csv.metadata.get("material").cloned().unwrap_or_else(|| "unknown".into());
    let source = csv.metadata.get("source").cloned().unwrap_or_else(|| "unspecified".into());
    let mut table = OpticalTable::new(rows, material, source)?;
    table.metadata = csv.metadata;
    Ok(table)
}

/// `Im ε(ω) = 2 n k` at angular frequency `omega` (rad/s), inside the tabulated range.
pub fn im_eps(table: &OpticalTable, omega: f64) -> Result<f64> {
    table.im_eps_at_ev(rad_per_s_to_ev(omega))
}

/// Free-electron parameters in eV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrudeParameters {
    pub plasma_ev: f64,
    pub relaxation_ev: f64,
}

impl Default for DrudeParameters {
    /// Conventional gold values.
    fn default() -> Self {
        Self { plasma_ev: 9.0, relaxation_ev: 0.035 }
    }
}

impl DrudeParameters {
    pub fn new(plasma_ev: f64, relaxation_ev: f64) -> Result<Self> {
        if !(plasma_ev > 0.0 && plasma_ev.is_finite()) {
            return Err(Error::invalid(format!("plasma frequency must be positive, got {plasma_ev} eV")));
        }
        if !(relaxation_ev >= 0.0 && relaxation_ev.is_finite()) {
            return Err(Error::invalid(format!("relaxation must be non-negative, got {relaxation_ev} eV")));
        }
        Ok(Self { plasma_ev, relaxation_ev })
    }

    /// Drude absorption `ωp² γ / (ω (ω² + γ²))` at real energy `e` (eV).
    pub fn im_eps(&self, e: f64) -> f64 {
        let g = self.relaxation_ev;
        self.plasma_ev * self.plasma_ev * g / (e * (e * e + g * g))
    }

    /// Closed-form Drude `ε(iξ) = 1 + ωp² / (ξ (ξ + γ))`, ξ in eV.
    pub fn eps_imag_axis_ev(&self, xi: f64) -> f64 {
        1.0 + self.plasma_ev * self.plasma_ev / (xi * (xi + self.relaxation_ev))
    }
}

/// How the conduction-electron response is continued to zero frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Extrapolation {
    /// Tabulated data, joined below the lowest energy by the Drude absorption.
    DrudeExtrapolated,
    /// Lossless `ωp²/ξ²` plus the Kramers-Kronig transform of the core (interband) absorption.
    GeneralizedPlasma,
}

impl Extrapolation {
    pub fn label(&self) -> &'static str {
        match self {
            Extrapolation::DrudeExtrapolated => "drude",
            Extrapolation::GeneralizedPlasma => "plasma",
        }
    }
}

/// Dielectric permittivity along the imaginary frequency axis. Immutable and
/// cheap to clone (the table is shared).
#[derive(Debug, Clone)]
pub struct PermittivityModel {
    variant: Extrapolation,
    table: Arc<OpticalTable>,
    drude: DrudeParameters,
    rel_tol: f64,
    /// Scale making the Drude absorption continuous with the table at its lowest energy.
    low_match: f64,
    core_is_empty: bool,
}

impl PermittivityModel {
    pub fn new(variant: Extrapolation, table: Arc<OpticalTable>, drude: DrudeParameters) -> Result<Self> {
        table.check_dispersion_coverage()?;
        let e_min = table.min_energy_ev();
        let d_min = drude.im_eps(e_min);
        let low_match = if d_min > 0.0 { table.im_eps[0] / d_min } else { 0.0 };
        let core_is_empty = variant == Extrapolation::GeneralizedPlasma
            && low_match <= 1.0
            && table.rows.iter().zip(&table.im_eps).all(|(r, im)| *im <= drude.im_eps(r.energy_ev));
        Ok(Self { variant, table, drude, rel_tol: DEFAULT_REL_TOL, low_match, core_is_empty })
    }

    /// Relative tolerance of the Kramers-Kronig quadrature.
    pub fn with_tolerance(mut self, rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-3) {
            return Err(Error::invalid(format!("quadrature tolerance must lie in (0, 1e-3], got {rel_tol}")));
        }
        self.rel_tol = rel_tol;
        Ok(self)
    }

    pub fn variant(&self) -> Extrapolation {
        self.variant
    }

    pub fn drude(&self) -> DrudeParameters {
        self.drude
    }

    pub fn table(&self) -> &OpticalTable {
        &self.table
    }

    pub fn tolerance(&self) -> f64 {
        self.rel_tol
    }

    /// Same model with the other zero-frequency treatment.
    pub fn with_variant(&self, variant: Extrapolation) -> Result<Self> {
        Self::new(variant, self.table.clone(), self.drude).and_then(|m| m.with_tolerance(self.rel_tol))
    }

    /// `ε(iξ)` for `xi` in rad/s.
    pub fn eval(&self, xi: f64) -> Result<f64> {
        eps_imag_axis(self, xi)
    }

    fn absorption(&self, i: usize, u: f64, e: f64) -> f64 {
        let im = self.table.segment_value(i, u);
        match self.variant {
            Extrapolation::DrudeExtrapolated => im,
            Extrapolation::GeneralizedPlasma => (im - self.drude.im_eps(e)).max(0.0),
        }
    }

    fn eval_ev(&self, xi: f64) -> Result<f64> {
        let wp2 = self.drude.plasma_ev * self.drude.plasma_ev;
        let plasma_term = match self.variant {
            Extrapolation::GeneralizedPlasma => wp2 / (xi * xi),
            // A lossless Drude term is a delta function at zero frequency.
            Extrapolation::DrudeExtrapolated if self.drude.relaxation_ev == 0.0 => wp2 / (xi * xi),
            Extrapolation::DrudeExtrapolated => 0.0,
        };
        if self.core_is_empty {
            return Ok(1.0 + plasma_term);
        }
        let xi2 = xi * xi;

        // Below the table: scaled Drude absorption, E = E_min e^{-s}.
        let low_scale = match self.variant {
            Extrapolation::DrudeExtrapolated => self.low_match,
            Extrapolation::GeneralizedPlasma => (self.low_match - 1.0).max(0.0),
        };
        let e_min = self.table.min_energy_ev();
        let low = if low_scale > 0.0 && self.drude.relaxation_ev > 0.0 {
            integrate_semi_infinite(
                |s| {
                    let e = e_min * (-s).exp();
                    e * e * low_scale * self.drude.im_eps(e) / (e * e + xi2)
                },
                self.rel_tol,
            )?
        } else {
            0.0
        };

        // Tabulated range, segment by segment in u = ln E.
        let mut table_part = 0.0;
        for i in 0..self.table.rows.len() - 1 {
            let (u0, u1) = (self.table.ln_energy[i], self.table.ln_energy[i + 1]);
            table_part += integrate_panels(
                |u| {
                    let e = u.exp();
                    e * e * self.absorption(i, u, e) / (e * e + xi2)
                },
                u0,
                u1,
                self.rel_tol,
                2,
            )?;
        }
        Ok(1.0 + plasma_term + 2.0 / PI * (low + table_part))
    }
}

/// `ε(iξ)` of `model` at imaginary frequency `xi` (rad/s, > 0).
pub fn eps_imag_axis(model: &PermittivityModel, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(Error::invalid(format!("imaginary frequency must be positive, got {xi}")));
    }
    model.eval_ev(rad_per_s_to_ev(xi))
}

/// Matsubara frequencies `ξ_l = 2π k_B T l / ħ` for `l = 0..=l_max`, rad/s.
pub fn matsubara_grid(temperature: f64, l_max: usize) -> Result<Vec<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature} K")));
    }
    if l_max == 0 {
        return Err(Error::invalid("l_max must be at least 1"));
    }
    let step = 2.0 * PI * BOLTZMANN * temperature / HBAR;
    Ok((0..=l_max).map(|l| step * l as f64).collect())
}
