//! Pressure extraction from compensated sweeps, error budget, comparison with
//! the Drude and plasma predictions, and electric-to-Casimir pressure ratios.
//!
//! Curve sigmas are standard (one-sigma) uncertainties. The coverage factor for
//! the configured confidence is applied once, when verdicts are formed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calibrate::CalibrationResult;
use crate::constants::{MV, NM};
use crate::csvio::{read_numeric_csv, write_metadata};
use crate::electrostatics::{beta_geometric, electric_pressure_pfa, ElectricDrive, SpherePlateGeometry};
use crate::error::{Error, Result};
use crate::lifshitz::{PlatePressure, PressureCurve};
use crate::simulate::{subtract_drift, SweepDataset, V0Law, META_DRIFT_SIGMA};

pub const CURVE_HEADER: [&str; 3] = ["a_nm", "P_Pa", "sigma_Pa"];

/// Separations at which the ratio table is reported, m.
pub const RATIO_SEPARATIONS: [f64; 4] = [235.0 * NM, 300.0 * NM, 400.0 * NM, 700.0 * NM];

/// Comparison grid: 235 to 350 nm in 1 nm steps, then 353 to 698 nm in 3 nm steps.
pub fn comparison_grid() -> Vec<f64> {
    (235..=350).chain((353..=698).step_by(3)).map(|n| n as f64 * NM).collect()
}

/// Confidence levels treated as "one sigma".
const ONE_SIGMA_BAND: (f64, f64) = (0.665, 0.685);

/// Coverage factor `k` for a two-sided interval: 1 for the customary 67-68%
/// level, otherwise the normal quantile at `(1 + confidence) / 2`.
pub fn coverage_factor(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    if (ONE_SIGMA_BAND.0..=ONE_SIGMA_BAND.1).contains(&confidence) {
        return Ok(1.0);
    }
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(normal.inverse_cdf(0.5 * (1.0 + confidence)))
}

/// Uncertainty contributions added to the statistical scatter of a measured curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// Absolute separation error, m.
    pub sigma_a: f64,
    /// Per-point pressure error independent of separation, Pa.
    #[serde(rename = "sigma_P_random")]
    pub sigma_p_random: f64,
    /// Error proportional to the pressure (calibration of the force scale).
    pub relative_systematic: f64,
    pub confidence: f64,
}

impl Default for ErrorBudget {
    /// Totals ≈2% at 235 nm and grows with separation through the absolute term.
    fn default() -> Self {
        Self { sigma_a: 0.5 * NM, sigma_p_random: 1.5e-3, relative_systematic: 0.0175, confidence: 0.67 }
    }
}

impl ErrorBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_a", self.sigma_a),
            ("sigma_P_random", self.sigma_p_random),
            ("relative_systematic", self.relative_systematic),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        coverage_factor(self.confidence).map(|_| ())
    }

    pub fn coverage_factor(&self) -> Result<f64> {
        coverage_factor(self.confidence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Remove `C β_geom(a) (V - V0(a))²` using the calibrated `V0` line.
    pub subtract_residual_electrostatics: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self { subtract_residual_electrostatics: true }
    }
}

/// Casimir pressure from sweeps recorded at a fixed compensating voltage.
///
/// Per position: gradient `= -mean(Δω)/C`, pressure `= gradient/(2πR)`, sigma
/// from the standard error of the repeats combined with the uncertainty of the
/// drift correction. Anchored data are drift-corrected first.
pub fn extract_pressure(
    dataset: &SweepDataset,
    calibration: &CalibrationResult,
    radius: f64,
    options: &ExtractOptions,
) -> Result<PressureCurve> {
    if !(calibration.a0 > 0.0 && calibration.c > 0.0) {
        return Err(Error::invalid("calibration must have a0 > 0 and C > 0"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius must be positive"));
    }
    let corrected;
    let (data, drift_sigma) = if dataset.has_anchors() {
        let (fixed, drift) = subtract_drift(dataset)?;
        corrected = fixed;
        (&corrected, drift.sigma)
    } else {
        (dataset, dataset.meta_f64(META_DRIFT_SIGMA).unwrap_or(0.0))
    };
    let drift_sigma = if drift_sigma.is_finite() { drift_sigma } else { 0.0 };
    data.validate()?;
    let law = calibration.v0_law();
    let scale = calibration.c * 2.0 * PI * radius;
    let mut rows = Vec::new();
    for s in data.sweeps() {
        let n = s.records.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "sweep {} has {n} record(s); at least 2 repeats per separation are required",
                s.index
            )));
        }
        let a = calibration.separation(s.z_piezo);
        let beta = if options.subtract_residual_electrostatics {
            calibration.c * beta_geometric(&SpherePlateGeometry::unrestricted(radius, a)?)?
        } else {
            0.0
        };
        let casimir: Vec<f64> = s
            .records
            .iter()
            .map(|r| {
                let dv = r.applied_voltage - law.at(a);
                r.frequency_shift + beta * dv * dv
            })
            .collect();
        let mean = casimir.iter().sum::<f64>() / n as f64;
        let var = casimir.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // The drift correction at this sweep's mean acquisition time is uncertain
        // through the estimated rate; records sat at τ = index + j/(n+1).
        let tau = s.index as f64 + 0.5 * (n - 1) as f64 / (n + 1) as f64;
        let drift_var = (drift_sigma * tau).powi(2);
        rows.push((a, -mean / scale, (var / n as f64 + drift_var).sqrt() / scale));
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    if rows.windows(2).any(|w| w[1].0 == w[0].0) {
        return Err(Error::invalid("two sweeps share a separation"));
    }
    PressureCurve::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        Some(rows.iter().map(|r| r.2).collect()),
        "experiment",
    )
}

/// `dP/da` by second-order finite differences on a non-uniform grid.
pub fn curve_slope(curve: &PressureCurve) -> Result<Vec<f64>> {
    let (x, f) = (&curve.separations, &curve.pressures);
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("at least 3 points are needed for finite differences"));
    }
    let three = |i: usize, at: usize| -> f64 {
        // Derivative at x[at] of the parabola through points i, i+1, i+2.
        let (x0, x1, x2) = (x[i], x[i + 1], x[i + 2]);
        let t = x[at];
        f[i] * (2.0 * t - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + f[i + 1] * (2.0 * t - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + f[i + 2] * (2.0 * t - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    Ok((0..n)
        .map(|k| match k {
            0 => three(0, 0),
            k if k == n - 1 => three(n - 3, n - 1),
            k => three(k - 1, k),
        })
        .collect())
}

fn strictly_decreasing(curve: &PressureCurve) -> Result<()> {
    if !curve.is_decreasing() {
        return Err(Error::invalid(format!("curve `{}` is not strictly decreasing", curve.label)));
    }
    Ok(())
}

fn check_same_grid(a: &PressureCurve, b: &PressureCurve) -> Result<()> {
    let same = a.len() == b.len()
        && a.separations.iter().zip(&b.separations).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
    if !same {
        return Err(Error::invalid(format!(
            "curves `{}` and `{}` are not on a common separation grid",
            a.label, b.label
        )));
    }
    Ok(())
}

/// Adds the separation term `(dP/da · sigma_a)²` to the curve's sigmas, with
/// the slope taken from the curve itself.
pub fn propagate_separation_error(curve: &PressureCurve, budget: &ErrorBudget) -> Result<PressureCurve> {
    propagate_separation_error_along(curve, curve, budget)
}

/// As [`propagate_separation_error`] with the slope taken from a smooth
/// `reference` on the same grid, for noisy curves that need not be monotone.
pub fn propagate_separation_error_along(
    curve: &PressureCurve,
    reference: &PressureCurve,
    budget: &ErrorBudget,
) -> Result<PressureCurve> {
    budget.validate()?;
    curve.validate()?;
    check_same_grid(curve, reference)?;
    strictly_decreasing(reference)?;
    let slope = curve_slope(reference)?;
    let sigmas = (0..curve.len())
        .map(|i| {
            let s0 = curve.sigmas.as_ref().map_or(0.0, |s| s[i]);
            s0.hypot(slope[i] * budget.sigma_a)
        })
        .collect();
    Ok(PressureCurve { sigmas: Some(sigmas), ..curve.clone() })
}

/// Total uncertainty: statistical sigma, `sigma_P_random`, the relative term
/// and the separation term (slope from `reference`).
pub fn apply_error_budget(
    curve: &PressureCurve,
    reference: &PressureCurve,
    budget: &ErrorBudget,
) -> Result<PressureCurve> {
    budget.validate()?;
    let mut widened = curve.clone();
    widened.sigmas = Some(
        (0..curve.len())
            .map(|i| {
                let s0 = curve.sigmas.as_ref().map_or(0.0, |s| s[i]);
                let rel = budget.relative_systematic * curve.pressures[i];
                (s0 * s0 + budget.sigma_p_random * budget.sigma_p_random + rel * rel).sqrt()
            })
            .collect(),
    );
    propagate_separation_error_along(&widened, reference, budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointVerdict {
    pub a: f64,
    pub drude: Verdict,
    pub plasma: Verdict,
}

/// Longest contiguous run of excluded grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionBand {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl ExclusionBand {
    pub fn contains_interval(&self, lo: f64, hi: f64) -> bool {
        self.from <= lo && hi <= self.to
    }
}

/// `|a - b| > k σ` pointwise.
pub fn pointwise_verdicts(a: &[f64], b: &[f64], sigma: &[f64], k: f64) -> Vec<Verdict> {
    a.iter()
        .zip(b)
        .zip(sigma)
        .map(|((a, b), s)| if (a - b).abs() > k * s { Verdict::Excluded } else { Verdict::Consistent })
        .collect()
}

pub fn exclusion_band(separations: &[f64], verdicts: &[Verdict]) -> Option<ExclusionBand> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=verdicts.len() {
        let excluded = i < verdicts.len() && verdicts[i] == Verdict::Excluded;
        match (excluded, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(b0, b1)| i - s > b1 - b0) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best.map(|(s, e)| ExclusionBand { from: separations[s], to: separations[e - 1], points: e - s })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub experiment: PressureCurve,
    pub theory_drude: PressureCurve,
    pub theory_plasma: PressureCurve,
    pub confidence: f64,
    pub coverage_factor: f64,
    pub verdicts: Vec<PointVerdict>,
    pub drude_exclusion_band: Option<ExclusionBand>,
    pub plasma_exclusion_band: Option<ExclusionBand>,
    pub ratio_table: Option<RatioTable>,
}

impl ComparisonReport {
    pub fn consistent_fraction(&self, pick: impl Fn(&PointVerdict) -> Verdict) -> f64 {
        let n = self.verdicts.iter().filter(|v| pick(v) == Verdict::Consistent).count();
        n as f64 / self.verdicts.len() as f64
    }

    pub fn plasma_consistent_fraction(&self) -> f64 {
        self.consistent_fraction(|v| v.plasma)
    }

    pub fn drude_consistent_fraction(&self) -> f64 {
        self.consistent_fraction(|v| v.drude)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text summary: exclusion bands and the ratio table.
    pub fn summary(&self) -> String {
        let band = |b: &Option<ExclusionBand>| match b {
            Some(b) => format!("{:.0}-{:.0} nm ({} points)", b.from / NM, b.to / NM, b.points),
            None => "none".into(),
        };
        let mut s = format!(
            "confidence {:.0}% (k = {:.3}), {} separations {:.0}-{:.0} nm\n",
            100.0 * self.confidence,
            self.coverage_factor,
            self.experiment.len(),
            self.experiment.separations[0] / NM,
            self.experiment.separations[self.experiment.len() - 1] / NM,
        );
        s += &format!(
            "drude:  excluded over {}, consistent at {:.1}% of points\n",
            band(&self.drude_exclusion_band),
            100.0 * self.drude_consistent_fraction()
        );
        s += &format!(
            "plasma: excluded over {}, consistent at {:.1}% of points\n",
            band(&self.plasma_exclusion_band),
            100.0 * self.plasma_consistent_fraction()
        );
        if let Some(t) = &self.ratio_table {
            s += &t.summary();
        }
        s
    }
}

/// Pointwise test of both theories against the experiment at the configured
/// confidence. All three curves must share one grid.
pub fn compare_with_theory(
    experiment: &PressureCurve,
    drude: &PressureCurve,
    plasma: &PressureCurve,
    confidence: f64,
) -> Result<ComparisonReport> {
    if experiment.is_empty() {
        return Err(Error::invalid("experiment curve is empty"));
    }
    experiment.validate()?;
    let sigma = experiment
        .sigmas
        .as_ref()
        .ok_or_else(|| Error::invalid("experiment curve carries no sigmas"))?;
    check_same_grid(experiment, drude)?;
    check_same_grid(experiment, plasma)?;
    let k = coverage_factor(confidence)?;
    let vd = pointwise_verdicts(&experiment.pressures, &drude.pressures, sigma, k);
    let vp = pointwise_verdicts(&experiment.pressures, &plasma.pressures, sigma, k);
    let verdicts = experiment
        .separations
        .iter()
        .zip(vd.iter().zip(&vp))
        .map(|(a, (d, p))| PointVerdict { a: *a, drude: *d, plasma: *p })
        .collect();
    Ok(ComparisonReport {
        experiment: experiment.clone(),
        theory_drude: drude.clone(),
        theory_plasma: plasma.clone(),
        confidence,
        coverage_factor: k,
        verdicts,
        drude_exclusion_band: exclusion_band(&experiment.separations, &vd),
        plasma_exclusion_band: exclusion_band(&experiment.separations, &vp),
        ratio_table: None,
    })
}

/// Source of the residual potential difference in the ratio table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum ResidualPotential {
    /// `V0(a)` from a linear law.
    Law { law: V0Law },
    /// One value for all separations, V.
    Constant { value: f64 },
}

impl ResidualPotential {
    pub fn at(&self, a: f64) -> f64 {
        match self {
            Self::Law { law } => law.at(a),
            Self::Constant { value } => *value,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Law { law } => format!(
                "V0(a) = ({:.4e} a[nm] {:+.3}) mV",
                law.slope_mv_per_nm, law.intercept_mv
            ),
            Self::Constant { value } => format!("V0 = {} mV at all separations", value / MV),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompensationMode {
    /// No compensating voltage: the full residual potential acts.
    Zero,
    /// The grid mean of the residual potential is applied.
    Mean,
}

impl CompensationMode {
    /// Compensating voltage for this mode over `separations`, V.
    pub fn voltage(&self, potential: &ResidualPotential, separations: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Mean => separations.iter().map(|a| potential.at(*a)).sum::<f64>() / separations.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "RatioRowRecord", from = "RatioRowRecord")]
pub struct RatioRow {
    pub a: f64,
    pub delta_v: f64,
    pub electric_pressure: f64,
    pub casimir_pressure: f64,
}

impl RatioRow {
    pub fn percent(&self) -> f64 {
        100.0 * self.electric_pressure / self.casimir_pressure
    }
}

#[derive(Serialize, Deserialize)]
struct RatioRowRecord {
    a: f64,
    delta_v: f64,
    electric_pressure: f64,
    casimir_pressure: f64,
    percent: f64,
}

impl From<RatioRow> for RatioRowRecord {
    fn from(r: RatioRow) -> Self {
        Self {
            a: r.a,
            delta_v: r.delta_v,
            electric_pressure: r.electric_pressure,
            casimir_pressure: r.casimir_pressure,
            percent: r.percent(),
        }
    }
}

impl From<RatioRowRecord> for RatioRow {
    fn from(r: RatioRowRecord) -> Self {
        Self { a: r.a, delta_v: r.delta_v, electric_pressure: r.electric_pressure, casimir_pressure: r.casimir_pressure }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTable {
    pub potential: ResidualPotential,
    /// Applied compensating voltage, V.
    pub compensation: f64,
    pub casimir_model: String,
    pub interpretation: String,
    pub rows: Vec<RatioRow>,
}

impl RatioTable {
    pub fn percents(&self) -> Vec<f64> {
        self.rows.iter().map(RatioRow::percent).collect()
    }

    pub fn summary(&self) -> String {
        let mut s = format!("electric/Casimir pressure: {}\n", self.interpretation);
        for r in &self.rows {
            s += &format!(
                "  a = {:>5.0} nm  dV = {:>8.3} mV  P_el = {:.4e} Pa  P_C = {:.4e} Pa  {:.2}%\n",
                r.a / NM,
                r.delta_v / MV,
                r.electric_pressure,
                r.casimir_pressure,
                r.percent()
            );
        }
        s
    }
}

/// Per separation: `ΔV = V0(a) - compensation` and the ratio of the proximity-force
/// electric pressure to the Casimir pressure, in percent.
pub fn electric_to_casimir_ratio(
    separations: &[f64],
    potential: &ResidualPotential,
    compensation: f64,
    radius: f64,
    casimir: &dyn PlatePressure,
) -> Result<RatioTable> {
    if separations.is_empty() {
        return Err(Error::invalid("no separations given"));
    }
    if !compensation.is_finite() {
        return Err(Error::invalid("compensation voltage must be finite"));
    }
    let rows = separations
        .iter()
        .map(|a| {
            let geometry = SpherePlateGeometry::new(radius, *a)?;
            let delta_v = potential.at(*a) - compensation;
            let electric = electric_pressure_pfa(&geometry, &ElectricDrive::from_difference(delta_v))?;
            let casimir_pressure = casimir.plate_pressure(*a)?;
            Ok(RatioRow { a: *a, delta_v, electric_pressure: electric, casimir_pressure })
        })
        .collect::<Result<Vec<_>>>()?;
    let interpretation = format!(
        "{}; applied compensation {:.4} mV ({}); Casimir pressure from the {} model",
        potential.describe(),
        compensation / MV,
        if compensation == 0.0 { "noncompensated electric force" } else { "compensated" },
        casimir.label()
    );
    Ok(RatioTable { potential: *potential, compensation, casimir_model: casimir.label(), interpretation, rows })
}

/// Writes `a_nm,P_Pa,sigma_Pa` rows; missing sigmas are written as 0.
pub fn write_curve_csv<W: Write>(curve: &PressureCurve, metadata: &BTreeMap<String, String>, w: &mut W) -> Result<()> {
    let mut meta = metadata.clone();
    meta.insert("label".into(), curve.label.clone());
    write_metadata(w, &meta)?;
    writeln!(w, "{}", CURVE_HEADER.join(","))?;
    for i in 0..curve.len() {
        let s = curve.sigmas.as_ref().map_or(0.0, |s| s[i]);
        writeln!(w, "{},{:e},{:e}", curve.separations[i] / NM, curve.pressures[i], s)?;
    }
    Ok(())
}

pub fn read_curve_csv<R: BufRead>(reader: R) -> Result<PressureCurve> {
    let csv = read_numeric_csv(reader, &CURVE_HEADER)?;
    for (line, row) in &csv.rows {
        if !(row[0] > 0.0) || row[2] < 0.0 {
            return Err(Error::Parse { line: *line, message: "separation must be positive and sigma non-negative".into() });
        }
    }
    let label = csv.metadata.get("label").cloned().unwrap_or_else(|| "curve".into());
    PressureCurve::new(
        csv.rows.iter().map(|(_, r)| r[0] * NM).collect(),
        csv.rows.iter().map(|(_, r)| r[1]).collect(),
        Some(csv.rows.iter().map(|(_, r)| r[2]).collect()),
        label,
    )
}
