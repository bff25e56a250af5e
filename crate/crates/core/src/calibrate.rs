//! Calibration chain: per-position parabola fits give `V0(z)` and the curvature
//! `β(z)`; a global fit of `β(z) = C β_geom(a0 + z)` gives the closest separation
//! `a0` and the constant `C`; a straight-line fit gives the law `V0(a)`.

use serde::{Deserialize, Serialize};

use crate::constants::{MV, NM};
use crate::electrostatics::{beta_geometric, SpherePlateGeometry};
use crate::error::{Error, Result};
use crate::numerics::linalg::invert_spd;
use crate::numerics::{fit_linear_least_squares, fit_nonlinear_least_squares, FitResult};
use crate::simulate::{subtract_drift, SweepDataset, V0Law};

/// Parabola-fit sigmas below these levels are rounding noise of exact data and
/// carry no weighting information.
const BETA_SIGMA_FLOOR_REL: f64 = 1e-9;
const V0_SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolaFitPoint {
    /// m
    pub z_piezo: f64,
    /// V
    #[serde(rename = "V0")]
    pub v0: f64,
    #[serde(rename = "V0_sigma")]
    pub v0_sigma: f64,
    /// rad/(s·V²)
    pub beta: f64,
    pub beta_sigma: f64,
    /// Vertex value `-C ∂F_C/∂a`, rad/s.
    pub casimir_shift: f64,
    pub casimir_shift_sigma: f64,
    pub chi2: f64,
    pub dof: usize,
}

/// Least-squares parabola `Δω = A V² + B V + D` through one sweep.
///
/// The fit runs in centred, scaled voltages for conditioning. Without `sigmas`
/// the weights are uniform and the covariance is scaled by `χ²/dof`. Vertex
/// quantities get their uncertainties by the delta method.
pub fn fit_sweep_parabola(
    voltages: &[f64],
    shifts: &[f64],
    sigmas: Option<&[f64]>,
    z_piezo: f64,
) -> Result<ParabolaFitPoint> {
    let n = voltages.len();
    if shifts.len() != n || sigmas.is_some_and(|s| s.len() != n) {
        return Err(Error::invalid("voltage, shift and sigma arrays differ in length"));
    }
    if voltages.iter().chain(shifts).any(|v| !v.is_finite()) {
        return Err(Error::invalid("sweep contains non-finite values"));
    }
    if let Some(s) = sigmas {
        if s.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigmas must be positive"));
        }
    }
    let mut distinct = voltages.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 5 {
        return Err(Error::invalid(format!(
            "a parabola fit needs at least 5 distinct voltages, got {}",
            distinct.len()
        )));
    }

    let mid = voltages.iter().sum::<f64>() / n as f64;
    let scale = voltages.iter().map(|v| (v - mid).abs()).fold(0.0, f64::max);
    let weight = |i: usize| sigmas.map_or(1.0, |s| 1.0 / (s[i] * s[i]));
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for i in 0..n {
        let u = (voltages[i] - mid) / scale;
        let row = [u * u, u, 1.0];
        let w = weight(i);
        for r in 0..3 {
            aty[r] += w * row[r] * shifts[i];
            for c in 0..3 {
                ata[r][c] += w * row[r] * row[c];
            }
        }
    }
    let inv = invert_spd(&ata).ok_or_else(|| Error::DegenerateFit("parabola normal matrix is singular".into()))?;
    let p: Vec<f64> = (0..3).map(|r| (0..3).map(|c| inv[r][c] * aty[c]).sum()).collect();
    let (qa, qb, qd) = (p[0], p[1], p[2]);
    // Curvature at the rounding level of the data is no signature either.
    let y_scale = shifts.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if !(qa < -1e-12 * y_scale) {
        return Err(Error::NoElectrostaticSignature { curvature: qa / (scale * scale) });
    }

    let chi2: f64 = (0..n)
        .map(|i| {
            let u = (voltages[i] - mid) / scale;
            let r = shifts[i] - (qa * u * u + qb * u + qd);
            weight(i) * r * r
        })
        .sum();
    let dof = n - 3;
    let cov_scale = if sigmas.is_some() { 1.0 } else { chi2 / dof as f64 };

    let u0 = -qb / (2.0 * qa);
    let v0 = mid + scale * u0;
    let beta = -qa / (scale * scale);
    let casimir_shift = qd - qb * qb / (4.0 * qa);
    let grad_v0 = [scale * qb / (2.0 * qa * qa), -scale / (2.0 * qa), 0.0];
    let grad_beta = [-1.0 / (scale * scale), 0.0, 0.0];
    let grad_shift = [qb * qb / (4.0 * qa * qa), -qb / (2.0 * qa), 1.0];
    let var = |g: &[f64; 3]| -> f64 {
        let mut s = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                s += g[r] * inv[r][c] * g[c];
            }
        }
        (cov_scale * s).max(0.0)
    };
    Ok(ParabolaFitPoint {
        z_piezo,
        v0,
        v0_sigma: var(&grad_v0).sqrt(),
        beta,
        beta_sigma: var(&grad_beta).sqrt(),
        casimir_shift,
        casimir_shift_sigma: var(&grad_shift).sqrt(),
        chi2,
        dof,
    })
}

/// Result of fitting `β(z) = C β_geom(a0 + z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationFit {
    pub a0: f64,
    pub a0_sigma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_sigma")]
    pub c_sigma: f64,
    /// Covariance of `(a0, C)` in SI units.
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
    pub weighted: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Minimum number of positions and piezo span for the separation fit.
pub const MIN_SEPARATION_POINTS: usize = 10;
pub const MIN_SEPARATION_SPAN: f64 = 200.0 * NM;

/// Levenberg-Marquardt fit of the curvatures for `(a0, C)`, starting from
/// `a0 = 200 nm`. Weighted by `beta_sigma` when every point carries a
/// meaningful one.
pub fn fit_absolute_separation(points: &[ParabolaFitPoint], radius: f64) -> Result<SeparationFit> {
    if points.len() < MIN_SEPARATION_POINTS {
        return Err(Error::invalid(format!(
            "separation fit needs at least {MIN_SEPARATION_POINTS} points, got {}",
            points.len()
        )));
    }
    let z_min = points.iter().map(|p| p.z_piezo).fold(f64::INFINITY, f64::min);
    let z_max = points.iter().map(|p| p.z_piezo).fold(f64::NEG_INFINITY, f64::max);
    if z_max - z_min < MIN_SEPARATION_SPAN {
        return Err(Error::invalid(format!(
            "piezo span {:.1} nm is below the required {:.0} nm",
            (z_max - z_min) / NM,
            MIN_SEPARATION_SPAN / NM
        )));
    }
    if points.iter().any(|p| !(p.beta > 0.0)) {
        return Err(Error::invalid("all curvatures must be positive"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius must be positive"));
    }

    let a0_guess = 200.0 * NM;
    let z_med = median(&mut points.iter().map(|p| p.z_piezo).collect::<Vec<_>>());
    let beta_med = median(&mut points.iter().map(|p| p.beta).collect::<Vec<_>>());
    let c0 = beta_med / beta_geometric(&SpherePlateGeometry::unrestricted(radius, a0_guess + z_med)?)?;

    // Parameters: a0 in nm and C relative to the starting guess.
    let z_nm: Vec<f64> = points.iter().map(|p| p.z_piezo / NM).collect();
    let beta: Vec<f64> = points.iter().map(|p| p.beta).collect();
    let weighted = points.iter().all(|p| p.beta_sigma > BETA_SIGMA_FLOOR_REL * p.beta);
    let sigma: Vec<f64> = if weighted { points.iter().map(|p| p.beta_sigma).collect() } else { vec![1.0; points.len()] };
    let model = |p: &[f64], z: f64| -> f64 {
        SpherePlateGeometry::unrestricted(radius, (p[0] + z) * NM)
            .and_then(|g| beta_geometric(&g))
            .map_or(f64::NAN, |b| p[1] * c0 * b)
    };
    let fit = fit_nonlinear_least_squares(model, &z_nm, &beta, &sigma, &[a0_guess / NM, 1.0])?;
    let cov_scale = if weighted { 1.0 } else { fit.chi2 / fit.dof as f64 };
    let units = [NM, c0];
    let mut covariance = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            covariance[r][c] = cov_scale * fit.covariance[r][c] * units[r] * units[c];
        }
    }
    let a0 = fit.params[0] * NM;
    let c = fit.params[1] * c0;
    if !(a0 > 0.0 && c > 0.0) {
        return Err(Error::DegenerateFit(format!("unphysical separation fit: a0 = {a0:e} m, C = {c:e}")));
    }
    Ok(SeparationFit {
        a0,
        a0_sigma: covariance[0][0].max(0.0).sqrt(),
        c,
        c_sigma: covariance[1][1].max(0.0).sqrt(),
        covariance,
        chi2: fit.chi2,
        dof: fit.dof,
        weighted,
    })
}

/// Straight-line fit of `V0` against absolute separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct V0LineFit {
    /// Parameters `[slope mV/nm, intercept mV]`.
    pub fit: FitResult,
    /// Unweighted mean of `V0` over the points, V.
    pub v0_mean: f64,
}

impl V0LineFit {
    pub fn law(&self) -> V0Law {
        V0Law { slope_mv_per_nm: self.fit.params[0], intercept_mv: self.fit.params[1] }
    }
}

/// Fits `V0(a) = slope·a + intercept` in mV/nm and mV with `a = a0 + z`,
/// weighted by `V0_sigma` when every point carries a meaningful one.
pub fn fit_v0_line(points: &[ParabolaFitPoint], a0: f64) -> Result<V0LineFit> {
    if points.is_empty() {
        return Err(Error::invalid("no points to fit"));
    }
    let a_nm: Vec<f64> = points.iter().map(|p| (a0 + p.z_piezo) / NM).collect();
    let v0_mv: Vec<f64> = points.iter().map(|p| p.v0 / MV).collect();
    let weighted = points.iter().all(|p| p.v0_sigma > V0_SIGMA_FLOOR);
    let sig_mv: Vec<f64> = points.iter().map(|p| p.v0_sigma / MV).collect();
    let fit = fit_linear_least_squares(&a_nm, &v0_mv, weighted.then_some(sig_mv.as_slice()))?;
    let v0_mean = points.iter().map(|p| p.v0).sum::<f64>() / points.len() as f64;
    Ok(V0LineFit { fit, v0_mean })
}

/// The V0 line in the units of the published laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V0LineMillivolt {
    pub slope_mv_per_nm: f64,
    pub slope_sigma_mv_per_nm: f64,
    pub intercept_mv: f64,
    pub intercept_sigma_mv: f64,
    pub v0_mean_mv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub a0: f64,
    pub a0_sigma: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_sigma")]
    pub c_sigma: f64,
    pub radius: f64,
    pub points: Vec<ParabolaFitPoint>,
    pub v0_fit: FitResult,
    pub v0_mean: f64,
    pub v0_line_mv: V0LineMillivolt,
    pub separation_fit: SeparationFit,
}

impl CalibrationResult {
    pub fn separation(&self, z_piezo: f64) -> f64 {
        self.a0 + z_piezo
    }

    pub fn separations(&self) -> Vec<f64> {
        self.points.iter().map(|p| self.a0 + p.z_piezo).collect()
    }

    pub fn v0_law(&self) -> V0Law {
        V0Law { slope_mv_per_nm: self.v0_fit.params[0], intercept_mv: self.v0_fit.params[1] }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if !(r.a0 > 0.0 && r.c > 0.0) {
            return Err(Error::invalid("calibration must have a0 > 0 and C > 0"));
        }
        Ok(r)
    }
}

/// Parabola fits for every sweep of a drift-free dataset, in sweep order.
pub fn fit_all_sweeps(dataset: &SweepDataset) -> Result<Vec<ParabolaFitPoint>> {
    dataset
        .sweeps()
        .iter()
        .map(|s| {
            fit_sweep_parabola(&s.voltages(), &s.shifts(), None, s.z_piezo).map_err(|e| match e {
                Error::NoElectrostaticSignature { curvature } => Error::NoElectrostaticSignature { curvature },
                other => Error::invalid(format!("sweep {} (z = {} nm): {other}", s.index, s.z_piezo / NM)),
            })
        })
        .collect()
}

/// Full chain on a sweep dataset. Anchored data are drift-corrected first.
pub fn calibrate(dataset: &SweepDataset, radius: f64) -> Result<CalibrationResult> {
    let corrected;
    let data = if dataset.has_anchors() {
        corrected = subtract_drift(dataset)?.0;
        &corrected
    } else {
        dataset
    };
    data.validate()?;
    let points = fit_all_sweeps(data)?;
    if points.windows(2).any(|w| !(w[1].z_piezo > w[0].z_piezo)) {
        return Err(Error::invalid("piezo positions must strictly increase from sweep to sweep"));
    }
    let sep = fit_absolute_separation(&points, radius)?;
    let line = fit_v0_line(&points, sep.a0)?;
    let v0_line_mv = V0LineMillivolt {
        slope_mv_per_nm: line.fit.params[0],
        slope_sigma_mv_per_nm: line.fit.sigma(0),
        intercept_mv: line.fit.params[1],
        intercept_sigma_mv: line.fit.sigma(1),
        v0_mean_mv: line.v0_mean / MV,
    };
    Ok(CalibrationResult {
        a0: sep.a0,
        a0_sigma: sep.a0_sigma,
        c: sep.c,
        c_sigma: sep.c_sigma,
        radius,
        points,
        v0_fit: line.fit,
        v0_mean: line.v0_mean,
        v0_line_mv,
        separation_fit: sep,
    })
}
