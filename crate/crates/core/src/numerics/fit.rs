use serde::{Deserialize, Serialize};

use super::linalg::{invert_spd, solve_spd};
use crate::error::{Error, Result};

/// Parameters, covariance and goodness of fit of a least-squares problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Symmetric, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub dof: usize,
}

impl FitResult {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof as f64
    }
}

fn check_data(x: &[f64], y: &[f64], sigma: Option<&[f64]>, n_params: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("x has {} points but y has {}", x.len(), y.len())));
    }
    if x.len() <= n_params {
        return Err(Error::invalid(format!(
            "{} points cannot constrain {} parameters with at least one degree of freedom",
            x.len(),
            n_params
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("data contain non-finite values"));
    }
    if let Some(s) = sigma {
        if s.len() != x.len() {
            return Err(Error::invalid("sigma length differs from data length"));
        }
        if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("sigmas must be positive and finite"));
        }
    }
    Ok(())
}

/// Straight-line fit `y = slope * x + intercept`, returning `params = [slope, intercept]`.
///
/// With `sigma` the covariance is absolute; without it, unit weights are used and
/// the covariance is scaled by `chi2 / dof`.
pub fn fit_linear_least_squares(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    if x.len() < 3 {
        return Err(Error::invalid("linear fit needs at least 3 points"));
    }
    check_data(x, y, sigma, 2)?;
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / (v * v)).collect(),
        None => vec![1.0; x.len()],
    };
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - xm;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (y[i] - ym);
    }
    let spread = x.iter().fold(0.0_f64, |m, v| m.max((v - xm).abs()));
    if !(sxx > 0.0) || spread <= 1e-14 * xm.abs() {
        return Err(Error::DegenerateFit("x values have zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2: f64 = (0..x.len())
        .map(|i| {
            let r = y[i] - slope * x[i] - intercept;
            w[i] * r * r
        })
        .sum();
    let dof = x.len() - 2;
    let scale = if sigma.is_some() { 1.0 } else { chi2 / dof as f64 };
    let var_slope = scale / sxx;
    let var_int = scale * (1.0 / sw + xm * xm / sxx);
    let cov = -scale * xm / sxx;
    Ok(FitResult {
        params: vec![slope, intercept],
        covariance: vec![vec![var_slope, cov], vec![cov, var_int]],
        chi2,
        dof,
    })
}

/// Controls for the damped least-squares iteration.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearOptions {
    pub max_iterations: usize,
    /// Stop when the relative chi2 decrease of an accepted step falls below this.
    pub chi2_rel_tol: f64,
    /// Stop when every relative parameter step falls below this.
    pub step_tol: f64,
    /// Central-difference step relative to the parameter scale.
    pub jacobian_step: f64,
    pub initial_damping: f64,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            chi2_rel_tol: 1e-10,
            step_tol: 1e-12,
            jacobian_step: 1e-6,
            initial_damping: 1e-3,
        }
    }
}

/// Levenberg-Marquardt fit of `model(params, x)` to `y` with standard deviations `sigma`.
///
/// The model signals an infeasible parameter set by returning a non-finite value;
/// such trial steps are rejected. The covariance is `(JᵀJ)⁻¹` at the solution with
/// `J` the sigma-weighted Jacobian.
pub fn fit_nonlinear_least_squares<M>(
    model: M,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
) -> Result<FitResult>
where
    M: Fn(&[f64], f64) -> f64,
{
    fit_nonlinear_with(model, x, y, sigma, p0, &NonlinearOptions::default())
}

pub fn fit_nonlinear_with<M>(
    model: M,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
    opts: &NonlinearOptions,
) -> Result<FitResult>
where
    M: Fn(&[f64], f64) -> f64,
{
    let np = p0.len();
    if np == 0 {
        return Err(Error::invalid("no parameters to fit"));
    }
    if p0.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("initial parameters must be finite"));
    }
    check_data(x, y, Some(sigma), np)?;

    let residuals = |p: &[f64]| -> Option<Vec<f64>> {
        let mut r = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let m = model(p, x[i]);
            if !m.is_finite() {
                return None;
            }
            r.push((y[i] - m) / sigma[i]);
        }
        Some(r)
    };
    let chi2_of = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let scale_of = |p: f64| if p != 0.0 { p.abs() } else { 1.0 };

    // Weighted Jacobian of the model (not of the residuals).
    let jacobian = |p: &[f64]| -> Result<Vec<Vec<f64>>> {
        let mut jac = vec![vec![0.0; np]; x.len()];
        for j in 0..np {
            let h = opts.jacobian_step * scale_of(p[j]);
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[j] += h;
            lo[j] -= h;
            for i in 0..x.len() {
                let d = (model(&hi, x[i]) - model(&lo, x[i])) / (2.0 * h);
                if !d.is_finite() {
                    return Err(Error::invalid(format!(
                        "model derivative is not finite at parameter {j} = {}",
                        p[j]
                    )));
                }
                jac[i][j] = d / sigma[i];
            }
        }
        Ok(jac)
    };

    let mut p = p0.to_vec();
    let mut r = residuals(&p).ok_or_else(|| Error::invalid("model is not finite at p0"))?;
    let mut chi2 = chi2_of(&r);
    let mut trace = vec![chi2];
    let mut lambda = opts.initial_damping;
    let mut jac = jacobian(&p)?;
    let mut converged = chi2 == 0.0;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..np {
                jtr[a] += row[a] * ri;
                for b in 0..np {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        loop {
            let mut damped = jtj.clone();
            for a in 0..np {
                damped[a][a] *= 1.0 + lambda;
            }
            let Some(step) = solve_spd(&damped, &jtr) else {
                return Err(Error::DegenerateFit("normal matrix is singular".into()));
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(p, s)| p + s).collect();
            let small_step = step
                .iter()
                .zip(&p)
                .all(|(s, p)| s.abs() <= opts.step_tol * scale_of(*p));
            match residuals(&trial) {
                Some(rt) if chi2_of(&rt) < chi2 => {
                    let chi2_new = chi2_of(&rt);
                    let rel = (chi2 - chi2_new) / chi2;
                    p = trial;
                    r = rt;
                    chi2 = chi2_new;
                    trace.push(chi2);
                    lambda = (lambda / 10.0).max(1e-12);
                    if rel < opts.chi2_rel_tol || small_step || chi2 == 0.0 {
                        converged = true;
                    } else {
                        jac = jacobian(&p)?;
                    }
                    break;
                }
                _ => {
                    if small_step || lambda > 1e16 {
                        // No downhill step exists at this resolution: stationary point.
                        converged = true;
                        break;
                    }
                    lambda *= 10.0;
                }
            }
        }
    }
    if !converged {
        return Err(Error::FitDiverged { iterations, params: p, chi2_trace: trace });
    }

    let jac = jacobian(&p)?;
    let mut jtj = vec![vec![0.0; np]; np];
    for row in &jac {
        for a in 0..np {
            for b in 0..np {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    let covariance = invert_spd(&jtj)
        .ok_or_else(|| Error::DegenerateFit("parameters are not identifiable from the data".into()))?;
    Ok(FitResult { params: p, covariance, chi2, dof: x.len() - np })
}
