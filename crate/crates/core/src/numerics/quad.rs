//! Adaptive Simpson quadrature with Richardson extrapolation.
//!
//! Semi-infinite integrals are mapped onto `[0, 1)` with `x = t / (1 - t)`,
//! `dx = dt / (1 - t)^2`. The mapped integrand is taken as zero at `t = 1`, which
//! requires `f(x) = o(1/x^2)`; every integrand in this crate decays exponentially.

use crate::error::{Error, Result};

const INITIAL_PANELS: usize = 32;
const MAX_DEPTH: u32 = 48;
const MAX_EVALS: usize = 4_000_000;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    depth: u32,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over the finite interval `[a, b]` to relative tolerance `rel_tol`.
pub fn integrate_finite<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_panels(f, a, b, rel_tol, INITIAL_PANELS)
}

/// As [`integrate_finite`] with a caller-chosen number of initial panels; used for
/// short, smooth pieces where the default coarse sampling is wasted work.
pub(crate) fn integrate_panels<F>(mut f: F, a: f64, b: f64, rel_tol: f64, initial_panels: usize) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let initial_panels = initial_panels.max(1);
    if !(rel_tol > 0.0) {
        return Err(Error::invalid(format!("rel_tol must be positive, got {rel_tol}")));
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("integration limits must be finite"));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate_panels(f, b, a, rel_tol, initial_panels).map(|v| -v);
    }

    let mut evals = 0usize;
    let mut eval = |x: f64| -> Result<f64> {
        evals += 1;
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFiniteIntegrand { x })
        }
    };

    let width = b - a;
    let h = width / initial_panels as f64;
    let mut samples = Vec::with_capacity(2 * initial_panels + 1);
    for i in 0..=2 * initial_panels {
        let x = if i == 2 * initial_panels { b } else { a + 0.5 * h * i as f64 };
        samples.push(eval(x)?);
    }

    let mut stack = Vec::with_capacity(initial_panels * 4);
    let mut coarse = 0.0;
    let mut coarse_abs = 0.0;
    for p in (0..initial_panels).rev() {
        let pa = a + h * p as f64;
        let pb = if p + 1 == initial_panels { b } else { a + h * (p + 1) as f64 };
        let (fa, fm, fb) = (samples[2 * p], samples[2 * p + 1], samples[2 * p + 2]);
        let whole = simpson(pa, pb, fa, fm, fb);
        coarse += whole;
        coarse_abs += (pb - pa) / 6.0 * (fa.abs() + 4.0 * fm.abs() + fb.abs());
        stack.push(Panel { a: pa, b: pb, fa, fm, fb, whole, depth: 0 });
    }
    if coarse_abs == 0.0 {
        return Ok(0.0);
    }
    let scale = if coarse != 0.0 { coarse.abs() } else { coarse_abs };
    let abs_tol = rel_tol * scale;

    let mut total = 0.0;
    let mut err_total = 0.0;
    let mut exhausted = false;
    let mut evals_used = 0usize;
    while let Some(p) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = eval(lm)?;
        let frm = eval(rm)?;
        evals_used += 2;
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let refined = left + right;
        let delta = refined - p.whole;
        let local_tol = abs_tol * (p.b - p.a) / width;
        if delta.abs() <= 15.0 * local_tol || p.depth >= MAX_DEPTH || m <= p.a || m >= p.b {
            if delta.abs() > 15.0 * local_tol {
                exhausted = true;
            }
            total += refined + delta / 15.0;
            err_total += delta.abs() / 15.0;
        } else {
            stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, depth: p.depth + 1 });
            stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, depth: p.depth + 1 });
        }
        if evals_used > MAX_EVALS {
            let rest: f64 = stack.iter().map(|q| q.whole).sum();
            return Err(Error::QuadratureNotConverged {
                estimate: total + rest,
                error_bound: err_total + stack.len() as f64 * abs_tol,
            });
        }
    }
    if exhausted && err_total > abs_tol.max(f64::EPSILON * total.abs()) {
        return Err(Error::QuadratureNotConverged { estimate: total, error_bound: err_total });
    }
    Ok(total)
}

/// Integrates `f` over `(0, ∞)` to relative tolerance `rel_tol`.
pub fn integrate_semi_infinite<F>(mut f: F, rel_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_finite(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let y = f(t / s) / (s * s);
            // Underflowed tails can produce 0/0 in the mapped integrand.
            if y.is_nan() && t > 0.5 {
                0.0
            } else {
                y
            }
        },
        0.0,
        1.0,
        rel_tol,
    )
}
