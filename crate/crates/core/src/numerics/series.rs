use serde::Serialize;

use crate::error::{Error, Result};

/// Outcome of a truncated series summation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    pub value: f64,
    pub terms_used: usize,
    pub converged: bool,
}

/// Sums `term(1) + term(2) + ...` until the last added term satisfies
/// `|term(n)| <= rel_tol * |partial sum|`, or `max_terms` terms were added.
///
/// Hitting `max_terms` is not an error; the result reports `converged = false`
/// and the caller decides.
pub fn sum_series<F>(mut term: F, rel_tol: f64, max_terms: usize) -> Result<SeriesResult>
where
    F: FnMut(usize) -> f64,
{
    if !(rel_tol > 0.0) {
        return Err(Error::invalid(format!("rel_tol must be positive, got {rel_tol}")));
    }
    if max_terms == 0 {
        return Err(Error::invalid("max_terms must be at least 1"));
    }
    let mut partial = 0.0_f64;
    for n in 1..=max_terms {
        let t = term(n);
        if !t.is_finite() {
            return Err(Error::NonFiniteTerm { index: n, value: t });
        }
        partial += t;
        if t.abs() <= rel_tol * partial.abs() {
            return Ok(SeriesResult { value: partial, terms_used: n, converged: true });
        }
    }
    Ok(SeriesResult { value: partial, terms_used: max_terms, converged: false })
}
