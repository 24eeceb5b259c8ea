use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    pub passed: bool,
    pub tolerance: f64,
}

/// Relative differences are taken against `max(|analytic|, |numeric|)`,
/// floored here so that coordinates whose true gradient is zero compare
/// rounding noise against a sane scale.
const REL_FLOOR: f64 = 1e-7;

/// Checks `analytic` against `(f(θ+ε) - f(θ-ε)) / 2ε` for every coordinate.
pub fn finite_diff_check<F>(
    f: F,
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
    tol: f64,
) -> Result<GradReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Argument(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape(format!(
            "{} analytic gradient entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let eval = |theta: &[f64]| -> Result<f64> {
        let v = f(theta)?;
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("objective returned {v}")));
        }
        Ok(v)
    };
    eval(params)?;

    let mut theta = params.to_vec();
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for i in 0..params.len() {
        let orig = theta[i];
        theta[i] = orig + epsilon;
        let plus = eval(&theta)?;
        theta[i] = orig - epsilon;
        let minus = eval(&theta)?;
        theta[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let abs = (numeric - analytic[i]).abs();
        let scale = analytic[i].abs().max(numeric.abs()).max(REL_FLOOR);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / scale);
    }
    Ok(GradReport {
        max_abs_diff: max_abs,
        max_rel_diff: max_rel,
        passed: max_rel <= tol,
        tolerance: tol,
    })
}
