//! Closed-form constants of the Maki-Thompson model.
//!
//! Everything hangs off the limiting ignorant fraction `x_inf`, the root in
//! `(0, 1/2)` of `x e^{2(1-x)} = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default residual tolerance for the fixed-point solver.
pub const DEFAULT_TOLERANCE: f64 = 1e-14;

const MAX_ITERATIONS: usize = 200;

/// All constants of the model, derived once from `x_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// Limiting proportion of ignorants.
    pub x_inf: f64,
    /// `1 - x_inf`.
    pub v_inf: f64,
    /// Asymptotic variance of `sqrt(n) (X_n/n - x_inf)`.
    pub sigma2: f64,
    /// Additive constant of the large-deviation rate function.
    pub varrho: f64,
    /// `2 - 1/v_inf`.
    pub kappa: f64,
    /// `sqrt(1 / (2 pi (2 v_inf - 1)))`.
    pub alpha: f64,
    /// `1 / (e v_inf (1 - v_inf))`.
    pub beta: f64,
}

impl ModelConstants {
    /// Solve the fixed point at the default tolerance and derive the rest.
    pub fn new() -> Self {
        let x = solve_fixed_point(DEFAULT_TOLERANCE).expect("default tolerance is attainable");
        derive_constants(x).expect("solver returns a point in (0, 1/2)")
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

impl Default for ModelConstants {
    fn default() -> Self {
        Self::new()
    }
}

fn residual(x: f64) -> f64 {
    x * (2.0 * (1.0 - x)).exp() - 1.0
}

/// Root of `x e^{2(1-x)} = 1` in `(0, 1/2)`.
///
/// Newton iterations start from the midpoint `0.25` and are kept inside a
/// bisection bracket, so a step that leaves the bracket is replaced by a
/// bisection step. The residual is negative left of the root and positive
/// right of it on `(0, 1/2)`.
pub fn solve_fixed_point(tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tolerance}")));
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    let mut x = 0.25;
    for _ in 0..MAX_ITERATIONS {
        let f = residual(x);
        if f.abs() <= tolerance {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d/dx [x e^{2(1-x)}] = (1 - 2x) e^{2(1-x)}
        let slope = (1.0 - 2.0 * x) * (2.0 * (1.0 - x)).exp();
        let newton = x - f / slope;
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if residual(x).abs() <= tolerance {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iterations: MAX_ITERATIONS })
    }
}

/// Populate every constant from `x_inf`.
pub fn derive_constants(x_inf: f64) -> Result<ModelConstants> {
    if !(x_inf > 0.0 && x_inf < 0.5) {
        return Err(Error::Domain(format!("x_inf must lie in (0, 1/2), got {x_inf}")));
    }
    let v_inf = 1.0 - x_inf;
    Ok(ModelConstants {
        x_inf,
        v_inf,
        sigma2: x_inf * (1.0 - x_inf) / (1.0 - 2.0 * x_inf),
        varrho: 2.0 + (x_inf * (1.0 - x_inf)).ln(),
        kappa: 2.0 - 1.0 / v_inf,
        alpha: (1.0 / (2.0 * std::f64::consts::PI * (2.0 * v_inf - 1.0))).sqrt(),
        beta: 1.0 / (std::f64::consts::E * v_inf * (1.0 - v_inf)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(mut lo: f64, mut hi: f64, tol: f64) -> f64 {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if residual(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn fixed_point_value() {
        let x = solve_fixed_point(1e-12).unwrap();
        assert!((x - 0.203187869979).abs() < 1e-10, "{x}");
        assert!(residual(x).abs() <= 1e-12);
    }

    #[test]
    fn agrees_with_pure_bisection() {
        let x = solve_fixed_point(1e-12).unwrap();
        let b = bisect(0.1, 0.3, 1e-12);
        assert!((x - b).abs() < 1e-11, "{x} vs {b}");
    }

    #[test]
    fn tiny_tolerances_converge() {
        for tol in [1e-15, 10.0 * f64::EPSILON, 1e-8] {
            let x = solve_fixed_point(tol).unwrap();
            assert!(residual(x).abs() <= tol);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(solve_fixed_point(0.0).is_err());
        assert!(solve_fixed_point(f64::NAN).is_err());
        assert!(derive_constants(0.5).is_err());
        assert!(derive_constants(0.0).is_err());
    }

    #[test]
    fn derived_values() {
        // reference digits from a 40-digit evaluation of the closed forms
        let c = derive_constants(0.203187869979).unwrap();
        assert!((c.sigma2 - 0.272727).abs() < 1e-5);
        assert!((c.varrho - 0.1792).abs() < 5e-5);
        assert!((c.beta - 2.2722).abs() < 1e-4);
        assert!((c.kappa - 0.7450).abs() < 1e-4);
        assert!((c.alpha - 0.5178).abs() < 1e-4);

        let c = ModelConstants::new();
        assert!((c.sigma2 - 0.272_735_752_851_573_7).abs() < 1e-13);
        assert!((c.varrho - 0.179_239_390_551_036_1).abs() < 1e-13);
        assert!((c.beta - 2.272_227_458_101_679).abs() < 1e-12);
        assert!((c.kappa - 0.744_999_025_084_024_7).abs() < 1e-13);
        assert!((c.alpha - 0.517_790_699_241_991_8).abs() < 1e-13);
    }

    #[test]
    fn closed_form_identities() {
        let c = ModelConstants::new();
        assert_eq!(c.sigma2, c.x_inf * (1.0 - c.x_inf) / (1.0 - 2.0 * c.x_inf));
        assert_eq!(c.varrho, 2.0 + (c.x_inf * (1.0 - c.x_inf)).ln());
        assert_eq!(c.v_inf, 1.0 - c.x_inf);
        assert!(c.sigma2 > 0.0 && c.beta > 1.0 && c.kappa > 0.0 && c.kappa < 1.0 && c.alpha > 0.0);
        assert!(2.0 * c.v_inf - 1.0 > 0.0);
    }
}
