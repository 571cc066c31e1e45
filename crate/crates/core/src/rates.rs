//! Rate functions of the large and moderate deviation regimes, and the
//! Gaussian point-probability prediction used by the local checks.

use crate::constants::ModelConstants;
use crate::error::{Error, Result};

/// Grid step of [`RateFunctionSet::quadratic_bound_radius`].
pub const RADIUS_GRID_STEP: f64 = 1e-4;

/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFunctionSet {
    pub constants: ModelConstants,
}

impl Default for RateFunctionSet {
    fn default() -> Self {
        Self::new(ModelConstants::new())
    }
}

impl RateFunctionSet {
    pub fn new(constants: ModelConstants) -> Self {
        Self { constants }
    }

    /// `x ln x + (1-x) [varrho - ln(1-x)]` on `[0, 1)`, with `0 ln 0 = 0`.
    pub fn h(&self, x: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain(format!("h is defined on [0, 1), got {x}")));
        }
        let xlogx = if x == 0.0 { 0.0 } else { x * x.ln() };
        Ok(xlogx + (1.0 - x) * (self.constants.varrho - (-x).ln_1p()))
    }

    /// `h` extended by `+inf` outside `[0, 1)`, including `x = 1`.
    #[allow(non_snake_case)]
    pub fn H(&self, x: f64) -> f64 {
        self.h(x).unwrap_or(f64::INFINITY)
    }

    /// Moderate deviation rate `x^2 / (2 sigma^2)`.
    #[allow(non_snake_case)]
    pub fn J(&self, x: f64) -> f64 {
        x * x / (2.0 * self.constants.sigma2)
    }

    /// Analytic `h'(x) = ln x + ln(1-x) + 2 - varrho`.
    pub fn h_prime(&self, x: f64) -> f64 {
        x.ln() + (-x).ln_1p() + 2.0 - self.constants.varrho
    }

    /// Analytic `h''(x) = 1/x - 1/(1-x)`; positive only on `(0, 1/2)`.
    pub fn h_second(&self, x: f64) -> f64 {
        1.0 / x - 1.0 / (1.0 - x)
    }

    /// `floor(n x_inf + z b_n sqrt(n))`, checked against the support `0..n`.
    pub fn lattice_point(&self, n: u64, z: f64, b_n: f64) -> Result<u64> {
        let k = (n as f64 * self.constants.x_inf + z * b_n * (n as f64).sqrt()).floor();
        if k < 0.0 || k >= n as f64 {
            return Err(Error::OutOfSupport { n, k: k as i128 });
        }
        Ok(k as u64)
    }

    /// Predicted `ln P(X_n = k_n(z))`: `-ln(n)/2 - z^2 b_n^2 / (2 sigma^2)`.
    ///
    /// Fails when `k_n(z)` is off the support.
    pub fn point_log_prob_prediction(&self, n: u64, z: f64, b_n: f64) -> Result<f64> {
        if n < 2 || !(b_n > 0.0) {
            return Err(Error::Domain(format!("need n >= 2 and b_n > 0, got n = {n}, b_n = {b_n}")));
        }
        self.lattice_point(n, z, b_n)?;
        Ok(-0.5 * (n as f64).ln() - self.J(z * b_n))
    }

    /// Largest grid radius `r` with `h(u) >= (u - x_inf)^2 / (4 sigma^2)` for
    /// every grid point `u` within `r` of `x_inf`.
    pub fn quadratic_bound_radius(&self) -> f64 {
        self.quadratic_bound_radius_with(1.0 / (4.0 * self.constants.sigma2))
    }

    /// Same search with an arbitrary quadratic coefficient.
    pub fn quadratic_bound_radius_with(&self, coefficient: f64) -> f64 {
        let c = &self.constants;
        let limit = c.x_inf.min(1.0 - c.x_inf);
        let mut radius = 0.0;
        let mut m = 1u32;
        loop {
            let r = m as f64 * RADIUS_GRID_STEP;
            if r >= limit {
                break;
            }
            let ok = [c.x_inf - r, c.x_inf + r]
                .iter()
                .all(|&u| self.h(u).map(|hu| hu >= coefficient * r * r).unwrap_or(false));
            if !ok {
                break;
            }
            radius = r;
            m += 1;
        }
        radius
    }

    /// Central differences `(h'(x_inf), h''(x_inf))`.
    pub fn h_derivatives_check(&self, step: f64) -> Result<(f64, f64)> {
        if !(step > 0.0 && step < 1e-2) {
            return Err(Error::Domain(format!("step must lie in (0, 1e-2), got {step}")));
        }
        let x = self.constants.x_inf;
        let (lo, mid, hi) = (self.h(x - step)?, self.h(x)?, self.h(x + step)?);
        Ok(((hi - lo) / (2.0 * step), (hi - 2.0 * mid + lo) / (step * step)))
    }
}
