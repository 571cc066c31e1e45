//! Convergence tables for the limit theorems of `X_n`, computed from the
//! exact law.
//!
//! Every row records the backend that produced it: exact fractions for
//! `n <= 300`, the floating closed form with exact `d_j` up to 5000, and the
//! lazily evaluated asymptotic form beyond.

use rayon::prelude::*;

use crate::constants::ModelConstants;
use crate::error::{Error, Result};
use crate::exact::{DistBackend, ExactEngine, TailSide};
use crate::rates::RateFunctionSet;
use crate::report::{DeviationReport, DeviationRow, Metric};
use crate::special::normal_cdf;

/// Default `delta` of the endpoint layer `V_n <= delta n`.
pub const DEFAULT_ENDPOINT_DELTA: f64 = 0.1;

/// The moderate scale sequence `b_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleChoice {
    /// `(ln n)^{1/4}`.
    LogQuarter,
    /// `(ln ln n)^{1/2}`.
    LogLogHalf,
    /// `(ln n)^p`; satisfies `b_n^2 / ln n -> 0` only for `p < 1/2`.
    LogPower(f64),
}

impl ScaleChoice {
    pub fn b_n(&self, n: u64) -> f64 {
        let ln = (n as f64).ln();
        match *self {
            ScaleChoice::LogQuarter => ln.powf(0.25),
            ScaleChoice::LogLogHalf => ln.ln().sqrt(),
            ScaleChoice::LogPower(p) => ln.powf(p),
        }
    }

    /// `b_n^2 / ln n`, which must tend to zero for the endpoint to be negligible.
    pub fn endpoint_ratio(&self, n: u64) -> f64 {
        self.b_n(n).powi(2) / (n as f64).ln()
    }

    pub fn name(&self) -> String {
        match self {
            ScaleChoice::LogQuarter => "log_quarter".into(),
            ScaleChoice::LogLogHalf => "loglog_half".into(),
            ScaleChoice::LogPower(p) => format!("logpow:{p}"),
        }
    }

    fn checked(&self, n: u64) -> Result<f64> {
        let b = self.b_n(n);
        if b.is_finite() && b > 0.0 {
            Ok(b)
        } else {
            Err(Error::Domain(format!("scale {} undefined at n = {n}", self.name())))
        }
    }
}

impl std::str::FromStr for ScaleChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_quarter" => Ok(ScaleChoice::LogQuarter),
            "loglog_half" => Ok(ScaleChoice::LogLogHalf),
            _ => s
                .strip_prefix("logpow:")
                .and_then(|p| p.parse::<f64>().ok())
                .filter(|p| *p > 0.0)
                .map(ScaleChoice::LogPower)
                .ok_or_else(|| Error::Domain(format!("unknown scale `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Harness {
    engine: ExactEngine,
    rates: RateFunctionSet,
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(format!("n grid must be positive and strictly increasing: {n_grid:?}")));
    }
    Ok(())
}

impl Harness {
    pub fn new(engine: ExactEngine) -> Self {
        let rates = RateFunctionSet::new(*engine.constants());
        Self { engine, rates }
    }

    pub fn engine(&self) -> &ExactEngine {
        &self.engine
    }

    pub fn rates(&self) -> &RateFunctionSet {
        &self.rates
    }

    fn constants(&self) -> &ModelConstants {
        self.engine.constants()
    }

    fn per_n<F>(&self, n_grid: &[u64], f: F) -> Result<DeviationReport>
    where
        F: Fn(u64) -> Result<Vec<DeviationRow>> + Sync,
    {
        check_grid(n_grid)?;
        let rows: Vec<Vec<DeviationRow>> = n_grid.par_iter().map(|&n| f(n)).collect::<Result<_>>()?;
        Ok(DeviationReport::new(rows.into_iter().flatten().collect()))
    }

    /// `(1/b_n^2) ln P(|Z_n| >= z)` against `-z^2/(2 sigma^2)`.
    pub fn mdp_table(&self, z_list: &[f64], scale: ScaleChoice, n_grid: &[u64]) -> Result<DeviationReport> {
        if z_list.iter().any(|z| !(*z > 0.0)) {
            return Err(Error::Domain("tail levels z must be positive".into()));
        }
        self.per_n(n_grid, |n| {
            let b = scale.checked(n)?;
            let backend = self.engine.auto_backend(n);
            z_list
                .iter()
                .map(|&z| {
                    let t = self.engine.tail_estimate(n, z, b, TailSide::Both, backend)?;
                    Ok(DeviationRow {
                        metric: Metric::TailRate,
                        n,
                        b_n: b,
                        param: z,
                        empirical_rate: t.log_prob / (b * b),
                        target_rate: -self.rates.J(z),
                        aux: t.log_truncation_bound,
                        backend,
                    })
                })
                .collect()
        })
    }

    /// `-(1/n) ln P(X_n <= x n)` for `x < x_inf`, `-(1/n) ln P(X_n >= x n)` for
    /// `x > x_inf`, against `h(x)`.
    pub fn ldp_table(&self, x_list: &[f64], n_grid: &[u64]) -> Result<DeviationReport> {
        let x_inf = self.constants().x_inf;
        if x_list.iter().any(|x| !(*x > 0.0 && *x < 1.0) || *x == x_inf) {
            return Err(Error::Domain("LDP levels must lie in (0, 1) and differ from x_inf".into()));
        }
        self.per_n(n_grid, |n| {
            let backend = self.engine.auto_backend(n);
            x_list
                .iter()
                .map(|&x| {
                    let edge = x * n as f64;
                    let log_p = if x < x_inf {
                        self.engine.range_log_prob(n, 0, edge.floor() as u64, backend)?
                    } else {
                        self.engine.range_log_prob(n, edge.ceil() as u64, n - 1, backend)?
                    };
                    Ok(DeviationRow {
                        metric: Metric::LdpRate,
                        n,
                        b_n: f64::NAN,
                        param: x,
                        empirical_rate: -log_p / n as f64,
                        target_rate: self.rates.h(x)?,
                        aux: log_p,
                        backend,
                    })
                })
                .collect()
        })
    }

    /// Kolmogorov-Smirnov distance between the law of `(X_n - n x_inf)/sqrt(n)`
    /// and `N(0, sigma^2)`.
    pub fn clt_check(&self, n_grid: &[u64]) -> Result<DeviationReport> {
        let c = *self.constants();
        self.per_n(n_grid, |n| {
            let backend = self.engine.auto_backend(n);
            if backend == DistBackend::AsymptoticD {
                return Err(Error::ResourceCap {
                    backend: "clt_check",
                    limit: self.engine.caps().float_n,
                    requested: n,
                });
            }
            let dist = self.engine.distribution(n, backend)?;
            let ks = ks_distance(&dist.pmf_vec(), n, &c);
            Ok(vec![DeviationRow {
                metric: Metric::Ks,
                n,
                b_n: f64::NAN,
                param: c.sigma2,
                empirical_rate: ks,
                target_rate: 0.0,
                aux: f64::NAN,
                backend,
            }])
        })
    }

    /// `P(X_n = n-1)` and its cost `ln P / b_n^2 = -2 ln n / b_n^2`.
    pub fn endpoint_probe(&self, n_grid: &[u64], scale: ScaleChoice) -> Result<DeviationReport> {
        self.per_n(n_grid, |n| {
            if n < 2 {
                return Err(Error::Domain("endpoint probe needs n >= 2".into()));
            }
            let b = scale.checked(n)?;
            let backend = self.engine.auto_backend(n);
            let (log_p, scaled) = if backend == DistBackend::Rational {
                let dist = self.engine.distribution(n, backend)?;
                let p = &dist.rational_pmf().expect("rational backend")[n as usize - 1];
                let n2 = num_rational::BigRational::from_integer((n * n).into());
                (dist.log_pmf(n - 1), num_traits::ToPrimitive::to_f64(&(p * n2)).unwrap_or(f64::NAN))
            } else {
                let log_p = self.engine.range_log_prob(n, n - 1, n - 1, backend)?;
                (log_p, (log_p + 2.0 * (n as f64).ln()).exp())
            };
            Ok(vec![DeviationRow {
                metric: Metric::EndpointCost,
                n,
                b_n: b,
                param: log_p.exp(),
                empirical_rate: log_p / (b * b),
                target_rate: -2.0 * (n as f64).ln() / (b * b),
                aux: scaled,
                backend,
            }])
        })
    }

    /// `(ln P(X_n = k_n(z)) + ln(n)/2 + z^2 b_n^2/(2 sigma^2)) / b_n^2`, which tends to 0.
    ///
    /// Lattice points off the support give `NaN` rows with `aux = -inf`.
    pub fn local_mdp_check(&self, z_list: &[f64], scale: ScaleChoice, n_grid: &[u64]) -> Result<DeviationReport> {
        self.per_n(n_grid, |n| {
            let b = scale.checked(n)?;
            let backend = self.engine.auto_backend(n);
            let dist = self.engine.distribution(n, backend)?;
            z_list
                .iter()
                .map(|&z| {
                    let (value, log_p) = match self.rates.point_log_prob_prediction(n, z, b) {
                        Ok(pred) => {
                            let k = self.rates.lattice_point(n, z, b)?;
                            let log_p = dist.log_pmf(k);
                            ((log_p - pred) / (b * b), log_p)
                        }
                        Err(Error::OutOfSupport { .. }) => (f64::NAN, f64::NEG_INFINITY),
                        Err(e) => return Err(e),
                    };
                    Ok(DeviationRow {
                        metric: Metric::LocalRate,
                        n,
                        b_n: b,
                        param: z,
                        empirical_rate: value,
                        target_rate: 0.0,
                        aux: log_p,
                        backend,
                    })
                })
                .collect()
        })
    }

    /// Window rows `(1/b_n^2) ln P(L < |Z_n| <= r sqrt(n)/b_n)` against
    /// `-L^2/(8 sigma^2)`, and endpoint-layer rows `n P(V_n <= delta n)`.
    pub fn tightness_check(
        &self,
        l_list: &[f64],
        scale: ScaleChoice,
        n_grid: &[u64],
        delta: f64,
    ) -> Result<DeviationReport> {
        if l_list.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Domain("window levels L must be positive".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        let radius = self.rates.quadratic_bound_radius();
        let sigma2 = self.constants().sigma2;
        self.per_n(n_grid, |n| {
            let b = scale.checked(n)?;
            let backend = self.engine.auto_backend(n);
            let sqrt_n = (n as f64).sqrt();
            let mut rows = Vec::with_capacity(l_list.len() + 1);
            for &l in l_list {
                let t = self.engine.band_estimate(n, l * b * sqrt_n, Some(radius * n as f64), TailSide::Both, backend)?;
                rows.push(DeviationRow {
                    metric: Metric::WindowRate,
                    n,
                    b_n: b,
                    param: l,
                    empirical_rate: t.log_prob / (b * b),
                    target_rate: -l * l / (8.0 * sigma2),
                    aux: t.log_prob,
                    backend,
                });
            }
            // V_n <= delta n  <=>  X_n >= n - floor(delta n)
            let k_lo = n - (delta * n as f64).floor() as u64;
            let log_p = self.engine.range_log_prob(n, k_lo, n - 1, backend)?;
            rows.push(DeviationRow {
                metric: Metric::EndpointLayer,
                n,
                b_n: b,
                param: delta,
                empirical_rate: n as f64 * log_p.exp(),
                target_rate: f64::NAN,
                aux: log_p.exp(),
                backend,
            });
            Ok(rows)
        })
    }
}

/// Sup distance between the lattice CDF of `(k - n x_inf)/sqrt(n)` and the
/// `N(0, sigma^2)` CDF, checked on both sides of every jump.
pub fn ks_distance(pmf: &[f64], n: u64, c: &ModelConstants) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let sigma = c.sigma();
    let mut below = 0.0f64;
    let mut worst = 0.0f64;
    for (k, p) in pmf.iter().enumerate() {
        let t = (k as f64 - n as f64 * c.x_inf) / sqrt_n;
        let phi = normal_cdf(t / sigma);
        let at = (below + p).min(1.0);
        worst = worst.max((below - phi).abs()).max((at - phi).abs());
        below = at;
    }
    worst
}
