//! Exact law of the final ignorant count `X_n`.
//!
//! For `k = 0..n-1`, with `j = n - k` informed ignorants,
//! `P(X_n = k) = (n-1)!/k! * d_j / n^{2j}`. All evaluation happens in log
//! space. A forward-propagation DP over the embedded jump chain serves as an
//! independent oracle.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::automata::{log_d_asymptotic, shared_table, AutomataTable, DjBackend, DEFAULT_J_CAP};
use crate::constants::ModelConstants;
use crate::error::{Error, Result};
use crate::simulator::RateConvention;
use crate::special::{ln_bigrational, ln_factorial, ln_falling_ratio, stirling_remainder, LogSumExp};

/// Number of endpoint terms `j = 1..=ENDPOINT_TERMS` summed with exact `d_j` in windowed tails.
pub const ENDPOINT_TERMS: u64 = 64;

/// Normalization tolerance for floating backends.
pub const FLOAT_NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistBackend {
    /// Exact fractions end to end.
    Rational,
    /// Floating evaluation of the closed form with exact `d_j`.
    FloatFormula,
    /// Closed form with the asymptotic approximant of `d_j`, evaluated per `k` on demand.
    AsymptoticD,
    /// Forward propagation over the embedded jump chain.
    DpOracle,
}

impl DistBackend {
    pub fn name(self) -> &'static str {
        match self {
            DistBackend::Rational => "rational",
            DistBackend::FloatFormula => "float_formula",
            DistBackend::AsymptoticD => "asymptotic_d",
            DistBackend::DpOracle => "dp_oracle",
        }
    }
}

impl std::fmt::Display for DistBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DistBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rational" => Ok(DistBackend::Rational),
            "float_formula" | "float" => Ok(DistBackend::FloatFormula),
            "asymptotic_d" | "asymptotic" => Ok(DistBackend::AsymptoticD),
            "dp_oracle" | "dp" => Ok(DistBackend::DpOracle),
            other => Err(Error::Domain(format!("unknown backend `{other}`"))),
        }
    }
}

/// Size limits per backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceCaps {
    pub rational_n: u64,
    pub float_n: u64,
    pub dp_n: u64,
    pub j_max: usize,
}

impl Default for ResourceCaps {
    fn default() -> Self {
        Self { rational_n: 300, float_n: 5000, dp_n: 2000, j_max: DEFAULT_J_CAP }
    }
}

impl ResourceCaps {
    /// Rational up to its cap, then float with exact `d_j`, then the asymptotic form.
    pub fn auto_backend(&self, n: u64) -> DistBackend {
        if n <= self.rational_n {
            DistBackend::Rational
        } else if n <= self.float_n.min(self.j_max as u64) {
            DistBackend::FloatFormula
        } else {
            DistBackend::AsymptoticD
        }
    }

    fn check(&self, backend: DistBackend, n: u64) -> Result<()> {
        let limit = match backend {
            DistBackend::Rational => self.rational_n.min(self.j_max as u64),
            DistBackend::FloatFormula => self.float_n.min(self.j_max as u64),
            DistBackend::DpOracle => self.dp_n,
            DistBackend::AsymptoticD => u64::MAX,
        };
        if n > limit {
            Err(Error::ResourceCap { backend: backend.name(), limit, requested: n })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSide {
    Left,
    Right,
    Both,
}

impl std::str::FromStr for TailSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(TailSide::Left),
            "right" => Ok(TailSide::Right),
            "both" => Ok(TailSide::Both),
            other => Err(Error::Domain(format!("unknown tail side `{other}`"))),
        }
    }
}

/// Log tail probability together with a bound on any truncated mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub log_prob: f64,
    /// Log of an upper estimate of the mass left out by windowing; `-inf` when the sum is complete.
    pub log_truncation_bound: f64,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Vec<f64>),
    Rational { probs: Vec<BigRational>, logs: Vec<f64> },
    Lazy,
}

/// The law of `X_n` for one `n`, tagged with the backend that produced it.
#[derive(Debug, Clone)]
pub struct FinalSizeDistribution {
    n: u64,
    backend: DistBackend,
    constants: ModelConstants,
    storage: Storage,
}

impl FinalSizeDistribution {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn backend(&self) -> DistBackend {
        self.backend
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn is_lazy(&self) -> bool {
        matches!(self.storage, Storage::Lazy)
    }

    /// One past the largest attainable `k`: `n`, or `n + 1` for a DP under the literal rates.
    pub fn support_end(&self) -> u64 {
        match &self.storage {
            Storage::Dense(v) => v.len() as u64,
            Storage::Rational { logs, .. } => logs.len() as u64,
            Storage::Lazy => self.n,
        }
    }

    /// `ln P(X_n = k)`; `-inf` off the support.
    pub fn log_pmf(&self, k: u64) -> f64 {
        if k >= self.support_end() {
            return f64::NEG_INFINITY;
        }
        match &self.storage {
            Storage::Dense(v) => v[k as usize],
            Storage::Rational { logs, .. } => logs[k as usize],
            Storage::Lazy => log_pmf_asymptotic(self.n, k, &self.constants),
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if let Storage::Rational { probs, .. } = &self.storage {
            // correctly rounded unless it underflows
            if let Some(p) = probs.get(k as usize).and_then(|q| q.to_f64()).filter(|p| *p > 0.0) {
                return p;
            }
        }
        self.log_pmf(k).exp()
    }

    /// Exact probabilities, rational backend only.
    pub fn rational_pmf(&self) -> Option<&[BigRational]> {
        match &self.storage {
            Storage::Rational { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Materialized probabilities `P(X_n = k)` for `k` in the support.
    pub fn pmf_vec(&self) -> Vec<f64> {
        (0..self.support_end()).map(|k| self.pmf(k)).collect()
    }

    pub fn log_pmf_vec(&self) -> Vec<f64> {
        (0..self.support_end()).map(|k| self.log_pmf(k)).collect()
    }

    /// `sum_k P(X_n = k) - 1` in floating point.
    pub fn normalization_error(&self) -> f64 {
        let mut acc = LogSumExp::default();
        for k in 0..self.support_end() {
            acc.push(self.log_pmf(k));
        }
        acc.value().exp_m1()
    }

    /// Exact mean and variance of `X_n`.
    pub fn moments(&self) -> (f64, f64) {
        let p = self.pmf_vec();
        let mean: f64 = p.iter().enumerate().map(|(k, q)| k as f64 * q).sum();
        let var: f64 = p.iter().enumerate().map(|(k, q)| (k as f64 - mean).powi(2) * q).sum();
        (mean, var)
    }
}

/// `ln P(V_n = j) = ln (n-1)! - ln (n-j)! + ln d_j - 2 j ln n`.
pub fn log_pmf_v(n: u64, j: u64, table: &AutomataTable, backend: DjBackend) -> Result<f64> {
    if j == 0 || j > n {
        return Err(Error::Domain(format!("j = {j} outside support 1..={n}")));
    }
    let log_d = table.log_d(j as usize, backend)?;
    Ok(ln_falling_ratio(n, n - j) + log_d - 2.0 * j as f64 * (n as f64).ln())
}

/// `ln P(X_n = k)` with the asymptotic form of `d_{n-k}`.
///
/// For `k >= 1` the closed form is rearranged as
/// `-ln(n)/2 - n h(k/n) + ln(v/x)/2 + ln(alpha kappa) + S(n) - S(k)`, with
/// `x = k/n`, `v = 1 - x`, `S` the Stirling remainder of `ln m!`, and `h`
/// written in terms of `k/n - x_inf` so that nothing of size `n ln n` is
/// subtracted.
pub fn log_pmf_asymptotic(n: u64, k: u64, c: &ModelConstants) -> f64 {
    if k >= n {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    if k == 0 {
        return ln_factorial(n - 1) + log_d_asymptotic(nf, c) - 2.0 * nf * nf.ln();
    }
    let j = n - k;
    let x = k as f64 / nf;
    let v = j as f64 / nf;
    let dev = (k as f64 - nf * c.x_inf) / nf;
    let h = x * (dev / c.x_inf).ln_1p() - v * (-dev / c.v_inf).ln_1p() - 2.0 * dev;
    -0.5 * nf.ln() - nf * h + 0.5 * (v / x).ln() + (c.alpha * c.kappa).ln() + stirling_remainder(n)
        - stirling_remainder(k)
}

/// Entry point for exact computations with shared `d_j` tables and resource caps.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    constants: ModelConstants,
    caps: ResourceCaps,
}

impl Default for ExactEngine {
    fn default() -> Self {
        Self::new(ModelConstants::new())
    }
}

impl ExactEngine {
    pub fn new(constants: ModelConstants) -> Self {
        Self { constants, caps: ResourceCaps::default() }
    }

    pub fn with_caps(mut self, caps: ResourceCaps) -> Self {
        self.caps = caps;
        self
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn caps(&self) -> &ResourceCaps {
        &self.caps
    }

    pub fn table(&self, j_max: usize) -> Result<Arc<AutomataTable>> {
        shared_table(j_max, self.caps.j_max, &self.constants)
    }

    pub fn auto_backend(&self, n: u64) -> DistBackend {
        self.caps.auto_backend(n)
    }

    /// Full law of `X_n` from the requested backend.
    pub fn distribution(&self, n: u64, backend: DistBackend) -> Result<FinalSizeDistribution> {
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        self.caps.check(backend, n)?;
        let storage = match backend {
            DistBackend::Rational => self.rational_storage(n)?,
            DistBackend::FloatFormula => {
                let table = self.table(n as usize)?;
                let logs = (0..n)
                    .map(|k| log_pmf_v(n, n - k, &table, DjBackend::Exact))
                    .collect::<Result<Vec<_>>>()?;
                Storage::Dense(logs)
            }
            DistBackend::AsymptoticD => Storage::Lazy,
            DistBackend::DpOracle => return self.dp_distribution(n, RateConvention::Formula),
        };
        let dist = FinalSizeDistribution { n, backend, constants: self.constants, storage };
        if let Storage::Dense(_) = dist.storage {
            let err = dist.normalization_error();
            if err.abs() > FLOAT_NORMALIZATION_TOL {
                return Err(Error::Domain(format!("{backend} distribution for n = {n} off by {err:e}")));
            }
        }
        Ok(dist)
    }

    fn rational_storage(&self, n: u64) -> Result<Storage> {
        let table = self.table(n as usize)?;
        let nb = BigInt::from(n);
        let mut probs = vec![BigRational::zero(); n as usize];
        // k = n-1 down to 0: falling = (n-1)!/k!, power = n^{2(n-k)}
        let mut falling = BigInt::one();
        let n2 = &nb * &nb;
        let mut power = n2.clone();
        for k in (0..n).rev() {
            let j = (n - k) as usize;
            let d = BigInt::from(table.value(j).cloned().unwrap_or_else(BigUint::zero));
            probs[k as usize] = BigRational::new(&falling * d, power.clone());
            falling *= BigInt::from(k);
            power *= &n2;
        }
        let total: BigRational = probs.iter().sum();
        if !total.is_one() {
            return Err(Error::Domain(format!("rational distribution for n = {n} does not sum to 1")));
        }
        let logs = probs.iter().map(ln_bigrational).collect();
        Ok(Storage::Rational { probs, logs })
    }

    /// Absorption law of the embedded jump chain started at `(n, 1)`.
    ///
    /// States are swept with `i` decreasing and, within a layer, `j`
    /// decreasing, so every state's mass is final before it is pushed on.
    pub fn dp_distribution(&self, n: u64, convention: RateConvention) -> Result<FinalSizeDistribution> {
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        self.caps.check(DistBackend::DpOracle, n)?;
        let size = n as usize + 3;
        let mut absorbed = vec![0.0f64; n as usize + 1];
        let mut layer = vec![0.0f64; size];
        let mut next = vec![0.0f64; size];
        layer[1] = 1.0;
        for i in (0..=n).rev() {
            let p = convention.convert_probability(n, i);
            let q = 1.0 - p;
            let top = (n + 1 - i) as usize;
            next.iter_mut().for_each(|x| *x = 0.0);
            for j in (1..=top).rev() {
                let mass = layer[j];
                if mass == 0.0 {
                    continue;
                }
                layer[j - 1] += mass * q;
                if i > 0 {
                    next[j + 1] += mass * p;
                }
            }
            absorbed[i as usize] = layer[0];
            std::mem::swap(&mut layer, &mut next);
        }
        if convention == RateConvention::Formula {
            debug_assert_eq!(absorbed[n as usize], 0.0);
            absorbed.pop();
        }
        let logs: Vec<f64> = absorbed.iter().map(|p| p.ln()).collect();
        let dist = FinalSizeDistribution {
            n,
            backend: DistBackend::DpOracle,
            constants: self.constants,
            storage: Storage::Dense(logs),
        };
        let err = dist.normalization_error();
        if err.abs() > FLOAT_NORMALIZATION_TOL {
            return Err(Error::Domain(format!("DP distribution for n = {n} off by {err:e}")));
        }
        Ok(dist)
    }

    /// `ln P(Z_n in tail)`, where `Z_n = sqrt(n)/b_n (X_n/n - x_inf)` and the
    /// tail is `|Z_n| >= z` restricted to `side`. Uses the automatic backend.
    pub fn tail_log_prob(&self, n: u64, z: f64, b_n: f64, side: TailSide) -> Result<f64> {
        let backend = self.auto_backend(n);
        Ok(self.tail_estimate(n, z, b_n, side, backend)?.log_prob)
    }

    pub fn tail_estimate(
        &self,
        n: u64,
        z: f64,
        b_n: f64,
        side: TailSide,
        backend: DistBackend,
    ) -> Result<TailEstimate> {
        if !(z > 0.0 && b_n > 0.0) {
            return Err(Error::Domain(format!("need z > 0 and b_n > 0, got z = {z}, b_n = {b_n}")));
        }
        self.band_estimate(n, z * b_n * (n as f64).sqrt(), None, side, backend)
    }

    /// `ln P(inner <= |X_n - n x_inf| <= outer)` on the requested side.
    ///
    /// Materialized backends sum every lattice point. The lazy backend sums
    /// the points within `max(4 inner, 50 sqrt(n))` of `n x_inf`, plus the
    /// endpoint layer `X_n >= n - ENDPOINT_TERMS` evaluated with exact `d_j`,
    /// and reports a bound on the skipped mass: the number of skipped points
    /// times the larger pmf value at the ends of each skipped run. Between
    /// the bulk and the endpoint layer the pmf has no interior maximum, so
    /// the bound holds up to the accuracy of the asymptotic form.
    pub fn band_estimate(
        &self,
        n: u64,
        inner: f64,
        outer: Option<f64>,
        side: TailSide,
        backend: DistBackend,
    ) -> Result<TailEstimate> {
        let dist = self.distribution(n, backend)?;
        let center = n as f64 * self.constants.x_inf;
        let outer = outer.unwrap_or(f64::INFINITY);
        if !dist.is_lazy() {
            let mut acc = LogSumExp::default();
            for k in 0..dist.support_end() {
                let off = k as f64 - center;
                if in_tail(off, inner, side) && off.abs() <= outer {
                    acc.push(dist.log_pmf(k));
                }
            }
            return Ok(TailEstimate { log_prob: acc.value(), log_truncation_bound: f64::NEG_INFINITY });
        }

        let nf = n as f64;
        let window = (4.0 * inner).max(50.0 * nf.sqrt()).min(outer);
        let endpoint_start = n.saturating_sub(ENDPOINT_TERMS);
        let mut acc = LogSumExp::default();
        let mut omitted = LogSumExp::default();

        if side != TailSide::Right {
            let hi = (center - inner).floor();
            if hi >= 0.0 {
                let hi = (hi as u64).min(endpoint_start.saturating_sub(1));
                let lo = (center - window).ceil().max(0.0) as u64;
                acc.merge(&sum_range(&dist, lo, hi));
                let far = (center - outer).ceil().max(0.0) as u64;
                if far < lo {
                    omitted.push(dist.log_pmf(lo - 1) + ((lo - far) as f64).ln());
                }
            }
        }
        if side != TailSide::Left {
            let lo = (center + inner).ceil().max(0.0) as u64;
            let far = (center + outer).floor().min(nf - 1.0) as u64;
            if lo < n && lo <= far {
                let bulk_end = endpoint_start.saturating_sub(1);
                let hi = ((center + window).floor() as u64).min(bulk_end).min(far);
                acc.merge(&sum_range(&dist, lo, hi));
                let gap_lo = lo.max(hi.saturating_add(1));
                let gap_hi = far.min(bulk_end);
                if gap_lo <= gap_hi && endpoint_start > 0 {
                    let edge = dist.log_pmf(gap_lo).max(dist.log_pmf(gap_hi));
                    omitted.push(edge + ((gap_hi - gap_lo + 1) as f64).ln());
                }
                if far >= endpoint_start {
                    acc.merge(&self.endpoint_layer(n, lo.max(endpoint_start), far)?);
                }
            }
        }
        Ok(TailEstimate { log_prob: acc.value(), log_truncation_bound: omitted.value() })
    }

    /// `ln P(lo <= X_n <= hi)` summed over every lattice point in the range.
    ///
    /// The lazy backend switches to exact `d_j` for the endpoint layer.
    pub fn range_log_prob(&self, n: u64, lo: u64, hi: u64, backend: DistBackend) -> Result<f64> {
        let dist = self.distribution(n, backend)?;
        let hi = hi.min(dist.support_end().saturating_sub(1));
        if lo > hi {
            return Ok(f64::NEG_INFINITY);
        }
        if !dist.is_lazy() {
            return Ok(sum_range(&dist, lo, hi).value());
        }
        let endpoint_start = n.saturating_sub(ENDPOINT_TERMS);
        let mut acc = LogSumExp::default();
        if lo < endpoint_start {
            acc.merge(&sum_range(&dist, lo, hi.min(endpoint_start - 1)));
        }
        if hi >= endpoint_start {
            acc.merge(&self.endpoint_layer(n, lo.max(endpoint_start), hi)?);
        }
        Ok(acc.value())
    }

    fn endpoint_layer(&self, n: u64, lo: u64, hi: u64) -> Result<LogSumExp> {
        let table = self.table(ENDPOINT_TERMS as usize)?;
        let mut acc = LogSumExp::default();
        for k in lo..=hi.min(n - 1) {
            acc.push(log_pmf_v(n, n - k, &table, DjBackend::Exact)?);
        }
        Ok(acc)
    }

    /// Mean and variance of `X_n` from a materialized backend.
    pub fn moments(&self, n: u64) -> Result<(f64, f64)> {
        let backend = self.auto_backend(n);
        if backend == DistBackend::AsymptoticD {
            return Err(Error::ResourceCap {
                backend: "moments",
                limit: self.caps.float_n.min(self.caps.j_max as u64),
                requested: n,
            });
        }
        Ok(self.distribution(n, backend)?.moments())
    }
}

fn in_tail(offset: f64, width: f64, side: TailSide) -> bool {
    match side {
        TailSide::Left => offset <= -width,
        TailSide::Right => offset >= width,
        TailSide::Both => offset.abs() >= width,
    }
}

fn sum_range(dist: &FinalSizeDistribution, lo: u64, hi: u64) -> LogSumExp {
    use rayon::prelude::*;
    if lo > hi {
        return LogSumExp::default();
    }
    const CHUNK: u64 = 1 << 16;
    let chunks: Vec<LogSumExp> = (lo..=hi)
        .step_by(CHUNK as usize)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut acc = LogSumExp::default();
            for k in start..=(start + CHUNK - 1).min(hi) {
                acc.push(dist.log_pmf(k));
            }
            acc
        })
        .collect();
    let mut total = LogSumExp::default();
    for c in &chunks {
        total.merge(c);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn engine() -> ExactEngine {
        ExactEngine::default()
    }

    #[test]
    fn point_values() {
        let e = engine();
        let t = e.table(10).unwrap();
        assert!((log_pmf_v(10, 1, &t, DjBackend::Exact).unwrap() - 0.01f64.ln()).abs() < 1e-14);
        assert_eq!(log_pmf_v(1, 1, &t, DjBackend::Exact).unwrap(), 0.0);
        assert!((log_pmf_v(2, 2, &t, DjBackend::Exact).unwrap() - 0.75f64.ln()).abs() < 1e-15);
        assert!(log_pmf_v(2, 3, &t, DjBackend::Exact).is_err());
        assert!(log_pmf_v(2, 0, &t, DjBackend::Exact).is_err());
    }

    #[test]
    fn n_two_all_backends() {
        let e = engine();
        let r = e.distribution(2, DistBackend::Rational).unwrap();
        let probs = r.rational_pmf().unwrap();
        assert_eq!(probs[0], BigRational::new(3.into(), 4.into()));
        assert_eq!(probs[1], BigRational::new(1.into(), 4.into()));
        for b in [DistBackend::FloatFormula, DistBackend::DpOracle] {
            let d = e.distribution(2, b).unwrap();
            assert!((d.pmf(0) - 0.75).abs() < 1e-15);
            assert!((d.pmf(1) - 0.25).abs() < 1e-15);
            assert_eq!(d.support_end(), 2);
        }
    }

    #[test]
    fn n_one() {
        let e = engine();
        for b in [DistBackend::Rational, DistBackend::FloatFormula, DistBackend::DpOracle] {
            let d = e.distribution(1, b).unwrap();
            assert_eq!(d.pmf_vec(), vec![1.0]);
            assert_eq!(d.moments(), (0.0, 0.0));
        }
    }

    #[test]
    fn literal_dp_n_two() {
        let d = engine().dp_distribution(2, RateConvention::Literal).unwrap();
        let p = d.pmf_vec();
        assert_eq!(p.len(), 3);
        for (got, want) in p.iter().zip([10.0 / 27.0, 8.0 / 27.0, 1.0 / 3.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn endpoint_identity_rational() {
        let e = engine();
        for n in [2u64, 10, 100] {
            let d = e.distribution(n, DistBackend::Rational).unwrap();
            let p = &d.rational_pmf().unwrap()[n as usize - 1];
            assert_eq!(p * BigRational::from_integer(BigInt::from(n * n)), BigRational::one());
        }
        let d = e.distribution(10, DistBackend::FloatFormula).unwrap();
        assert!((d.pmf(9) - 0.01).abs() < 1e-16);
    }

    #[test]
    fn caps_enforced() {
        let e = engine().with_caps(ResourceCaps { rational_n: 5, float_n: 8, dp_n: 3, j_max: 8 });
        assert!(matches!(e.distribution(6, DistBackend::Rational), Err(Error::ResourceCap { .. })));
        assert!(matches!(e.distribution(9, DistBackend::FloatFormula), Err(Error::ResourceCap { .. })));
        assert!(matches!(e.dp_distribution(4, RateConvention::Formula), Err(Error::ResourceCap { .. })));
        assert!(e.distribution(1_000_000, DistBackend::AsymptoticD).is_ok());
        assert!(e.distribution(0, DistBackend::AsymptoticD).is_err());
    }

    #[test]
    fn float_matches_rational() {
        let e = engine();
        for n in [3u64, 17, 60, 150, 300] {
            let r = e.distribution(n, DistBackend::Rational).unwrap();
            let f = e.distribution(n, DistBackend::FloatFormula).unwrap();
            for (k, q) in r.rational_pmf().unwrap().iter().enumerate() {
                let exact = q.to_f64().unwrap();
                if exact == 0.0 {
                    continue;
                }
                let rel = (f.pmf(k as u64) / exact - 1.0).abs();
                assert!(rel <= 1e-11, "n={n} k={k} rel={rel:e}");
            }
        }
    }

    #[test]
    fn asymptotic_close_in_bulk() {
        let e = engine();
        let c = *e.constants();
        for n in [500u64, 1000] {
            let f = e.distribution(n, DistBackend::FloatFormula).unwrap();
            let a = e.distribution(n, DistBackend::AsymptoticD).unwrap();
            let half = 5.0 * c.sigma() * (n as f64).sqrt();
            let center = n as f64 * c.x_inf;
            for k in ((center - half).ceil() as u64)..=((center + half).floor() as u64) {
                let rel = (a.pmf(k) / f.pmf(k) - 1.0).abs();
                assert!(rel < 0.01, "n={n} k={k} rel={rel}");
            }
        }
    }

    #[test]
    fn asymptotic_stable_form_matches_direct() {
        // direct closed form with asymptotic d_j, fine at moderate n
        let c = ModelConstants::new();
        for n in [40u64, 700, 3000] {
            for k in [1u64, n / 5, n / 2, n - 1] {
                let j = n - k;
                let direct = ln_factorial(n - 1) - ln_factorial(k) + log_d_asymptotic(j as f64, &c)
                    - 2.0 * j as f64 * (n as f64).ln();
                let stable = log_pmf_asymptotic(n, k, &c);
                assert!((direct - stable).abs() < 1e-9 * direct.abs().max(1.0), "{n} {k}: {direct} {stable}");
            }
        }
    }

    #[test]
    fn tail_whole_support_is_zero() {
        let e = engine();
        let n = 10u64;
        let center = n as f64 * e.constants().x_inf;
        let nearest = (0..n).map(|k| (k as f64 - center).abs()).fold(f64::INFINITY, f64::min);
        let z = 0.5 * nearest / (n as f64).sqrt();
        let lp = e.tail_log_prob(n, z, 1.0, TailSide::Both).unwrap();
        assert!(lp.abs() < 1e-14, "{lp}");
    }

    #[test]
    fn tail_matches_direct_sum() {
        let e = engine();
        let (n, z, b) = (100u64, 1.0, 2.0);
        let d = e.distribution(n, DistBackend::Rational).unwrap();
        let center = n as f64 * e.constants().x_inf;
        let w = z * b * 10.0;
        let direct: BigRational = d
            .rational_pmf()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|(k, _)| (*k as f64 - center).abs() >= w)
            .map(|(_, p)| p.clone())
            .sum();
        let lp = e.tail_log_prob(n, z, b, TailSide::Both).unwrap();
        assert!(lp < 0.0 && lp.is_finite());
        assert!((lp - ln_bigrational(&direct)).abs() < 1e-13);
        let left = e.tail_log_prob(n, z, b, TailSide::Left).unwrap();
        let right = e.tail_log_prob(n, z, b, TailSide::Right).unwrap();
        assert!((crate::special::log_sum_exp([left, right]) - lp).abs() < 1e-13);
        assert!(right >= -2.0 * (n as f64).ln());
    }

    #[test]
    fn empty_tail_is_neg_infinity() {
        let e = engine();
        assert_eq!(e.tail_log_prob(10, 100.0, 1.0, TailSide::Right).unwrap(), f64::NEG_INFINITY);
        assert!(e.tail_log_prob(10, 0.0, 1.0, TailSide::Right).is_err());
    }

    #[test]
    fn windowed_tail_agrees_with_full_sum() {
        let e = engine();
        let n = 2000u64;
        for side in [TailSide::Left, TailSide::Right, TailSide::Both] {
            let full = e.tail_estimate(n, 1.0, 1.5, side, DistBackend::FloatFormula).unwrap();
            let win = e.tail_estimate(n, 1.0, 1.5, side, DistBackend::AsymptoticD).unwrap();
            assert!((full.log_prob - win.log_prob).abs() < 1e-3, "{side:?} {full:?} {win:?}");
        }
        let lo = n - 100;
        let full = e.range_log_prob(n, lo, n - 1, DistBackend::FloatFormula).unwrap();
        let lazy = e.range_log_prob(n, lo, n - 1, DistBackend::AsymptoticD).unwrap();
        assert!((full - lazy).abs() < 1e-10, "{full} {lazy}");
    }

    #[test]
    fn windowed_truncation_is_negligible() {
        let e = engine();
        for n in [100_000u64, 10_000_000] {
            let t = e.tail_estimate(n, 1.0, 2.0, TailSide::Both, DistBackend::AsymptoticD).unwrap();
            assert!(t.log_prob.is_finite());
            assert!(t.log_truncation_bound < t.log_prob - 100.0, "{t:?}");
            let band = e
                .band_estimate(n, 2.0 * (n as f64).sqrt(), Some(0.2 * n as f64), TailSide::Both, DistBackend::AsymptoticD)
                .unwrap();
            assert!(band.log_prob <= t.log_prob.max(band.log_prob));
            assert!(band.log_truncation_bound < band.log_prob - 100.0, "{band:?}");
        }
    }

    #[test]
    fn moments_small() {
        let e = engine();
        let (m, v) = e.moments(2).unwrap();
        assert!((m - 0.25).abs() < 1e-15);
        assert!((v - 0.1875).abs() < 1e-15);
        assert!(e.moments(1_000_000).is_err());
    }
}
