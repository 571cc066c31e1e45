//! The integer sequence `d_j` that appears in the exact final-size law.
//!
//! `d_1 = 1` and, for `j >= 2`,
//! `d_j = j^{2j}/(j-1)! - sum_{i<j} j^{2(j-i)} d_i / (j-i)!`.
//!
//! The terms are huge and nearly cancel, so the recursion is carried out in
//! exact integer arithmetic. Writing `P_i = d_i (j-1)!/(j-i)!` (an integer),
//! the sum times `(j-1)!` is `sum_i j^{2(j-i)} P_i`, a polynomial in `j^2`
//! evaluated by Horner's rule with single-limb multipliers. Advancing `j`
//! rescales every `P_i` by `j/(j+1-i)`, which is again exact.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};

use crate::constants::ModelConstants;
use crate::error::{Error, Result};
use crate::special::ln_biguint;

/// Default upper limit on `j_max` for exact tables.
pub const DEFAULT_J_CAP: usize = 5000;

/// Default index at which the exact and asymptotic backends are cross-checked.
pub const DEFAULT_HANDOVER: usize = 2000;

/// How `ln d_j` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DjBackend {
    Exact,
    Asymptotic,
}

/// Exact values `d_1..=d_{j_max}` together with their natural logarithms.
#[derive(Debug, Clone)]
pub struct AutomataTable {
    values: Vec<BigUint>,
    log_values: Vec<f64>,
    constants: ModelConstants,
}

impl AutomataTable {
    /// Exact table under the default cap.
    pub fn compute_exact(j_max: usize, constants: &ModelConstants) -> Result<Self> {
        Self::compute_exact_capped(j_max, DEFAULT_J_CAP, constants)
    }

    pub fn compute_exact_capped(j_max: usize, cap: usize, constants: &ModelConstants) -> Result<Self> {
        if j_max == 0 {
            return Err(Error::Domain("j_max must be at least 1".into()));
        }
        if j_max > cap {
            return Err(Error::ResourceCap {
                backend: "exact d_j",
                limit: cap as u64,
                requested: j_max as u64,
            });
        }
        let mut builder = AutomataBuilder::new();
        builder.extend_to(j_max)?;
        Ok(builder.snapshot(constants))
    }

    fn from_values(values: Vec<BigUint>, constants: &ModelConstants) -> Self {
        let log_values = values.iter().map(ln_biguint).collect();
        Self { values, log_values, constants: *constants }
    }

    pub fn j_max(&self) -> usize {
        self.values.len()
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    /// Exact `d_j`, `1 <= j <= j_max`.
    pub fn value(&self, j: usize) -> Option<&BigUint> {
        j.checked_sub(1).and_then(|i| self.values.get(i))
    }

    pub fn values(&self) -> &[BigUint] {
        &self.values
    }

    /// `ln d_j` from the requested backend.
    pub fn log_d(&self, j: usize, backend: DjBackend) -> Result<f64> {
        if j == 0 {
            return Err(Error::Domain("d_j is defined for j >= 1".into()));
        }
        match backend {
            DjBackend::Exact => self.log_values.get(j - 1).copied().ok_or_else(|| {
                Error::Domain(format!("j = {j} beyond exact table range 1..={}", self.j_max()))
            }),
            DjBackend::Asymptotic => Ok(log_d_asymptotic(j as f64, &self.constants)),
        }
    }

    /// `d_j / (alpha kappa beta^j j^{j+1/2})`.
    pub fn asymptotic_ratio(&self, j: usize) -> Result<f64> {
        let exact = self.log_d(j, DjBackend::Exact)?;
        Ok((exact - log_d_asymptotic(j as f64, &self.constants)).exp())
    }

    /// `max_j j |ratio(j) - 1|` over `lo..=hi`, the empirical constant of the `O(1/j)` error.
    pub fn ratio_error_constant(&self, lo: usize, hi: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for j in lo..=hi {
            worst = worst.max(j as f64 * (self.asymptotic_ratio(j)? - 1.0).abs());
        }
        Ok(worst)
    }
}

/// `ln(alpha kappa) + j ln beta + (j + 1/2) ln j`.
pub fn log_d_asymptotic(j: f64, c: &ModelConstants) -> f64 {
    (c.alpha * c.kappa).ln() + j * c.beta.ln() + (j + 0.5) * j.ln()
}

/// Incremental state of the exact recursion; can be extended to larger `j`.
#[derive(Debug, Clone)]
pub struct AutomataBuilder {
    d: Vec<BigUint>,
    // scaled[i-1] = d_i (j-1)!/(j-i)! for the last computed j
    scaled: Vec<Limbs>,
    // (j-1)! for the last computed j
    fact: BigUint,
}

impl Default for AutomataBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl AutomataBuilder {
    pub fn new() -> Self {
        Self { d: vec![BigUint::one()], scaled: vec![Limbs::one()], fact: BigUint::one() }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Compute `d_j` for all `j <= j_max` not yet known.
    pub fn extend_to(&mut self, j_max: usize) -> Result<()> {
        let mut horner = Limbs::default();
        for j in (self.d.len() as u64 + 1)..=j_max as u64 {
            let j2 = j * j;
            horner.clear();
            for (idx, p) in self.scaled.iter_mut().enumerate() {
                let i = idx as u64 + 1;
                // advance from j-1 to j: multiply by (j-1)/(j-i)
                p.mul_div_exact(j - 1, j - i);
                horner.mul_add(j2, p);
            }
            horner.mul_add(j2, &Limbs::default());
            let horner = horner.to_biguint();

            self.fact *= j - 1;
            let lead = BigUint::from(j).pow(2 * j as u32);
            if lead <= horner {
                return Err(Error::NonInteger { j: j as usize });
            }
            let numer = lead - horner;
            let (q, r) = numer.div_rem(&self.fact);
            if !r.is_zero() {
                return Err(Error::NonInteger { j: j as usize });
            }
            self.d.push(q);
            self.scaled.push(Limbs::from_biguint(&numer));
        }
        Ok(())
    }

    pub fn snapshot(&self, constants: &ModelConstants) -> AutomataTable {
        AutomataTable::from_values(self.d.clone(), constants)
    }
}

static SHARED: Mutex<Option<(AutomataBuilder, Arc<AutomataTable>)>> = Mutex::new(None);

/// Process-wide exact table covering at least `j_max`, grown on demand.
///
/// Requests are rounded up to the next multiple of 250 (within `cap`) so that
/// slowly increasing requests do not snapshot the table every time.
pub fn shared_table(j_max: usize, cap: usize, constants: &ModelConstants) -> Result<Arc<AutomataTable>> {
    if j_max == 0 {
        return Err(Error::Domain("j_max must be at least 1".into()));
    }
    if j_max > cap {
        return Err(Error::ResourceCap { backend: "exact d_j", limit: cap as u64, requested: j_max as u64 });
    }
    let mut guard = SHARED.lock().unwrap_or_else(|e| e.into_inner());
    if let Some((_, table)) = guard.as_ref() {
        if table.j_max() >= j_max && table.constants == *constants {
            return Ok(Arc::clone(table));
        }
    }
    let target = j_max.div_ceil(250).saturating_mul(250).min(cap).max(j_max);
    let mut builder = guard.take().map(|(b, _)| b).unwrap_or_default();
    builder.extend_to(target)?;
    let table = Arc::new(builder.snapshot(constants));
    *guard = Some((builder, Arc::clone(&table)));
    Ok(table)
}

/// Little-endian unsigned limbs with the few in-place operations the recursion needs.
#[derive(Debug, Clone, Default)]
struct Limbs(Vec<u64>);

impl Limbs {
    fn one() -> Self {
        Limbs(vec![1])
    }

    fn clear(&mut self) {
        self.0.clear();
    }

    fn from_biguint(x: &BigUint) -> Self {
        Limbs(x.to_u64_digits())
    }

    fn to_biguint(&self) -> BigUint {
        let mut digits = Vec::with_capacity(self.0.len() * 2);
        for &l in &self.0 {
            digits.push(l as u32);
            digits.push((l >> 32) as u32);
        }
        BigUint::new(digits)
    }

    /// `self = self * m + other`.
    fn mul_add(&mut self, m: u64, other: &Limbs) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), 0);
        }
        let mut carry = 0u128;
        for (k, limb) in self.0.iter_mut().enumerate() {
            let add = other.0.get(k).copied().unwrap_or(0) as u128;
            let t = *limb as u128 * m as u128 + add + carry;
            *limb = t as u64;
            carry = t >> 64;
        }
        if carry != 0 {
            self.0.push(carry as u64);
        }
    }

    /// `self = self * m / div`, where `div` must divide `self * m` exactly.
    ///
    /// Multiplication and removal of the odd part of `div` share one low-to-high
    /// pass; the odd part is removed by multiplying with its inverse modulo
    /// 2^64. The power-of-two part is shifted out afterwards.
    fn mul_div_exact(&mut self, m: u64, div: u64) {
        debug_assert!(div > 0);
        let shift = div.trailing_zeros();
        let odd = div >> shift;
        let inv = inverse_mod_2_64(odd);
        let mut carry = 0u64;
        let mut borrow = 0u64;
        let len = self.0.len();
        for k in 0..=len {
            let src = if k < len { self.0[k] } else { 0 };
            let t = src as u128 * m as u128 + carry as u128;
            carry = (t >> 64) as u64;
            let (x, b) = (t as u64).overflowing_sub(borrow);
            let q = x.wrapping_mul(inv);
            borrow = ((q as u128 * odd as u128) >> 64) as u64 + b as u64;
            if k < len {
                self.0[k] = q;
            } else {
                self.0.push(q);
            }
        }
        debug_assert_eq!((carry, borrow), (0, 0), "inexact division by {div}");
        if shift > 0 {
            let len = self.0.len();
            for k in 0..len {
                let hi = if k + 1 < len { self.0[k + 1] << (64 - shift) } else { 0 };
                self.0[k] = (self.0[k] >> shift) | hi;
            }
        }
        while self.0.last() == Some(&0) {
            self.0.pop();
        }
    }
}

fn inverse_mod_2_64(odd: u64) -> u64 {
    // Newton iteration; each step doubles the number of correct low bits.
    let mut inv = odd;
    for _ in 0..6 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(odd.wrapping_mul(inv)));
    }
    inv
}
