//! Monte Carlo sampling of the Maki-Thompson chain.
//!
//! The state is `(i, j)`: `i` ignorants and `j` spreaders out of `n + 1`
//! individuals. A spreader converts an ignorant at rate `i j` and becomes a
//! stifler at rate `j s`, where `s` counts the informed individuals it can
//! meet (see [`RateConvention`]). Final-size sampling only needs the embedded
//! jump chain; full trajectories add exponential holding times.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which stifling rate the chain uses in state `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateConvention {
    /// `j (n - i)`: the spreader meets one of the other `n - i` informed individuals.
    /// Reproduces the closed-form final-size law.
    #[default]
    Formula,
    /// `j (n + 1 - i)`, counting the spreader itself among the informed.
    Literal,
}

impl RateConvention {
    /// Number of informed partners whose meeting stifles a spreader.
    pub fn stifle_partners(self, n: u64, i: u64) -> u64 {
        match self {
            RateConvention::Formula => n - i,
            RateConvention::Literal => n + 1 - i,
        }
    }

    /// Probability that the next jump is a conversion; independent of `j`.
    pub fn convert_probability(self, n: u64, i: u64) -> f64 {
        let s = self.stifle_partners(n, i);
        if i + s == 0 {
            0.0
        } else {
            i as f64 / (i + s) as f64
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RateConvention::Formula => "formula",
            RateConvention::Literal => "literal",
        }
    }
}

impl std::str::FromStr for RateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "formula" => Ok(RateConvention::Formula),
            "literal" | "paper_literal" | "paper-literal" => Ok(RateConvention::Literal),
            other => Err(Error::Domain(format!("unknown rate convention `{other}`"))),
        }
    }
}

/// Live state of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub ignorants: u64,
    pub spreaders: u64,
    /// Total population `n + 1`, conserved along every path.
    pub population: u64,
}

impl ChainState {
    pub fn initial(n: u64) -> Self {
        Self { ignorants: n, spreaders: 1, population: n + 1 }
    }

    pub fn stiflers(&self) -> u64 {
        self.population - self.ignorants - self.spreaders
    }

    pub fn is_absorbing(&self) -> bool {
        self.spreaders == 0
    }

    fn n(&self) -> u64 {
        self.population - 1
    }
}

/// `(p_convert, p_stifle)` for the next jump out of a non-absorbing state.
pub fn step_probabilities(state: ChainState, convention: RateConvention) -> Result<(f64, f64)> {
    if state.is_absorbing() {
        return Err(Error::Domain("no jumps out of an absorbing state".into()));
    }
    let p = convention.convert_probability(state.n(), state.ignorants);
    Ok((p, 1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u64,
    pub rate_convention: RateConvention,
    pub seed: u64,
    pub streams: u32,
}

impl SimConfig {
    pub fn new(n: u64, seed: u64) -> Self {
        Self { n, rate_convention: RateConvention::Formula, seed, streams: 1 }
    }

    pub fn with_streams(mut self, streams: u32) -> Self {
        self.streams = streams;
        self
    }

    pub fn with_convention(mut self, convention: RateConvention) -> Self {
        self.rate_convention = convention;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("population parameter n must be at least 1".into()));
        }
        if self.streams == 0 {
            return Err(Error::Domain("at least one random stream is required".into()));
        }
        Ok(())
    }

    /// Generator for substream `stream`; streams of one seed never overlap.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Draw one final ignorant count by running the jump chain to absorption.
///
/// Because the conversion probability does not depend on `j`, the run of
/// stifling jumps before the next conversion is geometric and is drawn in
/// one step. If the run is at least `j` long every spreader stifles first and
/// the chain is absorbed.
pub fn final_size_with<R: Rng + ?Sized>(n: u64, convention: RateConvention, rng: &mut R) -> u64 {
    let (mut i, mut j) = (n, 1u64);
    loop {
        let p = convention.convert_probability(n, i);
        let failures = if p >= 1.0 {
            0
        } else if p <= 0.0 {
            u64::MAX
        } else {
            let u: f64 = rng.sample(Open01);
            let g = (u.ln() / (-p).ln_1p()).floor();
            if g >= j as f64 { u64::MAX } else { g as u64 }
        };
        if failures >= j {
            return i;
        }
        j = j - failures + 1;
        i -= 1;
    }
}

/// One draw of the final ignorant count from stream 0.
pub fn sample_final_size(config: &SimConfig) -> Result<u64> {
    config.validate()?;
    let mut rng = config.rng(0);
    Ok(final_size_with(config.n, config.rate_convention, &mut rng))
}

/// Counts of final ignorant numbers `0..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(n: u64) -> Self {
        Self { counts: vec![0; n as usize + 1] }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Histogram) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Total variation distance to a probability vector indexed by `k`.
    pub fn tv_distance(&self, pmf: &[f64]) -> f64 {
        let freq = self.frequencies();
        let len = freq.len().max(pmf.len());
        0.5 * (0..len)
            .map(|k| (freq.get(k).copied().unwrap_or(0.0) - pmf.get(k).copied().unwrap_or(0.0)).abs())
            .sum::<f64>()
    }
}

/// Number of draws assigned to `stream` when `m` draws are split over `streams`.
pub fn stream_share(m: u64, streams: u32, stream: u32) -> u64 {
    let s = streams as u64;
    m / s + u64::from((stream as u64) < m % s)
}

/// Histogram of `count` draws from one substream.
pub fn sample_stream(config: &SimConfig, stream: u32, count: u64) -> Result<Histogram> {
    config.validate()?;
    let mut rng = config.rng(stream as u64);
    let mut hist = Histogram::new(config.n);
    for _ in 0..count {
        hist.counts[final_size_with(config.n, config.rate_convention, &mut rng) as usize] += 1;
    }
    Ok(hist)
}

/// `m` independent draws split over `config.streams` substreams.
///
/// Streams run in parallel on the current rayon pool; the merged histogram
/// depends only on `(seed, streams, m)`.
pub fn sample_batch(config: &SimConfig, m: u64) -> Result<Histogram> {
    config.validate()?;
    if m == 0 {
        return Err(Error::Domain("batch size must be at least 1".into()));
    }
    let parts: Vec<Histogram> = (0..config.streams)
        .into_par_iter()
        .map(|s| sample_stream(config, s, stream_share(m, config.streams, s)))
        .collect::<Result<_>>()?;
    let mut hist = Histogram::new(config.n);
    for part in &parts {
        hist.merge(part);
    }
    Ok(hist)
}

/// Continuous-time path of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(time, state)` pairs starting with `(0, (n, 1))`.
    pub events: Vec<(f64, ChainState)>,
    pub absorption_time: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> ChainState {
        self.events.last().expect("trajectory has an initial event").1
    }
}

/// Simulate the full path with exponential holding times, using stream 0.
pub fn sample_trajectory(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = config.rng(0);
    Ok(trajectory_with(config.n, config.rate_convention, &mut rng))
}

pub fn trajectory_with<R: Rng + ?Sized>(n: u64, convention: RateConvention, rng: &mut R) -> Trajectory {
    let mut state = ChainState::initial(n);
    let mut t = 0.0;
    let mut events = vec![(t, state)];
    while !state.is_absorbing() {
        let i = state.ignorants;
        let j = state.spreaders;
        let s = convention.stifle_partners(n, i);
        let rate = (j * (i + s)) as f64;
        let u: f64 = rng.sample(Open01);
        t += -u.ln() / rate;
        let v: f64 = rng.random();
        if v * ((i + s) as f64) < i as f64 {
            state.ignorants -= 1;
            state.spreaders += 1;
        } else {
            state.spreaders -= 1;
        }
        events.push((t, state));
    }
    Trajectory { events, absorption_time: t }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_probabilities_by_convention() {
        let s = ChainState { ignorants: 30, spreaders: 4, population: 101 };
        let (p, q) = step_probabilities(s, RateConvention::Formula).unwrap();
        assert_eq!(p, 0.3);
        assert!((p + q - 1.0).abs() < 1e-15);
        let (p, _) = step_probabilities(s, RateConvention::Literal).unwrap();
        assert_eq!(p, 30.0 / 101.0);
        let s7 = ChainState { spreaders: 7, ..s };
        assert_eq!(step_probabilities(s7, RateConvention::Formula).unwrap().0, 0.3);
        let (p, q) = step_probabilities(ChainState::initial(100), RateConvention::Formula).unwrap();
        assert_eq!((p, q), (1.0, 0.0));
        let dead = ChainState { ignorants: 3, spreaders: 0, population: 11 };
        assert!(step_probabilities(dead, RateConvention::Formula).is_err());
    }

    #[test]
    fn n_one_always_zero() {
        for seed in 0..50 {
            assert_eq!(sample_final_size(&SimConfig::new(1, seed)).unwrap(), 0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let c = SimConfig::new(500, 7);
        assert_eq!(sample_final_size(&c).unwrap(), sample_final_size(&c).unwrap());
        let a = sample_batch(&c.with_streams(3), 1000).unwrap();
        let b = sample_batch(&c.with_streams(3), 1000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_of_one_is_a_single_draw() {
        for seed in 0..20 {
            let c = SimConfig::new(40, seed).with_streams(4);
            let h = sample_batch(&c, 1).unwrap();
            let x = sample_final_size(&c).unwrap();
            assert_eq!(h.counts[x as usize], 1);
            assert_eq!(h.total(), 1);
        }
    }

    #[test]
    fn merged_streams_equal_batch() {
        let c = SimConfig::new(30, 99).with_streams(5);
        let m = 1003;
        let mut merged = Histogram::new(30);
        for s in 0..5 {
            merged.merge(&sample_stream(&c, s, stream_share(m, 5, s)).unwrap());
        }
        assert_eq!(merged, sample_batch(&c, m).unwrap());
        assert_eq!((0..5).map(|s| stream_share(m, 5, s)).sum::<u64>(), m);
    }

    #[test]
    fn n_two_frequencies() {
        let c = SimConfig::new(2, 2024).with_streams(4);
        let m = 1_000_000u64;
        let h = sample_batch(&c, m).unwrap();
        let f = h.frequencies();
        let se = (0.75f64 * 0.25 / m as f64).sqrt();
        assert!((f[0] - 0.75).abs() < 3.0 * se, "{f:?}");
        assert!((f[1] - 0.25).abs() < 3.0 * se, "{f:?}");
        assert_eq!(h.counts[2], 0);
    }

    #[test]
    fn literal_convention_n_two() {
        // literal rates: P(X=2) = 1/3, P(X=1) = 8/27, P(X=0) = 10/27
        let c = SimConfig::new(2, 5).with_convention(RateConvention::Literal).with_streams(2);
        let m = 400_000u64;
        let f = sample_batch(&c, m).unwrap().frequencies();
        for (k, p) in [(0usize, 10.0 / 27.0), (1, 8.0 / 27.0), (2, 1.0 / 3.0)] {
            let se = (p * (1.0 - p) / m as f64).sqrt();
            assert!((f[k] - p).abs() < 4.0 * se, "{k}: {}", f[k]);
        }
    }

    #[test]
    fn trajectory_invariants() {
        for seed in 0..20 {
            let n = 60;
            let tr = sample_trajectory(&SimConfig::new(n, seed)).unwrap();
            assert_eq!(tr.events[0], (0.0, ChainState::initial(n)));
            assert!(tr.final_state().is_absorbing());
            assert!(tr.events.len() as u64 <= 2 * n + 2);
            for w in tr.events.windows(2) {
                let ((t0, a), (t1, b)) = (w[0], w[1]);
                assert!(t1 > t0 && t1.is_finite());
                assert!(b.ignorants <= a.ignorants);
                assert_eq!(b.ignorants + b.spreaders + b.stiflers(), n + 1);
            }
            assert_eq!(tr.absorption_time, tr.events.last().unwrap().0);
        }
    }

    #[test]
    fn first_holding_time_mean() {
        // rate at (n, 1) is n under the formula convention
        let n = 20u64;
        let mut rng = SimConfig::new(n, 11).rng(3);
        let reps = 200_000;
        let mut sum = 0.0;
        for _ in 0..reps {
            sum += trajectory_with(n, RateConvention::Formula, &mut rng).events[1].0;
        }
        let mean = sum / reps as f64;
        let se = (1.0 / n as f64) / (reps as f64).sqrt();
        assert!((mean - 1.0 / n as f64).abs() < 4.0 * se, "{mean}");
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(sample_final_size(&SimConfig::new(0, 1)).is_err());
        assert!(sample_batch(&SimConfig::new(5, 1).with_streams(0), 10).is_err());
        assert!(sample_batch(&SimConfig::new(5, 1), 0).is_err());
    }
}
