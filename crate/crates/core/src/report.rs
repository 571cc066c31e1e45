//! Tabular convergence data and its CSV/JSON encodings.
//!
//! CSV layout: one header row, then one row per [`DeviationRow`] with the
//! columns in field order. Floats are written with 17 significant digits,
//! which reads back bit-for-bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::DistBackend;

pub const CSV_HEADER: [&str; 8] = ["metric", "n", "b_n", "param", "empirical_rate", "target_rate", "aux", "backend"];

/// What a row measures. The meaning of `param` and `aux` depends on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `(1/b_n^2) ln P(|Z_n| >= z)`; param `z`, aux = log truncation bound.
    TailRate,
    /// `-(1/n) ln P(tail at x)`; param `x`, aux = log tail probability.
    LdpRate,
    /// Kolmogorov-Smirnov distance to `N(0, sigma^2)`; param `sigma^2`.
    Ks,
    /// `ln P(X_n = n-1) / b_n^2`; param `P(X_n = n-1)`, aux `n^2 P(X_n = n-1)`.
    EndpointCost,
    /// `(ln P(X_n = k_n(z)) + ln(n)/2 + z^2 b_n^2/(2 sigma^2)) / b_n^2`; param `z`, aux log point probability.
    LocalRate,
    /// `(1/b_n^2) ln P(L < |Z_n| <= r sqrt(n)/b_n)`; param `L`, aux log probability.
    WindowRate,
    /// `n P(V_n <= delta n)`; param `delta`, aux the probability.
    EndpointLayer,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::TailRate => "tail_rate",
            Metric::LdpRate => "ldp_rate",
            Metric::Ks => "ks",
            Metric::EndpointCost => "endpoint_cost",
            Metric::LocalRate => "local_rate",
            Metric::WindowRate => "window_rate",
            Metric::EndpointLayer => "endpoint_layer",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tail_rate" => Metric::TailRate,
            "ldp_rate" => Metric::LdpRate,
            "ks" => Metric::Ks,
            "endpoint_cost" => Metric::EndpointCost,
            "local_rate" => Metric::LocalRate,
            "window_rate" => Metric::WindowRate,
            "endpoint_layer" => Metric::EndpointLayer,
            other => return Err(Error::Domain(format!("unknown metric `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeviationRow {
    pub metric: Metric,
    pub n: u64,
    pub b_n: f64,
    pub param: f64,
    pub empirical_rate: f64,
    pub target_rate: f64,
    pub aux: f64,
    pub backend: DistBackend,
}

impl DeviationRow {
    /// Field-wise equality with floats compared by bit pattern.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        let floats = |r: &Self| [r.b_n, r.param, r.empirical_rate, r.target_rate, r.aux].map(f64::to_bits);
        self.metric == other.metric && self.n == other.n && self.backend == other.backend && floats(self) == floats(other)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DeviationReport {
    pub rows: Vec<DeviationRow>,
}

/// 17 significant digits; `inf`, `-inf` and `NaN` as Rust prints them.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Domain(format!("line {line}: bad number `{s}`")))
}

impl DeviationReport {
    pub fn new(mut rows: Vec<DeviationRow>) -> Self {
        rows.sort_by_key(|r| r.n);
        Self { rows }
    }

    pub fn rows_for(&self, metric: Metric) -> impl Iterator<Item = &DeviationRow> {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Domain(format!("csv write failed: {e}"));
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.metric.name().to_string(),
                r.n.to_string(),
                fmt_f64(r.b_n),
                fmt_f64(r.param),
                fmt_f64(r.empirical_rate),
                fmt_f64(r.target_rate),
                fmt_f64(r.aux),
                r.backend.name().to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Domain(format!("csv write failed: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers().map_err(|e| Error::Domain(format!("csv header: {e}")))?;
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Domain(format!("unexpected csv header {header:?}")));
        }
        let mut rows = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::Domain(format!("line {line}: {e}")))?;
            if rec.len() != CSV_HEADER.len() {
                return Err(Error::Domain(format!("line {line}: expected {} fields", CSV_HEADER.len())));
            }
            rows.push(DeviationRow {
                metric: rec[0].parse()?,
                n: rec[1].trim().parse().map_err(|_| Error::Domain(format!("line {line}: bad n")))?,
                b_n: parse_f64(&rec[2], line)?,
                param: parse_f64(&rec[3], line)?,
                empirical_rate: parse_f64(&rec[4], line)?,
                target_rate: parse_f64(&rec[5], line)?,
                aux: parse_f64(&rec[6], line)?,
                backend: rec[7].parse()?,
            });
        }
        Ok(Self { rows })
    }

    /// JSON array of rows. Non-finite floats become strings so nothing is lost.
    pub fn to_json(&self) -> serde_json::Value {
        let num = |x: f64| {
            if x.is_finite() {
                serde_json::json!(x)
            } else {
                serde_json::json!(format!("{x}"))
            }
        };
        serde_json::Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "metric": r.metric.name(),
                        "n": r.n,
                        "b_n": num(r.b_n),
                        "param": num(r.param),
                        "empirical_rate": num(r.empirical_rate),
                        "target_rate": num(r.target_rate),
                        "aux": num(r.aux),
                        "backend": r.backend.name(),
                    })
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_f64() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>(),
            Just(f64::INFINITY),
            Just(f64::NEG_INFINITY),
            Just(f64::NAN),
            Just(-0.0),
            -1e3..1e3f64,
        ]
    }

    prop_compose! {
        fn any_row()(n in 1u64..u64::MAX, b in any_f64(), p in any_f64(), e in any_f64(), t in any_f64(), a in any_f64(),
                     m in 0usize..7, be in 0usize..4) -> DeviationRow {
            let metrics = [Metric::TailRate, Metric::LdpRate, Metric::Ks, Metric::EndpointCost,
                           Metric::LocalRate, Metric::WindowRate, Metric::EndpointLayer];
            let backends = [DistBackend::Rational, DistBackend::FloatFormula, DistBackend::AsymptoticD, DistBackend::DpOracle];
            DeviationRow { metric: metrics[m], n, b_n: b, param: p, empirical_rate: e, target_rate: t, aux: a, backend: backends[be] }
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(rows in proptest::collection::vec(any_row(), 0..20)) {
            let report = DeviationReport { rows };
            let back = DeviationReport::read_csv(report.to_csv().as_bytes()).unwrap();
            prop_assert_eq!(back.rows.len(), report.rows.len());
            for (a, b) in report.rows.iter().zip(&back.rows) {
                prop_assert!(a.bitwise_eq(b), "{:?} vs {:?}", a, b);
            }
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(DeviationReport::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
    }
}
