//! `rumour` command-line interface.
//!
//! Exit codes: 0 on success, 1 on domain errors (including resource caps),
//! 2 on usage errors.

mod args;

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rumour_core::automata::AutomataTable;
use rumour_core::report::fmt_f64;
use rumour_core::simulator::{sample_batch, sample_trajectory};
use rumour_core::{
    DeviationReport, DistBackend, ExactEngine, Harness, ModelConstants, RateConvention, RateFunctionSet,
    ResourceCaps, ScaleChoice, SimConfig,
};
use serde_json::json;

pub use args::{parse_count, parse_f64_list, parse_n_grid, parse_range};

/// A parsed list argument; clap would treat a bare `Vec` as a repeated flag.
#[derive(Debug, Clone)]
struct List<T>(Vec<T>);

fn n_grid_arg(s: &str) -> Result<List<u64>, String> {
    parse_n_grid(s).map(List)
}

fn f64_list_arg(s: &str) -> Result<List<f64>, String> {
    parse_f64_list(s).map(List)
}

fn range_arg(s: &str) -> Result<List<f64>, String> {
    parse_range(s).map(List)
}

/// Environment variables overriding the default resource caps.
pub const CAP_VARS: [&str; 4] = ["RUMOUR_MAX_J", "RUMOUR_MAX_RATIONAL_N", "RUMOUR_MAX_FLOAT_N", "RUMOUR_MAX_DP_N"];

/// Largest `n` for which `dist` prints the lazily evaluated asymptotic law.
pub const LAZY_DENSE_LIMIT: u64 = 1_000_000;

/// Tolerance of `dist --check-oracle`.
pub const ORACLE_TOL: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "rumour", version, about = "Final-size statistics of the Maki-Thompson rumour model")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_parser = parse_threads)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
struct FormatArgs {
    /// CSV output, floats at 17 significant digits.
    #[arg(long, conflicts_with = "json")]
    csv: bool,
    /// JSON output.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Human,
    Csv,
    Json,
}

impl FormatArgs {
    fn format(self) -> Format {
        match (self.csv, self.json) {
            (true, _) => Format::Csv,
            (_, true) => Format::Json,
            _ => Format::Human,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the model constants.
    Constants {
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Tabulate the automata numbers d_1..d_J.
    Dj {
        #[arg(long, value_parser = parse_count)]
        max: u64,
        /// Print every digit instead of a truncated decimal.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Exact law of the final ignorant count X_n.
    Dist {
        #[arg(long, value_parser = parse_count)]
        n: u64,
        /// auto, rational, float_formula, asymptotic_d or dp_oracle.
        #[arg(long, default_value = "auto")]
        backend: String,
        /// Compare the closed form with the jump-chain recursion and print the max error.
        #[arg(long)]
        check_oracle: bool,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Monte Carlo histogram of X_n, or one continuous-time trajectory.
    Simulate {
        #[arg(long, value_parser = parse_count)]
        n: u64,
        #[arg(long, value_parser = parse_count, default_value = "10000")]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Independent random substreams; the output depends on this, not on --threads.
        #[arg(long, default_value_t = 16)]
        streams: u32,
        /// formula or literal.
        #[arg(long, default_value = "formula")]
        rate_convention: String,
        /// Emit one trajectory (time, i, j, z) instead of a histogram.
        #[arg(long)]
        trajectory: bool,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Evaluate the rate functions on a grid.
    Rates {
        /// a:b:step
        #[arg(long, value_parser = range_arg, allow_hyphen_values = true)]
        grid: List<f64>,
        #[arg(long, value_enum)]
        which: Option<Which>,
        #[command(flatten)]
        format: FormatArgs,
    },
    /// Convergence tables for the limit theorems.
    Verify {
        #[arg(value_enum)]
        kind: VerifyKind,
        /// Comma list or a:b:xfactor; scientific notation accepted.
        #[arg(long, value_parser = n_grid_arg)]
        n_grid: List<u64>,
        /// log_quarter, loglog_half or logpow:P.
        #[arg(long, default_value = "log_quarter")]
        scale: String,
        /// Levels: z for mdp/local, L for tightness, x for ldp.
        #[arg(long, value_parser = f64_list_arg, allow_hyphen_values = true)]
        z: Option<List<f64>>,
        /// Endpoint layer V_n <= delta n for tightness.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[command(flatten)]
        format: FormatArgs,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Which {
    #[value(name = "h")]
    LowerH,
    #[value(name = "H")]
    UpperH,
    #[value(name = "J")]
    J,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum VerifyKind {
    Mdp,
    Ldp,
    Clt,
    Local,
    Tightness,
    Endpoint,
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<rumour_core::Error> for Failure {
    fn from(e: rumour_core::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(format!("output failed: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Domain(format!("output failed: {e}"))
    }
}

type Outcome = Result<(), Failure>;

fn parse_threads(s: &str) -> Result<usize, String> {
    match parse_count(s)? {
        0 => Err("need at least one thread".into()),
        t => Ok(t as usize),
    }
}

/// Resource caps with environment overrides applied.
pub fn caps_from_env<F: Fn(&str) -> Option<String>>(lookup: F) -> Result<ResourceCaps, String> {
    let mut caps = ResourceCaps::default();
    for var in CAP_VARS {
        let Some(raw) = lookup(var) else { continue };
        let v = parse_count(&raw).map_err(|e| format!("{var}: {e}"))?;
        if v == 0 {
            return Err(format!("{var} must be positive"));
        }
        match var {
            "RUMOUR_MAX_J" => caps.j_max = v as usize,
            "RUMOUR_MAX_RATIONAL_N" => caps.rational_n = v,
            "RUMOUR_MAX_FLOAT_N" => caps.float_n = v,
            _ => caps.dp_n = v,
        }
    }
    Ok(caps)
}

/// Six significant digits for human output.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        format!("{:.*}", (5 - e).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn json_f64(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format!("{x}"))
    }
}

/// Parse `argv` (program name first), run one subcommand and return the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    2
                }
            };
        }
    };
    let outcome = match caps_from_env(|v| std::env::var(v).ok()) {
        Err(msg) => Err(Failure::Usage(msg)),
        Ok(caps) => match cli.threads {
            None => dispatch(cli.command, caps, out, err),
            Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(pool) => {
                    // the pool needs a Send closure, so output is buffered
                    let (mut o, mut e) = (Vec::new(), Vec::new());
                    let result = pool.install(|| dispatch(cli.command, caps, &mut o, &mut e));
                    let _ = out.write_all(&o);
                    let _ = err.write_all(&e);
                    result
                }
                Err(e) => Err(Failure::Domain(format!("thread pool: {e}"))),
            },
        },
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Domain(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn dispatch(command: Command, caps: ResourceCaps, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let engine = ExactEngine::default().with_caps(caps);
    match command {
        Command::Constants { format } => constants(format.format(), engine.constants(), out),
        Command::Dj { max, full, format } => dj(max, full, format.format(), &engine, out),
        Command::Dist { n, backend, check_oracle, format } => {
            let backend = match backend.as_str() {
                "auto" => engine.auto_backend(n),
                other => other.parse().map_err(|e: rumour_core::Error| Failure::Usage(e.to_string()))?,
            };
            if check_oracle {
                oracle(n, backend, &engine, out)
            } else {
                dist(n, backend, format.format(), &engine, out)
            }
        }
        Command::Simulate { n, samples, seed, streams, rate_convention, trajectory, format } => {
            let convention: RateConvention =
                rate_convention.parse().map_err(|e: rumour_core::Error| Failure::Usage(e.to_string()))?;
            let config = SimConfig::new(n, seed).with_streams(streams).with_convention(convention);
            if trajectory {
                simulate_path(&config, format.format(), out)
            } else {
                simulate(&config, samples, format.format(), out)
            }
        }
        Command::Rates { grid, which, format } => rates(&grid.0, which, format.format(), engine.constants(), out),
        Command::Verify { kind, n_grid, scale, z, delta, format } => {
            let scale: ScaleChoice = scale.parse().map_err(|e: rumour_core::Error| Failure::Usage(e.to_string()))?;
            verify(kind, &n_grid.0, scale, z.map(|l| l.0), delta, format.format(), engine, out, err)
        }
    }
}

fn constants(format: Format, c: &ModelConstants, out: &mut dyn Write) -> Outcome {
    let fields = [
        ("x_inf", c.x_inf),
        ("v_inf", c.v_inf),
        ("sigma2", c.sigma2),
        ("varrho", c.varrho),
        ("kappa", c.kappa),
        ("alpha", c.alpha),
        ("beta", c.beta),
    ];
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(c).expect("constants serialize"))?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["name", "value"])?;
            for (name, v) in fields {
                w.write_record([name.to_string(), fmt_f64(v)])?;
            }
            w.flush()?;
        }
        Format::Human => {
            for (name, v) in fields {
                writeln!(out, "{name:<8} {}", sig6(v))?;
            }
        }
    }
    Ok(())
}

fn short_decimal(d: &str, full: bool) -> String {
    if full || d.len() <= 40 {
        d.to_string()
    } else {
        format!("{}...({} digits)", &d[..20], d.len())
    }
}

fn dj(max: u64, full: bool, format: Format, engine: &ExactEngine, out: &mut dyn Write) -> Outcome {
    if max == 0 {
        return Err(Failure::Domain("--max must be at least 1".into()));
    }
    let cap = engine.caps().j_max;
    if max > cap as u64 {
        return Err(rumour_core::Error::ResourceCap { backend: "exact d_j", limit: cap as u64, requested: max }.into());
    }
    let table = AutomataTable::compute_exact_capped(max as usize, cap, engine.constants())?;
    let rows = (1..=max as usize).map(|j| {
        let d = table.value(j).expect("within table");
        let log_d = table.log_d(j, rumour_core::DjBackend::Exact).expect("within table");
        let ratio = table.asymptotic_ratio(j).expect("within table");
        (j, short_decimal(&d.to_string(), full), d.bits(), log_d, ratio)
    });
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["j", "d_j", "bits", "ln_d_j", "asymptotic_ratio"])?;
            for (j, d, bits, log_d, ratio) in rows {
                w.write_record([j.to_string(), d, bits.to_string(), fmt_f64(log_d), fmt_f64(ratio)])?;
            }
            w.flush()?;
        }
        Format::Json => {
            let v: Vec<_> = rows
                .map(|(j, d, bits, log_d, ratio)| {
                    json!({"j": j, "d_j": d, "bits": bits, "ln_d_j": log_d, "asymptotic_ratio": ratio})
                })
                .collect();
            writeln!(out, "{}", serde_json::Value::Array(v))?;
        }
        Format::Human => {
            writeln!(out, "{:>6}  {:<40}  {:>12}  {:>10}", "j", "d_j", "ln d_j", "ratio")?;
            for (j, d, _, log_d, ratio) in rows {
                writeln!(out, "{j:>6}  {d:<40}  {:>12}  {:>10}", sig6(log_d), sig6(ratio))?;
            }
        }
    }
    Ok(())
}

fn dist(n: u64, backend: DistBackend, format: Format, engine: &ExactEngine, out: &mut dyn Write) -> Outcome {
    if backend == DistBackend::AsymptoticD && n > LAZY_DENSE_LIMIT {
        return Err(Failure::Domain(format!(
            "asymptotic_d output is limited to n <= {LAZY_DENSE_LIMIT}; use `verify` for larger n"
        )));
    }
    let d = engine.distribution(n, backend)?;
    let exact: Option<Vec<String>> = d.rational_pmf().map(|p| p.iter().map(|q| q.to_string()).collect());
    let logs = d.log_pmf_vec();
    let probs = d.pmf_vec();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let mut header = vec!["k", "pmf", "ln_pmf"];
            if exact.is_some() {
                header.push("exact");
            }
            w.write_record(&header)?;
            for (k, lp) in logs.iter().enumerate() {
                let mut rec = vec![k.to_string(), fmt_f64(probs[k]), fmt_f64(*lp)];
                if let Some(e) = &exact {
                    rec.push(e[k].clone());
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<_> = logs
                .iter()
                .enumerate()
                .map(|(k, lp)| {
                    let mut row = json!({"k": k, "pmf": json_f64(probs[k]), "ln_pmf": json_f64(*lp)});
                    if let Some(e) = &exact {
                        row["exact"] = json!(e[k]);
                    }
                    row
                })
                .collect();
            writeln!(out, "{}", json!({"n": n, "backend": backend.name(), "rows": rows}))?;
        }
        Format::Human => {
            writeln!(out, "# n = {n}, backend = {backend}")?;
            writeln!(out, "{:>8}  {:>12}  {:>12}", "k", "P(X_n = k)", "ln P")?;
            for (k, lp) in logs.iter().enumerate() {
                write!(out, "{k:>8}  {:>12}  {:>12}", sig6(probs[k]), sig6(*lp))?;
                if let Some(e) = &exact {
                    write!(out, "  {}", short_decimal(&e[k], false))?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

fn oracle(n: u64, backend: DistBackend, engine: &ExactEngine, out: &mut dyn Write) -> Outcome {
    if matches!(backend, DistBackend::AsymptoticD | DistBackend::DpOracle) {
        return Err(Failure::Domain(format!("oracle check needs the rational or float_formula backend, got {backend}")));
    }
    let formula = engine.distribution(n, backend)?.pmf_vec();
    let dp = engine.dp_distribution(n, RateConvention::Formula)?.pmf_vec();
    let worst = formula.iter().zip(&dp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    writeln!(out, "n = {n}, backend = {backend}: max |formula - dp| = {}", fmt_f64(worst))?;
    if worst > ORACLE_TOL {
        return Err(Failure::Domain(format!("oracle mismatch {worst:e} exceeds {ORACLE_TOL:e}")));
    }
    Ok(())
}

fn simulate(config: &SimConfig, samples: u64, format: Format, out: &mut dyn Write) -> Outcome {
    let hist = sample_batch(config, samples)?;
    let freq = hist.frequencies();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["k", "count", "frequency"])?;
            for (k, (c, f)) in hist.counts.iter().zip(&freq).enumerate() {
                w.write_record([k.to_string(), c.to_string(), fmt_f64(*f)])?;
            }
            w.flush()?;
        }
        Format::Json => {
            writeln!(out, "{}", json!({"config": config, "samples": samples, "counts": hist.counts}))?;
        }
        Format::Human => {
            let mean = freq.iter().enumerate().map(|(k, f)| k as f64 * f).sum::<f64>();
            writeln!(
                out,
                "# n = {}, samples = {samples}, seed = {}, streams = {}, convention = {}, mean X_n/n = {}",
                config.n,
                config.seed,
                config.streams,
                config.rate_convention.name(),
                sig6(mean / config.n as f64)
            )?;
            writeln!(out, "{:>8}  {:>10}  {:>10}", "k", "count", "frequency")?;
            for (k, (c, f)) in hist.counts.iter().zip(&freq).enumerate().filter(|(_, (c, _))| **c > 0) {
                writeln!(out, "{k:>8}  {c:>10}  {:>10}", sig6(*f))?;
            }
        }
    }
    Ok(())
}

fn simulate_path(config: &SimConfig, format: Format, out: &mut dyn Write) -> Outcome {
    let path = sample_trajectory(config)?;
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string(&path).expect("trajectory serializes"))?,
        Format::Csv | Format::Human => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["time", "i", "j", "z"])?;
            for (t, s) in &path.events {
                let time = if format == Format::Csv { fmt_f64(*t) } else { sig6(*t) };
                w.write_record([time, s.ignorants.to_string(), s.spreaders.to_string(), s.stiflers().to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

type Column = (&'static str, Box<dyn Fn(f64) -> f64>);

fn rates(grid: &[f64], which: Option<Which>, format: Format, c: &ModelConstants, out: &mut dyn Write) -> Outcome {
    let set = RateFunctionSet::new(*c);
    if which == Some(Which::LowerH) {
        if let Some(x) = grid.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(Failure::Domain(format!("h is defined on [0, 1), grid contains {x}; use --which H")));
        }
    }
    let columns: Vec<Column> = {
        let h = move |x: f64| set.h(x).unwrap_or(f64::NAN);
        let big_h = move |x: f64| set.H(x);
        let j = move |x: f64| set.J(x);
        match which {
            Some(Which::LowerH) => vec![("h", Box::new(h))],
            Some(Which::UpperH) => vec![("H", Box::new(big_h))],
            Some(Which::J) => vec![("J", Box::new(j))],
            None => vec![("h", Box::new(h)), ("H", Box::new(big_h)), ("J", Box::new(j))],
        }
    };
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(std::iter::once("x").chain(columns.iter().map(|c| c.0)))?;
            for &x in grid {
                w.write_record(std::iter::once(fmt_f64(x)).chain(columns.iter().map(|c| fmt_f64(c.1(x)))))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let rows: Vec<_> = grid
                .iter()
                .map(|&x| {
                    let mut row = serde_json::Map::new();
                    row.insert("x".into(), json_f64(x));
                    for (name, f) in &columns {
                        row.insert((*name).into(), json_f64(f(x)));
                    }
                    serde_json::Value::Object(row)
                })
                .collect();
            writeln!(out, "{}", serde_json::Value::Array(rows))?;
        }
        Format::Human => {
            write!(out, "{:>12}", "x")?;
            for (name, _) in &columns {
                write!(out, "  {name:>12}")?;
            }
            writeln!(out)?;
            for &x in grid {
                write!(out, "{:>12}", sig6(x))?;
                for (_, f) in &columns {
                    write!(out, "  {:>12}", sig6(f(x)))?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn verify(
    kind: VerifyKind,
    n_grid: &[u64],
    scale: ScaleChoice,
    levels: Option<Vec<f64>>,
    delta: f64,
    format: Format,
    engine: ExactEngine,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let harness = Harness::new(engine);
    let levels = |default: &[f64]| levels.clone().unwrap_or_else(|| default.to_vec());
    let report: DeviationReport = match kind {
        VerifyKind::Mdp => harness.mdp_table(&levels(&[1.0]), scale, n_grid)?,
        VerifyKind::Ldp => harness.ldp_table(&levels(&[0.15, 0.3]), n_grid)?,
        VerifyKind::Clt => harness.clt_check(n_grid)?,
        VerifyKind::Local => harness.local_mdp_check(&levels(&[-2.0, -1.0, 0.0, 1.0, 2.0]), scale, n_grid)?,
        VerifyKind::Tightness => harness.tightness_check(&levels(&[2.0]), scale, n_grid, delta)?,
        VerifyKind::Endpoint => harness.endpoint_probe(n_grid, scale)?,
    };
    if report.rows.iter().any(|r| r.empirical_rate.is_nan() && r.aux == f64::NEG_INFINITY) {
        writeln!(err, "warning: some lattice points fall outside the support (NaN rows)")?;
    }
    match format {
        Format::Csv => report.write_csv(out)?,
        Format::Json => writeln!(out, "{}", report.to_json())?,
        Format::Human => {
            writeln!(
                out,
                "{:<14} {:>12} {:>10} {:>10} {:>13} {:>13} {:>13}  backend",
                "metric", "n", "b_n", "param", "empirical", "target", "aux"
            )?;
            for r in &report.rows {
                writeln!(
                    out,
                    "{:<14} {:>12} {:>10} {:>10} {:>13} {:>13} {:>13}  {}",
                    r.metric.name(),
                    r.n,
                    sig6(r.b_n),
                    sig6(r.param),
                    sig6(r.empirical_rate),
                    sig6(r.target_rate),
                    sig6(r.aux),
                    r.backend
                )?;
            }
        }
    }
    Ok(())
}
