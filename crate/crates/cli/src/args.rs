//! Value parsers for counts, grids and lists.

/// A non-negative integer, also accepted in scientific notation (`1e6`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 1.8e19) {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(v as u64)
}

/// Comma list of counts, or a geometric range `a:b:xF` (`a:b:F` also accepted).
pub fn parse_n_grid(s: &str) -> Result<Vec<u64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, f] => {
            let a = parse_count(a)?;
            let b = parse_count(b)?;
            let f = f.trim();
            let factor: f64 = f.strip_prefix('x').unwrap_or(f).parse().map_err(|_| format!("bad factor `{f}`"))?;
            if !(factor > 1.0) || a == 0 || a > b {
                return Err(format!("range `{s}` needs 0 < a <= b and factor > 1"));
            }
            let mut grid = Vec::new();
            let mut x = a as f64;
            while x <= b as f64 * (1.0 + 1e-12) {
                let v = x.round() as u64;
                if grid.last() != Some(&v) {
                    grid.push(v);
                }
                x *= factor;
            }
            Ok(grid)
        }
        [_] => s.split(',').map(parse_count).collect(),
        _ => Err(format!("`{s}` is neither a comma list nor a:b:xfactor")),
    }
}

/// Comma list of reals.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

/// Arithmetic grid `a:b:step`, endpoints included.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let v = s
        .split(':')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<Vec<f64>, String>>()?;
    let [a, b, step] = v[..] else {
        return Err(format!("`{s}` is not of the form a:b:step"));
    };
    if !(step > 0.0) || !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(format!("range `{s}` needs a <= b and step > 0"));
    }
    let count = ((b - a) / step + 1e-9).floor() as u64;
    if count > 10_000_000 {
        return Err(format!("range `{s}` has too many points"));
    }
    Ok((0..=count).map(|i| a + i as f64 * step).collect())
}
