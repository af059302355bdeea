//! Lengths with units on the command line. Bare numbers are micrometres.

/// Length in metres from `300um`, `0.3mm`, `300µm`, `1e-4m`, `500nm` or a
/// bare number of micrometres.
pub fn parse_length(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let split = t.find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E' || c == 'µ').unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.trim().parse().map_err(|_| format!("bad length `{s}`"))?;
    let factor = match unit.trim() {
        "" | "um" | "µm" => 1e-6,
        "mm" => 1e-3,
        "nm" => 1e-9,
        "cm" => 1e-2,
        "m" => 1.0,
        u => return Err(format!("unknown length unit `{u}` in `{s}`")),
    };
    let v = value * factor;
    if !v.is_finite() {
        return Err(format!("length `{s}` is not finite"));
    }
    Ok(v)
}

pub fn parse_length_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_length).collect()
}

/// `<x>` or `<x>,<y>`.
pub fn parse_shift(s: &str) -> Result<[f64; 2], String> {
    let v = parse_length_list(s)?;
    match v[..] {
        [x] => Ok([x, 0.0]),
        [x, y] => Ok([x, y]),
        _ => Err(format!("expected one or two lengths, got `{s}`")),
    }
}
