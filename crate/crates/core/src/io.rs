//! File formats: 16-bit binary PGM, CSV matrices and run metadata.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

/// Writes a binary PGM (P5) with maxval 65535.
pub fn write_pgm(path: &Path, levels: &Grid<u16>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", levels.nx(), levels.ny())?;
    let mut bytes = Vec::with_capacity(levels.as_slice().len() * 2);
    for v in levels.as_slice() {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Reads a binary PGM (P5) and returns its levels and maxval.
pub fn read_pgm(path: &Path) -> Result<(Grid<u16>, u16)> {
    parse_pgm(&fs::read(path)?)
}

pub fn parse_pgm(data: &[u8]) -> Result<(Grid<u16>, u16)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&data[start..pos]).map_err(|e| Error::Parse(e.to_string()))?);
    }
    if fields[0] != "P5" {
        return Err(Error::Parse(format!("expected binary PGM (P5), found `{}`", fields[0])));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM {what} `{s}`")));
    let nx = num(fields[1], "width")?;
    let ny = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Range(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let wide = maxval > 255;
    let need = nx * ny * if wide { 2 } else { 1 };
    let raster = data.get(pos..pos + need).ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
    let values: Vec<u16> = if wide {
        raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    if let Some(v) = values.iter().find(|&&v| v as usize > maxval) {
        return Err(Error::Range(format!("PGM level {v} exceeds maxval {maxval}")));
    }
    Ok((Grid::from_vec(nx, ny, values)?, maxval as u16))
}

/// Linear map of a real image onto 16-bit levels: `level = (v - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScale {
    pub offset: f64,
    pub scale: f64,
}

impl LevelScale {
    /// Scale spanning `[lo, hi]`.
    pub fn spanning(lo: f64, hi: f64) -> Self {
        let span = hi - lo;
        Self { offset: lo, scale: if span > 0.0 { span / 65535.0 } else { 1.0 } }
    }

    pub fn encode<T: Real>(&self, img: &Grid<T>) -> Grid<u16> {
        img.map(|v| ((v.as_f64() - self.offset) / self.scale).round().clamp(0.0, 65535.0) as u16)
    }

    pub fn decode(&self, level: u16) -> f64 {
        self.offset + level as f64 * self.scale
    }
}

/// Writes a real image as PGM scaled to its own range and returns the scale.
pub fn write_scaled_pgm<T: Real>(path: &Path, img: &Grid<T>) -> Result<LevelScale> {
    let (lo, hi) = img.min_max();
    let scale = LevelScale::spanning(lo.as_f64().min(0.0), hi.as_f64());
    write_pgm(path, &scale.encode(img))?;
    Ok(scale)
}

/// Row-major CSV, one image row per line, shortest round-trip decimals.
pub fn write_csv<T: Real>(path: &Path, img: &Grid<T>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for iy in 0..img.ny() {
        let row = img.row(iy);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{}", v.as_f64())?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Grid<f64>> {
    parse_csv(&fs::read_to_string(path)?)
}

pub fn parse_csv(text: &str) -> Result<Grid<f64>> {
    let mut nx = None;
    let mut data = Vec::new();
    let mut ny = 0;
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad number `{}`", line_no + 1, field.trim())))?;
            data.push(v);
        }
        let width = data.len() - before;
        match nx {
            None => nx = Some(width),
            Some(n) if n != width => {
                return Err(Error::Parse(format!("line {}: {width} columns, expected {n}", line_no + 1)))
            }
            _ => {}
        }
        ny += 1;
    }
    Grid::from_vec(nx.unwrap_or(0), ny, data)
}

/// Sidecar document written next to every image set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub setup_name: String,
    pub setup_hash: String,
    pub seed: u64,
    pub samples: usize,
    pub nx: usize,
    pub ny: usize,
    pub pixel_pitch_um: f64,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub pgm_scales: std::collections::BTreeMap<String, LevelScale>,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub summary: serde_json::Map<String, serde_json::Value>,
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let g = Grid::from_fn(7, 3, |x, y| (x * 9000 + y * 17) as u16);
        write_pgm(&p, &g).unwrap();
        let (back, maxval) = read_pgm(&p).unwrap();
        assert_eq!(maxval, 65535);
        assert_eq!(back, g);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(matches!(parse_pgm(b"P2\n1 1\n255\n0"), Err(Error::Parse(_))));
        assert!(matches!(parse_pgm(b"P5\n2 2\n255\n\x01"), Err(Error::Parse(_))));
        assert!(matches!(parse_pgm(b"P5\n1 1\n100\n\xff"), Err(Error::Range(_))));
        let (g, m) = parse_pgm(b"P5\n# comment\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!((g.as_slice(), m), (&[0u16, 255][..], 255));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let g = Grid::from_fn(5, 4, |x, y| (x as f64 + 0.1) / (y as f64 + 3.0) * 1e-7);
        write_csv(&p, &g).unwrap();
        assert_eq!(read_csv(&p).unwrap(), g);
        assert!(parse_csv("1,2\n3\n").is_err());
    }
}
