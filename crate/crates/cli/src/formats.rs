//! Matrix and image file formats.
//!
//! * SPSU-BIN v1: `b"SPSU"`, version `u16`, rows `u32`, cols `u32`, then
//!   `rows * cols` little-endian `f64` values in row-major order.
//! * CSV: a `rows,cols` line, then one comma-separated line per matrix row.
//!   Values are written in shortest round-trip form.
//! * PGM: 8-bit binary (P5) grayscale.

use std::fs;
use std::io::Write;
use std::path::Path;

use spsu_core::Matrix;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"SPSU";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn encode_bin(m: &Matrix) -> CliResult<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| CliError::data("matrix has too many rows"))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| CliError::data("matrix has too many columns"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_bin(bytes: &[u8]) -> CliResult<Matrix> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(CliError::data("not an SPSU-BIN file"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CliError::data(format!("unsupported SPSU-BIN version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| CliError::data("SPSU-BIN dimensions overflow"))?;
    if body.len() != expected {
        return Err(CliError::data(format!(
            "SPSU-BIN body holds {} bytes, header declares {rows} x {cols}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Matrix::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn encode_csv(m: &Matrix) -> String {
    let mut out = format!("{},{}\n", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> CliResult<Matrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::data("empty CSV matrix"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::data(format!("bad CSV header `{header}`")))?;
    let [rows, cols] = dims[..] else {
        return Err(CliError::data(format!("CSV header must be `rows,cols`, got `{header}`")));
    };
    let mut body: Vec<&str> = lines.collect();
    while body.len() > rows && body.last().is_some_and(|l| l.trim().is_empty()) {
        body.pop();
    }
    if body.len() != rows {
        return Err(CliError::data(format!("CSV has {} rows, header declares {rows}", body.len())));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in body.iter().enumerate() {
        if cols == 0 && line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::data(format!("bad number on CSV row {}", i + 1)))?;
        if row.len() != cols {
            return Err(CliError::data(format!(
                "CSV row {} has {} values, expected {cols}",
                i + 1,
                row.len()
            )));
        }
        values.extend(row);
    }
    Ok(Matrix::from_shape_vec((rows, cols), values).expect("length checked"))
}

/// Linear map of `values` onto `0..=255`; returns the bytes and the
/// `(min, max)` pair that maps to 0 and 255. A constant map becomes all zeros.
pub fn quantize(values: &[f64]) -> (Vec<u8>, (f64, f64)) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bytes = values
        .iter()
        .map(|&v| {
            if hi > lo {
                (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    (bytes, (lo, hi))
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> CliResult<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(CliError::data(format!(
            "{} pixels for a {width} x {height} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Returns `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> CliResult<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::data("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(CliError::data("only binary P5 PGM files are supported"));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| CliError::data(format!("bad PGM header field `{s}`")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(CliError::data("only 8-bit PGM files are supported"));
    }
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != width * height {
        return Err(CliError::data("PGM raster size does not match its header"));
    }
    Ok((width, height, raster.to_vec()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Picks the format from the extension: `.csv` is CSV, anything else SPSU-BIN.
pub fn write_matrix(path: &Path, m: &Matrix) -> CliResult<()> {
    if is_csv(path) {
        write_bytes(path, encode_csv(m).as_bytes())
    } else {
        write_bytes(path, &encode_bin(m)?)
    }
}

pub fn read_matrix(path: &Path) -> CliResult<Matrix> {
    let bytes = read_bytes(path)?;
    let parsed = if is_csv(path) {
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::data(format!("{} is not UTF-8", path.display())))?;
        decode_csv(&text)
    } else {
        decode_bin(&bytes)
    };
    parsed.map_err(|e| e.context(path))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> CliResult<()> {
    write_bytes(path, &encode_pgm(width, height, pixels)?)
}

pub fn read_pgm(path: &Path) -> CliResult<(usize, usize, Vec<u8>)> {
    decode_pgm(&read_bytes(path)?).map_err(|e| e.context(path))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}
