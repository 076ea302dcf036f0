//! Tensor and matrix file formats.
//!
//! * `.ten`: text. First line `K p_1 .. p_K`, then the `p*` entries in
//!   colexicographic order, whitespace separated.
//! * `.tenb`: binary. Magic `TEN1`, little-endian `u32` K, K `u32` dims, then `p*`
//!   little-endian `f64` entries.
//! * Matrices: plain CSV, one row per line, 17 significant digits.
//! * `.csv` sample files: one sample vector per row (order-1 tensors).

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sym::SymMatrix;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TEN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorFormat {
    Text,
    Binary,
}

impl TensorFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "ten" => Some(TensorFormat::Text),
            "tenb" => Some(TensorFormat::Binary),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TensorFormat::Text => "ten",
            TensorFormat::Binary => "tenb",
        }
    }
}

fn parse_finite(tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::InvalidTensor(format!("cannot parse {tok:?} as a number")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(v)
}

pub fn parse_ten(text: &str) -> Result<Tensor> {
    let mut lines = text.lines();
    let header = lines
        .by_ref()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::InvalidTensor("empty file".into()))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidTensor(format!("bad header token {t:?}")))
        })
        .collect::<Result<_>>()?;
    let (&k, dims) = head
        .split_first()
        .ok_or_else(|| Error::InvalidTensor("missing header".into()))?;
    if k == 0 || dims.len() != k {
        return Err(Error::InvalidTensor(format!(
            "header declares order {k} but lists {} dims",
            dims.len()
        )));
    }
    let data = lines
        .flat_map(str::split_whitespace)
        .map(parse_finite)
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(dims.to_vec(), data)
}

pub fn format_ten(t: &Tensor) -> String {
    let mut out = t.order().to_string();
    for d in t.dims() {
        out.push(' ');
        out.push_str(&d.to_string());
    }
    out.push('\n');
    let p = t.dims()[0];
    for (i, v) in t.as_slice().iter().enumerate() {
        out.push_str(&format!("{v:e}"));
        out.push(if (i + 1) % p == 0 { '\n' } else { ' ' });
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::InvalidTensor("truncated header".into()))
}

pub fn decode_tenb(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::InvalidTensor("missing TEN1 magic".into()));
    }
    let k = read_u32(bytes, 4)? as usize;
    if k == 0 {
        return Err(Error::InvalidTensor("order 0".into()));
    }
    let dims = (0..k)
        .map(|i| read_u32(bytes, 8 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 8 + 4 * k;
    let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let body = &bytes[start..];
    if len.and_then(|l| l.checked_mul(8)) != Some(body.len()) {
        return Err(Error::InvalidTensor(format!(
            "payload of {} bytes does not match dims {dims:?}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect::<Vec<_>>();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Tensor::new(dims, data)
}

pub fn encode_tenb(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.order() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.order() as u32).to_le_bytes());
    for &d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn at_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::File { .. } => e,
        other => Error::file(path, other.to_string()),
    })
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let parsed = match TensorFormat::from_path(path) {
        Some(TensorFormat::Text) => fs::read_to_string(path)
            .map_err(Error::from)
            .and_then(|s| parse_ten(&s)),
        Some(TensorFormat::Binary) => fs::read(path)
            .map_err(Error::from)
            .and_then(|b| decode_tenb(&b)),
        None => Err(Error::InvalidArgument(
            "expected a .ten or .tenb file".into(),
        )),
    };
    at_path(path, parsed)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let written = match TensorFormat::from_path(path) {
        Some(TensorFormat::Text) => fs::write(path, format_ten(t)).map_err(Error::from),
        Some(TensorFormat::Binary) => fs::write(path, encode_tenb(t)).map_err(Error::from),
        None => Err(Error::InvalidArgument(
            "expected a .ten or .tenb file".into(),
        )),
    };
    at_path(path, written)
}

/// Rows of a numeric CSV file (no header); blank lines are skipped.
fn parse_csv_rows(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::InvalidArgument(format!("malformed CSV: {e}")))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(parse_finite).collect::<Result<Vec<_>>>()?);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("CSV file has no rows".into()));
    }
    let width = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::DimensionMismatch(format!(
            "row {} has {} fields, expected {width}",
            i + 1,
            rows[i].len()
        )));
    }
    Ok(rows)
}

pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let rows = parse_csv_rows(text)?;
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

pub fn format_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}", m[(i, j)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &SymMatrix) -> Result<()> {
    at_path(
        path,
        fs::write(path, format_matrix_csv(m.as_matrix())).map_err(Error::from),
    )
}

pub fn read_matrix_csv(path: &Path) -> Result<SymMatrix> {
    let parsed = fs::read_to_string(path)
        .map_err(Error::from)
        .and_then(|s| parse_matrix_csv(&s))
        .and_then(SymMatrix::new);
    at_path(path, parsed)
}

/// One order-1 sample per CSV row.
pub fn read_csv_samples(path: &Path) -> Result<Vec<Tensor>> {
    let parsed = fs::read_to_string(path).map_err(Error::from).and_then(|s| {
        parse_csv_rows(&s)?
            .into_iter()
            .map(|r| Tensor::new(vec![r.len()], r))
            .collect()
    });
    at_path(path, parsed)
}

/// Tensor files (`.ten`, `.tenb`) in `dir`, sorted by file name.
pub fn list_tensor_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = at_path(dir, fs::read_dir(dir).map_err(Error::from))?;
    let mut files = Vec::new();
    for e in entries {
        let path = at_path(dir, e.map_err(Error::from))?.path();
        if path.is_file() && TensorFormat::from_path(&path).is_some() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::file(dir, "no .ten or .tenb files found"));
    }
    Ok(files)
}

/// Load samples from files and directories. Directories contribute their tensor
/// files in name order; `.csv` files contribute one order-1 sample per row. All
/// samples must share dims; the first offending file is named in the error.
pub fn read_samples(inputs: &[PathBuf]) -> Result<Vec<Tensor>> {
    let mut samples: Vec<Tensor> = Vec::new();
    for input in inputs {
        let (paths, csv) = if input.is_dir() {
            (list_tensor_files(input)?, false)
        } else {
            let is_csv = input.extension().and_then(|e| e.to_str()) == Some("csv");
            (vec![input.clone()], is_csv)
        };
        for path in paths {
            let loaded = if csv {
                read_csv_samples(&path)?
            } else {
                vec![read_tensor(&path)?]
            };
            if let Some(first) = samples.first() {
                if let Some(bad) = loaded.iter().find(|t| t.dims() != first.dims()) {
                    return Err(Error::file(
                        &path,
                        format!("dims {:?} differ from {:?}", bad.dims(), first.dims()),
                    ));
                }
            }
            samples.extend(loaded);
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor {
        Tensor::new(vec![2, 3], vec![1.0, -2.5, 1e-300, 0.1, 3.0e10, -0.0]).unwrap()
    }

    #[test]
    fn text_round_trip() {
        let t = sample();
        let text = format_ten(&t);
        assert!(text.starts_with("2 2 3\n"));
        assert_eq!(parse_ten(&text).unwrap(), t);
    }

    #[test]
    fn binary_layout() {
        let t = sample();
        let b = encode_tenb(&t);
        assert_eq!(&b[..4], b"TEN1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &3u32.to_le_bytes());
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 16 + 6 * 8);
        assert_eq!(decode_tenb(&b).unwrap(), t);
        assert!(decode_tenb(&b[..b.len() - 1]).is_err());
        assert!(decode_tenb(b"TEN2\0\0\0\0").is_err());
    }

    #[test]
    fn malformed_text() {
        assert!(parse_ten("").is_err());
        assert!(parse_ten("2 2\n1 2").is_err());
        assert!(parse_ten("1 3\n1 2").is_err());
        assert!(parse_ten("1 2\n1 x").is_err());
        assert!(matches!(parse_ten("1 2\n1 NaN"), Err(Error::NonFinite)));
    }

    #[test]
    fn matrix_csv_is_lossless() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, 1.0 / 3.0, 2.0f64.sqrt()]);
        let text = format_matrix_csv(&m);
        assert_eq!(parse_matrix_csv(&text).unwrap(), m);
        assert!(parse_matrix_csv("1,2\n3").is_err());
    }
}
