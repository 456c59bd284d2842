//! CSV and `f64le` binary point files.
//!
//! Binary layout: magic `GMCS`, `u32` version (1), `u64` n, `u32` d,
//! `u8` has_weights, then n rows of little-endian `f64`, each row being the
//! weight (if present) followed by the d coordinates.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{DataSet, PointSet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GMCS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    F64le,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "f64le" => Ok(Format::F64le),
            other => Err(Error::param(format!("unknown format `{other}`"))),
        }
    }
}

/// Loads a point file. For CSV, `weighted` selects a leading weight column;
/// binary files carry that flag in their header.
pub fn load_points(path: impl AsRef<Path>, format: Format, weighted: bool) -> Result<DataSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        Format::Csv => read_csv(reader, weighted),
        Format::F64le => read_binary(&mut reader),
    }
}

/// Writes a point set without weights (CSV) or with its weights when
/// `with_weights` is set.
pub fn save_points<S: PointSet + ?Sized>(
    path: impl AsRef<Path>,
    set: &S,
    format: Format,
    with_weights: bool,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Csv => write_csv(&mut w, set, with_weights),
        Format::F64le => write_binary(&mut w, set, with_weights),
    }
    .and_then(|()| w.flush().map_err(|e| Error::io(path, e)))
    .map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Writes `(weight, point)` rows; the weight column is always present.
pub fn save_weighted<S: PointSet + ?Sized>(
    path: impl AsRef<Path>,
    set: &S,
    format: Format,
) -> Result<()> {
    if set.is_empty() {
        return Err(Error::data("refusing to save an empty weighted set"));
    }
    save_points(path, set, format, true)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write, S: PointSet + ?Sized>(
    w: &mut W,
    set: &S,
    with_weights: bool,
) -> Result<()> {
    let io = |e| Error::io("<csv>", e);
    let mut line = String::new();
    for i in 0..set.len() {
        line.clear();
        if with_weights {
            line.push_str(&fmt_f64(set.weight(i)));
            line.push(',');
        }
        let row: Vec<String> = set.point(i).iter().map(|&v| fmt_f64(v)).collect();
        line.push_str(&row.join(","));
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Parses one CSV line into `(weight, coordinates)`; blank lines give `None`.
fn parse_csv_row(line: &str, lineno: usize, weighted: bool) -> Result<Option<(f64, Vec<f64>)>> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let mut values = Vec::new();
    for field in trimmed.split(',') {
        let v: f64 = field.trim().parse().map_err(|_| {
            Error::parse(
                format!("line {lineno}"),
                format!("invalid number `{}`", field.trim()),
            )
        })?;
        if !v.is_finite() {
            return Err(Error::parse(format!("line {lineno}"), "non-finite value"));
        }
        values.push(v);
    }
    if !weighted {
        return Ok(Some((1.0, values)));
    }
    if values.len() < 2 {
        return Err(Error::parse(
            format!("line {lineno}"),
            "weighted row needs a weight and at least one coordinate",
        ));
    }
    let w = values.remove(0);
    if w < 0.0 {
        return Err(Error::parse(format!("line {lineno}"), "negative weight"));
    }
    Ok(Some((w, values)))
}

pub fn read_csv<R: BufRead>(reader: R, weighted: bool) -> Result<DataSet> {
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        let Some((w, row)) = parse_csv_row(&line, lineno, weighted)? else {
            continue;
        };
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::parse(
                    format!("line {lineno}"),
                    format!("expected {d} coordinates, found {}", row.len()),
                ))
            }
            _ => {}
        }
        weights.push(w);
        coords.extend_from_slice(&row);
    }
    let Some(dim) = dim else {
        return Err(Error::parse("line 1", "empty input"));
    };
    DataSet::new(coords, weights, dim).map_err(|e| Error::parse("<csv>", e.to_string()))
}

pub fn write_binary<W: Write, S: PointSet + ?Sized>(
    w: &mut W,
    set: &S,
    with_weights: bool,
) -> Result<()> {
    let io = |e| Error::io("<binary>", e);
    let d = u32::try_from(set.dim()).map_err(|_| Error::data("dimension exceeds u32"))?;
    let mut buf = Vec::with_capacity(21 + set.len() * (set.dim() + 1) * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.len() as u64).to_le_bytes());
    buf.extend_from_slice(&d.to_le_bytes());
    buf.push(u8::from(with_weights));
    for i in 0..set.len() {
        if with_weights {
            buf.extend_from_slice(&set.weight(i).to_le_bytes());
        }
        for v in set.point(i) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)
}

struct ByteReader<'a, R> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> ByteReader<'_, R> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            Error::parse(
                format!("byte offset {}", self.offset),
                format!("truncated input ({e})"),
            )
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn f64(&mut self) -> Result<f64> {
        let at = self.offset;
        let v = f64::from_le_bytes(self.take::<8>()?);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::parse(
                format!("byte offset {at}"),
                "non-finite value",
            ))
        }
    }
}

/// Reads one binary block from the current position of `r`.
pub fn read_binary<R: Read>(r: &mut R) -> Result<DataSet> {
    let mut br = ByteReader {
        inner: r,
        offset: 0,
    };
    let magic = br.take::<4>()?;
    if &magic != MAGIC {
        return Err(Error::parse("byte offset 0", "bad magic (expected GMCS)"));
    }
    let version = u32::from_le_bytes(br.take::<4>()?);
    if version != VERSION {
        return Err(Error::parse(
            "byte offset 4",
            format!("unsupported version {version}"),
        ));
    }
    let n = u64::from_le_bytes(br.take::<8>()?) as usize;
    let d = u32::from_le_bytes(br.take::<4>()?) as usize;
    let has_weights = match br.take::<1>()?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::parse(
                "byte offset 20",
                format!("bad weight flag {other}"),
            ))
        }
    };
    if n == 0 || d == 0 {
        return Err(Error::parse("byte offset 8", "empty data set"));
    }
    let mut coords = Vec::with_capacity(n.saturating_mul(d).min(1 << 28));
    let mut weights = Vec::with_capacity(n.min(1 << 26));
    for _ in 0..n {
        if has_weights {
            let at = br.offset;
            let w = br.f64()?;
            if w < 0.0 {
                return Err(Error::parse(format!("byte offset {at}"), "negative weight"));
            }
            weights.push(w);
        } else {
            weights.push(1.0);
        }
        for _ in 0..d {
            coords.push(br.f64()?);
        }
    }
    DataSet::new(coords, weights, d).map_err(|e| Error::parse("<binary>", e.to_string()))
}

/// Reads a point file one row at a time, so a stream consumer never holds
/// more than one row of input.
pub struct PointStream {
    inner: StreamKind,
    dim: usize,
    /// Rows still expected (binary) or the next line number (CSV).
    cursor: u64,
}

enum StreamKind {
    Csv {
        lines: std::io::Lines<BufReader<File>>,
        weighted: bool,
        first: Option<(f64, Vec<f64>)>,
    },
    Binary {
        reader: BufReader<File>,
        weighted: bool,
        offset: u64,
    },
}

impl PointStream {
    pub fn open(path: impl AsRef<Path>, format: Format, weighted: bool) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        match format {
            Format::Csv => {
                let mut lines = reader.lines();
                let mut lineno: usize = 0;
                let first = loop {
                    lineno += 1;
                    match lines.next() {
                        None => return Err(Error::parse("line 1", "empty input")),
                        Some(line) => {
                            let line = line.map_err(|e| Error::io(path, e))?;
                            if let Some(row) = parse_csv_row(&line, lineno, weighted)? {
                                break row;
                            }
                        }
                    }
                };
                Ok(Self {
                    dim: first.1.len(),
                    inner: StreamKind::Csv {
                        lines,
                        weighted,
                        first: Some(first),
                    },
                    cursor: lineno as u64,
                })
            }
            Format::F64le => {
                let mut br = ByteReader {
                    inner: &mut reader,
                    offset: 0,
                };
                let magic = br.take::<4>()?;
                if &magic != MAGIC {
                    return Err(Error::parse("byte offset 0", "bad magic (expected GMCS)"));
                }
                let version = u32::from_le_bytes(br.take::<4>()?);
                if version != VERSION {
                    return Err(Error::parse(
                        "byte offset 4",
                        format!("unsupported version {version}"),
                    ));
                }
                let n = u64::from_le_bytes(br.take::<8>()?);
                let d = u32::from_le_bytes(br.take::<4>()?) as usize;
                let weighted = match br.take::<1>()?[0] {
                    0 => false,
                    1 => true,
                    other => {
                        return Err(Error::parse(
                            "byte offset 20",
                            format!("bad weight flag {other}"),
                        ))
                    }
                };
                if n == 0 || d == 0 {
                    return Err(Error::parse("byte offset 8", "empty data set"));
                }
                let offset = br.offset;
                Ok(Self {
                    dim: d,
                    inner: StreamKind::Binary {
                        reader,
                        weighted,
                        offset,
                    },
                    cursor: n,
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Iterator for PointStream {
    /// `(coordinates, weight)`.
    type Item = Result<(Vec<f64>, f64)>;

    fn next(&mut self) -> Option<Self::Item> {
        let dim = self.dim;
        match &mut self.inner {
            StreamKind::Csv {
                lines,
                weighted,
                first,
            } => {
                if let Some((w, row)) = first.take() {
                    return Some(Ok((row, w)));
                }
                loop {
                    let line = match lines.next()? {
                        Ok(line) => line,
                        Err(e) => return Some(Err(Error::io("<csv>", e))),
                    };
                    self.cursor += 1;
                    match parse_csv_row(&line, self.cursor as usize, *weighted) {
                        Ok(None) => continue,
                        Ok(Some((w, row))) if row.len() == dim => return Some(Ok((row, w))),
                        Ok(Some((_, row))) => {
                            return Some(Err(Error::parse(
                                format!("line {}", self.cursor),
                                format!("expected {dim} coordinates, found {}", row.len()),
                            )))
                        }
                        Err(e) => return Some(Err(e)),
                    }
                }
            }
            StreamKind::Binary {
                reader,
                weighted,
                offset,
            } => {
                if self.cursor == 0 {
                    return None;
                }
                self.cursor -= 1;
                let mut br = ByteReader {
                    inner: reader,
                    offset: *offset,
                };
                let row = (|| {
                    let w = if *weighted {
                        let at = br.offset;
                        let w = br.f64()?;
                        if w < 0.0 {
                            return Err(Error::parse(
                                format!("byte offset {at}"),
                                "negative weight",
                            ));
                        }
                        w
                    } else {
                        1.0
                    };
                    let coords = (0..dim).map(|_| br.f64()).collect::<Result<Vec<_>>>()?;
                    Ok((coords, w))
                })();
                *offset = br.offset;
                if row.is_err() {
                    self.cursor = 0;
                }
                Some(row)
            }
        }
    }
}
