//! Trace CSV, matrix CSV and PGM images.
//!
//! Floats are written with 17 significant digits so a read-back is exact.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::gaps::{bound_feas, bound_opt, bound_terms, BoundConstants};
use crate::outer_loop::Trace;
use crate::vectorspace::Point;

pub const TRACE_COLUMNS: [&str; 13] = [
    "n",
    "beta_n",
    "eps_n",
    "e_n",
    "lambda_n",
    "S_n",
    "inner_iters",
    "gap_opt",
    "gap_feas",
    "bound_opt",
    "bound_feas",
    "err_to_ref",
    "lower_obj",
];

/// One row of `trace.csv`. Row `n` describes outer step `n`; `S_n`, the gaps,
/// the bounds and `err_to_ref` refer to the state after that step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub e: Option<f64>,
    pub lambda: f64,
    pub s: f64,
    pub inner_iters: usize,
    pub gap_opt: Option<f64>,
    pub gap_feas: Option<f64>,
    pub bound_opt: Option<f64>,
    pub bound_feas: Option<f64>,
    pub err_to_ref: Option<f64>,
    pub lower_obj: Option<f64>,
}

/// Flattens a trace. Bounds are filled only when `constants` is given and every
/// step has a tracking error.
pub fn trace_rows(trace: &Trace, constants: Option<&BoundConstants>) -> Vec<TraceRow> {
    let terms = constants.zip(bound_terms(trace));
    trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (bo, bf) = match &terms {
                Some((c, t)) => (
                    Some(bound_opt(&t[..=i], c)),
                    Some(bound_feas(&t[..=i], c)),
                ),
                None => (None, None),
            };
            TraceRow {
                n: r.n,
                beta: r.beta,
                epsilon: r.epsilon,
                e: r.e,
                lambda: r.lambda,
                s: r.s_next,
                inner_iters: r.inner_iterations,
                gap_opt: trace.diagnostic(i, "gap_opt"),
                gap_feas: trace.diagnostic(i, "gap_feas"),
                bound_opt: bo,
                bound_feas: bf,
                err_to_ref: trace.diagnostic(i, "err_to_ref"),
                lower_obj: trace.diagnostic(i, "lower_obj"),
            }
        })
        .collect()
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_field(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format_float(r.beta),
            format_float(r.epsilon),
            opt_field(r.e),
            format_float(r.lambda),
            format_float(r.s),
            r.inner_iters.to_string(),
            opt_field(r.gap_opt),
            opt_field(r.gap_feas),
            opt_field(r.bound_opt),
            opt_field(r.bound_feas),
            opt_field(r.err_to_ref),
            opt_field(r.lower_obj),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_trace_csv(BufWriter::new(File::create(path)?), rows)
}

fn parse_float(s: &str, col: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("column {col}: bad number {s:?}")))
}

fn parse_opt(s: &str, col: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_float(s, col).map(Some)
    }
}

fn parse_count(s: &str, col: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("column {col}: bad count {s:?}")))
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(Error::Parse(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        rows.push(TraceRow {
            n: parse_count(f(0), TRACE_COLUMNS[0])?,
            beta: parse_float(f(1), TRACE_COLUMNS[1])?,
            epsilon: parse_float(f(2), TRACE_COLUMNS[2])?,
            e: parse_opt(f(3), TRACE_COLUMNS[3])?,
            lambda: parse_float(f(4), TRACE_COLUMNS[4])?,
            s: parse_float(f(5), TRACE_COLUMNS[5])?,
            inner_iters: parse_count(f(6), TRACE_COLUMNS[6])?,
            gap_opt: parse_opt(f(7), TRACE_COLUMNS[7])?,
            gap_feas: parse_opt(f(8), TRACE_COLUMNS[8])?,
            bound_opt: parse_opt(f(9), TRACE_COLUMNS[9])?,
            bound_feas: parse_opt(f(10), TRACE_COLUMNS[10])?,
            err_to_ref: parse_opt(f(11), TRACE_COLUMNS[11])?,
            lower_obj: parse_opt(f(12), TRACE_COLUMNS[12])?,
        });
    }
    Ok(rows)
}

pub fn load_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    read_trace_csv(File::open(path)?)
}

/// Writes a matrix-shaped point as headerless CSV, one matrix row per line.
pub fn write_matrix_csv<W: Write>(out: W, m: &Point) -> Result<()> {
    let (rows, cols) = m.shape().ok_or(Error::MissingShape)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in 0..rows {
        let line = &m.as_slice()[r * cols..(r + 1) * cols];
        w.write_record(line.iter().map(|&x| format_float(x)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<Point> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Parse(format!(
                    "row {rows} has {} entries, expected {c}",
                    rec.len()
                )))
            }
            _ => {}
        }
        for s in rec.iter() {
            data.push(parse_float(s, "matrix")?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse("empty matrix".into()))?;
    Point::matrix(data, rows, cols)
}

pub fn save_matrix_csv(path: &Path, m: &Point) -> Result<()> {
    write_matrix_csv(BufWriter::new(File::create(path)?), m)
}

pub fn load_matrix_csv(path: &Path) -> Result<Point> {
    read_matrix_csv(File::open(path)?)
}

fn image_err(e: image::ImageError) -> Error {
    Error::Image(e.to_string())
}

/// Binary 8-bit PGM; values are clamped to `[0, 1]` and scaled by 255.
pub fn write_pgm<W: Write>(out: W, m: &Point) -> Result<()> {
    let (rows, cols) = m.shape().ok_or(Error::MissingShape)?;
    let bytes: Vec<u8> = m
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    PnmEncoder::new(out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, cols as u32, rows as u32, ExtendedColorType::L8)
        .map_err(image_err)
}

pub fn save_pgm(path: &Path, m: &Point) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, m)?;
    w.flush()?;
    Ok(())
}

/// Reads any PNM graymap and scales it to `[0, 1]`.
pub fn load_pgm(path: &Path) -> Result<Point> {
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(image_err)?;
    let gray = img.to_luma8();
    let (cols, rows) = gray.dimensions();
    let data = gray.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Point::matrix(data, rows as usize, cols as usize)
}

/// Decodes PGM bytes already in memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<Point> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(image_err)?;
    let gray = img.to_luma8();
    let (cols, rows) = gray.dimensions();
    let data = gray.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Point::matrix(data, rows as usize, cols as usize)
}
