//! Dataset CSV format.
//!
//! A header row `f0,...,f{dims-1},label` followed by one row per sample.
//! Features are written as decimal text with 12 significant digits, LF line
//! endings, `.` as the decimal separator.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use eldam_core::Dataset;

use crate::error::{Error, Result};

/// Formats `v` with 12 significant digits, like C's `%.12g`.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (11 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn header(dims: usize) -> Vec<String> {
    (0..dims)
        .map(|i| format!("f{i}"))
        .chain(std::iter::once("label".to_string()))
        .collect()
}

pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(header(d.dims()))?;
    let mut record = Vec::with_capacity(d.dims() + 1);
    for (x, y) in d.rows() {
        record.clear();
        record.extend(x.iter().map(|&v| format_sig12(v)));
        record.push(y.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(d, BufWriter::new(file)).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Parses a dataset with `k` classes. `source` names the input in errors.
pub fn read_csv<R: Read>(reader: R, k: usize, source: &Path) -> Result<Dataset> {
    let fail = |line: usize, message: String| Error::Format {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let head = r.headers().map_err(|e| csv_error(source, e))?.clone();
    if head.is_empty() {
        return Err(fail(1, "empty file".into()));
    }
    let dims = head.len() - 1;
    if dims == 0 || head.iter().ne(header(dims).iter().map(String::as_str)) {
        return Err(fail(1, format!("expected header f0,...,f{},label", dims.max(1) - 1)));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(source, e))?;
        if record.len() != dims + 1 {
            return Err(fail(line, format!("expected {} fields, got {}", dims + 1, record.len())));
        }
        for field in record.iter().take(dims) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| fail(line, format!("bad feature value {field:?}")))?;
            if !v.is_finite() {
                return Err(fail(line, format!("non-finite feature {field:?}")));
            }
            features.push(v);
        }
        let field = &record[dims];
        let label: usize = field
            .trim()
            .parse()
            .map_err(|_| fail(line, format!("bad label {field:?}")))?;
        if label >= k {
            return Err(fail(line, format!("label {label} out of range for {k} classes")));
        }
        labels.push(label);
    }
    Ok(Dataset::new(features, labels, dims, k)?)
}

pub fn load_csv(path: impl AsRef<Path>, k: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, k, path)
}
