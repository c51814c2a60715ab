//! CSV output: a plain string table, deterministic float formatting, and
//! read-back for checking emitted files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{HarnessError, Result};

/// Header plus string records; every producer renders into this.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Cell `name` of row `row`.
    pub fn get(&self, row: usize, name: &str) -> Option<&str> {
        let c = self.column(name)?;
        self.rows.get(row).map(|r| r[c].as_str())
    }

    pub fn write_to<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("cells are UTF-8")
    }
}

/// Nine significant digits, plain notation for magnitudes in `[1e-5, 1e9)`,
/// scientific outside, trailing zeros dropped.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..9).contains(&exp) {
        trim_zeros(format!("{:.*}", (8 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn fmt_opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    let io_err = |source| HarnessError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    table.write_to(&mut out).map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })?;
    out.flush().map_err(io_err)
}

/// Read a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Table> {
    let csv_err = |source| HarnessError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok(Table { header, rows })
}
