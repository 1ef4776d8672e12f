//! Plain-text input and output: regression datasets in CSV, simulation
//! tables, and fixed-precision number formatting.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{DpdError, Result};
use crate::inh_model::ObservationSet;
use crate::linalg;
use crate::sim::SimResult;

/// Significant digits used for numbers in text output.
pub const SIG_DIGITS: usize = 12;

/// Formats `x` with `digits` significant digits in the shortest of fixed or
/// exponent notation, dropping trailing zeros.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `format_sig` at the crate's output precision.
pub fn fmt(x: f64) -> String {
    format_sig(x, SIG_DIGITS)
}

/// Reads a regression dataset: a header row, then one row per observation
/// with the response first and the covariates after it. The design must
/// have full column rank.
pub fn read_dataset<R: Read>(reader: R) -> Result<ObservationSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(&e, 1))?
        .clone();
    if headers.len() < 2 {
        return Err(DpdError::Parse {
            line: 1,
            column: headers.len() + 1,
            message: "need a response column and at least one covariate column".into(),
        });
    }
    let width = headers.len();
    let mut y = Vec::new();
    let mut xs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(DpdError::Parse {
                line,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| DpdError::Parse {
                line,
                column: j + 1,
                message: format!("'{}' ({}) is not a number", field, &headers[j]),
            })?;
            if !v.is_finite() {
                return Err(DpdError::Parse { line, column: j + 1, message: "value is not finite".into() });
            }
            if j == 0 {
                y.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = y.len();
    let p = width - 1;
    if n <= p {
        return Err(DpdError::Usage(format!("{n} observations are too few for {p} covariates")));
    }
    let x = DMatrix::from_row_slice(n, p, &xs);
    if linalg::rank(&x) < p {
        return Err(DpdError::Rank("design matrix does not have full column rank".into()));
    }
    ObservationSet::new(DVector::from_vec(y), Some(x))
}

pub fn read_dataset_file(path: &Path) -> Result<ObservationSet> {
    let file = std::fs::File::open(path).map_err(|e| DpdError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(file))
}

/// Reads a whitespace or comma separated numeric matrix, one row per line.
pub fn read_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>().map_err(|_| DpdError::Parse {
                    line: i as u64 + 1,
                    column: j + 1,
                    message: format!("'{s}' is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DpdError::Parse {
                    line: i as u64 + 1,
                    column: row.len().min(first.len()) + 1,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DpdError::Parse { line: 1, column: 1, message: "no numeric rows".into() });
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

fn csv_error(e: &csv::Error, fallback_line: u64) -> DpdError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    DpdError::Parse { line, column: 0, message: e.to_string() }
}

/// Header of the simulation table.
pub const SIM_COLUMNS: [&str; 8] = ["n", "tau", "e_err", "e_x", "mode", "rejection_rate", "mc_stderr", "failures"];

/// Writes simulation results as CSV.
pub fn write_sim_csv<W: Write>(results: &[SimResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DpdError::Io(e.to_string());
    w.write_record(SIM_COLUMNS).map_err(io)?;
    for r in results {
        w.write_record([
            r.n.to_string(),
            fmt(r.tau),
            fmt(r.e_err),
            fmt(r.e_x),
            r.mode.as_str().to_string(),
            fmt(r.rejection_rate),
            fmt(r.mc_stderr),
            r.failures.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| DpdError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.1 + 0.2, 12), "0.3");
        assert_eq!(format_sig(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_sig(123456.0, 12), "123456");
        assert_eq!(format_sig(-2.5e-9, 12), "-2.5e-9");
        assert_eq!(format_sig(6.02214076e23, 12), "6.02214076e23");
        assert_eq!(format_sig(0.0, 12), "0");
    }

    #[test]
    fn parses_dataset() {
        let text = "y,x1,x2\n1.0,1,0.5\n2.0,1,1.5\n2.9,1,2.5\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.x.as_ref().unwrap()[(2, 1)], 2.5);
    }

    #[test]
    fn reports_line_and_column() {
        let text = "y,x1,x2\n1.0,1,0.5\n2.0,1,abc\n";
        match read_dataset(text.as_bytes()) {
            Err(DpdError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        let text = "y,x1,x2\n1.0,1,0.5\n2.0,1\n";
        match read_dataset(text.as_bytes()) {
            Err(DpdError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_rank_deficient_design() {
        let text = "y,a,b\n1,1,2\n2,2,4\n3,3,6\n4,4,8\n";
        assert!(matches!(read_dataset(text.as_bytes()), Err(DpdError::Rank(_))));
    }

    #[test]
    fn parses_matrix() {
        let m = read_matrix("1 0\n0, 1\n# note\n2 3\n").unwrap();
        assert_eq!(m.shape(), (3, 2));
        assert_eq!(m[(2, 1)], 3.0);
    }
}
