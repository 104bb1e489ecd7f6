//! Tabular output in CSV or NDJSON, and the metadata sidecar.
//!
//! Floats are written in scientific notation with a fixed number of
//! significant digits, so identical inputs give identical bytes. Files are
//! staged under temporary names and renamed only once every file of a run has
//! been written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::OutputFormat;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Self::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Self::Bool(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Self::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Self::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Self::Empty, Into::into)
    }
}

/// Named columns and rows of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn render(&self, format: OutputFormat, precision: usize) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(precision),
            OutputFormat::Ndjson => self.to_ndjson(precision),
        }
    }

    pub fn to_csv(&self, precision: usize) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Float(x) => out.push_str(&format_float(*x, precision)),
                    Cell::Int(x) => {
                        let _ = write!(out, "{x}");
                    }
                    Cell::Bool(x) => {
                        let _ = write!(out, "{x}");
                    }
                    Cell::Text(s) => out.push_str(&csv_field(s)),
                    Cell::Empty => {}
                }
            }
            out.push('\n');
        }
        out
    }

    /// One JSON object per row. Non-finite floats and empty cells become `null`.
    pub fn to_ndjson(&self, precision: usize) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push('{');
            for (i, (name, cell)) in self.columns.iter().zip(row).enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::Value::from(*name).to_string());
                out.push(':');
                match cell {
                    Cell::Float(x) if x.is_finite() => out.push_str(&format_float(*x, precision)),
                    Cell::Float(_) | Cell::Empty => out.push_str("null"),
                    Cell::Int(x) => {
                        let _ = write!(out, "{x}");
                    }
                    Cell::Bool(x) => {
                        let _ = write!(out, "{x}");
                    }
                    Cell::Text(s) => out.push_str(&serde_json::Value::from(s.as_str()).to_string()),
                }
            }
            out.push_str("}\n");
        }
        out
    }
}

/// `x` with `precision` significant digits, e.g. `-1.25000000000e-3`.
pub fn format_float(x: f64, precision: usize) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{:.*e}", precision.max(1) - 1, x)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes every `(file name, contents)` pair into `dir`, or none of them.
///
/// All contents go to hidden temporary files first; they are renamed into
/// place afterwards. On any failure the temporaries and already renamed files
/// are removed. Returns the final paths.
pub fn write_all(dir: &Path, files: &[(String, String)]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(name, _)| (dir.join(format!(".{name}.tmp")), dir.join(name)))
        .collect();
    let cleanup = |upto: usize, renamed: usize| {
        for (i, (tmp, fin)) in staged.iter().enumerate().take(upto) {
            let _ = fs::remove_file(tmp);
            if i < renamed {
                let _ = fs::remove_file(fin);
            }
        }
    };
    for (i, ((tmp, _), (_, contents))) in staged.iter().zip(files).enumerate() {
        if let Err(e) = fs::write(tmp, contents) {
            cleanup(i + 1, 0);
            return Err(e);
        }
    }
    for (i, (tmp, fin)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, fin) {
            cleanup(staged.len(), i);
            return Err(e);
        }
    }
    Ok(staged.into_iter().map(|(_, fin)| fin).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["tau_ns", "pass", "stable", "branch"]);
        t.push(vec![0.1.into(), "fwd".into(), true.into(), Cell::Empty]);
        t.push(vec![(-2.5e-7).into(), "a,\"b\"".into(), false.into(), 3usize.into()]);
        t
    }

    #[test]
    fn floats_carry_the_requested_digits() {
        assert_eq!(format_float(0.1, 12), "1.00000000000e-1");
        assert_eq!(format_float(-1234.5, 3), "-1.23e3");
        assert_eq!(format_float(0.0, 2), "0.0e0");
        assert_eq!(format_float(f64::NAN, 5), "nan");
        let x = 0.123456789012345_f64;
        let back: f64 = format_float(x, 12).parse().unwrap();
        assert!((back - x).abs() <= 5e-12 * x);
        let back: f64 = format_float(x, 17).parse().unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn csv_layout() {
        let s = sample().to_csv(4);
        assert_eq!(
            s,
            "tau_ns,pass,stable,branch\n1.000e-1,fwd,true,\n-2.500e-7,\"a,\"\"b\"\"\",false,3\n"
        );
    }

    #[test]
    fn ndjson_rows_parse() {
        let s = sample().to_ndjson(6);
        let rows: Vec<serde_json::Value> = s.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["tau_ns"].as_f64(), Some(0.1));
        assert!(rows[0]["branch"].is_null());
        assert_eq!(rows[1]["pass"], "a,\"b\"");
        assert_eq!(rows[1]["branch"], 3);
    }

    #[test]
    fn write_all_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![("a.csv".to_string(), "x\n".to_string()), ("a.meta".to_string(), "k = 1\n".to_string())];
        let paths = write_all(dir.path(), &files).unwrap();
        assert_eq!(paths.len(), 2);
        let mut names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["a.csv", "a.meta"]);
        assert_eq!(fs::read_to_string(&paths[1]).unwrap(), "k = 1\n");
    }

    #[test]
    fn write_all_failure_removes_partial_files() {
        let dir = tempfile::tempdir().unwrap();
        // A directory where a file should go makes the second rename fail.
        fs::create_dir(dir.path().join("b.csv")).unwrap();
        fs::write(dir.path().join("b.csv").join("x"), "").unwrap();
        let files = vec![("a.csv".to_string(), "1\n".to_string()), ("b.csv".to_string(), "2\n".to_string())];
        assert!(write_all(dir.path(), &files).is_err());
        assert!(!dir.path().join("a.csv").exists());
        assert!(!dir.path().join(".a.csv.tmp").exists());
        assert!(!dir.path().join(".b.csv.tmp").exists());
    }
}
