//! Plain-text table output shared by the report exporters.
//!
//! Numbers are written with 17 significant digits and a '.' decimal point so
//! every value round-trips exactly.

use std::fmt::Write;

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// Minimal CSV builder: a header row then rows of already-formatted cells.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    out: String,
    width: usize,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut out = String::new();
        let cols: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
        writeln!(out, "{}", cols.join(",")).unwrap();
        Self { out, width: cols.len() }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.width, "row width does not match header");
        writeln!(self.out, "{}", cells.join(",")).unwrap();
    }

    pub fn row_f64(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.row(&cells);
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Parse a CSV produced by [`CsvTable`] into its header and numeric rows.
pub fn parse_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or("empty CSV")?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| format!("line {}: {e}", i + 2))?;
        if row.len() != header.len() {
            return Err(format!("line {}: expected {} columns, got {}", i + 2, header.len(), row.len()));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn table_round_trip() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row_f64(&[1.0, 0.25]);
        let (h, rows) = parse_numeric_csv(&t.finish()).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, vec![vec![1.0, 0.25]]);
        assert!(parse_numeric_csv("a,b\n1,2,3\n").is_err());
    }
}
