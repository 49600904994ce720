//! Diagnostics CSV: one header line, then one row per record in
//! [`RECORD_COLUMNS`] order, every value printed with 17 significant digits.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use crate::diagnostics::{DiagnosticsRecord, RECORD_COLUMNS};

pub fn header() -> String {
    RECORD_COLUMNS.join(",")
}

pub fn format_row(record: &DiagnosticsRecord) -> String {
    record.values().iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

pub fn parse_row(line: &str) -> Result<DiagnosticsRecord, String> {
    let values: Vec<f64> = line
        .trim()
        .split(',')
        .map(|s| s.parse::<f64>().map_err(|_| format!("'{s}' is not a number")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 12] = values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {} columns, found {}", RECORD_COLUMNS.len(), v.len()))?;
    Ok(DiagnosticsRecord::from_values(arr))
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn append_diagnostics(record: &DiagnosticsRecord, path: &Path) -> io::Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut text = String::new();
    if fresh {
        text.push_str(&header());
        text.push('\n');
    }
    text.push_str(&format_row(record));
    text.push('\n');
    f.write_all(text.as_bytes())
}

pub fn read_diagnostics(path: &Path) -> io::Result<Vec<DiagnosticsRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header() => {}
        _ => return Err(io::Error::new(io::ErrorKind::InvalidData, "missing or unexpected header")),
    }
    lines
        .map(|l| parse_row(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(seed: f64) -> DiagnosticsRecord {
        DiagnosticsRecord::from_values(std::array::from_fn(|i| seed / (i as f64 + 3.0) * 10f64.powi(i as i32 - 6)))
    }

    #[test]
    fn header_written_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        append_diagnostics(&record(1.0), &path).unwrap();
        append_diagnostics(&record(2.0), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], header());
        assert!(lines.iter().all(|l| l.split(',').count() == 12));
        assert_eq!(read_diagnostics(&path).unwrap(), vec![record(1.0), record(2.0)]);
    }

    #[test]
    fn non_finite_values_survive() {
        let mut r = record(1.0);
        r.l3_uloc_v = f64::INFINITY;
        r.local_energy_margin = f64::NEG_INFINITY;
        assert_eq!(parse_row(&format_row(&r)).unwrap(), r);
        assert!(parse_row("1,2,3").is_err());
    }

    proptest! {
        #[test]
        fn rows_round_trip_exactly(values in prop::array::uniform12(any::<f64>().prop_filter("finite", |x| x.is_finite()))) {
            let r = DiagnosticsRecord::from_values(values);
            let back = parse_row(&format_row(&r)).unwrap();
            prop_assert_eq!(back.values().map(f64::to_bits), r.values().map(f64::to_bits));
        }
    }
}
