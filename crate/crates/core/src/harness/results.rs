//! Result rows and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["dr_f", "d", "cr", "timeslot", "codec", "nmse_db", "wall_seconds"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dr_f: f64,
    pub d: usize,
    pub cr: f64,
    pub timeslot: usize,
    pub codec: String,
    pub nmse_db: f64,
    pub wall_seconds: f64,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format { offset: 0, msg: format!("{other:?}") },
    }
}

pub fn write_csv(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        if !r.nmse_db.is_finite() {
            return Err(Error::Degenerate(format!("non-finite NMSE in row for {}", r.codec)));
        }
        w.write_record([
            format!("{:.6}", r.dr_f),
            r.d.to_string(),
            format!("{:.6}", r.cr),
            r.timeslot.to_string(),
            r.codec.clone(),
            format!("{:.6}", r.nmse_db),
            format!("{:.6}", r.wall_seconds),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Format {
            offset: 0,
            msg: format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(codec: &str, nmse: f64) -> MetricRow {
        MetricRow { dr_f: 0.125, d: 4, cr: 0.25, timeslot: 1, codec: codec.into(), nmse_db: nmse, wall_seconds: 0.0 }
    }

    #[test]
    fn six_decimal_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&[row("ista", -12.3456789)], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "dr_f,d,cr,timeslot,codec,nmse_db,wall_seconds\n0.125000,4,0.250000,1,ista,-12.345679,0.000000\n"
        );
        let back = read_csv(&p).unwrap();
        assert_eq!(back[0].nmse_db, -12.345679);
        assert_eq!(back[0].codec, "ista");
    }

    #[test]
    fn non_finite_rows_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_csv(&[row("ae", f64::NAN)], dir.path().join("r.csv")).is_err());
    }

    #[test]
    fn foreign_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_csv(&p), Err(Error::Format { .. })));
    }
}
