//! Per-interval label files written next to the relative-pose records.
//!
//! * Covariance rows: start and end seconds then the 81 entries of the 9×9
//!   preintegration covariance, row-major.
//! * Bias timeline rows: start and end seconds of the window, a
//!   convergence flag, then `ba` and `bg`.

use std::io::Write;
use std::path::Path;

use nalgebra::{SMatrix, Vector3};

use crate::error::{Error, Result};
use crate::imu::{ImuStatus, Timestamp};
use crate::io::trajectory::{content_lines, write_row};
use crate::io::{format_seconds, parse_floats, parse_seconds, read_text, write_with};

pub type Matrix9 = SMatrix<f64, 9, 9>;

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceRecord {
    pub t0: Timestamp,
    pub t1: Timestamp,
    pub covariance: Matrix9,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasRecord {
    pub t0: Timestamp,
    pub t1: Timestamp,
    /// Whether this window's solve was accepted; rejected windows carry the
    /// prior forward.
    pub accepted: bool,
    pub status: ImuStatus,
}

fn times(tok: &[&str], path: &Path, n: usize) -> Result<(Timestamp, Timestamp)> {
    let ts = |s: &str| parse_seconds(s).ok_or_else(|| Error::parse(path, n, format!("bad timestamp {s:?}")));
    let (t0, t1) = (ts(tok[0])?, ts(tok[1])?);
    if t1 < t0 {
        return Err(Error::parse(path, n, "interval ends before it starts"));
    }
    Ok((t0, t1))
}

pub fn write_covariances(path: &Path, records: &[CovarianceRecord]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "# t0 t1 then 81 covariance entries, row-major (rotation, velocity, position)")?;
        for r in records {
            write!(w, "{} {} ", format_seconds(r.t0), format_seconds(r.t1))?;
            let rows: Vec<f64> = r.covariance.transpose().iter().copied().collect();
            write_row(w, &rows)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn parse_covariances(text: &str, path: &Path) -> Result<Vec<CovarianceRecord>> {
    content_lines(text)
        .map(|(n, l)| {
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 83 {
                return Err(Error::parse(path, n, format!("expected 83 fields, found {}", tok.len())));
            }
            let (t0, t1) = times(&tok, path, n)?;
            let v = parse_floats(&tok[2..].join(" "), path, n)?;
            Ok(CovarianceRecord {
                t0,
                t1,
                covariance: Matrix9::from_row_slice(&v),
            })
        })
        .collect()
}

pub fn read_covariances(path: &Path) -> Result<Vec<CovarianceRecord>> {
    parse_covariances(&read_text(path)?, path)
}

pub fn write_bias_timeline(path: &Path, records: &[BiasRecord]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "# t0 t1 accepted ba_x ba_y ba_z bg_x bg_y bg_z")?;
        for r in records {
            write!(w, "{} {} {} ", format_seconds(r.t0), format_seconds(r.t1), u8::from(r.accepted))?;
            write_row(w, &[r.status.ba.x, r.status.ba.y, r.status.ba.z, r.status.bg.x, r.status.bg.y, r.status.bg.z])?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn parse_bias_timeline(text: &str, path: &Path) -> Result<Vec<BiasRecord>> {
    content_lines(text)
        .map(|(n, l)| {
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 9 {
                return Err(Error::parse(path, n, format!("expected 9 fields, found {}", tok.len())));
            }
            let (t0, t1) = times(&tok, path, n)?;
            let accepted = match tok[2] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(path, n, format!("bad flag {other:?}"))),
            };
            let v = parse_floats(&tok[3..].join(" "), path, n)?;
            Ok(BiasRecord {
                t0,
                t1,
                accepted,
                status: ImuStatus::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])),
            })
        })
        .collect()
}

pub fn read_bias_timeline(path: &Path) -> Result<Vec<BiasRecord>> {
    parse_bias_timeline(&read_text(path)?, path)
}

/// Bias in force at `t`: the last record whose window starts at or before
/// `t`, or zero before the first one.
pub fn bias_at(records: &[BiasRecord], t: Timestamp) -> ImuStatus {
    let k = records.partition_point(|r| r.t0 <= t);
    if k == 0 {
        ImuStatus::zero()
    } else {
        records[k - 1].status
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_round_trip_is_exact() {
        let cov = Matrix9::from_fn(|i, j| (i as f64 + 1.0) / (j as f64 + 3.0) * 1e-7 + 0.1);
        let recs = vec![CovarianceRecord { t0: Timestamp(0), t1: Timestamp(100_000_000), covariance: cov }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cov.txt");
        write_covariances(&p, &recs).unwrap();
        assert_eq!(read_covariances(&p).unwrap(), recs);
    }

    #[test]
    fn bias_timeline_round_trip_and_lookup() {
        let a = ImuStatus::new(Vector3::new(0.1, -0.2, 1.0 / 3.0), Vector3::new(0.02, 0.0, -1e-9));
        let b = ImuStatus::new(Vector3::zeros(), Vector3::new(0.01, 0.0, 0.0));
        let recs = vec![
            BiasRecord { t0: Timestamp(0), t1: Timestamp(1_000_000_000), accepted: true, status: a },
            BiasRecord { t0: Timestamp(1_000_000_000), t1: Timestamp(2_000_000_000), accepted: false, status: b },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bias.txt");
        write_bias_timeline(&p, &recs).unwrap();
        assert_eq!(read_bias_timeline(&p).unwrap(), recs);
        assert_eq!(bias_at(&recs, Timestamp(-1)), ImuStatus::zero());
        assert_eq!(bias_at(&recs, Timestamp(999_999_999)), a);
        assert_eq!(bias_at(&recs, Timestamp(1_000_000_000)), b);
    }

    #[test]
    fn short_rows_are_parse_errors() {
        let e = parse_bias_timeline("0 1 1 0 0 0\n", Path::new("b.txt")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
        assert!(parse_covariances("0 1 2\n", Path::new("c.txt")).is_err());
        assert!(parse_bias_timeline("1 0 1 0 0 0 0 0 0\n", Path::new("b.txt")).is_err());
    }
}
