//! CSV serialization. Numbers are written with 17 significant digits, comma separated,
//! LF terminated, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::critical::{RateTable, ScoredEntry};
use crate::error::Error;
use crate::field::ParameterField;
use crate::forward::ForwardSolution;
use crate::grid::TimeGrid;
use crate::observations::{CriticalKind, CriticalPoint, CriticalPointSet, PopulationMeasurement};
use crate::tikhonov::IrgnResult;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Model(#[from] Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(out: &mut String, cells: &[f64]) {
    for (i, c) in cells.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*c));
    }
    out.push('\n');
}

/// Columns `t, rho, R`.
pub fn write_forward<W: Write>(mut w: W, sol: &ForwardSolution) -> IoResult<()> {
    let mut s = String::from("t,rho,R\n");
    let time = sol.time_grid();
    for k in 0..time.len() {
        row(&mut s, &[time.node(k), sol.rho()[k], sol.cumulative()[k]]);
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Header `t,<x_0>,...,<x_{N-1}>`, then one row per requested time index.
pub fn write_density<W: Write>(mut w: W, sol: &ForwardSolution, steps: &[usize]) -> IoResult<()> {
    let mut s = String::from("t");
    for x in sol.grid().nodes() {
        s.push(',');
        s.push_str(&fmt_f64(x));
    }
    s.push('\n');
    for &k in steps {
        let mut cells = vec![sol.time_grid().node(k)];
        cells.extend_from_slice(sol.density(k));
        row(&mut s, &cells);
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Columns `t, rho_delta`.
pub fn write_measurement<W: Write>(mut w: W, m: &PopulationMeasurement) -> IoResult<()> {
    let mut s = String::from("t,rho_delta\n");
    for (k, v) in m.values.iter().enumerate() {
        row(&mut s, &[m.time.node(k), *v]);
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn parse_f64(cell: &str, line: usize) -> IoResult<f64> {
    cell.trim().parse().map_err(|_| IoError::Parse {
        line,
        reason: format!("not a number: {cell:?}"),
    })
}

fn data_lines<R: BufRead>(r: R, headers: &[&str]) -> IoResult<Vec<(usize, Vec<String>)>> {
    let mut lines = r.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    let Some(header) = headers.iter().find(|h| **h == first.trim_end()) else {
        return Err(IoError::Parse {
            line: 1,
            reason: format!("expected header {:?}, got {first:?}", headers.join(" or ")),
        });
    };
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(str::to_owned).collect();
        if cells.len() != width {
            return Err(IoError::Parse {
                line: i + 2,
                reason: format!("expected {width} columns, got {}", cells.len()),
            });
        }
        out.push((i + 2, cells));
    }
    Ok(out)
}

/// Reads a file written by [`write_measurement`] or [`write_forward`] (the `rho` column).
/// The time grid is recovered from the `t` column and must be uniform.
pub fn read_measurement<R: BufRead>(r: R, delta: f64, seed: u64) -> IoResult<PopulationMeasurement> {
    let rows = data_lines(r, &["t,rho_delta", "t,rho,R"])?;
    if rows.len() < 2 {
        return Err(IoError::Parse {
            line: rows.len() + 1,
            reason: "need at least two time nodes".into(),
        });
    }
    let mut ts = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (line, cells) in &rows {
        ts.push(parse_f64(&cells[0], *line)?);
        values.push(parse_f64(&cells[1], *line)?);
    }
    let time = TimeGrid::new(*ts.last().unwrap(), ts.len() - 1)?;
    for (k, t) in ts.iter().enumerate() {
        if time.node(k) != *t {
            return Err(IoError::Parse {
                line: rows[k].0,
                reason: format!("time {t} is not node {k} of a uniform grid"),
            });
        }
    }
    Ok(PopulationMeasurement::new(time, values, delta, seed)?)
}

/// Columns `t, x_bar, kind`.
pub fn write_critical_points<W: Write>(mut w: W, cps: &CriticalPointSet) -> IoResult<()> {
    let mut s = String::from("t,x_bar,kind\n");
    for e in cps.iter() {
        let _ = writeln!(s, "{},{},{}", fmt_f64(e.t), fmt_f64(e.x_bar), e.kind.as_str());
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_critical_points<R: BufRead>(r: R) -> IoResult<CriticalPointSet> {
    let rows = data_lines(r, &["t,x_bar,kind"])?;
    let entries = rows
        .iter()
        .map(|(line, cells)| {
            Ok(CriticalPoint {
                t: parse_f64(&cells[0], *line)?,
                x_bar: parse_f64(&cells[1], *line)?,
                kind: CriticalKind::parse(cells[2].trim()).map_err(|e| IoError::Parse {
                    line: *line,
                    reason: e.to_string(),
                })?,
            })
        })
        .collect::<IoResult<Vec<_>>>()?;
    Ok(CriticalPointSet::new(entries))
}

/// Columns `iteration, residual, error`; `error` is empty without a known truth.
pub fn write_irgn_history<W: Write>(mut w: W, res: &IrgnResult) -> IoResult<()> {
    let mut s = String::from("iteration,residual,error\n");
    for (k, r) in res.residual_history.iter().enumerate() {
        let err = res.error_history.as_ref().map(|e| fmt_f64(e[k])).unwrap_or_default();
        let _ = writeln!(s, "{k},{},{err}", fmt_f64(*r));
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Columns `x, p_rec` and `p_true` when given.
pub fn write_reconstruction<W: Write>(
    mut w: W,
    p_rec: &ParameterField,
    p_true: Option<&ParameterField>,
) -> IoResult<()> {
    let mut s = String::from(if p_true.is_some() {
        "x,p_rec,p_true\n"
    } else {
        "x,p_rec\n"
    });
    for (i, x) in p_rec.grid().nodes().into_iter().enumerate() {
        let mut cells = vec![x, p_rec.values()[i]];
        if let Some(t) = p_true {
            cells.push(t.values()[i]);
        }
        row(&mut s, &cells);
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub h1_error: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Columns `delta, h1_error, residual, iterations`, then a `fitted_slope` footer row
/// (empty value when the fit is undefined).
pub fn write_sweep_report<W: Write>(mut w: W, rows: &[SweepRow], slope: Option<f64>) -> IoResult<()> {
    let mut s = String::from("delta,h1_error,residual,iterations\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(r.delta),
            fmt_f64(r.h1_error),
            fmt_f64(r.residual),
            r.iterations
        );
    }
    footer(&mut s, slope);
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn footer(s: &mut String, slope: Option<f64>) {
    let _ = writeln!(s, "fitted_slope,{}", slope.map(fmt_f64).unwrap_or_default());
}

/// Columns `x_bar, value, t_used, truth, abs_error`.
pub fn write_pointwise<W: Write>(mut w: W, rows: &[ScoredEntry]) -> IoResult<()> {
    let mut s = String::from("x_bar,value,t_used,truth,abs_error\n");
    for r in rows {
        let e = r.entry;
        row(&mut s, &[e.x_bar, e.value, e.t_used, r.truth, r.abs_error()]);
    }
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Columns `delta, sup_error`, then a `fitted_slope` footer row.
pub fn write_rate_table<W: Write>(mut w: W, table: &RateTable) -> IoResult<()> {
    let mut s = String::from("delta,sup_error\n");
    for r in &table.rows {
        row(&mut s, &[r.delta, r.sup_error]);
    }
    footer(&mut s, table.slope);
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// Reads the `fitted_slope` footer of a report.
pub fn read_footer_slope<R: BufRead>(r: R) -> IoResult<Option<f64>> {
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if let Some(v) = line.strip_prefix("fitted_slope,") {
            return if v.is_empty() {
                Ok(None)
            } else {
                parse_f64(v, i + 1).map(Some)
            };
        }
    }
    Err(IoError::Parse {
        line: 0,
        reason: "no fitted_slope row".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0 / 3.0, -2.5e-300, 4.0 / std::f64::consts::PI, f64::MAX] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn measurement_round_trip() {
        let time = TimeGrid::new(1.0, 7).unwrap();
        let values: Vec<f64> = (0..8).map(|k| (k as f64 * 0.37).sin() / 3.0).collect();
        let m = PopulationMeasurement::new(time, values, 0.01, 9).unwrap();
        let mut buf = Vec::new();
        write_measurement(&mut buf, &m).unwrap();
        let back = read_measurement(buf.as_slice(), 0.01, 9).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_measurement(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn critical_round_trip() {
        let cps = CriticalPointSet::new(vec![
            CriticalPoint {
                t: 0.1,
                x_bar: 1.0 / 3.0,
                kind: CriticalKind::Maximum,
            },
            CriticalPoint {
                t: 0.2,
                x_bar: -0.7,
                kind: CriticalKind::Flat,
            },
        ]);
        let mut buf = Vec::new();
        write_critical_points(&mut buf, &cps).unwrap();
        assert_eq!(read_critical_points(buf.as_slice()).unwrap(), cps);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_measurement("t,rho\n0,1\n".as_bytes(), 0.0, 0).is_err());
        assert!(read_measurement("t,rho,R\n0,1\n1,1\n".as_bytes(), 0.0, 0).is_err());
        assert!(read_measurement("t,rho_delta\n0,1\n1,x\n".as_bytes(), 0.0, 0).is_err());
        assert!(read_measurement("t,rho_delta\n0,1\n0.3,1\n1,1\n".as_bytes(), 0.0, 0).is_err());
        assert!(read_critical_points("t,x_bar,kind\n0.1,0.2,peak\n".as_bytes()).is_err());
    }

    #[test]
    fn footer_slope() {
        let mut buf = Vec::new();
        let rows = [SweepRow {
            delta: 0.1,
            h1_error: 0.2,
            residual: 0.05,
            iterations: 3,
        }];
        write_sweep_report(&mut buf, &rows, Some(0.5)).unwrap();
        assert_eq!(read_footer_slope(buf.as_slice()).unwrap(), Some(0.5));
    }
}
