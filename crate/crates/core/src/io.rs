//! Plain-text file formats: matrices, key=value metadata and CSV tables.
//!
//! Matrix files start with a `rows cols` line followed by one line per row of
//! space-separated values in `{:.17e}` form, which round-trips `f64` exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector4};

use crate::error::{Error, Result};
use crate::inverse::LmTrace;
use crate::solver::Trajectory;

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: '{s}' is not a number")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{what}: '{s}' is not a non-negative integer")))
}

pub fn matrix_to_string(m: &DMatrix<f64>) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.17e}", m[(r, c)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn matrix_from_str(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Parse(format!("matrix header '{header}' must be 'rows cols'")));
    }
    let (rows, cols) = (parse_usize(dims[0], "rows")?, parse_usize(dims[1], "cols")?);
    let mut data = Vec::with_capacity(rows * cols);
    for (r, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != cols {
            return Err(Error::Parse(format!("matrix row {r} has {} values, expected {cols}", vals.len())));
        }
        for v in vals {
            data.push(parse_f64(v, "matrix entry")?);
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Parse(format!("matrix has {} rows, header says {rows}", data.len() / cols.max(1))));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_string(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_str(&fs::read_to_string(path)?)
}

/// `key=value` lines; keys are written in sorted order.
pub fn write_meta(path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
    let mut out = String::new();
    for (k, v) in meta {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            return Err(Error::InvalidInput(format!("metadata entry '{k}' cannot be written")));
        }
        writeln!(out, "{k}={v}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut meta = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("metadata line '{line}' has no '='")))?;
        meta.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(meta)
}

pub fn meta_f64(meta: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    parse_f64(
        meta.get(key)
            .ok_or_else(|| Error::Parse(format!("metadata key '{key}' missing")))?,
        key,
    )
}

/// Comma-separated list of numbers, as stored in metadata values.
pub fn f64_list(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(",")
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| parse_f64(x, "list entry")).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(format!("CSV: {e}"))
}

fn write_csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header.split(',')).expect("in-memory CSV write");
    for r in rows {
        w.write_record(&r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV output is UTF-8")
}

/// Records of `text` after checking its header against `header`.
fn csv_rows(text: &str, header: &str) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found = r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(Error::Parse(format!("unexpected CSV header '{found}', expected '{header}'")));
    }
    r.records().map(|rec| rec.map_err(csv_error)).collect()
}

fn sci(x: f64) -> String {
    format!("{x:.17e}")
}

/// CSV with a free header and numeric cells.
pub fn numeric_table_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    write_csv(&header.join(","), rows.iter().map(|r| r.iter().map(|x| sci(*x)).collect()))
}

/// Header and rows of a numeric CSV table. Empty cells read as NaN.
pub fn parse_numeric_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map_err(csv_error)?
                .iter()
                .map(|c| if c.is_empty() { Ok(f64::NAN) } else { parse_f64(c, "table cell") })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub const TRAJECTORY_HEADER: &str = "t,p_v,p_p,p_d,q_p,V,newton_iters";

pub fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    write_csv(
        TRAJECTORY_HEADER,
        (0..traj.len()).map(|k| {
            let p = traj.pressures[k];
            vec![
                sci(traj.times[k]),
                sci(p[0]),
                sci(p[1]),
                sci(p[2]),
                sci(p[3]),
                sci(traj.volumes[k]),
                traj.newton_iters[k].to_string(),
            ]
        }),
    )
}

/// Scalar columns of a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub pressures: Vec<Vector4<f64>>,
    pub volumes: Vec<f64>,
    pub newton_iters: Vec<usize>,
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    let mut t = TrajectoryTable {
        times: Vec::new(),
        pressures: Vec::new(),
        volumes: Vec::new(),
        newton_iters: Vec::new(),
    };
    for row in csv_rows(text, TRAJECTORY_HEADER)? {
        let v: Vec<f64> = (0..6).map(|c| parse_f64(&row[c], "trajectory")).collect::<Result<_>>()?;
        t.times.push(v[0]);
        t.pressures.push(Vector4::new(v[1], v[2], v[3], v[4]));
        t.volumes.push(v[5]);
        t.newton_iters.push(parse_usize(&row[6], "newton_iters")?);
    }
    Ok(t)
}

/// Displacement history as a matrix with one column per stored time level.
pub fn displacement_matrix(traj: &Trajectory<f64>) -> DMatrix<f64> {
    DMatrix::from_columns(&traj.displacements)
}

/// Rebuilds a trajectory from its CSV and displacement matrix.
pub fn trajectory_from_parts(table: TrajectoryTable, displacements: &DMatrix<f64>) -> Result<Trajectory<f64>> {
    if displacements.ncols() != table.times.len() {
        return Err(Error::IncompatibleTrajectories(format!(
            "{} displacement columns for {} time levels",
            displacements.ncols(),
            table.times.len()
        )));
    }
    Ok(Trajectory {
        times: table.times,
        displacements: displacements.column_iter().map(|c| DVector::from(c.into_owned())).collect(),
        pressures: table.pressures,
        volumes: table.volumes,
        newton_iters: table.newton_iters,
        wall_time: 0.0,
        timing: Default::default(),
    })
}

pub const SWEEP_HEADER: &str = "mu,method,eps_inf_inf,EF,p_max,marked_disp";

/// One query of an interpolation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub method: String,
    pub eps_inf_inf: f64,
    pub ef: f64,
    pub p_max: f64,
    pub marked_disp: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    write_csv(
        SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                sci(r.mu),
                r.method.clone(),
                sci(r.eps_inf_inf),
                sci(r.ef),
                sci(r.p_max),
                sci(r.marked_disp),
            ]
        }),
    )
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    csv_rows(text, SWEEP_HEADER)?
        .into_iter()
        .map(|c| {
            Ok(SweepRow {
                mu: parse_f64(&c[0], "mu")?,
                method: c[1].to_string(),
                eps_inf_inf: parse_f64(&c[2], "eps_inf_inf")?,
                ef: parse_f64(&c[3], "EF")?,
                p_max: parse_f64(&c[4], "p_max")?,
                marked_disp: parse_f64(&c[5], "marked_disp")?,
            })
        })
        .collect()
}

pub fn lm_trace_header(n_p: usize) -> String {
    let mus: Vec<String> = (1..=n_p).map(|k| format!("mu_{k}")).collect();
    format!("iter,S_rel,grad_rel,lambda,{},t_fom_s,t_prom_total_s", mus.join(","))
}

/// One row per iterate. `grad_rel` and `lambda` are empty on the final row.
pub fn lm_trace_csv(trace: &LmTrace<f64>) -> String {
    let opt = |x: Option<f64>| x.map_or(String::new(), sci);
    write_csv(
        &lm_trace_header(trace.n_p()),
        trace.iterations.iter().enumerate().map(|(i, it)| {
            let mut row = vec![it.iter.to_string(), sci(trace.s_rel(i)), opt(trace.grad_rel(i)), opt(it.lambda)];
            row.extend(it.mu.iter().map(|m| sci(*m)));
            row.push(sci(it.t_fom.iter().sum()));
            row.push(sci(it.t_prom.iter().sum()));
            row
        }),
    )
}

/// Parsed `lm_trace.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct LmTraceRow {
    pub iter: usize,
    pub s_rel: f64,
    pub grad_rel: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Vec<f64>,
    pub t_fom_s: f64,
    pub t_prom_total_s: f64,
}

pub fn parse_lm_trace_csv(text: &str) -> Result<Vec<LmTraceRow>> {
    let header = text.lines().next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let n_p = header.split(',').count().checked_sub(6).filter(|n| *n > 0).ok_or_else(|| {
        Error::Parse(format!("'{header}' is not an LM trace header"))
    })?;
    let opt = |c: &str, what: &str| if c.is_empty() { Ok(None) } else { parse_f64(c, what).map(Some) };
    csv_rows(text, &lm_trace_header(n_p))?
        .into_iter()
        .map(|c| {
            Ok(LmTraceRow {
                iter: parse_usize(&c[0], "iter")?,
                s_rel: parse_f64(&c[1], "S_rel")?,
                grad_rel: opt(&c[2], "grad_rel")?,
                lambda: opt(&c[3], "lambda")?,
                mu: (4..4 + n_p).map(|k| parse_f64(&c[k], "mu")).collect::<Result<_>>()?,
                t_fom_s: parse_f64(&c[4 + n_p], "t_fom_s")?,
                t_prom_total_s: parse_f64(&c[5 + n_p], "t_prom_total_s")?,
            })
        })
        .collect()
}
