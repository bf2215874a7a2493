//! Grid-function files and experiment reports.
//!
//! The binary grid format is little-endian: the magic `GFN1`, `u32` dim,
//! `u32` cells per axis, `dim` origins, `dim` extents, then the values in
//! row-major order, all `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::ExperimentReport;
use crate::grid::{GridFn, GridSpec};

const MAGIC: &[u8; 4] = b"GFN1";

pub fn write_gridfn<W: Write>(mut w: W, x: &GridFn) -> Result<()> {
    let spec = x.spec();
    let dim = u32::try_from(spec.dim()).map_err(|_| Error::Format("dimension too large".into()))?;
    let cells = u32::try_from(spec.cells()).map_err(|_| Error::Format("cell count too large".into()))?;
    let mut buf = Vec::with_capacity(12 + 8 * (2 * spec.dim() + spec.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&cells.to_le_bytes());
    for v in spec.origin().iter().chain(spec.extent()).chain(x.values()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_gridfn<R: Read>(mut r: R) -> Result<GridFn> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a GFN1 grid file".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (dim, cells) = (word(4), word(8));
    let len = (1..=dim)
        .try_fold(1usize, |acc, _| acc.checked_mul(cells))
        .and_then(|l| l.checked_add(2 * dim))
        .ok_or_else(|| Error::Format("grid header overflows".into()))?;
    let body = &bytes[12..];
    if body.len() != 8 * len {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", 8 * len, body.len())));
    }
    let floats: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let spec = GridSpec::new(dim, cells, floats[..dim].to_vec(), floats[dim..2 * dim].to_vec())
        .map_err(|e| Error::Format(format!("bad grid header: {e}")))?;
    GridFn::from_values(spec, floats[2 * dim..].to_vec())
}

pub fn save_gridfn(path: &Path, x: &GridFn) -> Result<()> {
    write_gridfn(std::io::BufWriter::new(std::fs::File::create(path)?), x)
}

pub fn load_gridfn(path: &Path) -> Result<GridFn> {
    read_gridfn(std::fs::File::open(path)?)
}

/// One row per cell: multi-index, cell midpoint, value.
pub fn write_gridfn_csv<W: Write>(w: W, x: &GridFn) -> Result<()> {
    let spec = x.spec();
    let n = spec.dim();
    let mut out = csv::Writer::from_writer(w);
    let header: Vec<String> =
        (1..=n).map(|a| format!("i{a}")).chain((1..=n).map(|a| format!("t{a}"))).chain(["value".into()]).collect();
    out.write_record(&header).map_err(csv_err)?;
    for (flat, v) in x.values().iter().enumerate() {
        let idx = spec.unravel(flat);
        let t = spec.midpoint(&idx);
        let row: Vec<String> = idx
            .iter()
            .map(|i| i.to_string())
            .chain(t.iter().map(|c| format!("{c:e}")))
            .chain([format!("{v:e}")])
            .collect();
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))
}

pub fn parse_report_json(s: &str) -> Result<ExperimentReport> {
    serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
}

fn opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{:.6}", x * scale))
}

/// Every `(level, run)` cell of a report.
pub fn runs_csv(report: &ExperimentReport) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["level_pct", "run", "seed", "rel_error_pct", "alpha", "iterations", "solves", "failure"])
        .map_err(csv_err)?;
    for r in &report.runs {
        out.write_record([
            format!("{:.6}", 100.0 * r.level),
            r.run.to_string(),
            r.seed.to_string(),
            opt(r.rel_error, 100.0),
            r.alpha.map_or_else(|| "NA".into(), |a| format!("{a:.6e}")),
            r.iterations.to_string(),
            r.solves.to_string(),
            r.failure.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish(out)
}

fn finish(out: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = out.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Mean relative errors in percent, one column per report, with a final
/// `kappa` row.
pub fn table_csv(reports: &[&ExperimentReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::Parameter("no reports to tabulate".into()));
    };
    let levels: Vec<f64> = first.levels.iter().map(|l| l.level).collect();
    if reports.iter().any(|r| r.levels.iter().map(|l| l.level).ne(levels.iter().copied())) {
        return Err(Error::Structure("reports use different noise levels".into()));
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["level_pct".to_string()];
    for r in reports {
        header.push(format!("{}_n{}_pct", r.case, r.n));
    }
    out.write_record(&header).map_err(csv_err)?;
    for (i, level) in levels.iter().enumerate() {
        let mut row = vec![format!("{:.6}", 100.0 * level)];
        for r in reports {
            row.push(opt(r.levels[i].mean_rel_error, 100.0));
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    let mut row = vec!["kappa".to_string()];
    for r in reports {
        row.push(opt(r.kappa, 1.0));
    }
    out.write_record(&row).map_err(csv_err)?;
    finish(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantoms::{sample_phantom, PhantomId};

    #[test]
    fn binary_roundtrip_is_exact() {
        for id in [PhantomId::X2, PhantomId::Product2D, PhantomId::Product3D] {
            let x = sample_phantom(id, 7).unwrap();
            let mut buf = Vec::new();
            write_gridfn(&mut buf, &x).unwrap();
            assert_eq!(buf.len(), 12 + 8 * (2 * id.dim() + x.spec().len()));
            assert_eq!(read_gridfn(buf.as_slice()).unwrap(), x);
        }
    }

    #[test]
    fn binary_rejects_corrupt_input() {
        let x = sample_phantom(PhantomId::X1, 4).unwrap();
        let mut buf = Vec::new();
        write_gridfn(&mut buf, &x).unwrap();
        assert!(matches!(read_gridfn(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_gridfn(bad.as_slice()), Err(Error::Format(_))));
        let mut nan = buf.clone();
        let at = nan.len() - 8;
        nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(read_gridfn(nan.as_slice()).is_err());
    }

    #[test]
    fn csv_layout() {
        let x = sample_phantom(PhantomId::Product2D, 2).unwrap();
        let mut buf = Vec::new();
        write_gridfn_csv(&mut buf, &x).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i1,i2,t1,t2,value");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("0,1,2.5e-1,7.5e-1,"));
    }
}
