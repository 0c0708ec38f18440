//! CSV and JSON output for the experiment reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

use super::{BoundaryReport, ClusterCheckReport, DecayReport, DerivativeSweep, DualitySweep, GexitReport};

/// Reports with a flat tabular form.
pub trait CsvRows {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()>;
}

/// Writes the tabular form of `report` to `path`.
pub fn write_csv<R: CsvRows>(path: &Path, report: &R) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    report.write_rows(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn opt_err(e: Option<crate::stats::Estimate>) -> (Option<f64>, Option<f64>) {
    (e.map(|e| e.value), e.map(|e| e.stderr))
}

impl CsvRows for DecayReport {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["i", "j", "dist", "c_p", "stderr", "n_samples"])?;
        for p in &self.pairs {
            w.serialize((p.i, p.j, p.dist, p.c_p, p.stderr, p.n_samples))?;
        }
        Ok(())
    }
}

impl CsvRows for GexitReport {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record(["eps2", "map_gexit", "map_err", "de_gexit", "de_err", "fd_value", "fd_err"])?;
        }
        Ok(())
    }
}

impl CsvRows for BoundaryReport {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record([
            "depth",
            "vars",
            "boundary_size",
            "covers_graph",
            "infeasible",
            "free",
            "free_err",
            "plus",
            "plus_err",
            "full_minus_plus",
            "full_minus_plus_err",
            "free_minus_plus",
            "free_minus_plus_err",
        ])?;
        for r in &self.rows {
            let (f, fe) = opt_err(r.free);
            let (p, pe) = opt_err(r.plus);
            let (a, ae) = opt_err(r.full_minus_plus);
            let (b, be) = opt_err(r.free_minus_plus);
            w.serialize((
                r.depth,
                r.vars,
                r.boundary_size,
                r.covers_graph,
                r.infeasible,
                f,
                fe,
                p,
                pe,
                a,
                ae,
                b,
                be,
            ))?;
        }
        Ok(())
    }
}

impl CsvRows for DualitySweep {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for r in &self.rows {
            w.serialize(r)?;
        }
        Ok(())
    }
}

impl CsvRows for DerivativeSweep {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for r in &self.rows {
            w.serialize(r)?;
        }
        Ok(())
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// One line per (pair, cluster, compatible set).
impl CsvRows for ClusterCheckReport {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record([
            "i",
            "j",
            "cluster",
            "gamma",
            "literal",
            "linked",
            "literal_kernel",
            "linked_kernel",
            "ratio",
            "literal_max_residual",
            "linked_max_residual",
        ])?;
        for p in &self.pairs {
            for c in &p.clusters {
                for g in &c.gammas {
                    w.serialize((
                        p.i,
                        p.j,
                        join(&c.checks),
                        join(&g.gamma),
                        g.literal,
                        g.linked,
                        c.literal_kernel,
                        c.linked_kernel,
                        c.ratio,
                        p.literal_max_residual,
                        p.linked_max_residual,
                    ))?;
                }
            }
        }
        Ok(())
    }
}
