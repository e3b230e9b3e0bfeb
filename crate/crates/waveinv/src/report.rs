//! Plain-text artifact writers: observation traces and iteration histories
//! as CSV, the per-level run summary as CSV, and a manifest listing every
//! output file with its content hash.
//!
//! All writers format numbers with Rust's shortest-roundtrip float display,
//! so identical inputs produce byte-identical files. The summary
//! deliberately carries no wall-clock columns for the same reason (timings
//! live in the history file).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::adaptivity::AdaptiveRun;
use crate::error::Result;
use crate::optimizer::CgRecord;
use crate::wave::BoundaryRecord;

/// One observation record as `t,vertex,e1,e2,e3` rows, time-major.
pub fn write_observations_csv(path: &Path, record: &BoundaryRecord) -> Result<()> {
    record.check_shape()?;
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "t,vertex,e1,e2,e3")?;
    for (m, row) in record.values.iter().enumerate() {
        let t = record.grid.time(m);
        for (k, v) in row.iter().enumerate() {
            writeln!(w, "{t},{},{},{},{}", record.vertices[k], v[0], v[1], v[2])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Concatenated CG histories of all levels.
pub fn write_history_csv(path: &Path, histories: &[(usize, &[CgRecord])]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "level,iter,f,misfit,regularization,grad_norm,gamma,beta,halvings,wall_secs")?;
    for (level, records) in histories {
        for r in *records {
            writeln!(
                w,
                "{level},{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.f,
                r.misfit,
                r.regularization,
                r.grad_norm,
                r.gamma,
                r.beta,
                r.halvings,
                r.wall_secs
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-level summary table. `errors` supplies the relative reconstruction
/// error per level when the true coefficient is known; pass `None` to leave
/// the column empty. No timing columns: reruns of the same experiment must
/// reproduce this file byte for byte.
pub fn write_summary_csv(path: &Path, run: &AdaptiveRun, errors: Option<&[f64]>) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "level,tets,vertices,steps,iterations,cg_stop,eps_tilde,eps_change,grad_norm,marked,error_pct,k_rec,stop_reason"
    )?;
    for (k, r) in run.records.iter().enumerate() {
        let error = match errors {
            Some(e) => format!("{}", 100.0 * e[k]),
            None => String::new(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.level,
            r.n_tets,
            r.n_vertices,
            r.n_steps,
            r.cg_iterations,
            r.cg_stop.as_str(),
            r.eps_tilde,
            r.eps_change,
            r.grad_norm,
            r.marked,
            error,
            run.k_rec,
            run.stop_reason.as_str()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

/// Key-value manifest followed by one `file = <sha256> <relative path>`
/// line per artifact, sorted by path.
pub fn write_manifest(
    path: &Path,
    meta: &[(String, String)],
    files: &[(String, String)],
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for (key, value) in meta {
        writeln!(w, "{key} = {value}")?;
    }
    let mut sorted: Vec<&(String, String)> = files.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for (rel, hash) in sorted {
        writeln!(w, "file = {hash}  {rel}")?;
    }
    w.flush()?;
    Ok(())
}
