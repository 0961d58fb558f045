//! CSV and JSON writers for simulation logs.

use std::fs;
use std::io;
use std::path::Path;

use crate::runtime::SimLog;
use crate::sim::SimOutput;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const JUMPS_FILE: &str = "jumps.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn timeseries_header(n_edges: usize, n_agents: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "j".to_string()];
    h.extend((1..=n_edges).map(|k| format!("rbar_{k}")));
    h.extend((1..=n_edges).map(|k| format!("xi_{k}")));
    h.push("U_T".into());
    h.push("V_T".into());
    h.extend((1..=n_agents).map(|i| format!("ptilde_{i}")));
    h.push("e_norm".into());
    h
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Writes rows on every `stride`-th step of the `dt` grid, plus all rows at
/// jump instants and the final row.
pub fn write_timeseries<W: io::Write>(log: &SimLog, dt: f64, stride: usize, out: W) -> io::Result<()> {
    let first = &log.rows[0];
    let mut w = csv::Writer::from_writer(out);
    w.write_record(timeseries_header(first.rbar.len(), first.ptilde.len())).map_err(csv_err)?;
    let stride = stride.max(1) as i64;
    let last = log.rows.len() - 1;
    for (idx, r) in log.rows.iter().enumerate() {
        let step = (r.t / dt).round() as i64;
        let at_jump = log.jumps.iter().any(|e| e.t == r.t);
        if step % stride != 0 && !at_jump && idx != last {
            continue;
        }
        let mut rec = vec![format!("{}", r.t), r.j.to_string()];
        rec.extend(r.rbar.iter().map(|v| format!("{v:e}")));
        rec.extend(r.xi.iter().map(|v| format!("{v:e}")));
        rec.push(format!("{:e}", r.u_total));
        rec.push(format!("{:e}", r.v_total));
        rec.extend(r.ptilde_norms().iter().map(|v| format!("{v:e}")));
        rec.push(format!("{:e}", r.e_norm()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
}

/// One line per jump event; `edges` lists the reset edges 1-based, `;`-separated.
pub fn write_jumps<W: io::Write>(log: &SimLog, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "j", "edges", "UT_before", "UT_after"]).map_err(csv_err)?;
    for e in &log.jumps {
        let edges: Vec<String> = e.components.iter().map(|k| (k + 1).to_string()).collect();
        w.write_record([format!("{}", e.t), e.j.to_string(), edges.join(";"), format!("{:e}", e.u_before), format!("{:e}", e.u_after)])
            .map_err(csv_err)?;
    }
    w.flush()
}

/// Writes `timeseries.csv`, `jumps.csv` and `summary.json` into `dir`.
pub fn write_all(out: &SimOutput, dir: &Path, stride: usize) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_timeseries(&out.log, out.summary.dt, stride, io::BufWriter::new(fs::File::create(dir.join(TIMESERIES_FILE))?))?;
    write_jumps(&out.log, io::BufWriter::new(fs::File::create(dir.join(JUMPS_FILE))?))?;
    let json = serde_json::to_string_pretty(&out.summary).map_err(io::Error::other)?;
    fs::write(dir.join(SUMMARY_FILE), json + "\n")
}
