//! CSV and JSON writers for traces.
//!
//! Column sets are fixed per trace type:
//! discrete `t,v_pre,s,v_post,loss,value,balance`; continuous `t,v,spend`;
//! binary `t,x,p,samples,guess,correct` where `p` is the posterior after the
//! round's samples and booleans are written as `0`/`1`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::binary::BinaryTrace;
use crate::continuous::ContinuousTrace;
use crate::error::Result;
use crate::model::VarianceTrace;

pub const DISCRETE_COLUMNS: [&str; 7] = ["t", "v_pre", "s", "v_post", "loss", "value", "balance"];
pub const CONTINUOUS_COLUMNS: [&str; 3] = ["t", "v", "spend"];
pub const BINARY_COLUMNS: [&str; 6] = ["t", "x", "p", "samples", "guess", "correct"];

fn write_rows<W: Write, R: Serialize>(out: W, rows: impl Iterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_discrete_csv<W: Write>(trace: &VarianceTrace, out: W) -> Result<()> {
    // RoundRecord's field order is the column order
    write_rows(out, trace.records.iter())
}

#[derive(Serialize)]
struct ContinuousRow {
    t: f64,
    v: f64,
    spend: f64,
}

pub fn write_continuous_csv<W: Write>(trace: &ContinuousTrace, out: W) -> Result<()> {
    write_rows(out, trace.points.iter().map(|p| ContinuousRow { t: p.t, v: p.v, spend: p.spend }))
}

#[derive(Serialize)]
struct BinaryRow {
    t: usize,
    x: u8,
    p: f64,
    samples: usize,
    guess: u8,
    correct: u8,
}

pub fn write_binary_csv<W: Write>(trace: &BinaryTrace, out: W) -> Result<()> {
    write_rows(
        out,
        trace.records.iter().map(|r| BinaryRow {
            t: r.t,
            x: r.x as u8,
            p: r.p_after,
            samples: r.samples,
            guess: r.guess as u8,
            correct: r.correct as u8,
        }),
    )
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn to_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    to_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::policy::{simulate, SamplingSchedule};

    #[test]
    fn discrete_header() {
        let p = ModelParams::new(1.0, 1.0, 0.75, 1.0).unwrap();
        let tr = simulate(&SamplingSchedule::new(vec![1.0, 0.0]).unwrap(), &p, 0.0).unwrap();
        let mut buf = Vec::new();
        write_discrete_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), DISCRETE_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 3);
    }
}
