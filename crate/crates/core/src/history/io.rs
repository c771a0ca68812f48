//! CSV serialization of segments and trajectories.
//!
//! Numbers are written with 17 significant digits so that a read-back
//! reproduces every value bit for bit.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::segment::Segment;
use super::trajectory::Trajectory;
use crate::error::{domain, Result};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header and rows of numbers.
pub fn write_table<W: Write>(
    out: W,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

fn numbered(prefix: &str, first: &str, n: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=n).map(|i| format!("{prefix}{i}")))
        .collect()
}

fn read_table<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| crate::Error::Domain(format!("bad number {s:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Segment CSV: columns `theta, v1..vn`.
pub fn write_segment<W: Write>(out: W, seg: &Segment) -> Result<()> {
    let rows = seg
        .knots()
        .iter()
        .zip(seg.values())
        .map(|(&k, v)| std::iter::once(k).chain(v.iter().copied()).collect());
    write_table(out, &numbered("v", "theta", seg.dim()), rows)
}

pub fn read_segment<R: Read>(input: R) -> Result<Segment> {
    let (header, rows) = read_table(input)?;
    if header.len() < 2 || header[0] != "theta" {
        return domain("segment CSV must have columns theta, v1..vn");
    }
    let Some(first) = rows.first() else {
        return domain("segment CSV has no rows");
    };
    let delay = -first[0];
    let knots = rows.iter().map(|r| r[0]).collect();
    let values = rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    Segment::from_flat(delay, header.len() - 1, knots, values)
}

/// Sidecar metadata of a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub delay: f64,
    pub dim: usize,
}

/// Trajectory CSV: columns `t, x1..xn`. Rows with `t < 0` hold the knots of
/// the initial segment; the row at `t = 0` is shared by both.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<()> {
    let init = traj.initial();
    let initial_rows = init
        .knots()
        .iter()
        .zip(init.values())
        .filter(|(&k, _)| k < 0.0)
        .map(|(&k, v)| {
            std::iter::once(k)
                .chain(v.iter().copied())
                .collect::<Vec<_>>()
        });
    let rows = traj
        .times()
        .iter()
        .zip(traj.states())
        .map(|(&t, v)| std::iter::once(t).chain(v.iter().copied()).collect());
    write_table(
        out,
        &numbered("x", "t", traj.dim()),
        initial_rows.chain(rows),
    )
}

pub fn read_trajectory<R: Read>(input: R, header: &TrajectoryHeader) -> Result<Trajectory> {
    let (cols, rows) = read_table(input)?;
    if cols.len() != header.dim + 1 || cols[0] != "t" {
        return domain("trajectory CSV columns do not match the header");
    }
    let split = rows.partition_point(|r| r[0] < 0.0);
    if split == rows.len() {
        return domain("trajectory CSV has no row at t = 0");
    }
    let mut knots: Vec<f64> = rows[..split].iter().map(|r| r[0]).collect();
    knots.push(0.0);
    let values = rows[..=split]
        .iter()
        .flat_map(|r| r[1..].iter().copied())
        .collect();
    let initial = Segment::from_flat(header.delay, header.dim, knots, values)?;
    let times = rows[split..].iter().map(|r| r[0]).collect();
    let states = rows[split..]
        .iter()
        .flat_map(|r| r[1..].iter().copied())
        .collect();
    Trajectory::from_flat(initial, times, states)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn save_trajectory(dir: &Path, stem: &str, traj: &Trajectory) -> Result<()> {
    write_trajectory(File::create(dir.join(format!("{stem}.csv")))?, traj)?;
    let header = TrajectoryHeader {
        delay: traj.delay(),
        dim: traj.dim(),
    };
    let mut f = File::create(dir.join(format!("{stem}.json")))?;
    serde_json::to_writer_pretty(&mut f, &header)?;
    writeln!(f)?;
    Ok(())
}

pub fn load_trajectory(dir: &Path, stem: &str) -> Result<Trajectory> {
    let header: TrajectoryHeader =
        serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
    read_trajectory(File::open(dir.join(format!("{stem}.csv")))?, &header)
}
