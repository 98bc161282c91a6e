//! CSV and JSON serialization of trajectories, phase paths and reports.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_space::PhasePoint;
use crate::radial_ode::RadialState;

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "r", "u", "du", "v", "dv", "I1", "I2", "I3", "I4", "J1", "J2",
];
pub const PHASE_HEADER: [&str; 5] = ["t", "x", "y", "z", "w"];

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows<W: Write>(
    out: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_rows<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(input);
    let found: Vec<String> = rd
        .headers()
        .map_err(io_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::Io(format!(
            "unexpected header {found:?}, expected {header:?}"
        )));
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(io_err)?;
            rec.iter()
                .map(|f| f.trim().parse::<f64>().map_err(io_err))
                .collect()
        })
        .collect()
}

pub fn write_trajectory_csv<W: Write>(out: W, samples: &[RadialState]) -> Result<()> {
    write_rows(
        out,
        &TRAJECTORY_HEADER,
        samples.iter().map(|s| {
            let m = s.source_moments;
            let l = s.laplacian_moments;
            vec![
                s.r, s.u, s.du, s.v, s.dv, m[0], m[1], m[2], m[3], l[0], l[1],
            ]
        }),
    )
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<RadialState>> {
    read_rows(input, &TRAJECTORY_HEADER)?
        .into_iter()
        .map(|v| {
            Ok(RadialState {
                r: v[0],
                u: v[1],
                du: v[2],
                v: v[3],
                dv: v[4],
                source_moments: [v[5], v[6], v[7], v[8]],
                laplacian_moments: [v[9], v[10]],
            })
        })
        .collect()
}

pub fn write_phase_csv<W: Write>(out: W, points: &[PhasePoint]) -> Result<()> {
    write_rows(
        out,
        &PHASE_HEADER,
        points.iter().map(|p| vec![p.t, p.x, p.y, p.z, p.w]),
    )
}

pub fn read_phase_csv<R: Read>(input: R) -> Result<Vec<PhasePoint>> {
    Ok(read_rows(input, &PHASE_HEADER)?
        .into_iter()
        .map(|v| PhasePoint::new(v[0], [v[1], v[2], v[3], v[4]]))
        .collect())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(io_err)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(io_err)
}

/// Write `bytes` to a sibling temp file and rename it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn write_json_file<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
