use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{PoseStream, RobotLog, StreamError, ToolSample, WrenchSample};
use crate::frames::{FrameError, FrameId, UnitQuaternion};
use crate::io::fmt_f64;

pub const POSE_HEADER: &str = "t,qw,qx,qy,qz,px,py,pz";
pub const ROBOT_HEADER: &str = "t,q1,q2,q3,q4,q5,q6,q7,qw,qx,qy,qz,px,py,pz,fx,fy,fz,tx,ty,tz";
/// Wrench series companion written next to an error-series CSV.
pub const WRENCH_HEADER: &str = "t,fx,fy,fz,tx,ty,tz";

struct Row {
    line: u64,
    row: usize,
    values: Vec<f64>,
}

/// Parses every data row into floats after checking the header verbatim.
fn read_rows<R: Read>(reader: R, header: &str) -> Result<Vec<Row>, StreamError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| StreamError::MalformedRow {
            line: e.position().map_or(1, |p| p.line()),
            row: 0,
            reason: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(StreamError::BadHeader {
            expected: header.to_string(),
            found,
        });
    }
    let columns: Vec<&str> = header.split(',').collect();
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| StreamError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            row,
            reason: match e.kind() {
                csv::ErrorKind::UnequalLengths { len, .. } => {
                    format!("expected {} fields, found {len}", columns.len())
                }
                _ => e.to_string(),
            },
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .zip(&columns)
            .map(|(field, col)| {
                let v: f64 = field.parse().map_err(|_| StreamError::MalformedRow {
                    line,
                    row,
                    reason: format!("column {col}: cannot parse \"{field}\" as a number"),
                })?;
                if !v.is_finite() {
                    return Err(StreamError::MalformedRow {
                        line,
                        row,
                        reason: format!("column {col}: non-finite value"),
                    });
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(Row { line, row, values });
    }
    if rows.is_empty() {
        return Err(StreamError::EmptyStream);
    }
    Ok(rows)
}

fn check_time(rows: &[Row], i: usize) -> Result<f64, StreamError> {
    let r = &rows[i];
    let t = r.values[0];
    if t < 0.0 {
        return Err(StreamError::MalformedRow {
            line: r.line,
            row: r.row,
            reason: format!("negative timestamp {t}"),
        });
    }
    if i > 0 && t <= rows[i - 1].values[0] {
        return Err(StreamError::NonMonotonicTimestamp {
            line: r.line,
            row: r.row,
            t,
        });
    }
    Ok(t)
}

fn parse_quaternion(r: &Row, at: usize) -> Result<UnitQuaternion, StreamError> {
    let v = &r.values[at..at + 4];
    UnitQuaternion::new(v[0], v[1], v[2], v[3]).map_err(|e| match e {
        FrameError::NonUnitQuaternion { norm } => StreamError::NonUnitQuaternion {
            line: r.line,
            row: r.row,
            norm,
        },
        other => StreamError::MalformedRow {
            line: r.line,
            row: r.row,
            reason: other.to_string(),
        },
    })
}

fn vec3(v: &[f64]) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

/// Reads a marker-cluster pose CSV (`t,qw,qx,qy,qz,px,py,pz`).
pub fn read_pose_csv<R: Read>(reader: R, frame: FrameId) -> Result<PoseStream, StreamError> {
    let rows = read_rows(reader, POSE_HEADER)?;
    let mut samples = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let t = check_time(&rows, i)?;
        let r = &rows[i];
        samples.push(ToolSample {
            t,
            orientation: parse_quaternion(r, 1)?,
            position: vec3(&r.values[5..8]),
            frame,
        });
    }
    PoseStream::with_estimated_rate(samples, frame)
}

/// Reads a robot log CSV: joint angles, tool pose in the robot frame, and
/// end-effector wrench per row.
pub fn read_robot_csv<R: Read>(reader: R) -> Result<RobotLog, StreamError> {
    let rows = read_rows(reader, ROBOT_HEADER)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut wrenches = Vec::with_capacity(rows.len());
    let mut joints = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let t = check_time(&rows, i)?;
        let r = &rows[i];
        let mut q = [0.0; 7];
        q.copy_from_slice(&r.values[1..8]);
        joints.push(q);
        samples.push(ToolSample {
            t,
            orientation: parse_quaternion(r, 8)?,
            position: vec3(&r.values[12..15]),
            frame: FrameId::Robot,
        });
        wrenches.push(WrenchSample {
            t,
            force: vec3(&r.values[15..18]),
            torque: vec3(&r.values[18..21]),
        });
    }
    Ok(RobotLog {
        poses: PoseStream::with_estimated_rate(samples, FrameId::Robot)?,
        wrenches,
        joints,
    })
}

/// Reads a wrench series (`t,fx,fy,fz,tx,ty,tz`).
pub fn read_wrench_csv<R: Read>(reader: R) -> Result<Vec<WrenchSample>, StreamError> {
    let rows = read_rows(reader, WRENCH_HEADER)?;
    (0..rows.len())
        .map(|i| {
            let t = check_time(&rows, i)?;
            let v = &rows[i].values;
            Ok(WrenchSample {
                t,
                force: vec3(&v[1..4]),
                torque: vec3(&v[4..7]),
            })
        })
        .collect()
}

pub fn write_wrench_csv<W: Write>(mut w: W, wrenches: &[WrenchSample]) -> io::Result<()> {
    writeln!(w, "{WRENCH_HEADER}")?;
    for s in wrenches {
        let mut line = fmt_f64(s.t);
        push_fields(&mut line, s.force.as_slice());
        push_fields(&mut line, s.torque.as_slice());
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<File, StreamError> {
    if !path.exists() {
        return Err(StreamError::MissingFile(path.to_path_buf()));
    }
    File::open(path).map_err(|e| StreamError::from(e).in_file(path))
}

pub fn ingest_pose_csv(path: &Path, frame: FrameId) -> Result<PoseStream, StreamError> {
    read_pose_csv(open(path)?, frame).map_err(|e| e.in_file(path))
}

pub fn ingest_robot_csv(path: &Path) -> Result<RobotLog, StreamError> {
    read_robot_csv(open(path)?).map_err(|e| e.in_file(path))
}

fn push_fields(line: &mut String, values: &[f64]) {
    for v in values {
        line.push(',');
        line.push_str(&fmt_f64(*v));
    }
}

pub fn write_pose_csv<W: Write>(mut w: W, stream: &PoseStream) -> io::Result<()> {
    writeln!(w, "{POSE_HEADER}")?;
    for s in stream.samples() {
        let mut line = fmt_f64(s.t);
        push_fields(&mut line, &s.orientation.as_array());
        push_fields(&mut line, s.position.as_slice());
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_robot_csv<W: Write>(mut w: W, log: &RobotLog) -> io::Result<()> {
    writeln!(w, "{ROBOT_HEADER}")?;
    let rows = log.poses.samples().iter().zip(&log.wrenches).zip(&log.joints);
    for ((s, wr), q) in rows {
        let mut line = fmt_f64(s.t);
        push_fields(&mut line, q);
        push_fields(&mut line, &s.orientation.as_array());
        push_fields(&mut line, s.position.as_slice());
        push_fields(&mut line, wr.force.as_slice());
        push_fields(&mut line, wr.torque.as_slice());
        writeln!(w, "{line}")?;
    }
    Ok(())
}
