//! Dataset I/O: JSONL pose streams and marker logs, JSON rigs/configs, and
//! PLY point clouds (ASCII and binary little-endian).
//!
//! Wire formats:
//! - pose stream: one JSON object per line, `{"t": s, "q": [w,x,y,z], "p": [x,y,z]}`, meters;
//! - marker log: `{"t", "id", "c2d": [[u,v]x4], "c3d": [[x,y,z]x4], "valid": [bool x4]}`;
//! - PLY: `float` properties `x,y,z` and optionally `nx,ny,nz`.

use nalgebra::{Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

use crate::fusion::MarkerObservation;
use crate::geometry::{RigidTransform, TimedPose};
use crate::registration::PointCloud;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    t: f64,
    /// Unit quaternion, scalar first: [w, x, y, z].
    q: [f64; 4],
    /// Translation in meters.
    p: [f64; 3],
}

pub fn write_pose_stream(path: &Path, stream: &[TimedPose]) -> Result<(), IoError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for sample in stream {
        let q = sample.pose.rotation().into_inner();
        let p = sample.pose.translation();
        let record = PoseRecord {
            t: sample.timestamp,
            q: [q.w, q.i, q.j, q.k],
            p: [p.x, p.y, p.z],
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pose_stream(path: &Path) -> Result<Vec<TimedPose>, IoError> {
    let file = std::fs::File::open(path)?;
    let mut stream = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PoseRecord = serde_json::from_str(&line)?;
        stream.push(TimedPose::new(
            record.t,
            RigidTransform::from_parts(
                record.q[0],
                record.q[1],
                record.q[2],
                record.q[3],
                record.p,
            ),
        ));
    }
    Ok(stream)
}

#[derive(Serialize, Deserialize)]
struct MarkerRecord {
    t: f64,
    id: u32,
    c2d: [[f64; 2]; 4],
    c3d: [[f64; 3]; 4],
    valid: [bool; 4],
}

/// Flatten per-frame detection sets into one record per detection.
/// Frames with no detections leave no records; the frame timeline is
/// carried by the ground-truth pose stream written alongside.
pub fn write_marker_log(path: &Path, frames: &[Vec<MarkerObservation>]) -> Result<(), IoError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for frame in frames {
        for obs in frame {
            let record = MarkerRecord {
                t: obs.timestamp,
                id: obs.marker_id,
                c2d: obs.corners_2d.map(|c| [c.x, c.y]),
                c3d: obs.corners_3d.map(|c| [c.x, c.y, c.z]),
                valid: obs.valid_depth,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_marker_log(path: &Path) -> Result<Vec<MarkerObservation>, IoError> {
    let file = std::fs::File::open(path)?;
    let mut observations = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: MarkerRecord = serde_json::from_str(&line)?;
        observations.push(MarkerObservation {
            marker_id: r.id,
            timestamp: r.t,
            corners_2d: r.c2d.map(|c| Vector2::new(c[0], c[1])),
            corners_3d: r.c3d.map(|c| Vector3::new(c[0], c[1], c[2])),
            valid_depth: r.valid,
        });
    }
    Ok(observations)
}

/// Regroup a flat detection log onto a frame timeline; detections are
/// assigned to the timeline entry their timestamp matches within `tol`.
pub fn group_by_timeline(
    observations: Vec<MarkerObservation>,
    timeline: &[f64],
    tol: f64,
) -> Vec<Vec<MarkerObservation>> {
    let mut frames: Vec<Vec<MarkerObservation>> = timeline.iter().map(|_| Vec::new()).collect();
    let mut cursor = 0usize;
    for obs in observations {
        while cursor + 1 < timeline.len()
            && (timeline[cursor + 1] - obs.timestamp).abs() < (timeline[cursor] - obs.timestamp).abs()
        {
            cursor += 1;
        }
        if (timeline[cursor] - obs.timestamp).abs() <= tol {
            frames[cursor].push(obs);
        }
    }
    frames
}

/// Pretty-printed JSON document (rigs, configs, reports).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Write a cloud as PLY with `float` x,y,z and, if present, nx,ny,nz.
pub fn write_ply(path: &Path, cloud: &PointCloud, binary: bool) -> Result<(), IoError> {
    if let Some(normals) = &cloud.normals {
        if normals.len() != cloud.points.len() {
            return Err(format_err(path, "normal count differs from point count"));
        }
    }
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let format = if binary { "binary_little_endian" } else { "ascii" };
    write!(out, "ply\nformat {format} 1.0\nelement vertex {}\n", cloud.points.len())?;
    out.write_all(b"property float x\nproperty float y\nproperty float z\n")?;
    if cloud.normals.is_some() {
        out.write_all(b"property float nx\nproperty float ny\nproperty float nz\n")?;
    }
    out.write_all(b"end_header\n")?;
    for (i, p) in cloud.points.iter().enumerate() {
        let mut row = vec![p.x as f32, p.y as f32, p.z as f32];
        if let Some(normals) = &cloud.normals {
            let n = normals[i];
            row.extend([n.x as f32, n.y as f32, n.z as f32]);
        }
        if binary {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        } else {
            let text: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", text.join(" "))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let bytes = std::fs::read(path)?;
    let marker = b"end_header\n";
    let header_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| format_err(path, "missing end_header"))?
        + marker.len();
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| format_err(path, "non-UTF-8 header"))?;

    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(format_err(path, "not a PLY file"));
    }
    let mut binary = false;
    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["format", "ascii", "1.0"] => binary = false,
            ["format", "binary_little_endian", "1.0"] => binary = true,
            ["format", other, ..] => {
                return Err(format_err(path, format!("unsupported format {other}")))
            }
            ["element", "vertex", n] => {
                vertex_count = Some(
                    n.parse()
                        .map_err(|_| format_err(path, "bad vertex count"))?,
                )
            }
            ["element", name, ..] => {
                return Err(format_err(path, format!("unsupported element {name}")))
            }
            ["property", "float", name] => properties.push((*name).to_string()),
            ["property", kind, ..] => {
                return Err(format_err(path, format!("unsupported property type {kind}")))
            }
            ["comment", ..] | ["end_header"] => {}
            _ => return Err(format_err(path, format!("unrecognized header line: {line}"))),
        }
    }
    let vertex_count = vertex_count.ok_or_else(|| format_err(path, "missing vertex element"))?;
    let has_normals = match properties
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "nx", "ny", "nz"] => true,
        other => {
            return Err(format_err(
                path,
                format!("unsupported property layout {other:?}"),
            ))
        }
    };
    let stride = properties.len();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(vertex_count);
    if binary {
        let body = &bytes[header_end..];
        let needed = vertex_count * stride * 4;
        if body.len() < needed {
            return Err(format_err(
                path,
                format!("body holds {} bytes, need {needed}", body.len()),
            ));
        }
        for v in 0..vertex_count {
            let row = (0..stride)
                .map(|c| {
                    let at = (v * stride + c) * 4;
                    f32::from_le_bytes(body[at..at + 4].try_into().unwrap()) as f64
                })
                .collect();
            rows.push(row);
        }
    } else {
        let body = std::str::from_utf8(&bytes[header_end..])
            .map_err(|_| format_err(path, "non-UTF-8 ASCII body"))?;
        for line in body.lines().filter(|l| !l.trim().is_empty()) {
            let row: Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|_| format_err(path, format!("bad vertex line: {line}")))?;
            if row.len() != stride {
                return Err(format_err(path, format!("bad vertex line: {line}")));
            }
            rows.push(row);
        }
        if rows.len() != vertex_count {
            return Err(format_err(
                path,
                format!("expected {vertex_count} vertices, found {}", rows.len()),
            ));
        }
    }

    let points = rows
        .iter()
        .map(|r| Vector3::new(r[0], r[1], r[2]))
        .collect();
    let normals = has_normals
        .then(|| rows.iter().map(|r| Vector3::new(r[3], r[4], r[5])).collect());
    Ok(PointCloud { points, normals })
}
