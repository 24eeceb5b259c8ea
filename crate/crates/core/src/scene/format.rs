//! `BLRF` binary cloud files.
//!
//! Layout (all little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `BLRF`                            |
//! | 4      | 2    | version (`u16`, currently 1)            |
//! | 6      | 1    | kind: 0 LiDAR, 1 Radar A, 2 Radar B     |
//! | 7      | 8    | record count (`u64`)                    |
//! | 15     | ...  | records of `f32` fields in field order  |
//!
//! LiDAR records are `x y z intensity t`; Radar A records are
//! `x y rcs t vx vy dyn_prop invalid_state pdh0`; Radar B records are
//! `x y rcs t`. No Radar record has a height field.

use std::fs;
use std::path::Path;

use super::types::{Cloud, LidarPoint, RadarCloud, RadarExtras, RadarPoint, RadarVariant};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BLRF";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 15;

const KIND_LIDAR: u8 = 0;
const KIND_RADAR_A: u8 = 1;
const KIND_RADAR_B: u8 = 2;

fn fields_per_record(kind: u8) -> Option<usize> {
    match kind {
        KIND_LIDAR => Some(5),
        KIND_RADAR_A => Some(9),
        KIND_RADAR_B => Some(4),
        _ => None,
    }
}

pub fn encode_cloud(cloud: &Cloud) -> Vec<u8> {
    let (kind, fields) = match cloud {
        Cloud::Lidar { .. } => (KIND_LIDAR, 5),
        Cloud::Radar(r) => match r.variant() {
            RadarVariant::A => (KIND_RADAR_A, 9),
            RadarVariant::B => (KIND_RADAR_B, 4),
        },
    };
    let mut buf = Vec::with_capacity(HEADER_LEN + cloud.len() * fields * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(kind);
    buf.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    let mut put = |v: f32| buf.extend_from_slice(&v.to_le_bytes());
    match cloud {
        Cloud::Lidar { points } => {
            for p in points {
                for v in [p.x, p.y, p.z, p.intensity, p.t] {
                    put(v);
                }
            }
        }
        Cloud::Radar(r) => {
            for p in r.points() {
                for v in [p.x, p.y, p.rcs, p.t] {
                    put(v);
                }
                if let Some(e) = p.extras {
                    for v in [e.vx, e.vy, e.dyn_prop, e.invalid_state, e.pdh0] {
                        put(v);
                    }
                }
            }
        }
    }
    buf
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode_cloud(bytes: &[u8]) -> Result<Cloud> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format_err(0, "missing BLRF magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(format_err(4, format!("unknown version {version}")));
    }
    let kind = bytes[6];
    let fields =
        fields_per_record(kind).ok_or_else(|| format_err(6, format!("unknown kind {kind}")))?;
    let count = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes"));
    let record = fields * 4;
    let payload = &bytes[HEADER_LEN..];
    let available = (payload.len() / record) as u64;
    if available < count {
        let offset = HEADER_LEN + available as usize * record;
        return Err(format_err(
            offset,
            format!("truncated payload: record {available} of {count} is incomplete"),
        ));
    }
    let expected_len = HEADER_LEN + count as usize * record;
    if bytes.len() > expected_len {
        return Err(format_err(expected_len, "trailing bytes after last record"));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let records = values.chunks_exact(fields);
    Ok(match kind {
        KIND_LIDAR => Cloud::Lidar {
            points: records
                .map(|r| LidarPoint {
                    x: r[0],
                    y: r[1],
                    z: r[2],
                    intensity: r[3],
                    t: r[4],
                })
                .collect(),
        },
        _ => {
            let variant = if kind == KIND_RADAR_A {
                RadarVariant::A
            } else {
                RadarVariant::B
            };
            let points = records
                .map(|r| RadarPoint {
                    x: r[0],
                    y: r[1],
                    rcs: r[2],
                    t: r[3],
                    extras: (variant == RadarVariant::A).then(|| RadarExtras {
                        vx: r[4],
                        vy: r[5],
                        dyn_prop: r[6],
                        invalid_state: r[7],
                        pdh0: r[8],
                    }),
                })
                .collect();
            Cloud::Radar(RadarCloud::new(variant, points)?)
        }
    })
}

pub fn write_cloud(cloud: &Cloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cloud(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<Cloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cloud(&bytes)
}

pub fn write_cloud_json(cloud: &Cloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(cloud)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_cloud_json(path: impl AsRef<Path>) -> Result<Cloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Headerless `f32` quintuples `x y z intensity ring`, as written by common
/// LiDAR drivers. The ring index is dropped and `t` set to 0.
pub fn import_raw_lidar(bytes: &[u8]) -> Result<Vec<LidarPoint>> {
    const RECORD: usize = 20;
    if !bytes.len().is_multiple_of(RECORD) {
        let offset = bytes.len() / RECORD * RECORD;
        return Err(format_err(offset, "raw LiDAR file ends mid-record"));
    }
    Ok(bytes
        .chunks_exact(RECORD)
        .map(|r| {
            let f = |k: usize| f32::from_le_bytes(r[4 * k..4 * k + 4].try_into().expect("4 bytes"));
            LidarPoint {
                x: f(0),
                y: f(1),
                z: f(2),
                intensity: f(3),
                t: 0.0,
            }
        })
        .collect())
}

/// Loads a cloud choosing the decoder by extension: `.json` for the JSON
/// fixture format, `.bin` for raw LiDAR quintuples, anything else `BLRF`.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<Cloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_cloud_json(path),
        Some("bin") => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            Ok(Cloud::Lidar {
                points: import_raw_lidar(&bytes)?,
            })
        }
        _ => read_cloud(path),
    }
}
