//! Snapshot files and CSV artifacts.
//!
//! FLQ1 layout, little-endian:
//! ```text
//! "FLQ1" | u32 nx | u32 ny | u32 count | u32 reserved (0) | count·ny·nx f32
//! ```
//! Frames are stored one after another, each row-major with `x` fastest.

use std::io::{Read, Write};

use thiserror::Error;

use crate::lbm::VorticitySnapshot;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"FLQ1";
pub const SNAPSHOT_HEADER_BYTES: usize = 20;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("bad magic {found:?}, expected \"FLQ1\"")]
    BadMagic { found: [u8; 4] },
    #[error("truncated snapshot file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("inconsistent snapshot header: {0}")]
    Header(String),
    #[error("{file} line {line}: {detail}")]
    Csv {
        file: String,
        line: usize,
        detail: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A stack of equally sized vorticity frames in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f32>,
}

impl SnapshotSet {
    pub fn from_vorticity(frames: &[VorticitySnapshot]) -> Result<Self, ArtifactError> {
        let first = frames
            .first()
            .ok_or_else(|| ArtifactError::Header("no frames".into()))?;
        let (nx, ny) = (first.nx, first.ny);
        let mut data = Vec::with_capacity(frames.len() * nx * ny);
        for f in frames {
            if (f.nx, f.ny) != (nx, ny) {
                return Err(ArtifactError::Header(format!(
                    "frame {}x{} differs from {nx}x{ny}",
                    f.nx, f.ny
                )));
            }
            data.extend(f.omega.iter().map(|&v| v as f32));
        }
        Ok(SnapshotSet { nx, ny, data })
    }

    pub fn count(&self) -> usize {
        self.data.len() / (self.nx * self.ny).max(1)
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let n = self.nx * self.ny;
        &self.data[k * n..(k + 1) * n]
    }

    /// All frames widened to `f64`, `[count, ny·nx]` row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

pub fn write_snapshots(w: &mut impl Write, s: &SnapshotSet) -> Result<(), ArtifactError> {
    if s.nx == 0 || s.ny == 0 || s.data.len() % (s.nx * s.ny) != 0 {
        return Err(ArtifactError::Header(format!(
            "{} values do not tile {}x{} frames",
            s.data.len(),
            s.nx,
            s.ny
        )));
    }
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| ArtifactError::Header(format!("{what} = {v} exceeds u32")))
    };
    let mut buf = Vec::with_capacity(SNAPSHOT_HEADER_BYTES + 4 * s.data.len());
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&dim(s.nx, "nx")?.to_le_bytes());
    buf.extend_from_slice(&dim(s.ny, "ny")?.to_le_bytes());
    buf.extend_from_slice(&dim(s.count(), "count")?.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in &s.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshots(r: &mut impl Read) -> Result<SnapshotSet, ArtifactError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < SNAPSHOT_HEADER_BYTES {
        if bytes.len() >= 4 && bytes[..4] != SNAPSHOT_MAGIC {
            return Err(ArtifactError::BadMagic {
                found: bytes[..4].try_into().expect("4 bytes"),
            });
        }
        return Err(ArtifactError::Truncated {
            expected: SNAPSHOT_HEADER_BYTES,
            actual: bytes.len(),
        });
    }
    if bytes[..4] != SNAPSHOT_MAGIC {
        return Err(ArtifactError::BadMagic {
            found: bytes[..4].try_into().expect("4 bytes"),
        });
    }
    let word = |i: usize| {
        u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes")) as usize
    };
    let (nx, ny, count, reserved) = (word(1), word(2), word(3), word(4));
    if nx == 0 || ny == 0 || count == 0 {
        return Err(ArtifactError::Header(format!(
            "nx={nx}, ny={ny}, count={count} must all be positive"
        )));
    }
    if reserved != 0 {
        return Err(ArtifactError::Header(format!(
            "reserved word is {reserved}, expected 0"
        )));
    }
    let values = nx
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(count))
        .ok_or_else(|| ArtifactError::Header("nx·ny·count overflows".into()))?;
    let expected = SNAPSHOT_HEADER_BYTES + 4 * values;
    if bytes.len() < expected {
        return Err(ArtifactError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(ArtifactError::Header(format!(
            "nx·ny·count = {values} implies {expected} bytes but the file has {}",
            bytes.len()
        )));
    }
    let data = bytes[SNAPSHOT_HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(SnapshotSet { nx, ny, data })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(first: &str, extra: &[&str], dims: usize) -> String {
    let mut h: Vec<String> = std::iter::once(first.to_string())
        .chain(extra.iter().map(|s| s.to_string()))
        .collect();
    h.extend((0..dims).map(|d| format!("z{d}")));
    h.join(",")
}

/// Encoded latents: `index,code,z0..z{d-1}`.
pub fn write_latents_csv(z: &[Vec<f64>], codes: &[usize]) -> String {
    let dims = z.first().map_or(0, Vec::len);
    let mut out = header("index", &["code"], dims);
    out.push('\n');
    for (i, (row, c)) in z.iter().zip(codes).enumerate() {
        out.push_str(&format!("{i},{c}"));
        row.iter()
            .for_each(|v| out.push_str(&format!(",{}", num(*v))));
        out.push('\n');
    }
    out
}

/// Generated samples: `index,z0..z{d-1}`.
pub fn write_samples_csv(z: &[Vec<f64>]) -> String {
    let dims = z.first().map_or(0, Vec::len);
    let mut out = header("index", &[], dims);
    out.push('\n');
    for (i, row) in z.iter().enumerate() {
        out.push_str(&i.to_string());
        row.iter()
            .for_each(|v| out.push_str(&format!(",{}", num(*v))));
        out.push('\n');
    }
    out
}

fn parse_rows(
    text: &str,
    file: &str,
    lead: usize,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<f64>>), ArtifactError> {
    let err = |line: usize, detail: String| ArtifactError::Csv {
        file: file.to_string(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate();
    let width = match lines.next() {
        Some((_, h)) => h.split(',').count(),
        None => return Err(err(1, "missing header".into())),
    };
    if width <= lead {
        return Err(err(1, "header has no value columns".into()));
    }
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != width {
            return Err(err(
                i + 1,
                format!("expected {width} fields, found {}", f.len()),
            ));
        }
        let id: Vec<usize> = f[..lead]
            .iter()
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| err(i + 1, format!("`{s}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        let vals: Vec<f64> = f[lead..]
            .iter()
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| err(i + 1, format!("`{s}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        ids.push(id);
        rows.push(vals);
    }
    Ok((ids, rows))
}

pub fn read_latents_csv(
    text: &str,
    file: &str,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), ArtifactError> {
    let (ids, rows) = parse_rows(text, file, 2)?;
    Ok((rows, ids.into_iter().map(|v| v[1]).collect()))
}

pub fn read_samples_csv(text: &str, file: &str) -> Result<Vec<Vec<f64>>, ArtifactError> {
    Ok(parse_rows(text, file, 1)?.1)
}
