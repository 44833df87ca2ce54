//! Path files.
//!
//! CSV: one `# mhawkes-path v1 key=value ...` line, then `time,origin,mark-id`.
//! Binary: magic `MHPB`, u32 version, the header fields, a u64 event count and
//! 13-byte frames (f64 time, u8 origin, u32 mark index), all little endian.
//! Marks without a label are written as index `u32::MAX`.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::model::Origin;

use super::PathRecord;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"MHPB";
const CSV_TAG: &str = "# mhawkes-path v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathHeader {
    pub horizon: f64,
    pub seed: u64,
    pub replica: u64,
    pub spec_hash: u64,
    pub accepted: u64,
    pub proposed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub origin: Origin,
    pub mark: u32,
}

/// A path as stored on disk, marks reduced to their indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFile {
    pub header: PathHeader,
    pub frames: Vec<Frame>,
}

impl From<&PathRecord> for PathFile {
    fn from(p: &PathRecord) -> Self {
        PathFile {
            header: PathHeader {
                horizon: p.horizon,
                seed: p.seed,
                replica: p.replica,
                spec_hash: p.spec_hash,
                accepted: p.accepted,
                proposed: p.proposed,
            },
            frames: p
                .events
                .iter()
                .map(|e| Frame { time: e.time, origin: e.origin, mark: e.mark.file_index() })
                .collect(),
        }
    }
}

fn origin_name(o: Origin) -> &'static str {
    match o {
        Origin::Immigration => "immigration",
        Origin::Hawkes => "hawkes",
    }
}

fn origin_code(o: Origin) -> u8 {
    match o {
        Origin::Immigration => 0,
        Origin::Hawkes => 1,
    }
}

pub fn write_csv(path: &PathRecord, mut w: impl Write) -> Result<()> {
    let f = PathFile::from(path);
    let h = f.header;
    writeln!(
        w,
        "{CSV_TAG} horizon={} seed={} replica={} spec={:016x} accepted={} proposed={}",
        h.horizon, h.seed, h.replica, h.spec_hash, h.accepted, h.proposed
    )?;
    writeln!(w, "time,origin,mark-id")?;
    for fr in &f.frames {
        writeln!(w, "{},{},{}", fr.time, origin_name(fr.origin), fr.mark)?;
    }
    Ok(())
}

pub fn read_csv(r: impl BufRead) -> Result<PathFile> {
    let mut lines = r.lines();
    let first = lines.next().transpose()?.ok_or_else(|| Error::Format("empty path file".into()))?;
    let rest = first
        .strip_prefix(CSV_TAG)
        .ok_or_else(|| Error::Format(format!("unsupported path header '{first}'")))?;
    let mut header = PathHeader { horizon: f64::NAN, seed: 0, replica: 0, spec_hash: 0, accepted: 0, proposed: 0 };
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Format(format!("bad header field '{kv}'")))?;
        let bad = |e: &dyn std::fmt::Display| Error::Format(format!("header field {k}: {e}"));
        match k {
            "horizon" => header.horizon = v.parse().map_err(|e| bad(&e))?,
            "seed" => header.seed = v.parse().map_err(|e| bad(&e))?,
            "replica" => header.replica = v.parse().map_err(|e| bad(&e))?,
            "spec" => header.spec_hash = u64::from_str_radix(v, 16).map_err(|e| bad(&e))?,
            "accepted" => header.accepted = v.parse().map_err(|e| bad(&e))?,
            "proposed" => header.proposed = v.parse().map_err(|e| bad(&e))?,
            _ => return Err(Error::Format(format!("unknown header field '{k}'"))),
        }
    }
    if header.horizon.is_nan() {
        return Err(Error::Format("header lacks horizon".into()));
    }
    match lines.next().transpose()? {
        Some(l) if l.trim() == "time,origin,mark-id" => {}
        _ => return Err(Error::Format("missing column header 'time,origin,mark-id'".into())),
    }
    let mut frames = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let (Some(t), Some(o), Some(m), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(Error::Format(format!("malformed path row '{line}'")));
        };
        let origin = match o.trim() {
            "immigration" => Origin::Immigration,
            "hawkes" => Origin::Hawkes,
            other => return Err(Error::Format(format!("unknown origin '{other}'"))),
        };
        frames.push(Frame {
            time: t.trim().parse().map_err(|e| Error::Format(format!("time '{t}': {e}")))?,
            origin,
            mark: m.trim().parse().map_err(|e| Error::Format(format!("mark '{m}': {e}")))?,
        });
    }
    Ok(PathFile { header, frames })
}

pub fn write_binary(path: &PathRecord, mut w: impl Write) -> Result<()> {
    let f = PathFile::from(path);
    let h = f.header;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&h.horizon.to_le_bytes())?;
    for v in [h.seed, h.replica, h.spec_hash, h.accepted, h.proposed, f.frames.len() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for fr in &f.frames {
        w.write_all(&fr.time.to_le_bytes())?;
        w.write_all(&[origin_code(fr.origin)])?;
        w.write_all(&fr.mark.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated path file: {e}")))?;
    Ok(buf)
}

pub fn read_binary(mut r: impl Read) -> Result<PathFile> {
    if &take::<4>(&mut r)? != MAGIC {
        return Err(Error::Format("not a binary path file".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported path format version {version}")));
    }
    let horizon = f64::from_le_bytes(take(&mut r)?);
    let mut u = [0u64; 6];
    for v in &mut u {
        *v = u64::from_le_bytes(take(&mut r)?);
    }
    let header = PathHeader { horizon, seed: u[0], replica: u[1], spec_hash: u[2], accepted: u[3], proposed: u[4] };
    let n = usize::try_from(u[5]).map_err(|_| Error::Format("event count overflows".into()))?;
    let mut frames = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let time = f64::from_le_bytes(take(&mut r)?);
        let origin = match take::<1>(&mut r)?[0] {
            0 => Origin::Immigration,
            1 => Origin::Hawkes,
            b => return Err(Error::Format(format!("unknown origin code {b}"))),
        };
        let mark = u32::from_le_bytes(take(&mut r)?);
        frames.push(Frame { time, origin, mark });
    }
    Ok(PathFile { header, frames })
}
