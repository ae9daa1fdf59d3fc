//! The `.ovf` frame interchange format: one JSON header line followed by a
//! little-endian binary payload (optional depth, then one record per region).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, CameraPose, FrameObservation, Region2D, RleMask};
use crate::error::{Error, Result};

pub const FRAME_MAGIC: &str = "OVIR1";

#[derive(Serialize, Deserialize)]
struct FrameHeader {
    magic: String,
    frame_id: u64,
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    pose: Vec<f64>,
    num_regions: usize,
    feature_dim: usize,
    has_depth: bool,
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format("payload shorter than header declares"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("payload shorter than header declares"))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_frame<R: BufRead>(mut reader: R) -> Result<FrameObservation> {
    let mut line = String::new();
    reader
        .read_line(&mut line)
        .map_err(|e| Error::format(format!("reading frame header: {e}")))?;
    if !line.ends_with('\n') {
        return Err(Error::format("frame header is not newline terminated"));
    }
    let header: FrameHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::format(format!("bad frame header: {e}")))?;
    if header.magic != FRAME_MAGIC {
        return Err(Error::format(format!("bad magic '{}'", header.magic)));
    }
    let pose: [f64; 16] = header
        .pose
        .as_slice()
        .try_into()
        .map_err(|_| Error::format("pose must have 16 entries"))?;
    let intrinsics = CameraIntrinsics::new(
        header.fx,
        header.fy,
        header.cx,
        header.cy,
        header.width,
        header.height,
    )?;
    let pose = CameraPose::from_row_major(pose)?;
    if header.num_regions > 0 && header.feature_dim == 0 {
        return Err(Error::format("regions present but feature_dim is 0"));
    }

    let pixels = intrinsics.pixel_count();
    let depth = if header.has_depth {
        Some(read_f32s(&mut reader, pixels)?)
    } else {
        None
    };

    let mut regions = Vec::with_capacity(header.num_regions);
    for _ in 0..header.num_regions {
        let run_count = read_u32(&mut reader)? as usize;
        if run_count > pixels + 1 {
            return Err(Error::format("RLE run count exceeds image size"));
        }
        let mut runs = Vec::with_capacity(run_count);
        for _ in 0..run_count {
            runs.push(read_u32(&mut reader)?);
        }
        let mask = RleMask::from_runs(header.width, header.height, runs)?;
        let feature = read_f32s(&mut reader, header.feature_dim)?;
        let confidence = read_f32s(&mut reader, 1)?[0];
        regions.push(Region2D::new(mask, feature, confidence)?);
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(|e| Error::format(e.to_string()))? != 0 {
        return Err(Error::format("payload longer than header declares"));
    }

    let frame = FrameObservation {
        frame_id: header.frame_id,
        intrinsics,
        pose,
        depth,
        regions,
    };
    frame.validate()?;
    Ok(frame)
}

pub fn load_frame(path: impl AsRef<Path>) -> Result<FrameObservation> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_frame(BufReader::new(file))
}

pub fn write_frame<W: Write>(mut w: W, frame: &FrameObservation) -> Result<()> {
    frame.validate()?;
    let k = &frame.intrinsics;
    let header = FrameHeader {
        magic: FRAME_MAGIC.to_string(),
        frame_id: frame.frame_id,
        width: k.width,
        height: k.height,
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        pose: frame.pose.row_major().to_vec(),
        num_regions: frame.regions.len(),
        feature_dim: frame.feature_dim().unwrap_or(0),
        has_depth: frame.depth.is_some(),
    };
    let io = |e: std::io::Error| Error::format(format!("writing frame: {e}"));
    let json = serde_json::to_string(&header).map_err(|e| Error::format(e.to_string()))?;
    w.write_all(json.as_bytes()).map_err(io)?;
    w.write_all(b"\n").map_err(io)?;
    let mut buf = Vec::new();
    if let Some(depth) = &frame.depth {
        buf.reserve(depth.len() * 4);
        depth.iter().for_each(|d| buf.extend_from_slice(&d.to_le_bytes()));
    }
    for r in &frame.regions {
        let runs = r.mask.runs();
        buf.extend_from_slice(&(runs.len() as u32).to_le_bytes());
        runs.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        r.feature.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        buf.extend_from_slice(&r.confidence.to_le_bytes());
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

pub fn save_frame(frame: &FrameObservation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_frame(BufWriter::new(file), frame)
}
