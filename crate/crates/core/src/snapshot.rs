//! Bank (`.ovb`) and index (`.ovi`) snapshots.
//!
//! Both are a single JSON manifest line followed by little-endian binary
//! payloads, one per instance, in manifest order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, Instance3D, MemoryBank};
use crate::retrieval::{FinalInstance, InstanceIndex};

pub const BANK_MAGIC: &str = "OVB1";
pub const INDEX_MAGIC: &str = "OVI1";

#[derive(Serialize, Deserialize)]
struct BankManifest {
    magic: String,
    config: FusionConfig,
    frames_seen: u64,
    next_id: u32,
    feature_dim: Option<usize>,
    cloud_len: Option<usize>,
    last_frame_id: Option<u64>,
    instances: Vec<BankEntry>,
}

#[derive(Serialize, Deserialize)]
struct BankEntry {
    id: u32,
    n_regions: u32,
    created_at_frame: u64,
    largest_view_size: u32,
    segment_sizes: Vec<u32>,
    num_points: usize,
    num_views: usize,
}

#[derive(Serialize, Deserialize)]
struct IndexManifest {
    magic: String,
    feature_dim: usize,
    kmeans_k: usize,
    seed: u64,
    instances: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    id: u32,
    parent_id: u32,
    num_points: usize,
    num_representatives: usize,
    source_view_count: u32,
}

fn put_u32s<W: Write>(w: &mut W, v: &[u32]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn put_f32s<W: Write>(w: &mut W, v: &[f32]) -> std::io::Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn take_words<R: Read>(r: &mut R, n: usize) -> Result<Vec<[u8; 4]>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("payload shorter than manifest declares"))?;
    Ok(buf.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect())
}

fn take_u32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<u32>> {
    Ok(take_words(r, n)?.into_iter().map(u32::from_le_bytes).collect())
}

fn take_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f32>> {
    Ok(take_words(r, n)?.into_iter().map(f32::from_le_bytes).collect())
}

fn read_manifest<R: BufRead, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<T> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)
        .map_err(|e| Error::format(format!("reading manifest: {e}")))?;
    if line.pop() != Some(b'\n') {
        return Err(Error::format("manifest is not newline-terminated"));
    }
    serde_json::from_slice(&line).map_err(|e| Error::format(format!("bad manifest: {e}")))
}

fn expect_end<R: Read>(r: &mut R) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::format("payload longer than manifest declares")),
        Err(e) => Err(Error::format(format!("reading payload: {e}"))),
    }
}

fn check_magic(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::format(format!("bad magic '{found}', expected '{expected}'")));
    }
    Ok(())
}

fn check_sorted(points: &[u32], what: &str, id: u32) -> Result<()> {
    if points.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::format(format!("{what} {id}: point indices not strictly increasing")));
    }
    Ok(())
}

pub fn write_bank<W: Write>(mut w: W, bank: &MemoryBank) -> Result<()> {
    let dim = bank.feature_dim.unwrap_or(0);
    let manifest = BankManifest {
        magic: BANK_MAGIC.into(),
        config: bank.config,
        frames_seen: bank.frames_seen,
        next_id: bank.next_id,
        feature_dim: bank.feature_dim,
        cloud_len: bank.cloud_len,
        last_frame_id: bank.last_frame_id,
        instances: bank
            .instances
            .iter()
            .map(|i| BankEntry {
                id: i.id,
                n_regions: i.n_regions,
                created_at_frame: i.created_at_frame,
                largest_view_size: i.largest_view_size,
                segment_sizes: i.segment_sizes.clone(),
                num_points: i.points.len(),
                num_views: i.view_features.len(),
            })
            .collect(),
    };
    let io = |e| Error::format(format!("writing bank: {e}"));
    serde_json::to_writer(&mut w, &manifest).map_err(|e| Error::format(e.to_string()))?;
    w.write_all(b"\n").map_err(io)?;
    for i in &bank.instances {
        if i.mean_feature.len() != dim || i.view_features.iter().any(|v| v.len() != dim) {
            return Err(Error::Invariant(format!("instance {} has inconsistent feature sizes", i.id)));
        }
        put_u32s(&mut w, &i.points).map_err(io)?;
        put_u32s(&mut w, &i.det_count).map_err(io)?;
        put_u32s(&mut w, &i.vis_count).map_err(io)?;
        put_f32s(&mut w, &i.mean_feature).map_err(io)?;
        put_f32s(&mut w, &i.largest_view_feature).map_err(io)?;
        for v in &i.view_features {
            put_f32s(&mut w, v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_bank<R: BufRead>(mut r: R) -> Result<MemoryBank> {
    let m: BankManifest = read_manifest(&mut r)?;
    check_magic(&m.magic, BANK_MAGIC)?;
    m.config.validate()?;
    let dim = m.feature_dim.unwrap_or(0);
    let mut instances = Vec::with_capacity(m.instances.len());
    for e in &m.instances {
        let points = take_u32s(&mut r, e.num_points)?;
        check_sorted(&points, "instance", e.id)?;
        let det_count = take_u32s(&mut r, e.num_points)?;
        let vis_count = take_u32s(&mut r, e.num_points)?;
        let mean_feature = take_f32s(&mut r, dim)?;
        let largest_view_feature = take_f32s(&mut r, dim)?;
        let view_features = (0..e.num_views).map(|_| take_f32s(&mut r, dim)).collect::<Result<_>>()?;
        let mut inst = Instance3D {
            id: e.id,
            points,
            det_count,
            vis_count,
            mean_feature,
            unit_mean: Vec::new(),
            n_regions: e.n_regions,
            view_features,
            segment_sizes: e.segment_sizes.clone(),
            largest_view_size: e.largest_view_size,
            largest_view_feature,
            created_at_frame: e.created_at_frame,
        };
        inst.refresh();
        instances.push(inst);
    }
    expect_end(&mut r)?;
    if instances.windows(2).any(|w| w[0].id >= w[1].id) {
        return Err(Error::format("instance ids not strictly increasing"));
    }
    if instances.last().is_some_and(|i| i.id >= m.next_id) {
        return Err(Error::format("next_id does not exceed every instance id"));
    }
    let mut bank = MemoryBank::new(m.config)?;
    bank.instances = instances;
    bank.frames_seen = m.frames_seen;
    bank.next_id = m.next_id;
    bank.feature_dim = m.feature_dim;
    bank.cloud_len = m.cloud_len;
    bank.last_frame_id = m.last_frame_id;
    Ok(bank)
}

pub fn write_index<W: Write>(mut w: W, index: &InstanceIndex) -> Result<()> {
    let manifest = IndexManifest {
        magic: INDEX_MAGIC.into(),
        feature_dim: index.feature_dim,
        kmeans_k: index.kmeans_k,
        seed: index.seed,
        instances: index
            .instances
            .iter()
            .map(|i| IndexEntry {
                id: i.id,
                parent_id: i.parent_id,
                num_points: i.point_indices.len(),
                num_representatives: i.representatives.len(),
                source_view_count: i.source_view_count,
            })
            .collect(),
    };
    let io = |e| Error::format(format!("writing index: {e}"));
    serde_json::to_writer(&mut w, &manifest).map_err(|e| Error::format(e.to_string()))?;
    w.write_all(b"\n").map_err(io)?;
    for i in &index.instances {
        put_u32s(&mut w, &i.point_indices).map_err(io)?;
        put_f32s(&mut w, &i.mean_feature).map_err(io)?;
        put_f32s(&mut w, &i.largest_view_feature).map_err(io)?;
        for c in &i.representatives {
            put_f32s(&mut w, c).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_index<R: BufRead>(mut r: R) -> Result<InstanceIndex> {
    let m: IndexManifest = read_manifest(&mut r)?;
    check_magic(&m.magic, INDEX_MAGIC)?;
    let dim = m.feature_dim;
    let mut instances = Vec::with_capacity(m.instances.len());
    for e in &m.instances {
        let point_indices = take_u32s(&mut r, e.num_points)?;
        check_sorted(&point_indices, "index instance", e.id)?;
        instances.push(FinalInstance {
            id: e.id,
            parent_id: e.parent_id,
            point_indices,
            mean_feature: take_f32s(&mut r, dim)?,
            largest_view_feature: take_f32s(&mut r, dim)?,
            representatives: (0..e.num_representatives)
                .map(|_| take_f32s(&mut r, dim))
                .collect::<Result<_>>()?,
            source_view_count: e.source_view_count,
        });
    }
    expect_end(&mut r)?;
    Ok(InstanceIndex {
        feature_dim: dim,
        kmeans_k: m.kmeans_k,
        seed: m.seed,
        instances,
    })
}

fn save_with<F: FnOnce(&mut BufWriter<File>) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

pub fn save_bank(bank: &MemoryBank, path: impl AsRef<Path>) -> Result<()> {
    save_with(path.as_ref(), |w| write_bank(w, bank))
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<MemoryBank> {
    read_bank(open(path.as_ref())?)
}

pub fn save_index(index: &InstanceIndex, path: impl AsRef<Path>) -> Result<()> {
    save_with(path.as_ref(), |w| write_index(w, index))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<InstanceIndex> {
    read_index(open(path.as_ref())?)
}
