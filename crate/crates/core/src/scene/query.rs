use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vector;

/// An encoded text query. The stored feature is unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub feature: Vec<f32>,
    pub label: Option<String>,
}

impl QueryEmbedding {
    pub fn new(mut feature: Vec<f32>, label: Option<String>) -> Result<Self> {
        if feature.is_empty() {
            return Err(Error::validation("query embedding is empty"));
        }
        if !vector::normalize_in_place(&mut feature) {
            return Err(Error::validation("query embedding has zero norm or non-finite entries"));
        }
        Ok(Self { feature, label })
    }

    pub fn dim(&self) -> usize {
        self.feature.len()
    }
}

/// Reads `u32` dimension followed by that many `f32` values (little endian).
pub fn read_query<R: Read>(mut r: R, label: Option<String>) -> Result<QueryEmbedding> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::format(format!("reading query: {e}")))?;
    if buf.len() < 4 {
        return Err(Error::format("query file too short"));
    }
    let dim = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    if buf.len() != 4 + dim * 4 {
        return Err(Error::format(format!(
            "query payload is {} bytes, expected {}",
            buf.len() - 4,
            dim * 4
        )));
    }
    let feature = buf[4..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    QueryEmbedding::new(feature, label)
}

/// Loads a `.qe` file; the label defaults to the file stem.
pub fn load_query(path: impl AsRef<Path>) -> Result<QueryEmbedding> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    read_query(BufReader::new(file), label)
}

pub fn write_query<W: Write>(mut w: W, feature: &[f32]) -> std::io::Result<()> {
    w.write_all(&(feature.len() as u32).to_le_bytes())?;
    for v in feature {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn save_query(q: &QueryEmbedding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_query(BufWriter::new(file), &q.feature).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_embedding_is_rejected() {
        let mut buf = Vec::new();
        write_query(&mut buf, &[0.0; 512]).unwrap();
        assert!(read_query(&buf[..], None).is_err());
    }

    #[test]
    fn round_trip_and_normalization() {
        let mut buf = Vec::new();
        write_query(&mut buf, &[0.0, 2.0]).unwrap();
        let q = read_query(&buf[..], Some("lamp".into())).unwrap();
        assert_eq!(q.feature, vec![0.0, 1.0]);
        let mut again = Vec::new();
        write_query(&mut again, &q.feature).unwrap();
        assert_eq!(read_query(&again[..], None).unwrap().feature, q.feature);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut buf = Vec::new();
        write_query(&mut buf, &[1.0, 2.0, 3.0]).unwrap();
        assert!(read_query(&buf[..buf.len() - 2], None).is_err());
    }
}
