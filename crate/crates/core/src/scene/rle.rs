use std::ops::Range;

use crate::error::{Error, Result};

/// Binary mask stored as row-major run lengths. The first run counts
/// background pixels (possibly zero) and runs alternate from there.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

impl RleMask {
    /// Wraps decoded run lengths, checking they cover the image exactly.
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self> {
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::format(format!(
                "RLE length mismatch: runs sum to {total}, expected {expected}"
            )));
        }
        Ok(Self {
            width,
            height,
            runs,
        })
    }

    /// Canonical encoding of a row-major bitmap.
    pub fn encode(width: u32, height: u32, bits: &[bool]) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::validation("bitmap size does not match width x height"));
        }
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        Ok(Self {
            width,
            height,
            runs,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            runs: vec![width * height],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            runs: vec![0, width * height],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    /// Half-open pixel ranges (row-major linear indices) that are set.
    pub fn foreground_runs(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        let mut start = 0usize;
        self.runs.iter().enumerate().filter_map(move |(i, &len)| {
            let range = start..start + len as usize;
            start = range.end;
            (i % 2 == 1 && !range.is_empty()).then_some(range)
        })
    }

    pub fn decode(&self) -> Vec<bool> {
        let mut bits = vec![false; self.width as usize * self.height as usize];
        for range in self.foreground_runs() {
            bits[range].fill(true);
        }
        bits
    }

    pub fn area(&self) -> usize {
        self.foreground_runs().map(|r| r.len()).sum()
    }
}
