//! Cascaded byte-indexed decode tables.
//!
//! The table is a flat array of 256-entry subtables. Subtable 0 resolves
//! the first byte of the bit window. An entry is either a symbol (0..=15)
//! or a pointer `256 - i` (240..=255) to second-level subtable `i`, which
//! resolves the second byte. The last subtable maps each symbol to its code
//! length. Entries no codeword reaches hold the lowest present symbol, so
//! decoding zero padding never faults.

use crate::error::{Error, Result};
use crate::huffman::CodeTable;

pub const SUBTABLE_BITS: u32 = 8;
const SUBTABLE_LEN: usize = 1 << SUBTABLE_BITS;
/// Smallest entry value interpreted as a pointer.
pub const POINTER_MIN: u8 = 240;
const MAX_SUBTABLES: usize = 256 - POINTER_MIN as usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadedLut {
    entries: Vec<u8>,
    n_luts: usize,
}

impl CascadedLut {
    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn n_luts(&self) -> usize {
        self.n_luts
    }

    pub fn subtable(&self, index: usize) -> &[u8] {
        &self.entries[index * SUBTABLE_LEN..(index + 1) * SUBTABLE_LEN]
    }

    #[inline]
    pub fn code_length(&self, symbol: u8) -> u8 {
        self.entries[SUBTABLE_LEN * (self.n_luts - 1) + symbol as usize]
    }

    /// Decodes the codeword at the top of a 16-bit MSB-aligned window,
    /// returning `(symbol, code length)`.
    #[inline]
    pub fn decode_one(&self, window16: u16) -> (u8, u8) {
        let mut x = self.entries[(window16 >> 8) as usize];
        if x >= POINTER_MIN {
            x = self.entries[SUBTABLE_LEN * (256 - x as usize) + (window16 & 0xFF) as usize];
        }
        (x, self.code_length(x))
    }
}

/// Builds the decode subtables for `width`-bit steps, breadth first: the
/// root, then every `width`-aligned prefix of a longer code in order of
/// first appearance. Returns the subtables without the length table.
pub(crate) fn build_decode_subtables(table: &CodeTable, width: u32) -> Result<Vec<Vec<u8>>> {
    let fallback = table.lowest_symbol();
    let n = 1usize << width;
    // (prefix bits, prefix length) per subtable
    let mut prefixes: Vec<(u32, u32)> = vec![(0, 0)];
    let mut subtables: Vec<Vec<u8>> = Vec::new();

    let mut idx = 0;
    while idx < prefixes.len() {
        let (prefix, plen) = prefixes[idx];
        let mut sub = vec![fallback; n];
        for entry in 0..n as u32 {
            let path = (prefix << width) | entry;
            let path_len = plen + width;
            // a code that ends inside this step
            let hit = table.symbols().find(|&s| {
                let len = table.length(s) as u32;
                let code = table.code(s).unwrap() as u32;
                len > plen && len <= path_len && (path >> (path_len - len)) == code
            });
            if let Some(s) = hit {
                sub[entry as usize] = s;
                continue;
            }
            // a longer code continues through this entry
            let longer = table.symbols().any(|s| {
                let len = table.length(s) as u32;
                let code = table.code(s).unwrap() as u32;
                len > path_len && (code >> (len - path_len)) == path
            });
            if longer {
                let child = prefixes.len();
                if child > MAX_SUBTABLES {
                    return Err(Error::PointerSpaceExhausted(child));
                }
                prefixes.push((path, path_len));
                sub[entry as usize] = (256 - child) as u8;
            }
        }
        subtables.push(sub);
        idx += 1;
    }
    Ok(subtables)
}

/// Builds the 8-bit cascaded table for `table`.
pub fn build_lut(table: &CodeTable) -> Result<CascadedLut> {
    let subtables = build_decode_subtables(table, SUBTABLE_BITS)?;
    let n_luts = subtables.len() + 1;
    let mut entries = Vec::with_capacity(n_luts * SUBTABLE_LEN);
    for sub in &subtables {
        entries.extend_from_slice(sub);
    }
    let mut lengths = [0u8; SUBTABLE_LEN];
    lengths[..16].copy_from_slice(table.lengths());
    entries.extend_from_slice(&lengths);
    Ok(CascadedLut { entries, n_luts })
}
