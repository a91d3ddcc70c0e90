//! Canonical Huffman tables: construction from marker-segment data,
//! per-length decode tables, and optimal table derivation from symbol
//! frequencies.

use crate::error::{Error, Result};

/// A canonical Huffman table: code-length histogram plus symbols in
/// code order, as carried by a table-definition segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    bits: [u8; 16],
    values: Vec<u8>,
    // Per-length decode tables, indexed by code length 1..=16.
    mincode: [u32; 17],
    maxcode: [i64; 17],
    valptr: [usize; 17],
}

impl HuffmanTable {
    pub fn new(bits: [u8; 16], values: Vec<u8>) -> Result<Self> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != values.len() {
            return Err(Error::format(format!(
                "code length histogram names {total} symbols, segment carries {}",
                values.len()
            )));
        }
        if total == 0 || total > 256 {
            return Err(Error::format(format!("table holds {total} symbols")));
        }
        let mut mincode = [0u32; 17];
        let mut maxcode = [-1i64; 17];
        let mut valptr = [0usize; 17];
        let mut code = 0u32;
        let mut k = 0usize;
        for len in 1..=16usize {
            let count = bits[len - 1] as usize;
            if count > 0 {
                if code + count as u32 > (1 << len) {
                    return Err(Error::format(format!(
                        "code space overflow at length {len}"
                    )));
                }
                valptr[len] = k;
                mincode[len] = code;
                maxcode[len] = (code + count as u32 - 1) as i64;
                code += count as u32;
                k += count;
            }
            code <<= 1;
        }
        Ok(HuffmanTable {
            bits,
            values,
            mincode,
            maxcode,
            valptr,
        })
    }

    pub fn bits(&self) -> &[u8; 16] {
        &self.bits
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// The symbol for `code` read as `len` bits, if that bit string is a
    /// complete code of this table.
    pub fn symbol(&self, len: usize, code: u32) -> Option<u8> {
        if len == 0 || len > 16 {
            return None;
        }
        let max = self.maxcode[len];
        if max >= 0 && (code as i64) <= max && code >= self.mincode[len] {
            Some(self.values[self.valptr[len] + (code - self.mincode[len]) as usize])
        } else {
            None
        }
    }

    /// Encoder view: (code, length) per symbol, None for symbols not in
    /// the table.
    pub fn encode_map(&self) -> [Option<(u16, u8)>; 256] {
        let mut map = [None; 256];
        let mut code = 0u32;
        let mut k = 0usize;
        for len in 1..=16u8 {
            for _ in 0..self.bits[len as usize - 1] {
                map[self.values[k] as usize] = Some((code as u16, len));
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        map
    }
}

/// Derives a length-limited optimal table for the observed symbol
/// frequencies. A reserved, never-emitted symbol keeps the all-ones code
/// unused; code lengths beyond 16 are folded back down.
pub fn build_optimal_table(freq: &[u32; 256]) -> Result<HuffmanTable> {
    if freq.iter().all(|&f| f == 0) {
        return Err(Error::format("no symbols observed, nothing to code"));
    }
    // Index 256 is the reserved symbol.
    let mut freq: Vec<u64> = freq.iter().map(|&f| f as u64).chain([1u64]).collect();
    let mut codesize = [0u32; 257];
    let mut others = [usize::MAX; 257];

    loop {
        // Two least-frequent chains; ties go to the larger symbol index.
        let mut v1 = usize::MAX;
        let mut v2 = usize::MAX;
        for i in 0..257 {
            if freq[i] == 0 {
                continue;
            }
            if v1 == usize::MAX || freq[i] <= freq[v1] {
                v2 = v1;
                v1 = i;
            } else if v2 == usize::MAX || freq[i] <= freq[v2] {
                v2 = i;
            }
        }
        if v2 == usize::MAX {
            break;
        }
        freq[v1] += freq[v2];
        freq[v2] = 0;
        codesize[v1] += 1;
        let mut t = v1;
        while others[t] != usize::MAX {
            t = others[t];
            codesize[t] += 1;
        }
        others[t] = v2;
        codesize[v2] += 1;
        let mut t = v2;
        while others[t] != usize::MAX {
            t = others[t];
            codesize[t] += 1;
        }
    }

    // With at most 257 leaves, whenever the longest length i exceeds 16
    // the counts at i and i-1 alone cannot satisfy Kraft equality, so a
    // shorter code always exists for the fold-back to split.
    let max_size = *codesize.iter().max().unwrap() as usize;
    let mut counts = vec![0u32; max_size.max(17) + 1];
    for &size in codesize.iter() {
        if size > 0 {
            counts[size as usize] += 1;
        }
    }

    // Fold lengths beyond 16 back into the allowed range.
    let mut i = counts.len() - 1;
    while i > 16 {
        if counts[i] > 0 {
            let mut j = i - 2;
            while counts[j] == 0 {
                j -= 1;
            }
            counts[i] -= 2;
            counts[i - 1] += 1;
            counts[j + 1] += 2;
            counts[j] -= 1;
        } else {
            i -= 1;
        }
    }
    // Drop the code point held by the reserved symbol.
    let mut i = 16;
    while counts[i] == 0 {
        i -= 1;
    }
    counts[i] -= 1;

    let mut bits = [0u8; 16];
    for len in 1..=16 {
        bits[len - 1] = counts[len] as u8;
    }
    // Symbols ordered by pre-fold code length, then by symbol value.
    let mut order: Vec<(u32, usize)> = (0..256)
        .filter(|&sym| codesize[sym] > 0)
        .map(|sym| (codesize[sym], sym))
        .collect();
    order.sort_unstable();
    let values = order.into_iter().map(|(_, sym)| sym as u8).collect();
    HuffmanTable::new(bits, values)
}
