//! JPEG serialization: derives optimal entropy tables from the actual
//! symbol stream, then emits one non-interleaved scan per component so the
//! stored block grid carries no interleave padding.

use super::huffman::{build_optimal_table, HuffmanTable};
use super::{block_grid, CoefficientImage, Component, QuantizedBlock};
use crate::error::{Error, Result};

/// Serialize a coefficient image to standard JPEG bytes.
///
/// Output is deterministic: equal inputs serialize to equal bytes.
pub fn serialize_jpeg(image: &CoefficientImage) -> Result<Vec<u8>> {
    serialize_with_restarts(image, 0)
}

/// Restart-marker emission exists to exercise the decoder; the public
/// writer never emits restarts. Interval counts blocks within each scan.
pub(crate) fn serialize_with_restarts(image: &CoefficientImage, interval: u16) -> Result<Vec<u8>> {
    validate(image)?;
    let interval = interval as usize;
    let nslots = if image.components.len() == 1 { 1 } else { 2 };

    // Pass 1: symbol frequencies per table slot.
    let mut dc_freq = vec![[0u32; 256]; nslots];
    let mut ac_freq = vec![[0u32; 256]; nslots];
    for (i, comp) in image.components.iter().enumerate() {
        let slot = slot_for(i);
        let mut sink = FreqSink {
            dc: &mut dc_freq[slot],
            ac: &mut ac_freq[slot],
        };
        encode_scan(comp, interval, &mut sink)?;
    }
    let mut dc_tables = Vec::with_capacity(nslots);
    let mut ac_tables = Vec::with_capacity(nslots);
    for s in 0..nslots {
        dc_tables.push(build_optimal_table(&dc_freq[s])?);
        ac_tables.push(build_optimal_table(&ac_freq[s])?);
    }

    // Pass 2: emit the marker stream.
    let mut out = vec![0xFF, 0xD8];
    push_segment(
        &mut out,
        0xE0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );
    for tq in 0..4u8 {
        if !image.components.iter().any(|c| c.quant_table == tq) {
            continue;
        }
        let table = image.quant_tables[tq as usize].as_ref().unwrap();
        let mut payload = Vec::with_capacity(65);
        payload.push(tq);
        payload.extend(table.iter().map(|&e| e as u8));
        push_segment(&mut out, 0xDB, &payload);
    }
    let mut sof = vec![
        8,
        (image.height >> 8) as u8,
        image.height as u8,
        (image.width >> 8) as u8,
        image.width as u8,
        image.components.len() as u8,
    ];
    for comp in &image.components {
        sof.extend_from_slice(&[comp.id, comp.h << 4 | comp.v, comp.quant_table]);
    }
    push_segment(&mut out, 0xC0, &sof);
    for s in 0..nslots {
        push_dht(&mut out, 0, s as u8, &dc_tables[s]);
        push_dht(&mut out, 1, s as u8, &ac_tables[s]);
    }
    if interval > 0 {
        push_segment(&mut out, 0xDD, &[(interval >> 8) as u8, interval as u8]);
    }
    for (i, comp) in image.components.iter().enumerate() {
        let slot = slot_for(i);
        push_segment(
            &mut out,
            0xDA,
            &[1, comp.id, (slot as u8) << 4 | slot as u8, 0, 63, 0],
        );
        let mut sink = BitSink {
            writer: BitWriter::new(),
            dc_map: dc_tables[slot].encode_map(),
            ac_map: ac_tables[slot].encode_map(),
        };
        encode_scan(comp, interval, &mut sink)?;
        sink.writer.pad_to_byte();
        out.extend_from_slice(&sink.writer.out);
    }
    out.extend_from_slice(&[0xFF, 0xD9]);
    Ok(out)
}

fn slot_for(component_index: usize) -> usize {
    usize::from(component_index != 0)
}

fn validate(image: &CoefficientImage) -> Result<()> {
    let n = image.components.len();
    if n != 1 && n != 3 {
        return Err(Error::Unsupported(format!(
            "{n} components (expected 1 or 3)"
        )));
    }
    if image.width == 0 || image.height == 0 {
        return Err(Error::format("zero image dimension"));
    }
    if image.width > 65535 || image.height > 65535 {
        return Err(Error::format("image dimensions exceed the format limit"));
    }
    let h_max = image.h_max();
    let v_max = image.v_max();
    for (ci, comp) in image.components.iter().enumerate() {
        if !(1..=4).contains(&comp.h) || !(1..=4).contains(&comp.v) {
            return Err(Error::format(format!(
                "component {} sampling factors {}x{}",
                comp.id, comp.h, comp.v
            )));
        }
        if image.components[..ci].iter().any(|c| c.id == comp.id) {
            return Err(Error::format(format!("duplicate component id {}", comp.id)));
        }
        let (bw, bh) = block_grid(image.width, image.height, comp.h, comp.v, h_max, v_max);
        if (comp.blocks_w, comp.blocks_h) != (bw, bh) || comp.blocks.len() != bw * bh {
            return Err(Error::format(format!(
                "component {} holds {} blocks in a {}x{} grid, dimensions need {}x{}",
                comp.id,
                comp.blocks.len(),
                comp.blocks_w,
                comp.blocks_h,
                bw,
                bh
            )));
        }
        let table = image.quant_table_for(comp).ok_or_else(|| {
            Error::format(format!(
                "component {} references missing quantization table {}",
                comp.id, comp.quant_table
            ))
        })?;
        if table.iter().any(|&e| e == 0 || e > 255) {
            return Err(Error::format(format!(
                "quantization table {} entry outside 1..=255",
                comp.quant_table
            )));
        }
        for (i, block) in comp.blocks.iter().enumerate() {
            let dc_ok = (-1024..=1023).contains(&block.0[0]);
            let ac_ok = block.0[1..].iter().all(|&v| (-1023..=1023).contains(&v));
            if !dc_ok || !ac_ok {
                return Err(Error::format(format!(
                    "coefficient out of range in component {} block {i}",
                    comp.id
                )));
            }
        }
    }
    Ok(())
}

fn push_segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    let len = (payload.len() + 2) as u16;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
}

fn push_dht(out: &mut Vec<u8>, class: u8, slot: u8, table: &HuffmanTable) {
    let mut payload = Vec::with_capacity(17 + table.values().len());
    payload.push(class << 4 | slot);
    payload.extend_from_slice(table.bits());
    payload.extend_from_slice(table.values());
    push_segment(out, 0xC4, &payload);
}

/// Receives the symbol stream of a scan; one implementation counts
/// frequencies, the other writes bits.
trait SymbolSink {
    fn dc(&mut self, sym: u8, bits: u32, nbits: u32) -> Result<()>;
    fn ac(&mut self, sym: u8, bits: u32, nbits: u32) -> Result<()>;
    fn restart(&mut self, seq: u8) -> Result<()>;
}

struct FreqSink<'a> {
    dc: &'a mut [u32; 256],
    ac: &'a mut [u32; 256],
}

impl SymbolSink for FreqSink<'_> {
    fn dc(&mut self, sym: u8, _bits: u32, _nbits: u32) -> Result<()> {
        self.dc[sym as usize] += 1;
        Ok(())
    }
    fn ac(&mut self, sym: u8, _bits: u32, _nbits: u32) -> Result<()> {
        self.ac[sym as usize] += 1;
        Ok(())
    }
    fn restart(&mut self, _seq: u8) -> Result<()> {
        Ok(())
    }
}

struct BitSink {
    writer: BitWriter,
    dc_map: [Option<(u16, u8)>; 256],
    ac_map: [Option<(u16, u8)>; 256],
}

impl SymbolSink for BitSink {
    fn dc(&mut self, sym: u8, bits: u32, nbits: u32) -> Result<()> {
        let (code, len) = self.dc_map[sym as usize]
            .ok_or_else(|| Error::format(format!("DC symbol {sym:#04x} missing from table")))?;
        self.writer.put(u32::from(code), u32::from(len));
        self.writer.put(bits, nbits);
        Ok(())
    }
    fn ac(&mut self, sym: u8, bits: u32, nbits: u32) -> Result<()> {
        let (code, len) = self.ac_map[sym as usize]
            .ok_or_else(|| Error::format(format!("AC symbol {sym:#04x} missing from table")))?;
        self.writer.put(u32::from(code), u32::from(len));
        self.writer.put(bits, nbits);
        Ok(())
    }
    fn restart(&mut self, seq: u8) -> Result<()> {
        self.writer.pad_to_byte();
        self.writer.out.extend_from_slice(&[0xFF, 0xD0 + seq]);
        Ok(())
    }
}

fn encode_scan<S: SymbolSink>(comp: &Component, interval: usize, sink: &mut S) -> Result<()> {
    let mut pred = 0i32;
    let mut seq = 0u8;
    for (i, block) in comp.blocks.iter().enumerate() {
        if interval > 0 && i > 0 && i % interval == 0 {
            sink.restart(seq)?;
            seq = (seq + 1) & 7;
            pred = 0;
        }
        encode_block(block, &mut pred, sink)?;
    }
    Ok(())
}

fn encode_block<S: SymbolSink>(block: &QuantizedBlock, pred: &mut i32, sink: &mut S) -> Result<()> {
    let diff = block.0[0] - *pred;
    *pred = block.0[0];
    let t = category(diff);
    sink.dc(t as u8, amplitude_bits(diff, t), t)?;
    let mut run = 0u8;
    for &v in &block.0[1..] {
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            sink.ac(0xF0, 0, 0)?;
            run -= 16;
        }
        let s = category(v);
        sink.ac(run << 4 | s as u8, amplitude_bits(v, s), s)?;
        run = 0;
    }
    if run > 0 {
        sink.ac(0x00, 0, 0)?;
    }
    Ok(())
}

/// Magnitude category: bit length of |v|.
fn category(v: i32) -> u32 {
    32 - v.unsigned_abs().leading_zeros()
}

/// The `t` low bits encoding `v`: the value itself when positive, its
/// one's-complement offset when negative.
fn amplitude_bits(v: i32, t: u32) -> u32 {
    if t == 0 {
        return 0;
    }
    if v < 0 {
        (v + (1 << t) - 1) as u32
    } else {
        v as u32
    }
}

/// MSB-first bit accumulator with 0xFF byte stuffing.
struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            out: Vec::new(),
            acc: 0,
            nbits: 0,
        }
    }

    fn put(&mut self, bits: u32, n: u32) {
        debug_assert!(n <= 16);
        debug_assert!(n == 32 || bits < (1u32 << n) || n == 0);
        self.acc = self.acc << n | bits;
        self.nbits += n;
        while self.nbits >= 8 {
            let b = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(b);
            if b == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u32 << self.nbits).wrapping_sub(1);
    }

    /// Fill the current partial byte with one bits.
    fn pad_to_byte(&mut self) {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1 << pad) - 1, pad);
        }
    }
}
