//! Marker-stream parsing and baseline entropy decoding.
//!
//! Interleaved scans decode into the MCU-padded block grid and are cropped
//! to the canonical grid afterwards; non-interleaved scans address the
//! canonical grid directly. Errors carry the byte offset of the failure.

use super::huffman::HuffmanTable;
use super::{block_grid, CoefficientImage, Component, QuantizedBlock};
use crate::error::{Error, Result};

const MARKER_SOF0: u8 = 0xC0;
const MARKER_SOF1: u8 = 0xC1;
const MARKER_DHT: u8 = 0xC4;
const MARKER_SOI: u8 = 0xD8;
const MARKER_EOI: u8 = 0xD9;
const MARKER_SOS: u8 = 0xDA;
const MARKER_DQT: u8 = 0xDB;
const MARKER_DNL: u8 = 0xDC;
const MARKER_DRI: u8 = 0xDD;
const MARKER_COM: u8 = 0xFE;
const MARKER_TEM: u8 = 0x01;

/// Parse a baseline JPEG into quantized coefficient blocks.
pub fn parse_jpeg(bytes: &[u8]) -> Result<CoefficientImage> {
    Parser::new(bytes).run()
}

struct FrameComp {
    id: u8,
    h: u8,
    v: u8,
    tq: u8,
    /// Canonical block grid (no interleave padding).
    blocks_w: usize,
    blocks_h: usize,
    /// MCU-padded grid the decoder writes into.
    padded_w: usize,
    blocks: Vec<QuantizedBlock>,
    scanned: bool,
}

struct Frame {
    width: u32,
    height: u32,
    mcu_cols: usize,
    mcu_rows: usize,
    components: Vec<FrameComp>,
}

struct Parser<'a> {
    data: &'a [u8],
    pos: usize,
    quant: [Option<[u16; 64]>; 4],
    dc_tables: [Option<HuffmanTable>; 4],
    ac_tables: [Option<HuffmanTable>; 4],
    restart_interval: usize,
    frame: Option<Frame>,
}

impl<'a> Parser<'a> {
    fn new(data: &'a [u8]) -> Self {
        Parser {
            data,
            pos: 0,
            quant: [None; 4],
            dc_tables: [None, None, None, None],
            ac_tables: [None, None, None, None],
            restart_interval: 0,
            frame: None,
        }
    }

    fn run(mut self) -> Result<CoefficientImage> {
        if self.read_u8()? != 0xFF || self.read_u8()? != MARKER_SOI {
            return Err(Error::format_at(0, "missing start-of-image marker"));
        }
        loop {
            let at = self.pos;
            let marker = self.read_marker()?;
            match marker {
                MARKER_EOI => return self.finish(),
                MARKER_SOF0 | MARKER_SOF1 => self.read_frame(at)?,
                0xC2..=0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                    return Err(Error::Unsupported(format!(
                        "frame type 0xFF{marker:02X} (only baseline and extended sequential Huffman)"
                    )));
                }
                0xCC => return Err(Error::Unsupported("arithmetic coding".into())),
                MARKER_DHT => self.read_dht()?,
                MARKER_DQT => self.read_dqt()?,
                MARKER_DRI => self.read_dri()?,
                MARKER_DNL => return Err(Error::Unsupported("deferred line count segment".into())),
                MARKER_SOS => self.read_scan(at)?,
                0xE0..=0xEF | MARKER_COM => {
                    self.segment()?;
                }
                MARKER_TEM => {}
                0xD0..=0xD7 => {
                    return Err(Error::format_at(at, "restart marker outside entropy data"))
                }
                _ => {
                    return Err(Error::format_at(
                        at,
                        format!("unexpected marker 0xFF{marker:02X}"),
                    ))
                }
            }
        }
    }

    fn finish(self) -> Result<CoefficientImage> {
        let frame = self
            .frame
            .ok_or_else(|| Error::format("no frame header before end of image"))?;
        let mut components = Vec::with_capacity(frame.components.len());
        for comp in frame.components {
            if !comp.scanned {
                return Err(Error::format(format!(
                    "component {} has no scan data",
                    comp.id
                )));
            }
            if self.quant[comp.tq as usize].is_none() {
                return Err(Error::format(format!(
                    "component {} references missing quantization table {}",
                    comp.id, comp.tq
                )));
            }
            // Crop interleave padding down to the canonical grid.
            let mut blocks = Vec::with_capacity(comp.blocks_w * comp.blocks_h);
            for by in 0..comp.blocks_h {
                for bx in 0..comp.blocks_w {
                    blocks.push(comp.blocks[by * comp.padded_w + bx].clone());
                }
            }
            components.push(Component {
                id: comp.id,
                h: comp.h,
                v: comp.v,
                quant_table: comp.tq,
                blocks_w: comp.blocks_w,
                blocks_h: comp.blocks_h,
                blocks,
            });
        }
        Ok(CoefficientImage {
            width: frame.width,
            height: frame.height,
            components,
            quant_tables: self.quant,
        })
    }

    fn read_u8(&mut self) -> Result<u8> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::format_at(self.pos, "unexpected end of file"))?;
        self.pos += 1;
        Ok(b)
    }

    fn read_u16(&mut self) -> Result<u16> {
        let hi = self.read_u8()?;
        let lo = self.read_u8()?;
        Ok(u16::from(hi) << 8 | u16::from(lo))
    }

    /// Next marker code, tolerating fill bytes (repeated 0xFF).
    fn read_marker(&mut self) -> Result<u8> {
        let at = self.pos;
        if self.read_u8()? != 0xFF {
            return Err(Error::format_at(at, "expected a marker"));
        }
        loop {
            let code = self.read_u8()?;
            if code == 0xFF {
                continue;
            }
            if code == 0x00 {
                return Err(Error::format_at(at, "stuffed byte outside entropy data"));
            }
            return Ok(code);
        }
    }

    /// Read a segment length and bound-check its payload; returns the
    /// payload range and leaves `pos` at the payload start.
    fn segment(&mut self) -> Result<(usize, usize)> {
        let at = self.pos;
        let len = self.read_u16()? as usize;
        if len < 2 {
            return Err(Error::format_at(at, "segment length below header size"));
        }
        let start = self.pos;
        let end = start + len - 2;
        if end > self.data.len() {
            return Err(Error::format_at(at, "segment extends past end of file"));
        }
        self.pos = end;
        Ok((start, end))
    }

    fn read_dqt(&mut self) -> Result<()> {
        let (start, end) = self.segment()?;
        let mut p = start;
        while p < end {
            let pq_tq = self.data[p];
            let pq = pq_tq >> 4;
            let tq = (pq_tq & 0x0F) as usize;
            if pq != 0 {
                return Err(Error::Unsupported("16-bit quantization table".into()));
            }
            if tq > 3 {
                return Err(Error::format_at(p, format!("quantization table slot {tq}")));
            }
            if p + 65 > end {
                return Err(Error::format_at(p, "truncated quantization table"));
            }
            let mut table = [0u16; 64];
            for (i, t) in table.iter_mut().enumerate() {
                let e = self.data[p + 1 + i];
                if e == 0 {
                    return Err(Error::format_at(p + 1 + i, "zero quantization entry"));
                }
                *t = u16::from(e);
            }
            self.quant[tq] = Some(table);
            p += 65;
        }
        Ok(())
    }

    fn read_dht(&mut self) -> Result<()> {
        let (start, end) = self.segment()?;
        let mut p = start;
        while p < end {
            let tc_th = self.data[p];
            let tc = tc_th >> 4;
            let th = (tc_th & 0x0F) as usize;
            if tc > 1 {
                return Err(Error::format_at(p, format!("entropy table class {tc}")));
            }
            if th > 3 {
                return Err(Error::format_at(p, format!("entropy table slot {th}")));
            }
            if p + 17 > end {
                return Err(Error::format_at(p, "truncated entropy table header"));
            }
            let mut bits = [0u8; 16];
            bits.copy_from_slice(&self.data[p + 1..p + 17]);
            let count: usize = bits.iter().map(|&b| b as usize).sum();
            if p + 17 + count > end {
                return Err(Error::format_at(p, "truncated entropy table symbols"));
            }
            let values = self.data[p + 17..p + 17 + count].to_vec();
            let table = HuffmanTable::new(bits, values)
                .map_err(|e| Error::format_at(p, format!("bad entropy table: {e}")))?;
            if tc == 0 {
                self.dc_tables[th] = Some(table);
            } else {
                self.ac_tables[th] = Some(table);
            }
            p += 17 + count;
        }
        Ok(())
    }

    fn read_dri(&mut self) -> Result<()> {
        let (start, end) = self.segment()?;
        if end - start != 2 {
            return Err(Error::format_at(start, "restart interval segment length"));
        }
        self.restart_interval =
            (u16::from(self.data[start]) << 8 | u16::from(self.data[start + 1])) as usize;
        Ok(())
    }

    fn read_frame(&mut self, at: usize) -> Result<()> {
        if self.frame.is_some() {
            return Err(Error::format_at(at, "multiple frame headers"));
        }
        let (start, end) = self.segment()?;
        let p = start;
        if end - start < 6 {
            return Err(Error::format_at(p, "truncated frame header"));
        }
        let precision = self.data[p];
        if precision != 8 {
            return Err(Error::Unsupported(format!(
                "{precision}-bit sample precision"
            )));
        }
        let height = u32::from(self.data[p + 1]) << 8 | u32::from(self.data[p + 2]);
        let width = u32::from(self.data[p + 3]) << 8 | u32::from(self.data[p + 4]);
        if width == 0 || height == 0 {
            return Err(Error::format_at(p + 1, "zero image dimension"));
        }
        let nf = self.data[p + 5] as usize;
        if nf != 1 && nf != 3 {
            return Err(Error::Unsupported(format!(
                "{nf} components (expected 1 or 3)"
            )));
        }
        if end - start != 6 + 3 * nf {
            return Err(Error::format_at(p, "frame header length mismatch"));
        }
        let mut raw = Vec::with_capacity(nf);
        for c in 0..nf {
            let q = p + 6 + 3 * c;
            let id = self.data[q];
            let h = self.data[q + 1] >> 4;
            let v = self.data[q + 1] & 0x0F;
            let tq = self.data[q + 2];
            if !(1..=4).contains(&h) || !(1..=4).contains(&v) {
                return Err(Error::format_at(q + 1, format!("sampling factors {h}x{v}")));
            }
            if tq > 3 {
                return Err(Error::format_at(
                    q + 2,
                    format!("quantization table slot {tq}"),
                ));
            }
            if raw.iter().any(|&(rid, _, _, _)| rid == id) {
                return Err(Error::format_at(q, format!("duplicate component id {id}")));
            }
            raw.push((id, h, v, tq));
        }
        let h_max = raw.iter().map(|r| r.1).max().unwrap();
        let v_max = raw.iter().map(|r| r.2).max().unwrap();
        let mcu_cols = (width as usize).div_ceil(8 * h_max as usize);
        let mcu_rows = (height as usize).div_ceil(8 * v_max as usize);
        let mut components = Vec::with_capacity(nf);
        for (id, h, v, tq) in raw {
            if h_max % h != 0 || v_max % v != 0 {
                return Err(Error::Unsupported(format!(
                    "non-integer sampling ratio {h}x{v} against {h_max}x{v_max}"
                )));
            }
            let (blocks_w, blocks_h) = block_grid(width, height, h, v, h_max, v_max);
            let padded_w = mcu_cols * h as usize;
            let padded_h = mcu_rows * v as usize;
            components.push(FrameComp {
                id,
                h,
                v,
                tq,
                blocks_w,
                blocks_h,
                padded_w,
                blocks: vec![QuantizedBlock::ZERO; padded_w * padded_h],
                scanned: false,
            });
        }
        self.frame = Some(Frame {
            width,
            height,
            mcu_cols,
            mcu_rows,
            components,
        });
        Ok(())
    }

    fn read_scan(&mut self, at: usize) -> Result<()> {
        if self.frame.is_none() {
            return Err(Error::format_at(at, "scan before frame header"));
        }
        let (start, end) = self.segment()?;
        let p = start;
        if end - start < 4 {
            return Err(Error::format_at(p, "truncated scan header"));
        }
        let ns = self.data[p] as usize;
        if ns == 0 || ns > 4 || end - start != 4 + 2 * ns {
            return Err(Error::format_at(p, "scan header length mismatch"));
        }
        let mut scan_comps = Vec::with_capacity(ns);
        {
            let frame = self.frame.as_ref().unwrap();
            for c in 0..ns {
                let q = p + 1 + 2 * c;
                let id = self.data[q];
                let td = (self.data[q + 1] >> 4) as usize;
                let ta = (self.data[q + 1] & 0x0F) as usize;
                let idx = frame
                    .components
                    .iter()
                    .position(|fc| fc.id == id)
                    .ok_or_else(|| {
                        Error::format_at(q, format!("scan references unknown component {id}"))
                    })?;
                if td > 3 || ta > 3 {
                    return Err(Error::format_at(q + 1, "entropy table slot out of range"));
                }
                if frame.components[idx].scanned {
                    return Err(Error::format_at(q, format!("component {id} scanned twice")));
                }
                if self.dc_tables[td].is_none() {
                    return Err(Error::format_at(q + 1, format!("undefined DC table {td}")));
                }
                if self.ac_tables[ta].is_none() {
                    return Err(Error::format_at(q + 1, format!("undefined AC table {ta}")));
                }
                scan_comps.push((idx, td, ta));
            }
        }
        let ss = self.data[p + 1 + 2 * ns];
        let se = self.data[p + 2 + 2 * ns];
        let ah_al = self.data[p + 3 + 2 * ns];
        if ss != 0 || se != 63 || ah_al != 0 {
            return Err(Error::format_at(
                p + 1 + 2 * ns,
                "spectral selection outside baseline",
            ));
        }
        if ns > 1 {
            let frame = self.frame.as_ref().unwrap();
            let in_frame_order = scan_comps.len() == frame.components.len()
                && scan_comps
                    .iter()
                    .enumerate()
                    .all(|(i, &(idx, _, _))| idx == i);
            if !in_frame_order {
                return Err(Error::Unsupported(
                    "interleaved scan must cover all components in frame order".into(),
                ));
            }
            self.decode_interleaved(&scan_comps)
        } else {
            self.decode_single(scan_comps[0])
        }
    }

    fn decode_interleaved(&mut self, scan_comps: &[(usize, usize, usize)]) -> Result<()> {
        let frame = self.frame.as_mut().unwrap();
        let mcus = frame.mcu_cols * frame.mcu_rows;
        let mut reader = BitReader::new(self.data, self.pos);
        let mut preds = vec![0i32; scan_comps.len()];
        let mut restart_seq = 0u8;
        for mcu in 0..mcus {
            if self.restart_interval > 0 && mcu > 0 && mcu % self.restart_interval == 0 {
                reader.read_restart(restart_seq)?;
                restart_seq = (restart_seq + 1) & 7;
                preds.iter_mut().for_each(|p| *p = 0);
            }
            let mcu_x = mcu % frame.mcu_cols;
            let mcu_y = mcu / frame.mcu_cols;
            for (slot, &(idx, td, ta)) in scan_comps.iter().enumerate() {
                let comp = &mut frame.components[idx];
                let dc = self.dc_tables[td].as_ref().unwrap();
                let ac = self.ac_tables[ta].as_ref().unwrap();
                for by_in in 0..comp.v as usize {
                    for bx_in in 0..comp.h as usize {
                        let bx = mcu_x * comp.h as usize + bx_in;
                        let by = mcu_y * comp.v as usize + by_in;
                        let block = decode_block(&mut reader, dc, ac, &mut preds[slot])?;
                        comp.blocks[by * comp.padded_w + bx] = block;
                    }
                }
            }
        }
        reader.align();
        self.pos = reader.byte_pos();
        for &(idx, _, _) in scan_comps {
            frame.components[idx].scanned = true;
        }
        Ok(())
    }

    fn decode_single(&mut self, (idx, td, ta): (usize, usize, usize)) -> Result<()> {
        let frame = self.frame.as_mut().unwrap();
        let comp = &mut frame.components[idx];
        let dc = self.dc_tables[td].as_ref().unwrap();
        let ac = self.ac_tables[ta].as_ref().unwrap();
        let mut reader = BitReader::new(self.data, self.pos);
        let mut pred = 0i32;
        let mut restart_seq = 0u8;
        let total = comp.blocks_w * comp.blocks_h;
        for i in 0..total {
            if self.restart_interval > 0 && i > 0 && i % self.restart_interval == 0 {
                reader.read_restart(restart_seq)?;
                restart_seq = (restart_seq + 1) & 7;
                pred = 0;
            }
            let bx = i % comp.blocks_w;
            let by = i / comp.blocks_w;
            let block = decode_block(&mut reader, dc, ac, &mut pred)?;
            comp.blocks[by * comp.padded_w + bx] = block;
        }
        reader.align();
        self.pos = reader.byte_pos();
        comp.scanned = true;
        Ok(())
    }
}

/// MSB-first bit reader over entropy-coded data with byte unstuffing.
struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    cur: u8,
    bits_left: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        BitReader {
            data,
            pos,
            cur: 0,
            bits_left: 0,
        }
    }

    fn byte_pos(&self) -> usize {
        self.pos
    }

    fn next_bit(&mut self) -> Result<u32> {
        if self.bits_left == 0 {
            self.load_byte()?;
        }
        self.bits_left -= 1;
        Ok(u32::from(self.cur >> self.bits_left) & 1)
    }

    fn load_byte(&mut self) -> Result<()> {
        let b = *self
            .data
            .get(self.pos)
            .ok_or_else(|| Error::format_at(self.pos, "entropy data truncated"))?;
        if b == 0xFF {
            match self.data.get(self.pos + 1) {
                Some(0x00) => {
                    self.cur = 0xFF;
                    self.pos += 2;
                }
                Some(&m) => {
                    return Err(Error::format_at(
                        self.pos,
                        format!("marker 0xFF{m:02X} interrupts entropy data"),
                    ))
                }
                None => return Err(Error::format_at(self.pos, "entropy data truncated")),
            }
        } else {
            self.cur = b;
            self.pos += 1;
        }
        self.bits_left = 8;
        Ok(())
    }

    fn receive(&mut self, n: u32) -> Result<u32> {
        let mut v = 0;
        for _ in 0..n {
            v = v << 1 | self.next_bit()?;
        }
        Ok(v)
    }

    /// Drop padding bits of the current byte.
    fn align(&mut self) {
        self.bits_left = 0;
    }

    /// Consume the expected restart marker and resynchronize.
    fn read_restart(&mut self, seq: u8) -> Result<()> {
        self.align();
        let at = self.pos;
        if self.pos + 2 > self.data.len() {
            return Err(Error::format_at(
                at,
                "entropy data truncated at restart point",
            ));
        }
        let (m0, m1) = (self.data[self.pos], self.data[self.pos + 1]);
        if m0 != 0xFF || !(0xD0..=0xD7).contains(&m1) {
            return Err(Error::format_at(at, "expected restart marker"));
        }
        if m1 != 0xD0 + seq {
            return Err(Error::format_at(
                at,
                format!("restart marker out of sequence: 0xFF{m1:02X}, expected 0xFFD{seq:X}"),
            ));
        }
        self.pos += 2;
        Ok(())
    }
}

fn decode_symbol(reader: &mut BitReader, table: &HuffmanTable) -> Result<u8> {
    let mut code = 0u32;
    for len in 1..=16 {
        code = code << 1 | reader.next_bit()?;
        if let Some(sym) = table.symbol(len, code) {
            return Ok(sym);
        }
    }
    Err(Error::format_at(reader.byte_pos(), "invalid entropy code"))
}

/// Sign-extend `v` read as a `t`-bit magnitude category value.
fn extend(v: u32, t: u32) -> i32 {
    if t == 0 {
        return 0;
    }
    if v < 1 << (t - 1) {
        v as i32 - (1 << t) + 1
    } else {
        v as i32
    }
}

fn decode_block(
    reader: &mut BitReader,
    dc: &HuffmanTable,
    ac: &HuffmanTable,
    pred: &mut i32,
) -> Result<QuantizedBlock> {
    let mut block = QuantizedBlock::ZERO;
    let t = u32::from(decode_symbol(reader, dc)?);
    if t > 11 {
        return Err(Error::format_at(
            reader.byte_pos(),
            "DC category out of range",
        ));
    }
    let diff = extend(reader.receive(t)?, t);
    *pred += diff;
    if *pred < -1024 || *pred > 1023 {
        return Err(Error::format_at(reader.byte_pos(), "DC value out of range"));
    }
    block.0[0] = *pred;
    let mut k = 1;
    while k < 64 {
        let rs = decode_symbol(reader, ac)?;
        let run = (rs >> 4) as usize;
        let size = u32::from(rs & 0x0F);
        if size == 0 {
            if run == 15 {
                k += 16; // sixteen zeros, no coefficient
                if k > 63 {
                    return Err(Error::format_at(
                        reader.byte_pos(),
                        "zero run exceeds block",
                    ));
                }
                continue;
            }
            break; // end of block
        }
        if size > 10 {
            return Err(Error::format_at(reader.byte_pos(), "AC size out of range"));
        }
        k += run;
        if k > 63 {
            return Err(Error::format_at(
                reader.byte_pos(),
                "zero run exceeds block",
            ));
        }
        block.0[k] = extend(reader.receive(size)?, size);
        k += 1;
    }
    Ok(block)
}
