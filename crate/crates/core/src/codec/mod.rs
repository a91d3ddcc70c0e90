//! Baseline JPEG container: parsing and entropy decoding into quantized
//! coefficient blocks, re-encoding modified blocks into standard JPEG files,
//! pixel decoding for quality measurement, and PPM raster ingest/emit.
//!
//! Coefficient blocks are always stored in zigzag order with DC at index 0,
//! and DC values are the accumulated (post-DPCM) quantized values.
//! Serialization re-derives the DPCM differences.

mod color;
mod dct;
mod decode;
mod encode;
mod huffman;
mod parse;
mod ppm;
mod quant;
mod serialize;
mod zigzag;

pub use decode::decode_to_rgb;
pub use encode::{encode_rgb, Subsampling};
pub use parse::parse_jpeg;
pub use ppm::{read_ppm, write_ppm};
pub use quant::{quality_to_tables, QualityTables};
pub use serialize::serialize_jpeg;
pub use zigzag::{zigzag_index, ZIGZAG_TO_NATURAL};

use crate::error::{Error, Result};

/// Largest coefficient magnitude the scrambling arithmetic accepts.
pub const COEFF_LIMIT: i32 = 1023;

/// A decoded 8-bit RGB raster, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RgbImage {
    /// Wraps a pixel buffer; `pixels` must hold exactly `3 * width * height` bytes.
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = 3 * width as usize * height as usize;
        if pixels.len() != expected {
            return Err(Error::Argument(format!(
                "pixel buffer holds {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major RGB triples.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    /// The RGB triple at (x, y).
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// One quantized 8x8 DCT block in zigzag order; index 0 is the DC value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedBlock(pub [i32; 64]);

impl QuantizedBlock {
    pub const ZERO: QuantizedBlock = QuantizedBlock([0; 64]);

    /// Number of nonzero coefficients.
    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&c| c != 0).count()
    }

    /// Zigzag index of the last nonzero coefficient, if any.
    pub fn last_nonzero(&self) -> Option<usize> {
        self.0.iter().rposition(|&c| c != 0)
    }

    /// True when every coefficient lies within `[-COEFF_LIMIT, COEFF_LIMIT]`.
    pub fn in_coeff_range(&self) -> bool {
        self.0.iter().all(|&c| c.abs() <= COEFF_LIMIT)
    }
}

/// One color component of a [`CoefficientImage`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Component identifier as stored in the frame header.
    pub id: u8,
    /// Horizontal sampling factor (1..=4).
    pub h: u8,
    /// Vertical sampling factor (1..=4).
    pub v: u8,
    /// Quantization table slot this component references (0..=3).
    pub quant_table: u8,
    /// Block grid width: ceil(ceil(width*h/h_max) / 8).
    pub blocks_w: usize,
    /// Block grid height: ceil(ceil(height*v/v_max) / 8).
    pub blocks_h: usize,
    /// Blocks in raster order of the component's block grid.
    pub blocks: Vec<QuantizedBlock>,
}

impl Component {
    /// Samples per row of this component's plane.
    pub fn sample_width(&self, image_width: u32, h_max: u8) -> usize {
        (image_width as usize * self.h as usize).div_ceil(h_max as usize)
    }

    /// Sample rows of this component's plane.
    pub fn sample_height(&self, image_height: u32, v_max: u8) -> usize {
        (image_height as usize * self.v as usize).div_ceil(v_max as usize)
    }
}

/// A fully entropy-decoded JPEG: dimensions, components, quantization tables,
/// and per-component quantized coefficient blocks.
///
/// Block ordering contract: components in stored order (luma first), blocks in
/// raster order within each component. All per-block key material aligns with
/// this order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientImage {
    pub width: u32,
    pub height: u32,
    pub components: Vec<Component>,
    /// Quantization tables in zigzag order, indexed by table slot.
    pub quant_tables: [Option<[u16; 64]>; 4],
}

impl CoefficientImage {
    /// Largest horizontal sampling factor across components.
    pub fn h_max(&self) -> u8 {
        self.components.iter().map(|c| c.h).max().unwrap_or(1)
    }

    /// Largest vertical sampling factor across components.
    pub fn v_max(&self) -> u8 {
        self.components.iter().map(|c| c.v).max().unwrap_or(1)
    }

    /// Total block count across components, in the block ordering contract.
    pub fn total_blocks(&self) -> usize {
        self.components.iter().map(|c| c.blocks.len()).sum()
    }

    /// All blocks in the block ordering contract.
    pub fn blocks(&self) -> impl Iterator<Item = &QuantizedBlock> {
        self.components.iter().flat_map(|c| c.blocks.iter())
    }

    /// Mutable view of all blocks in the block ordering contract.
    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut QuantizedBlock> {
        self.components.iter_mut().flat_map(|c| c.blocks.iter_mut())
    }

    /// The quantization table referenced by `component`, if present.
    pub fn quant_table_for(&self, component: &Component) -> Option<&[u16; 64]> {
        self.quant_tables
            .get(component.quant_table as usize)
            .and_then(|t| t.as_ref())
    }
}

/// Computes the canonical block grid for a component: the component plane is
/// ceil(width*h/h_max) x ceil(height*v/v_max) samples, split into complete
/// 8x8 blocks. Interleave padding blocks are not part of the grid.
pub(crate) fn block_grid(
    width: u32,
    height: u32,
    h: u8,
    v: u8,
    h_max: u8,
    v_max: u8,
) -> (usize, usize) {
    let sw = (width as usize * h as usize).div_ceil(h_max as usize);
    let sh = (height as usize * v as usize).div_ceil(v_max as usize);
    (sw.div_ceil(8), sh.div_ceil(8))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_image_rejects_bad_buffer() {
        assert!(RgbImage::new(2, 2, vec![0; 12]).is_ok());
        assert!(RgbImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RgbImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn block_grid_420_geometry() {
        // 8x8 at 4:2:0: one luma block, one chroma block per channel.
        assert_eq!(block_grid(8, 8, 2, 2, 2, 2), (1, 1));
        assert_eq!(block_grid(8, 8, 1, 1, 2, 2), (1, 1));
        // 256x256 at 4:2:0.
        assert_eq!(block_grid(256, 256, 2, 2, 2, 2), (32, 32));
        assert_eq!(block_grid(256, 256, 1, 1, 2, 2), (16, 16));
        // Odd sizes round up.
        assert_eq!(block_grid(17, 9, 2, 2, 2, 2), (3, 2));
        assert_eq!(block_grid(17, 9, 1, 1, 2, 2), (2, 1));
    }

    #[test]
    fn block_helpers() {
        let mut b = QuantizedBlock::ZERO;
        assert_eq!(b.nonzero_count(), 0);
        assert_eq!(b.last_nonzero(), None);
        b.0[0] = 10;
        b.0[13] = -9;
        assert_eq!(b.nonzero_count(), 2);
        assert_eq!(b.last_nonzero(), Some(13));
        assert!(b.in_coeff_range());
        b.0[5] = 1024;
        assert!(!b.in_coeff_range());
    }
}
