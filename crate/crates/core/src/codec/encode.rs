//! Pixel-domain JPEG encoding: color conversion, DCT, quantization.

use super::color;
use super::dct;
use super::quant::quality_to_tables;
use super::zigzag::ZIGZAG_TO_NATURAL;
use super::{block_grid, CoefficientImage, Component, QuantizedBlock, RgbImage};
use crate::error::Result;

/// Chroma sampling structure of an encoded image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsampling {
    /// Full-resolution chroma (1x1 sampling on every component).
    S444,
    /// Chroma halved in both directions (luma 2x2, chroma 1x1).
    S420,
}

impl Subsampling {
    fn factors(self) -> [(u8, u8); 3] {
        match self {
            Subsampling::S444 => [(1, 1), (1, 1), (1, 1)],
            Subsampling::S420 => [(2, 2), (1, 1), (1, 1)],
        }
    }
}

/// Transform an RGB image into quantized frequency coefficients.
pub fn encode_rgb(
    image: &RgbImage,
    quality: u32,
    subsampling: Subsampling,
) -> Result<CoefficientImage> {
    let tables = quality_to_tables(quality)?;
    let width = image.width() as usize;
    let height = image.height() as usize;
    let planes = color::rgb_to_ycbcr(width, height, image.pixels());
    let factors = subsampling.factors();
    let h_max = factors.iter().map(|f| f.0).max().unwrap();
    let v_max = factors.iter().map(|f| f.1).max().unwrap();

    let mut components = Vec::with_capacity(3);
    for (idx, plane) in [&planes.y, &planes.cb, &planes.cr].into_iter().enumerate() {
        let (h, v) = factors[idx];
        let (table_idx, table) = if idx == 0 {
            (0u8, &tables.luma)
        } else {
            (1u8, &tables.chroma)
        };
        // Component raster dims, then the plane resampled to them.
        let comp_w = (width * h as usize).div_ceil(h_max as usize);
        let comp_h = (height * v as usize).div_ceil(v_max as usize);
        let (samples, sw, sh) = color::downsample(
            plane,
            width,
            height,
            (h_max / h) as usize,
            (v_max / v) as usize,
        );
        debug_assert_eq!((sw, sh), (comp_w, comp_h));

        let (blocks_w, blocks_h) = block_grid(image.width(), image.height(), h, v, h_max, v_max);
        let padded = color::pad_plane(&samples, comp_w, comp_h, blocks_w * 8, blocks_h * 8);
        let mut blocks = Vec::with_capacity(blocks_w * blocks_h);
        for by in 0..blocks_h {
            for bx in 0..blocks_w {
                blocks.push(encode_block(&padded, blocks_w * 8, bx, by, table));
            }
        }
        components.push(Component {
            id: (idx + 1) as u8,
            h,
            v,
            quant_table: table_idx,
            blocks_w,
            blocks_h,
            blocks,
        });
    }

    let mut quant_tables = [None; 4];
    quant_tables[0] = Some(tables.luma);
    quant_tables[1] = Some(tables.chroma);
    Ok(CoefficientImage {
        width: image.width(),
        height: image.height(),
        components,
        quant_tables,
    })
}

fn encode_block(
    plane: &[f64],
    stride: usize,
    bx: usize,
    by: usize,
    table: &[u16; 64],
) -> QuantizedBlock {
    let mut samples = [0.0f64; 64];
    for y in 0..8 {
        for x in 0..8 {
            samples[y * 8 + x] = plane[(by * 8 + y) * stride + bx * 8 + x] - 128.0;
        }
    }
    let coeffs = dct::forward(&samples);
    let mut block = QuantizedBlock::ZERO;
    for (zz, &nat) in ZIGZAG_TO_NATURAL.iter().enumerate() {
        // f64::round is round-half-away-from-zero, the rule this format pins.
        block.0[zz] = (coeffs[nat] / table[zz] as f64).round() as i32;
    }
    block
}
