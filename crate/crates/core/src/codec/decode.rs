//! Coefficient-domain decoding back to RGB pixels.

use super::color;
use super::dct;
use super::zigzag::ZIGZAG_TO_NATURAL;
use super::{CoefficientImage, Component, RgbImage};
use crate::error::{Error, Result};

/// Reconstruct pixels: dequantize, inverse DCT, upsample, color convert.
pub fn decode_to_rgb(image: &CoefficientImage) -> Result<RgbImage> {
    if image.components.len() != 1 && image.components.len() != 3 {
        return Err(Error::Unsupported(format!(
            "{} components (expected 1 or 3)",
            image.components.len()
        )));
    }
    let width = image.width as usize;
    let height = image.height as usize;
    let h_max = image.h_max();
    let v_max = image.v_max();

    let mut planes = Vec::with_capacity(image.components.len());
    for comp in &image.components {
        let table = image.quant_table_for(comp).ok_or_else(|| {
            Error::format(format!(
                "component {} references missing quantization table {}",
                comp.id, comp.quant_table
            ))
        })?;
        planes.push(reconstruct_plane(
            comp,
            image.width,
            image.height,
            h_max,
            v_max,
            table,
        ));
    }

    let mut rgb = Vec::with_capacity(width * height * 3);
    if planes.len() == 1 {
        let (y_plane, _, _) = &planes[0];
        for &y in y_plane {
            let g = y.round().clamp(0.0, 255.0) as u8;
            rgb.extend_from_slice(&[g, g, g]);
        }
    } else {
        let (y_plane, _, _) = &planes[0];
        let (cb_plane, cb_w, cb_h) = &planes[1];
        let (cr_plane, cr_w, cr_h) = &planes[2];
        let cb_fx = (h_max / image.components[1].h) as usize;
        let cb_fy = (v_max / image.components[1].v) as usize;
        let cr_fx = (h_max / image.components[2].h) as usize;
        let cr_fy = (v_max / image.components[2].v) as usize;
        for y in 0..height {
            for x in 0..width {
                let yy = y_plane[y * width + x];
                let cb = color::upsample_fetch(cb_plane, *cb_w, *cb_h, x, y, cb_fx, cb_fy);
                let cr = color::upsample_fetch(cr_plane, *cr_w, *cr_h, x, y, cr_fx, cr_fy);
                rgb.extend_from_slice(&color::ycbcr_to_rgb_pixel(yy, cb, cr));
            }
        }
    }
    RgbImage::new(image.width, image.height, rgb)
}

/// Dequantize and inverse-transform one component, cropped to its raster size.
fn reconstruct_plane(
    comp: &Component,
    width: u32,
    height: u32,
    h_max: u8,
    v_max: u8,
    table: &[u16; 64],
) -> (Vec<f64>, usize, usize) {
    let comp_w = comp.sample_width(width, h_max);
    let comp_h = comp.sample_height(height, v_max);
    let stride = comp.blocks_w * 8;
    let mut padded = vec![0.0f64; stride * comp.blocks_h * 8];
    for by in 0..comp.blocks_h {
        for bx in 0..comp.blocks_w {
            let block = &comp.blocks[by * comp.blocks_w + bx];
            let mut coeffs = [0.0f64; 64];
            for (zz, &nat) in ZIGZAG_TO_NATURAL.iter().enumerate() {
                coeffs[nat] = block.0[zz] as f64 * table[zz] as f64;
            }
            let samples = dct::inverse(&coeffs);
            for y in 0..8 {
                for x in 0..8 {
                    padded[(by * 8 + y) * stride + bx * 8 + x] = samples[y * 8 + x] + 128.0;
                }
            }
        }
    }
    let mut plane = Vec::with_capacity(comp_w * comp_h);
    for y in 0..comp_h {
        plane.extend_from_slice(&padded[y * stride..y * stride + comp_w]);
    }
    (plane, comp_w, comp_h)
}
